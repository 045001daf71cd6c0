#pragma once

#include "posetext/autodiff.hpp"
#include "posetext/rng.hpp"

#include <functional>
#include <vector>

namespace tsup {

using posetext::Rng;

inline posetext::ad::Arr<double> random_arr(Rng& rng, int n, double scale = 1.0) {
  posetext::ad::Arr<double> a(n);
  for (int i = 0; i < n; ++i) a[i] = rng.normal() * scale;
  return a;
}

// Central finite-difference check of d(scalar fn)/d(x) against the analytic
// gradient, at 64-bit precision. `fn` must rebuild the computation from a
// plain input vector. Returns the worst relative error over the probed
// entries.
inline double grad_check(const std::function<double(const posetext::ad::Arr<double>&)>& fn,
                         const posetext::ad::Arr<double>& x,
                         const posetext::ad::Arr<double>& analytic,
                         const std::vector<int>& probe, double h_scale = 1e-5) {
  double worst = 0.0;
  for (int i : probe) {
    posetext::ad::Arr<double> xp = x, xm = x;
    const double h = h_scale * std::max(1.0, std::abs(x[i]));
    xp[i] += h;
    xm[i] -= h;
    const double fd = (fn(xp) - fn(xm)) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

inline std::vector<int> probe_indices(Rng& rng, int size, int count) {
  std::vector<int> idx;
  for (int i = 0; i < count; ++i) idx.push_back(static_cast<int>(rng.uniform_index(size)));
  return idx;
}

}  // namespace tsup
