#include "posetext/mesh_regressor.hpp"

#include <cmath>
#include <stdexcept>

namespace posetext {

namespace {

// 1D Gaussian over the bin grid, normalized so the nearest in-range grid
// point carries exactly 1.
Eigen::VectorXd gaussian_1d(double center, double sigma, int resolution) {
  Eigen::VectorXd g(resolution);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int i = 0; i < resolution; ++i) g[i] = std::exp(-(i - center) * (i - center) * inv);
  int peak = static_cast<int>(std::lround(center));
  peak = std::min(std::max(peak, 0), resolution - 1);
  return g / g[peak];
}

}  // namespace

JointHeatmapPlanes joint_heatmap(const Pose3D& pose, double sigma, int resolution) {
  if (!(sigma > 0.0)) throw std::invalid_argument("invalid sigma");
  pose.require_valid();
  for (int j = 0; j < kNumJoints; ++j)
    for (int a = 0; a < 3; ++a)
      if (pose.coords(j, a) < 0.0 || pose.coords(j, a) >= resolution)
        throw std::invalid_argument("pose out of heatmap range");

  JointHeatmapPlanes out;
  out.sigma = sigma;
  out.resolution = resolution;
  const int rr = resolution * resolution;
  out.hxy.resize(kNumJoints, rr);
  out.hxz.resize(kNumJoints, rr);
  out.hyz.resize(kNumJoints, rr);
  for (int j = 0; j < kNumJoints; ++j) {
    const Eigen::VectorXd gu = gaussian_1d(pose.coords(j, 0), sigma, resolution);
    const Eigen::VectorXd gv = gaussian_1d(pose.coords(j, 1), sigma, resolution);
    const Eigen::VectorXd gd = gaussian_1d(pose.coords(j, 2), sigma, resolution);
    for (int a = 0; a < resolution; ++a)
      for (int b = 0; b < resolution; ++b) {
        out.hxy(j, a * resolution + b) = gu[a] * gv[b];
        out.hxz(j, a * resolution + b) = gu[a] * gd[b];
        out.hyz(j, a * resolution + b) = gv[a] * gd[b];
      }
  }
  return out;
}

PlaneMatrix resize_plane(const PlaneMatrix& plane, int r_in, int r_out) {
  if (plane.rows() != r_in || plane.cols() != r_in)
    throw std::invalid_argument("resize_plane: bad input shape");
  PlaneMatrix out(r_out, r_out);
  for (int a = 0; a < r_out; ++a) {
    const double sa = std::min(std::max((a + 0.5) * r_in / r_out - 0.5, 0.0),
                               static_cast<double>(r_in - 1));
    const int a0 = std::min(static_cast<int>(sa), r_in - 2 >= 0 ? r_in - 2 : 0);
    const double fa = sa - a0;
    for (int b = 0; b < r_out; ++b) {
      const double sb = std::min(std::max((b + 0.5) * r_in / r_out - 0.5, 0.0),
                                 static_cast<double>(r_in - 1));
      const int b0 = std::min(static_cast<int>(sb), r_in - 2 >= 0 ? r_in - 2 : 0);
      const double fb = sb - b0;
      const int a1 = std::min(a0 + 1, r_in - 1), b1 = std::min(b0 + 1, r_in - 1);
      out(a, b) = (1 - fa) * ((1 - fb) * plane(a0, b0) + fb * plane(a0, b1)) +
                  fa * ((1 - fb) * plane(a1, b0) + fb * plane(a1, b1));
    }
  }
  return out;
}

}  // namespace posetext
