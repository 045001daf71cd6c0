#pragma once

#include "posetext/autodiff.hpp"
#include "posetext/rng.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace posetext {

enum class Init { kZero, kOne, kNormalScaled, kUniformFanIn, kConst };

// Named trainable tensors plus AdamW moment buffers. Parameter order is
// creation order, which fixes the checkpoint layout and the flat-gradient
// layout used for ordered (and therefore deterministic) batch accumulation.
template <typename S>
struct ParamStore {
  struct Entry {
    std::string name;
    int rows = 0, cols = 0;
    ad::Arr<S> value;
    ad::Arr<S> m, v;  // AdamW first/second moments
  };

  std::vector<Entry> entries;
  std::unordered_map<std::string, int> by_name;
  std::uint64_t init_seed = 0;
  std::int64_t step = 0;  // AdamW timestep

  int add(const std::string& name, int rows, int cols, Init init, double arg = 0.0) {
    if (by_name.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Entry e;
    e.name = name;
    e.rows = rows;
    e.cols = cols;
    const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
    e.value.resize(n);
    // Per-parameter generator keyed by name: insertion order elsewhere in the
    // model cannot perturb any other tensor's initialization.
    Rng rng(mix_seed(init_seed, fnv1a(name)));
    switch (init) {
      case Init::kZero:
        e.value.setZero();
        break;
      case Init::kOne:
        e.value.setOnes();
        break;
      case Init::kConst:
        e.value.setConstant(static_cast<S>(arg));
        break;
      case Init::kNormalScaled:
        for (Eigen::Index i = 0; i < n; ++i) e.value[i] = static_cast<S>(rng.normal() * arg);
        break;
      case Init::kUniformFanIn: {
        const double s = std::sqrt(1.0 / std::max(1.0, arg));
        for (Eigen::Index i = 0; i < n; ++i) e.value[i] = static_cast<S>(rng.uniform(-s, s));
        break;
      }
    }
    e.m = ad::Arr<S>::Zero(n);
    e.v = ad::Arr<S>::Zero(n);
    entries.push_back(std::move(e));
    int idx = static_cast<int>(entries.size()) - 1;
    by_name.emplace(name, idx);
    return idx;
  }

  Entry& operator[](int i) { return entries[i]; }
  const Entry& operator[](int i) const { return entries[i]; }

  Eigen::Index total_size() const {
    Eigen::Index n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
  }

  std::vector<Eigen::Index> offsets() const {
    std::vector<Eigen::Index> off(entries.size() + 1, 0);
    for (size_t i = 0; i < entries.size(); ++i) off[i + 1] = off[i] + entries[i].value.size();
    return off;
  }
};

// Tracks which tape nodes view which parameters so gradients can be pulled
// out into a flat vector after backward().
template <typename S>
struct ParamBinding {
  std::vector<std::pair<int, int>> node_to_param;  // (tape node id, param index)

  ad::Var<S> use(ad::Tape<S>& tape, const ParamStore<S>& store, int param_idx) {
    const auto& e = store[param_idx];
    ad::Var<S> v = tape.input(e.rows, e.cols, e.value.data());
    node_to_param.emplace_back(v.id(), param_idx);
    return v;
  }

  void harvest(const ad::Tape<S>& tape, const ParamStore<S>& store,
               const std::vector<Eigen::Index>& off, ad::Arr<S>& flat) const {
    for (const auto& [node, p] : node_to_param) {
      const auto* g = tape.grad_of(node);
      if (g) flat.segment(off[p], store[p].value.size()) += *g;
    }
  }
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Decoupled weight-decay Adam update over the whole store.
template <typename S>
void adamw_step(ParamStore<S>& store, const ad::Arr<S>& flat_grad, const AdamWConfig& cfg) {
  store.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(store.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(store.step));
  auto off = store.offsets();
  for (size_t i = 0; i < store.entries.size(); ++i) {
    auto& e = store.entries[i];
    auto g = flat_grad.segment(off[i], e.value.size());
    e.m = static_cast<S>(cfg.beta1) * e.m + static_cast<S>(1.0 - cfg.beta1) * g;
    e.v = static_cast<S>(cfg.beta2) * e.v + static_cast<S>(1.0 - cfg.beta2) * g.square();
    ad::Arr<S> mhat = e.m / static_cast<S>(bc1);
    ad::Arr<S> vhat = e.v / static_cast<S>(bc2);
    e.value -= static_cast<S>(cfg.lr) * (mhat / (vhat.sqrt() + static_cast<S>(cfg.eps)) +
                                         static_cast<S>(cfg.weight_decay) * e.value);
  }
}

}  // namespace posetext
