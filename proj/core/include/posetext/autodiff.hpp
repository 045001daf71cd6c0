#pragma once

// Reverse-mode automatic differentiation on a per-sample tape.
//
// Values are flat row-major arrays with a logical (rows, cols) shape; image
// tensors use rows = channels and cols = H*W. The tape owns every node; a
// Var is a cheap (tape, index) handle. Backward runs a single reverse sweep
// after one or more gradient seeds have been planted, so a batch-level loss
// (e.g. the contrastive term) can inject gradients into embedding nodes of
// an already-built sample tape.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace posetext::ad {

template <typename S>
using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using MatMap = Eigen::Map<Mat<S>>;
template <typename S>
using CMatMap = Eigen::Map<const Mat<S>>;

template <typename S>
class Tape;

template <typename S>
class Var {
 public:
  Var() = default;
  Var(Tape<S>* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  int id() const { return id_; }
  Tape<S>* tape() const { return tape_; }

  const Arr<S>& value() const;
  int rows() const;
  int cols() const;
  Eigen::Index size() const { return value().size(); }

 private:
  Tape<S>* tape_ = nullptr;
  int id_ = -1;
};

template <typename S>
class Tape {
 public:
  struct Node {
    Arr<S> value;
    Arr<S> grad;  // empty until first accumulation
    int rows = 0, cols = 0;
    std::function<void(Tape&, Node&)> pull;  // pushes grad to parents
  };

  Var<S> input(int rows, int cols, const S* data) {
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.value = Eigen::Map<const Arr<S>>(data, static_cast<Eigen::Index>(rows) * cols);
    nodes_.push_back(std::move(n));
    return Var<S>(this, static_cast<int>(nodes_.size()) - 1);
  }

  Var<S> input(int rows, int cols, Arr<S> data) {
    if (data.size() != static_cast<Eigen::Index>(rows) * cols)
      throw std::invalid_argument("tape input size mismatch");
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.value = std::move(data);
    nodes_.push_back(std::move(n));
    return Var<S>(this, static_cast<int>(nodes_.size()) - 1);
  }

  Var<S> scalar(S v) {
    Arr<S> a(1);
    a[0] = v;
    return input(1, 1, std::move(a));
  }

  Var<S> make(int rows, int cols, std::function<void(Tape&, Node&)> pull) {
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.value.resize(static_cast<Eigen::Index>(rows) * cols);
    n.pull = std::move(pull);
    nodes_.push_back(std::move(n));
    return Var<S>(this, static_cast<int>(nodes_.size()) - 1);
  }

  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  Arr<S>& grad_ref(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Arr<S>::Zero(n.value.size());
    return n.grad;
  }

  void seed(const Var<S>& v, S g) {
    if (v.size() != 1) throw std::invalid_argument("scalar seed on non-scalar node");
    grad_ref(v.id())[0] += g;
  }

  void seed(const Var<S>& v, const Arr<S>& g) {
    if (g.size() != v.size()) throw std::invalid_argument("seed size mismatch");
    grad_ref(v.id()) += g;
  }

  // Single reverse sweep over all nodes created so far.
  void backward() {
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() != 0 && n.pull) n.pull(*this, n);
    }
  }

  const Arr<S>* grad_of(int id) const {
    const Node& n = nodes_[id];
    return n.grad.size() ? &n.grad : nullptr;
  }

  void clear() { nodes_.clear(); }

  // Truncate back to `n` nodes, dropping everything newer (used to rebuild
  // the mesh section of a sample tape while keeping the trunk).
  void truncate(int n) { nodes_.resize(n); }

 private:
  std::vector<Node> nodes_;
};

template <typename S>
const Arr<S>& Var<S>::value() const {
  return tape_->node(id_).value;
}
template <typename S>
int Var<S>::rows() const {
  return tape_->node(id_).rows;
}
template <typename S>
int Var<S>::cols() const {
  return tape_->node(id_).cols;
}

namespace detail {
template <typename S>
MatMap<S> as_mat(typename Tape<S>::Node& n) {
  return MatMap<S>(n.value.data(), n.rows, n.cols);
}
template <typename S>
CMatMap<S> mat_of(const Tape<S>& t, int id) {
  const auto& n = t.node(id);
  return CMatMap<S>(n.value.data(), n.rows, n.cols);
}
template <typename S>
MatMap<S> grad_mat(Tape<S>& t, int id) {
  auto& g = t.grad_ref(id);
  const auto& n = t.node(id);
  return MatMap<S>(g.data(), n.rows, n.cols);
}
inline void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and broadcast ops

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::check(a.size() == b.size(), "add: size mismatch");
  Tape<S>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  Var<S> out = t.make(a.rows(), a.cols(), [ia, ib](Tape<S>& t, auto& n) {
    t.grad_ref(ia) += n.grad;
    t.grad_ref(ib) += n.grad;
  });
  t.node(out.id()).value = a.value() + b.value();
  return out;
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::check(a.size() == b.size(), "sub: size mismatch");
  Tape<S>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  Var<S> out = t.make(a.rows(), a.cols(), [ia, ib](Tape<S>& t, auto& n) {
    t.grad_ref(ia) += n.grad;
    t.grad_ref(ib) -= n.grad;
  });
  t.node(out.id()).value = a.value() - b.value();
  return out;
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::check(a.size() == b.size(), "mul: size mismatch");
  Tape<S>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  Var<S> out = t.make(a.rows(), a.cols(), [ia, ib](Tape<S>& t, auto& n) {
    t.grad_ref(ia) += n.grad * t.node(ib).value;
    t.grad_ref(ib) += n.grad * t.node(ia).value;
  });
  t.node(out.id()).value = a.value() * b.value();
  return out;
}

template <typename S>
Var<S> scale(Var<S> a, S c) {
  Tape<S>& t = *a.tape();
  int ia = a.id();
  Var<S> out = t.make(a.rows(), a.cols(),
                      [ia, c](Tape<S>& t, auto& n) { t.grad_ref(ia) += n.grad * c; });
  t.node(out.id()).value = a.value() * c;
  return out;
}

template <typename S>
Var<S> neg(Var<S> a) {
  return scale(a, S(-1));
}

template <typename S>
Var<S> exp_(Var<S> a) {
  Tape<S>& t = *a.tape();
  int ia = a.id(), self = t.size();
  Var<S> out = t.make(a.rows(), a.cols(), [ia, self](Tape<S>& t, auto& n) {
    t.grad_ref(ia) += n.grad * t.node(self).value;
  });
  t.node(out.id()).value = a.value().exp();
  return out;
}

template <typename S>
Var<S> log_(Var<S> a) {
  Tape<S>& t = *a.tape();
  int ia = a.id();
  Var<S> out = t.make(a.rows(), a.cols(), [ia](Tape<S>& t, auto& n) {
    t.grad_ref(ia) += n.grad / t.node(ia).value;
  });
  t.node(out.id()).value = a.value().log();
  return out;
}

// min(a, bound) elementwise; zero gradient where clamped.
template <typename S>
Var<S> clamp_max(Var<S> a, S bound) {
  Tape<S>& t = *a.tape();
  int ia = a.id();
  Var<S> out = t.make(a.rows(), a.cols(), [ia, bound](Tape<S>& t, auto& n) {
    t.grad_ref(ia) += n.grad * (t.node(ia).value <= bound).template cast<S>();
  });
  t.node(out.id()).value = a.value().min(bound);
  return out;
}

// mat * s where s is a 1x1 node.
template <typename S>
Var<S> scale_by(Var<S> a, Var<S> s) {
  detail::check(s.size() == 1, "scale_by: scalar expected");
  Tape<S>& t = *a.tape();
  int ia = a.id(), is = s.id();
  Var<S> out = t.make(a.rows(), a.cols(), [ia, is](Tape<S>& t, auto& n) {
    t.grad_ref(ia) += n.grad * t.node(is).value[0];
    t.grad_ref(is)[0] += (n.grad * t.node(ia).value).sum();
  });
  t.node(out.id()).value = a.value() * s.value()[0];
  return out;
}

// mat (r x c) + row vector (1 x c), broadcast over rows.
template <typename S>
Var<S> add_rowvec(Var<S> m, Var<S> v) {
  detail::check(v.rows() == 1 && v.cols() == m.cols(), "add_rowvec: shape mismatch");
  Tape<S>& t = *m.tape();
  int im = m.id(), iv = v.id();
  Var<S> out = t.make(m.rows(), m.cols(), [im, iv](Tape<S>& t, auto& n) {
    t.grad_ref(im) += n.grad;
    auto gv = detail::grad_mat(t, iv);
    gv.noalias() += MatMap<S>(n.grad.data(), n.rows, n.cols).colwise().sum();
  });
  auto& nv = t.node(out.id());
  detail::as_mat<S>(nv) = detail::mat_of(t, im).rowwise() +
                          Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(
                              v.value().data(), v.cols());
  return out;
}

template <typename S>
Var<S> abs_(Var<S> a) {
  Tape<S>& t = *a.tape();
  int ia = a.id();
  Var<S> out = t.make(a.rows(), a.cols(), [ia](Tape<S>& t, auto& n) {
    t.grad_ref(ia) += n.grad * t.node(ia).value.sign();
  });
  t.node(out.id()).value = a.value().abs();
  return out;
}

template <typename S>
Var<S> gelu(Var<S> a) {
  // tanh approximation; smooth everywhere, which keeps central finite
  // differences well behaved in the gradient checks.
  Tape<S>& t = *a.tape();
  int ia = a.id();
  Var<S> out = t.make(a.rows(), a.cols(), [ia](Tape<S>& t, auto& n) {
    const Arr<S>& x = t.node(ia).value;
    const S c = S(0.7978845608028654);  // sqrt(2/pi)
    const S k = S(0.044715);
    Arr<S> u = c * (x + k * x.cube());
    Arr<S> th = u.tanh();
    Arr<S> du = c * (S(1) + S(3) * k * x.square());
    t.grad_ref(ia) +=
        n.grad * (S(0.5) * (S(1) + th) + S(0.5) * x * (S(1) - th.square()) * du);
  });
  const Arr<S>& x = a.value();
  const S c = S(0.7978845608028654), k = S(0.044715);
  t.node(out.id()).value = S(0.5) * x * (S(1) + (c * (x + k * x.cube())).tanh());
  return out;
}

// ---------------------------------------------------------------------------
// Matrix products

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  detail::check(a.cols() == b.rows(), "matmul: inner dim mismatch");
  Tape<S>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  Var<S> out = t.make(a.rows(), b.cols(), [ia, ib](Tape<S>& t, auto& n) {
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    detail::grad_mat(t, ia).noalias() += g * detail::mat_of(t, ib).transpose();
    detail::grad_mat(t, ib).noalias() += detail::mat_of(t, ia).transpose() * g;
  });
  detail::as_mat<S>(t.node(out.id())).noalias() =
      detail::mat_of(t, ia) * detail::mat_of(t, ib);
  return out;
}

// a * b^T
template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  detail::check(a.cols() == b.cols(), "matmul_nt: inner dim mismatch");
  Tape<S>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  Var<S> out = t.make(a.rows(), b.rows(), [ia, ib](Tape<S>& t, auto& n) {
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    detail::grad_mat(t, ia).noalias() += g * detail::mat_of(t, ib);
    detail::grad_mat(t, ib).noalias() += g.transpose() * detail::mat_of(t, ia);
  });
  detail::as_mat<S>(t.node(out.id())).noalias() =
      detail::mat_of(t, ia) * detail::mat_of(t, ib).transpose();
  return out;
}

// a^T * b
template <typename S>
Var<S> matmul_tn(Var<S> a, Var<S> b) {
  detail::check(a.rows() == b.rows(), "matmul_tn: inner dim mismatch");
  Tape<S>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  Var<S> out = t.make(a.cols(), b.cols(), [ia, ib](Tape<S>& t, auto& n) {
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    detail::grad_mat(t, ia).noalias() += detail::mat_of(t, ib) * g.transpose();
    detail::grad_mat(t, ib).noalias() += detail::mat_of(t, ia) * g;
  });
  detail::as_mat<S>(t.node(out.id())).noalias() =
      detail::mat_of(t, ia).transpose() * detail::mat_of(t, ib);
  return out;
}

// ---------------------------------------------------------------------------
// Row-wise normalizations and reductions

template <typename S>
Var<S> softmax_rows(Var<S> a) {
  Tape<S>& t = *a.tape();
  int ia = a.id();
  Var<S> out = t.make(a.rows(), a.cols(), [ia](Tape<S>& t, auto& n) {
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    CMatMap<S> y(n.value.data(), n.rows, n.cols);
    auto gx = detail::grad_mat(t, ia);
    for (int r = 0; r < n.rows; ++r) {
      S dot = (g.row(r).array() * y.row(r).array()).sum();
      gx.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
    }
  });
  auto& no = t.node(out.id());
  CMatMap<S> x(t.node(ia).value.data(), no.rows, no.cols);
  MatMap<S> y = detail::as_mat<S>(no);
  for (int r = 0; r < no.rows; ++r) {
    S m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return out;
}

// Numerically stable x - logsumexp(x) per row.
template <typename S>
Var<S> logsoftmax_rows(Var<S> a) {
  Tape<S>& t = *a.tape();
  int ia = a.id(), self = t.size();
  Var<S> out = t.make(a.rows(), a.cols(), [ia, self](Tape<S>& t, auto& n) {
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    CMatMap<S> y(t.node(self).value.data(), n.rows, n.cols);
    auto gx = detail::grad_mat(t, ia);
    for (int r = 0; r < n.rows; ++r) {
      S gsum = g.row(r).sum();
      gx.row(r).array() += g.row(r).array() - y.row(r).array().exp() * gsum;
    }
  });
  auto& no = t.node(out.id());
  CMatMap<S> x(t.node(ia).value.data(), no.rows, no.cols);
  MatMap<S> y = detail::as_mat<S>(no);
  for (int r = 0; r < no.rows; ++r) {
    S m = x.row(r).maxCoeff();
    S lse = m + std::log((x.row(r).array() - m).exp().sum());
    y.row(r) = x.row(r).array() - lse;
  }
  return out;
}

template <typename S>
Var<S> transpose(Var<S> a) {
  Tape<S>& t = *a.tape();
  int ia = a.id();
  Var<S> out = t.make(a.cols(), a.rows(), [ia](Tape<S>& t, auto& n) {
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    detail::grad_mat(t, ia) += g.transpose();
  });
  detail::as_mat<S>(t.node(out.id())) = detail::mat_of(t, ia).transpose();
  return out;
}

template <typename S>
Var<S> layernorm_rows(Var<S> x, Var<S> gain, Var<S> bias, S eps = S(1e-5)) {
  detail::check(gain.size() == x.cols() && bias.size() == x.cols(),
                "layernorm: affine size mismatch");
  Tape<S>& t = *x.tape();
  int ix = x.id(), ig = gain.id(), ib = bias.id();
  Var<S> out = t.make(x.rows(), x.cols(), [ix, ig, ib, eps](Tape<S>& t, auto& n) {
    const auto& nx = t.node(ix);
    CMatMap<S> xm(nx.value.data(), nx.rows, nx.cols);
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    const Arr<S>& gain = t.node(ig).value;
    auto gx = detail::grad_mat(t, ix);
    Arr<S>& ggain = t.grad_ref(ig);
    Arr<S>& gbias = t.grad_ref(ib);
    for (int r = 0; r < n.rows; ++r) {
      S mu = xm.row(r).mean();
      Arr<S> xc = xm.row(r).array() - mu;
      S var = xc.square().mean();
      S istd = S(1) / std::sqrt(var + eps);
      Arr<S> xhat = xc * istd;
      Arr<S> gy = g.row(r).transpose().array();
      ggain += gy * xhat;
      gbias += gy;
      Arr<S> gxh = gy * gain;
      S m1 = gxh.mean();
      S m2 = (gxh * xhat).mean();
      gx.row(r).array() += (istd * (gxh - m1 - xhat * m2)).transpose();
    }
  });
  auto& no = t.node(out.id());
  CMatMap<S> xm(t.node(ix).value.data(), no.rows, no.cols);
  MatMap<S> y = detail::as_mat<S>(no);
  const Arr<S>& gv = gain.value();
  const Arr<S>& bv = bias.value();
  for (int r = 0; r < no.rows; ++r) {
    S mu = xm.row(r).mean();
    Arr<S> xc = xm.row(r).array() - mu;
    S var = xc.square().mean();
    S istd = S(1) / std::sqrt(var + eps);
    y.row(r) = (xc * istd * gv + bv).transpose();
  }
  return out;
}

// Rows scaled to unit L2 norm. Throws on a (near-)zero row.
template <typename S>
Var<S> l2_normalize_rows(Var<S> x, const char* degenerate_msg = "degenerate embedding") {
  Tape<S>& t = *x.tape();
  int ix = x.id();
  Var<S> out = t.make(x.rows(), x.cols(), [ix](Tape<S>& t, auto& n) {
    const auto& nx = t.node(ix);
    CMatMap<S> xm(nx.value.data(), nx.rows, nx.cols);
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    auto gx = detail::grad_mat(t, ix);
    for (int r = 0; r < n.rows; ++r) {
      S nr = xm.row(r).norm();
      S inv = S(1) / nr;
      S dot = xm.row(r).dot(g.row(r));
      gx.row(r) += g.row(r) * inv - xm.row(r) * (dot * inv * inv * inv);
    }
  });
  auto& no = t.node(out.id());
  CMatMap<S> xm(t.node(ix).value.data(), no.rows, no.cols);
  MatMap<S> y = detail::as_mat<S>(no);
  for (int r = 0; r < no.rows; ++r) {
    S nr = xm.row(r).norm();
    if (!(nr > S(1e-12))) throw std::runtime_error(degenerate_msg);
    y.row(r) = xm.row(r) / nr;
  }
  return out;
}

// Row L2 norms -> (rows x 1). With a non-null `degenerate_msg` a vanishing
// row norm throws (the face-normal loss needs that); otherwise the backward
// pass is clamped away from zero.
template <typename S>
Var<S> norm_rows(Var<S> x, const char* degenerate_msg = "degenerate edge") {
  Tape<S>& t = *x.tape();
  int ix = x.id();
  Var<S> out = t.make(x.rows(), 1, [ix](Tape<S>& t, auto& n) {
    const auto& nx = t.node(ix);
    CMatMap<S> xm(nx.value.data(), nx.rows, nx.cols);
    auto gx = detail::grad_mat(t, ix);
    for (int r = 0; r < nx.rows; ++r)
      gx.row(r) += (n.grad[r] / std::max(n.value[r], S(1e-12))) * xm.row(r);
  });
  auto& no = t.node(out.id());
  CMatMap<S> xm(t.node(ix).value.data(), x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    S nr = xm.row(r).norm();
    if (degenerate_msg && !(nr > S(1e-12))) throw std::runtime_error(degenerate_msg);
    no.value[r] = nr;
  }
  return out;
}

// Row-wise dot products of equally shaped matrices -> (rows x 1).
template <typename S>
Var<S> dot_rows(Var<S> a, Var<S> b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "dot_rows: shape mismatch");
  Tape<S>& t = *a.tape();
  int ia = a.id(), ib = b.id();
  Var<S> out = t.make(a.rows(), 1, [ia, ib](Tape<S>& t, auto& n) {
    const auto& na = t.node(ia);
    CMatMap<S> am(na.value.data(), na.rows, na.cols);
    CMatMap<S> bm(t.node(ib).value.data(), na.rows, na.cols);
    auto ga = detail::grad_mat(t, ia);
    auto gb = detail::grad_mat(t, ib);
    for (int r = 0; r < na.rows; ++r) {
      ga.row(r) += n.grad[r] * bm.row(r);
      gb.row(r) += n.grad[r] * am.row(r);
    }
  });
  auto& no = t.node(out.id());
  CMatMap<S> am(a.value().data(), a.rows(), a.cols());
  CMatMap<S> bm(b.value().data(), b.rows(), b.cols());
  for (int r = 0; r < a.rows(); ++r) no.value[r] = am.row(r).dot(bm.row(r));
  return out;
}

template <typename S>
Var<S> sum(Var<S> a) {
  Tape<S>& t = *a.tape();
  int ia = a.id();
  Var<S> out = t.make(1, 1, [ia](Tape<S>& t, auto& n) { t.grad_ref(ia) += n.grad[0]; });
  t.node(out.id()).value[0] = a.value().sum();
  return out;
}

template <typename S>
Var<S> mean(Var<S> a) {
  Tape<S>& t = *a.tape();
  int ia = a.id();
  const S inv = S(1) / S(a.size());
  Var<S> out =
      t.make(1, 1, [ia, inv](Tape<S>& t, auto& n) { t.grad_ref(ia) += n.grad[0] * inv; });
  t.node(out.id()).value[0] = a.value().mean();
  return out;
}

// ---------------------------------------------------------------------------
// Structure ops

template <typename S>
Var<S> slice_rows(Var<S> a, int start, int n) {
  detail::check(start >= 0 && start + n <= a.rows(), "slice_rows: out of range");
  Tape<S>& t = *a.tape();
  int ia = a.id(), c = a.cols();
  Var<S> out = t.make(n, c, [ia, start, n, c](Tape<S>& t, auto& nn) {
    auto gx = detail::grad_mat(t, ia);
    gx.middleRows(start, n) += MatMap<S>(nn.grad.data(), n, c);
  });
  t.node(out.id()).value =
      a.value().segment(static_cast<Eigen::Index>(start) * c, static_cast<Eigen::Index>(n) * c);
  return out;
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  detail::check(!parts.empty(), "concat_rows: empty");
  Tape<S>& t = *parts[0].tape();
  int c = parts[0].cols(), rows = 0;
  std::vector<int> ids, offsets, counts;
  for (const auto& p : parts) {
    detail::check(p.cols() == c, "concat_rows: col mismatch");
    ids.push_back(p.id());
    offsets.push_back(rows);
    counts.push_back(p.rows());
    rows += p.rows();
  }
  Var<S> out = t.make(rows, c, [ids, offsets, counts, c](Tape<S>& t, auto& n) {
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    for (size_t i = 0; i < ids.size(); ++i)
      detail::grad_mat(t, ids[i]) += g.middleRows(offsets[i], counts[i]);
  });
  auto& no = t.node(out.id());
  for (size_t i = 0; i < ids.size(); ++i)
    no.value.segment(static_cast<Eigen::Index>(offsets[i]) * c,
                     static_cast<Eigen::Index>(counts[i]) * c) = t.node(ids[i]).value;
  return out;
}

// Reinterpret shape without moving data.
template <typename S>
Var<S> reshape(Var<S> a, int rows, int cols) {
  detail::check(static_cast<Eigen::Index>(rows) * cols == a.size(), "reshape: size mismatch");
  Tape<S>& t = *a.tape();
  int ia = a.id();
  Var<S> out =
      t.make(rows, cols, [ia](Tape<S>& t, auto& n) { t.grad_ref(ia) += n.grad; });
  t.node(out.id()).value = a.value();
  return out;
}

// Embedding lookup: table (V x d), ids -> (n x d).
template <typename S>
Var<S> gather_rows(Var<S> table, std::vector<int> ids) {
  Tape<S>& t = *table.tape();
  int it = table.id(), d = table.cols();
  for (int i : ids) detail::check(i >= 0 && i < table.rows(), "gather_rows: id out of range");
  const int n = static_cast<int>(ids.size());
  Var<S> out = t.make(n, d, [it, ids, d](Tape<S>& t, auto& nn) {
    auto gt = detail::grad_mat(t, it);
    MatMap<S> g(nn.grad.data(), nn.rows, nn.cols);
    for (int i = 0; i < nn.rows; ++i) gt.row(ids[i]) += g.row(i);
  });
  auto& no = t.node(out.id());
  CMatMap<S> tv(table.value().data(), table.rows(), d);
  MatMap<S> y = detail::as_mat<S>(no);
  for (int i = 0; i < n; ++i) y.row(i) = tv.row(ids[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Convolution and spatial ops. Image tensors are (C, H*W) row-major with
// index c*(H*W) + y*W + x.

enum class Pad { kZero, kReplicate };

namespace detail {
inline int conv_out(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}
}  // namespace detail

// w: (C_out x k*k*C_in), b: (1 x C_out). Output (C_out, H_out*W_out).
template <typename S>
Var<S> conv2d(Var<S> x, Var<S> w, Var<S> b, int C_in, int H, int W, int C_out, int k,
              int stride, int pad, Pad mode = Pad::kZero) {
  detail::check(x.rows() == C_in && x.cols() == H * W, "conv2d: input shape");
  detail::check(w.rows() == C_out && w.cols() == k * k * C_in, "conv2d: weight shape");
  detail::check(b.size() == C_out, "conv2d: bias shape");
  Tape<S>& t = *x.tape();
  const int Ho = detail::conv_out(H, k, stride, pad);
  const int Wo = detail::conv_out(W, k, stride, pad);
  const int P = Ho * Wo;
  const int K = k * k * C_in;

  // im2col with column index = output position
  auto cols = std::make_shared<Mat<S>>(K, P);
  {
    CMatMap<S> xm(x.value().data(), C_in, H * W);
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        const int p = oy * Wo + ox;
        int row = 0;
        for (int c = 0; c < C_in; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            int iy = oy * stride - pad + ky;
            if (mode == Pad::kReplicate) iy = std::min(std::max(iy, 0), H - 1);
            for (int kx = 0; kx < k; ++kx, ++row) {
              int ix = ox * stride - pad + kx;
              if (mode == Pad::kReplicate) ix = std::min(std::max(ix, 0), W - 1);
              (*cols)(row, p) = (iy < 0 || iy >= H || ix < 0 || ix >= W)
                                    ? S(0)
                                    : xm(c, iy * W + ix);
            }
          }
        }
      }
    }
  }

  int ix_id = x.id(), iw = w.id(), ib = b.id();
  Var<S> out = t.make(
      C_out, P,
      [ix_id, iw, ib, cols, C_in, H, W, k, stride, pad, mode, Ho, Wo](Tape<S>& t, auto& n) {
        MatMap<S> g(n.grad.data(), n.rows, n.cols);  // (C_out x P)
        detail::grad_mat(t, iw).noalias() += g * cols->transpose();
        t.grad_ref(ib) += g.rowwise().sum().array();
        // d cols = W^T g, then scatter back to input
        Mat<S> gcols = detail::mat_of(t, iw).transpose() * g;  // (K x P)
        auto gx = detail::grad_mat(t, ix_id);
        for (int oy = 0; oy < Ho; ++oy) {
          for (int ox = 0; ox < Wo; ++ox) {
            const int p = oy * Wo + ox;
            int row = 0;
            for (int c = 0; c < C_in; ++c) {
              for (int ky = 0; ky < k; ++ky) {
                int iy = oy * stride - pad + ky;
                if (mode == Pad::kReplicate) iy = std::min(std::max(iy, 0), H - 1);
                for (int kx = 0; kx < k; ++kx, ++row) {
                  int ix = ox * stride - pad + kx;
                  if (mode == Pad::kReplicate) ix = std::min(std::max(ix, 0), W - 1);
                  if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                    gx(c, iy * W + ix) += gcols(row, p);
                }
              }
            }
          }
        }
      });
  auto& no = t.node(out.id());
  MatMap<S> y = detail::as_mat<S>(no);
  y.noalias() = detail::mat_of(t, iw) * (*cols);
  y.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(b.value().data(), C_out);
  return out;
}

// Length-preserving 1D convolution over (C_in x L); replicate padding keeps a
// constant sequence constant.
template <typename S>
Var<S> conv1d_same(Var<S> x, Var<S> w, Var<S> b, int C_in, int L, int C_out, int k,
                   Pad mode = Pad::kReplicate) {
  detail::check(x.rows() == C_in && x.cols() == L, "conv1d: input shape");
  detail::check(w.rows() == C_out && w.cols() == k * C_in, "conv1d: weight shape");
  const int pad = k / 2;
  Tape<S>& t = *x.tape();
  const int K = k * C_in;
  auto cols = std::make_shared<Mat<S>>(K, L);
  {
    CMatMap<S> xm(x.value().data(), C_in, L);
    for (int p = 0; p < L; ++p) {
      int row = 0;
      for (int c = 0; c < C_in; ++c) {
        for (int kk = 0; kk < k; ++kk, ++row) {
          int ix = p - pad + kk;
          if (mode == Pad::kReplicate) ix = std::min(std::max(ix, 0), L - 1);
          (*cols)(row, p) = (ix < 0 || ix >= L) ? S(0) : xm(c, ix);
        }
      }
    }
  }
  int ixid = x.id(), iw = w.id(), ib = b.id();
  Var<S> out = t.make(C_out, L, [ixid, iw, ib, cols, C_in, L, k, pad, mode](Tape<S>& t, auto& n) {
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    detail::grad_mat(t, iw).noalias() += g * cols->transpose();
    t.grad_ref(ib) += g.rowwise().sum().array();
    Mat<S> gcols = detail::mat_of(t, iw).transpose() * g;
    auto gx = detail::grad_mat(t, ixid);
    for (int p = 0; p < L; ++p) {
      int row = 0;
      for (int c = 0; c < C_in; ++c) {
        for (int kk = 0; kk < k; ++kk, ++row) {
          int ix = p - pad + kk;
          if (mode == Pad::kReplicate) ix = std::min(std::max(ix, 0), L - 1);
          if (ix >= 0 && ix < L) gx(c, ix) += gcols(row, p);
        }
      }
    }
  });
  auto& no = t.node(out.id());
  MatMap<S> y = detail::as_mat<S>(no);
  y.noalias() = detail::mat_of(t, iw) * (*cols);
  y.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(b.value().data(), C_out);
  return out;
}

// Mean-collapse a (C, H*W) tensor over one spatial axis.
// axis 0 collapses H (per-column profile, length W); axis 1 collapses W.
template <typename S>
Var<S> collapse_mean(Var<S> x, int C, int H, int W, int axis) {
  detail::check(x.rows() == C && x.cols() == H * W, "collapse_mean: shape");
  Tape<S>& t = *x.tape();
  int ix = x.id();
  const int out_len = axis == 0 ? W : H;
  const S inv = S(1) / S(axis == 0 ? H : W);
  Var<S> out = t.make(C, out_len, [ix, C, H, W, axis, inv](Tape<S>& t, auto& n) {
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    auto gx = detail::grad_mat(t, ix);
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x2 = 0; x2 < W; ++x2)
          gx(c, y * W + x2) += inv * (axis == 0 ? g(c, x2) : g(c, y));
  });
  auto& no = t.node(out.id());
  CMatMap<S> xm(x.value().data(), C, H * W);
  MatMap<S> y = detail::as_mat<S>(no);
  y.setZero();
  for (int c = 0; c < C; ++c)
    for (int yy = 0; yy < H; ++yy)
      for (int xx = 0; xx < W; ++xx)
        y(c, axis == 0 ? xx : yy) += inv * xm(c, yy * W + xx);
  return out;
}

namespace detail {
// Half-pixel linear resampling taps for 1D resize.
struct LinTap {
  int i0, i1;
  double w0, w1;
};
inline std::vector<LinTap> linear_taps(int in, int out) {
  std::vector<LinTap> taps(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * (static_cast<double>(in) / out) - 0.5;
    int i0 = static_cast<int>(std::floor(src));
    double f = src - i0;
    int a = std::min(std::max(i0, 0), in - 1);
    int b = std::min(std::max(i0 + 1, 0), in - 1);
    taps[o] = {a, b, 1.0 - f, f};
  }
  return taps;
}
}  // namespace detail

// Linear resize of each row of (C x L_in) to length L_out.
template <typename S>
Var<S> resize1d_linear(Var<S> x, int L_out) {
  Tape<S>& t = *x.tape();
  const int C = x.rows(), L_in = x.cols();
  auto taps = std::make_shared<std::vector<detail::LinTap>>(detail::linear_taps(L_in, L_out));
  int ix = x.id();
  Var<S> out = t.make(C, L_out, [ix, taps](Tape<S>& t, auto& n) {
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    auto gx = detail::grad_mat(t, ix);
    for (int c = 0; c < n.rows; ++c)
      for (int o = 0; o < n.cols; ++o) {
        const auto& tp = (*taps)[o];
        gx(c, tp.i0) += static_cast<S>(tp.w0) * g(c, o);
        gx(c, tp.i1) += static_cast<S>(tp.w1) * g(c, o);
      }
  });
  auto& no = t.node(out.id());
  CMatMap<S> xm(x.value().data(), C, L_in);
  MatMap<S> y = detail::as_mat<S>(no);
  for (int c = 0; c < C; ++c)
    for (int o = 0; o < L_out; ++o) {
      const auto& tp = (*taps)[o];
      y(c, o) = static_cast<S>(tp.w0) * xm(c, tp.i0) + static_cast<S>(tp.w1) * xm(c, tp.i1);
    }
  return out;
}

// Bilinear x2 upsample of (C, H*W) -> (C, 2H*2W). Half-pixel convention, so a
// constant input stays exactly constant.
template <typename S>
Var<S> upsample2x_bilinear(Var<S> x, int C, int H, int W) {
  detail::check(x.rows() == C && x.cols() == H * W, "upsample2x: shape");
  Tape<S>& t = *x.tape();
  const int Ho = 2 * H, Wo = 2 * W;
  auto ty = std::make_shared<std::vector<detail::LinTap>>(detail::linear_taps(H, Ho));
  auto tx = std::make_shared<std::vector<detail::LinTap>>(detail::linear_taps(W, Wo));
  int ix = x.id();
  Var<S> out = t.make(C, Ho * Wo, [ix, ty, tx, C, H, W, Ho, Wo](Tape<S>& t, auto& n) {
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    auto gx = detail::grad_mat(t, ix);
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Ho; ++oy) {
        const auto& typ = (*ty)[oy];
        for (int ox = 0; ox < Wo; ++ox) {
          const auto& txp = (*tx)[ox];
          const S gv = g(c, oy * Wo + ox);
          gx(c, typ.i0 * W + txp.i0) += static_cast<S>(typ.w0 * txp.w0) * gv;
          gx(c, typ.i0 * W + txp.i1) += static_cast<S>(typ.w0 * txp.w1) * gv;
          gx(c, typ.i1 * W + txp.i0) += static_cast<S>(typ.w1 * txp.w0) * gv;
          gx(c, typ.i1 * W + txp.i1) += static_cast<S>(typ.w1 * txp.w1) * gv;
        }
      }
  });
  auto& no = t.node(out.id());
  CMatMap<S> xm(x.value().data(), C, H * W);
  MatMap<S> y = detail::as_mat<S>(no);
  for (int c = 0; c < C; ++c)
    for (int oy = 0; oy < Ho; ++oy) {
      const auto& typ = (*ty)[oy];
      for (int ox = 0; ox < Wo; ++ox) {
        const auto& txp = (*tx)[ox];
        y(c, oy * Wo + ox) = static_cast<S>(typ.w0 * txp.w0) * xm(c, typ.i0 * W + txp.i0) +
                             static_cast<S>(typ.w0 * txp.w1) * xm(c, typ.i0 * W + txp.i1) +
                             static_cast<S>(typ.w1 * txp.w0) * xm(c, typ.i1 * W + txp.i0) +
                             static_cast<S>(typ.w1 * txp.w1) * xm(c, typ.i1 * W + txp.i1);
      }
    }
  return out;
}

// Bilinear sampling of (C, H*W) at N fixed (x, y) pixel positions, border
// clamped. Gradients flow into the feature map only; the sample coordinates
// are treated as constants.
template <typename S>
Var<S> bilinear_sample(Var<S> feat, int C, int H, int W,
                       const std::vector<std::pair<double, double>>& xy) {
  detail::check(feat.rows() == C && feat.cols() == H * W, "bilinear_sample: shape");
  Tape<S>& t = *feat.tape();
  const int N = static_cast<int>(xy.size());
  struct Tap {
    int i00, i01, i10, i11;
    double w00, w01, w10, w11;
  };
  auto taps = std::make_shared<std::vector<Tap>>();
  taps->reserve(N);
  for (const auto& [px, py] : xy) {
    double cx = std::min(std::max(px, 0.0), static_cast<double>(W - 1));
    double cy = std::min(std::max(py, 0.0), static_cast<double>(H - 1));
    int x0 = static_cast<int>(std::floor(cx)), y0 = static_cast<int>(std::floor(cy));
    x0 = std::min(x0, W - 1);
    y0 = std::min(y0, H - 1);
    int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
    double fx = cx - x0, fy = cy - y0;
    taps->push_back({y0 * W + x0, y0 * W + x1, y1 * W + x0, y1 * W + x1,
                     (1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx});
  }
  int ifeat = feat.id();
  Var<S> out = t.make(N, C, [ifeat, taps, C](Tape<S>& t, auto& n) {
    MatMap<S> g(n.grad.data(), n.rows, n.cols);
    auto gf = detail::grad_mat(t, ifeat);
    for (int i = 0; i < n.rows; ++i) {
      const auto& tp = (*taps)[i];
      for (int c = 0; c < C; ++c) {
        const S gv = g(i, c);
        gf(c, tp.i00) += static_cast<S>(tp.w00) * gv;
        gf(c, tp.i01) += static_cast<S>(tp.w01) * gv;
        gf(c, tp.i10) += static_cast<S>(tp.w10) * gv;
        gf(c, tp.i11) += static_cast<S>(tp.w11) * gv;
      }
    }
  });
  auto& no = t.node(out.id());
  CMatMap<S> fm(feat.value().data(), C, H * W);
  MatMap<S> y = detail::as_mat<S>(no);
  for (int i = 0; i < N; ++i) {
    const auto& tp = (*taps)[i];
    for (int c = 0; c < C; ++c)
      y(i, c) = static_cast<S>(tp.w00) * fm(c, tp.i00) + static_cast<S>(tp.w01) * fm(c, tp.i01) +
                static_cast<S>(tp.w10) * fm(c, tp.i10) + static_cast<S>(tp.w11) * fm(c, tp.i11);
  }
  return out;
}

}  // namespace posetext::ad
