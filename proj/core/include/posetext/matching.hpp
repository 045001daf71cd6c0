#pragma once

#include "posetext/autodiff.hpp"
#include "posetext/params.hpp"

#include <Eigen/Dense>

#include <array>
#include <string>

namespace posetext {

inline constexpr double kTemperatureInit = 1.0 / 0.07;  // contrastive-pretraining convention
inline constexpr double kTemperatureMax = 100.0;

// Learnable per-axis temperatures, parameterized in log space; exp(log_tau)
// is clamped to (0, 100].
template <typename S>
struct Temperatures {
  std::array<int, 3> log_tau{};

  static Temperatures create(ParamStore<S>& store) {
    Temperatures t;
    const char* axes[3] = {"x", "y", "z"};
    for (int a = 0; a < 3; ++a)
      t.log_tau[a] = store.add(std::string("match.log_tau_") + axes[a], 1, 1, Init::kConst,
                               std::log(kTemperatureInit));
    return t;
  }

  ad::Var<S> tau(ad::Tape<S>& tape, const ParamStore<S>& store, ParamBinding<S>& bind,
                 int axis) const {
    return ad::clamp_max(ad::exp_(bind.use(tape, store, log_tau[axis])),
                         static_cast<S>(kTemperatureMax));
  }
};

struct LogitMatrices {
  Eigen::MatrixXd m_lr, m_tb, m_nf;  // B x B, row = pose sample, col = text sample
};

// m = tau * pose . text^T for one axis; both inputs are (B x E) with
// unit-norm rows (checked; throws "batch mismatch" on size disagreement).
template <typename S>
ad::Var<S> logit_matrix_axis(ad::Var<S> pose, ad::Var<S> text, ad::Var<S> tau) {
  if (pose.rows() != text.rows() || pose.rows() < 1)
    throw std::invalid_argument("batch mismatch");
  if (pose.cols() != text.cols()) throw std::invalid_argument("batch mismatch");
  auto check_unit = [](const ad::Var<S>& v) {
    ad::CMatMap<S> m(v.value().data(), v.rows(), v.cols());
    for (int r = 0; r < v.rows(); ++r)
      if (std::abs(m.row(r).norm() - S(1)) > S(1e-3))
        throw std::invalid_argument("embeddings must be unit-norm");
  };
  check_unit(pose);
  check_unit(text);
  return ad::scale_by(ad::matmul_nt(pose, text), tau);
}

// Symmetric contrastive loss for one axis: half the sum of the row-wise and
// column-wise diagonal cross-entropies.
template <typename S>
ad::Var<S> clip_loss_axis(ad::Var<S> m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("batch mismatch");
  ad::Tape<S>& tape = *m.tape();
  const int B = m.rows();
  ad::Arr<S> eye(static_cast<Eigen::Index>(B) * B);
  eye.setZero();
  for (int i = 0; i < B; ++i) eye[static_cast<Eigen::Index>(i) * B + i] = S(1);
  ad::Var<S> eye_v = tape.input(B, B, std::move(eye));

  auto diag_ce = [&](ad::Var<S> mat) {
    ad::Var<S> lp = ad::logsoftmax_rows(mat);
    return ad::neg(ad::mean(ad::mul(lp, eye_v)));  // mean over B rows of -log p_ii, times 1/B twice
  };
  // mean(mul(lp, eye)) averages over B*B entries; rescale to a per-row mean.
  ad::Var<S> row_term = ad::scale(diag_ce(m), static_cast<S>(B));
  ad::Var<S> col_term = ad::scale(diag_ce(ad::transpose(m)), static_cast<S>(B));
  return ad::scale(ad::add(row_term, col_term), S(0.5));
}

// Average of the three per-axis symmetric losses.
template <typename S>
ad::Var<S> clip_loss_var(ad::Var<S> m_lr, ad::Var<S> m_tb, ad::Var<S> m_nf) {
  ad::Var<S> sum3 = ad::add(ad::add(clip_loss_axis(m_lr), clip_loss_axis(m_tb)),
                            clip_loss_axis(m_nf));
  return ad::scale(sum3, S(1) / S(3));
}

// Plain-value entry points.
LogitMatrices logit_matrix(const Eigen::MatrixXd& pose_x, const Eigen::MatrixXd& pose_y,
                           const Eigen::MatrixXd& pose_z, const Eigen::MatrixXd& text_x,
                           const Eigen::MatrixXd& text_y, const Eigen::MatrixXd& text_z,
                           double tau_x, double tau_y, double tau_z);
double clip_loss(const LogitMatrices& m);

// Fraction of rows whose argmax sits on the diagonal, per axis.
std::array<double, 3> retrieval_top1(const LogitMatrices& m);

}  // namespace posetext
