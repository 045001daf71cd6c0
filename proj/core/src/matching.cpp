#include "posetext/matching.hpp"

#include <stdexcept>

namespace posetext {

namespace {

Eigen::MatrixXd one_axis(const Eigen::MatrixXd& pose, const Eigen::MatrixXd& text,
                         double tau) {
  ad::Tape<double> tape;
  ad::Arr<double> pf(pose.size()), tf(text.size());
  for (int r = 0; r < pose.rows(); ++r)
    for (int c = 0; c < pose.cols(); ++c)
      pf[static_cast<Eigen::Index>(r) * pose.cols() + c] = pose(r, c);
  for (int r = 0; r < text.rows(); ++r)
    for (int c = 0; c < text.cols(); ++c)
      tf[static_cast<Eigen::Index>(r) * text.cols() + c] = text(r, c);
  ad::Var<double> p = tape.input(static_cast<int>(pose.rows()), static_cast<int>(pose.cols()),
                                 std::move(pf));
  ad::Var<double> t = tape.input(static_cast<int>(text.rows()), static_cast<int>(text.cols()),
                                 std::move(tf));
  ad::Var<double> tau_v = tape.scalar(tau);
  ad::Var<double> m = logit_matrix_axis(p, t, tau_v);
  Eigen::MatrixXd out(pose.rows(), pose.rows());
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c)
      out(r, c) = m.value()[static_cast<Eigen::Index>(r) * out.cols() + c];
  return out;
}

}  // namespace

LogitMatrices logit_matrix(const Eigen::MatrixXd& pose_x, const Eigen::MatrixXd& pose_y,
                           const Eigen::MatrixXd& pose_z, const Eigen::MatrixXd& text_x,
                           const Eigen::MatrixXd& text_y, const Eigen::MatrixXd& text_z,
                           double tau_x, double tau_y, double tau_z) {
  LogitMatrices m;
  m.m_lr = one_axis(pose_x, text_x, tau_x);
  m.m_tb = one_axis(pose_y, text_y, tau_y);
  m.m_nf = one_axis(pose_z, text_z, tau_z);
  return m;
}

double clip_loss(const LogitMatrices& m) {
  if (m.m_lr.rows() != m.m_lr.cols() || m.m_tb.rows() != m.m_tb.cols() ||
      m.m_nf.rows() != m.m_nf.cols())
    throw std::invalid_argument("batch mismatch");
  if (m.m_lr.rows() != m.m_tb.rows() || m.m_lr.rows() != m.m_nf.rows())
    throw std::invalid_argument("batch mismatch");
  ad::Tape<double> tape;
  auto to_var = [&tape](const Eigen::MatrixXd& x) {
    ad::Arr<double> f(x.size());
    for (int r = 0; r < x.rows(); ++r)
      for (int c = 0; c < x.cols(); ++c) f[static_cast<Eigen::Index>(r) * x.cols() + c] = x(r, c);
    return tape.input(static_cast<int>(x.rows()), static_cast<int>(x.cols()), std::move(f));
  };
  ad::Var<double> loss = clip_loss_var(to_var(m.m_lr), to_var(m.m_tb), to_var(m.m_nf));
  return loss.value()[0];
}

std::array<double, 3> retrieval_top1(const LogitMatrices& m) {
  std::array<double, 3> out{};
  const Eigen::MatrixXd* mats[3] = {&m.m_lr, &m.m_tb, &m.m_nf};
  for (int a = 0; a < 3; ++a) {
    const auto& mat = *mats[a];
    int hits = 0;
    for (int r = 0; r < mat.rows(); ++r) {
      int best = 0;
      for (int c = 1; c < mat.cols(); ++c)
        if (mat(r, c) > mat(r, best)) best = c;
      if (best == r) ++hits;
    }
    out[a] = static_cast<double>(hits) / static_cast<double>(mat.rows());
  }
  return out;
}

}  // namespace posetext
