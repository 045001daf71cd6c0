#include "posetext/pose_encoder.hpp"

#include <stdexcept>

namespace posetext {

namespace {

void check_lixel(const LixelFeatures& lx) {
  if (lx.hx.rows() != kNumJoints || lx.hy.rows() != kNumJoints || lx.hz.rows() != kNumJoints)
    throw std::invalid_argument("lixel features must have 21 rows");
  if (lx.hx.cols() != lx.hy.cols() || lx.hx.cols() != lx.hz.cols() || lx.hx.cols() < 1)
    throw std::invalid_argument("lixel features must share a bin count");
  if (!lx.hx.allFinite() || !lx.hy.allFinite() || !lx.hz.allFinite())
    throw std::invalid_argument("lixel features must be finite");
}

}  // namespace

Pose3D decode_joints_hard(const LixelFeatures& lx) {
  check_lixel(lx);
  Pose3D pose;
  const Eigen::MatrixXd* axes[3] = {&lx.hx, &lx.hy, &lx.hz};
  for (int a = 0; a < 3; ++a) {
    for (int j = 0; j < kNumJoints; ++j) {
      int best = 0;
      double best_v = (*axes[a])(j, 0);
      for (int i = 1; i < axes[a]->cols(); ++i) {
        if ((*axes[a])(j, i) > best_v) {
          best_v = (*axes[a])(j, i);
          best = i;
        }
      }
      pose.coords(j, a) = best;
    }
  }
  return pose;
}

Pose3D decode_joints_soft_plain(const LixelFeatures& lx) {
  check_lixel(lx);
  Pose3D pose;
  const Eigen::MatrixXd* axes[3] = {&lx.hx, &lx.hy, &lx.hz};
  for (int a = 0; a < 3; ++a) {
    const int L = static_cast<int>(axes[a]->cols());
    for (int j = 0; j < kNumJoints; ++j) {
      Eigen::ArrayXd row = axes[a]->row(j).array();
      row -= row.maxCoeff();
      Eigen::ArrayXd p = row.exp();
      p /= p.sum();
      double e = 0.0;
      for (int i = 0; i < L; ++i) e += i * p[i];
      pose.coords(j, a) = e;
    }
  }
  return pose;
}

}  // namespace posetext
