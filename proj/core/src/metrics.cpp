#include "posetext/metrics.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace posetext {

std::pair<double, double> pjpe(const PointSet& pred, const PointSet& gt) {
  if (pred.rows() != gt.rows()) throw std::invalid_argument("pjpe: shape mismatch");
  if (pred.rows() == 0) throw std::invalid_argument("pjpe: empty input");
  std::vector<double> d(pred.rows());
  for (int i = 0; i < pred.rows(); ++i) d[i] = (pred.row(i) - gt.row(i)).norm();
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(d.size());
  std::vector<double> s = d;
  std::sort(s.begin(), s.end());
  const size_t n = s.size();
  double median = (n % 2 == 1) ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  return {mean, median};
}

PointSet procrustes_align(const PointSet& pred, const PointSet& gt) {
  if (pred.rows() != gt.rows()) throw std::invalid_argument("procrustes: shape mismatch");
  const int n = static_cast<int>(pred.rows());
  if (n < 3) throw std::runtime_error("degenerate alignment");

  Eigen::RowVector3d mu_p = pred.colwise().mean();
  Eigen::RowVector3d mu_g = gt.colwise().mean();
  PointSet xc = pred.rowwise() - mu_p;
  PointSet yc = gt.rowwise() - mu_g;

  const double var_p = xc.squaredNorm() / n;
  if (var_p < 1e-18) throw std::runtime_error("degenerate alignment");

  Eigen::Matrix3d cov = (yc.transpose() * xc) / n;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d d = svd.singularValues();
  // Collinear inputs leave the rotation about the common axis undetermined.
  if (d(1) < 1e-12 * std::max(d(0), 1e-300)) throw std::runtime_error("degenerate alignment");

  Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) S(2, 2) = -1.0;
  Eigen::Matrix3d R = svd.matrixU() * S * svd.matrixV().transpose();
  const double scale = (d.asDiagonal() * S).trace() / var_p;
  Eigen::RowVector3d t = mu_g - scale * (R * mu_p.transpose()).transpose();

  PointSet aligned = scale * (pred * R.transpose());
  aligned.rowwise() += t;
  return aligned;
}

std::pair<std::vector<std::pair<double, double>>, double> pck_auc(
    const std::vector<double>& errors, double t_min, double t_max, int steps) {
  if (errors.empty()) throw std::invalid_argument("pck_auc: empty error list");
  if (!(t_max > t_min) || t_min < 0.0) throw std::invalid_argument("pck_auc: bad range");
  if (steps < 2) throw std::invalid_argument("pck_auc: steps must be >= 2");
  std::vector<std::pair<double, double>> curve(steps);
  for (int i = 0; i < steps; ++i) {
    const double t = t_min + (t_max - t_min) * i / (steps - 1);
    int count = 0;
    for (double e : errors)
      if (e <= t) ++count;
    curve[i] = {t, static_cast<double>(count) / static_cast<double>(errors.size())};
  }
  double area = 0.0;
  for (int i = 0; i + 1 < steps; ++i)
    area += 0.5 * (curve[i].second + curve[i + 1].second) * (curve[i + 1].first - curve[i].first);
  return {curve, area / (t_max - t_min)};
}

double f_score(const PointSet& pred_cloud, const PointSet& gt_cloud, double threshold) {
  if (pred_cloud.rows() == 0 || gt_cloud.rows() == 0)
    throw std::invalid_argument("f_score: empty cloud");
  auto fraction_within = [threshold](const PointSet& a, const PointSet& b) {
    int hit = 0;
    for (int i = 0; i < a.rows(); ++i) {
      double best = (b.rowwise() - a.row(i)).rowwise().norm().minCoeff();
      if (best <= threshold) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(a.rows());
  };
  const double precision = fraction_within(pred_cloud, gt_cloud);
  const double recall = fraction_within(gt_cloud, pred_cloud);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace posetext
