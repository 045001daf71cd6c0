#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

namespace posetext {

// All desk-scale distances are in heatmap-bin units, never millimeters.
struct MetricReport {
  double pjpe = 0.0;
  double median_pjpe = 0.0;
  double pa_pjpe = 0.0;
  double auc = 0.0;
  double f_near = 0.0;
  double f_far = 0.0;
  std::vector<std::pair<double, double>> pck_curve;  // (threshold, fraction)
};

using PointSet = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// Per-point Euclidean distances; returns (mean, median).
std::pair<double, double> pjpe(const PointSet& pred, const PointSet& gt);

// Closed-form similarity alignment (rotation, isotropic scale, translation)
// of pred onto gt minimizing summed squared distance. Throws
// "degenerate alignment" on collinear input.
PointSet procrustes_align(const PointSet& pred, const PointSet& gt);

inline double pa_pjpe(const PointSet& pred, const PointSet& gt) {
  return pjpe(procrustes_align(pred, gt), gt).first;
}

// PCK fractions at evenly spaced thresholds plus trapezoid AUC normalized to
// [0, 1].
std::pair<std::vector<std::pair<double, double>>, double> pck_auc(
    const std::vector<double>& errors, double t_min, double t_max, int steps);

// Harmonic mean of precision and recall between two point clouds at a
// distance threshold.
double f_score(const PointSet& pred_cloud, const PointSet& gt_cloud, double threshold);

}  // namespace posetext
