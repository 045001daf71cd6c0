#include "posetext/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace posetext {

std::vector<std::pair<int, int>> face_edges(const std::vector<std::array<int, 3>>& faces) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(faces.size() * 3);
  for (const auto& f : faces) {
    edges.emplace_back(f[0], f[1]);
    edges.emplace_back(f[1], f[2]);
    edges.emplace_back(f[2], f[0]);
  }
  return edges;
}

double pose_loss(const Pose3D& pred, const Pose3D& gt) {
  return (pred.coords - gt.coords).cwiseAbs().sum();
}

double vertex_loss(const PointSet& pred, const PointSet& gt) {
  if (pred.rows() != gt.rows()) throw std::invalid_argument("vertex_loss: shape mismatch");
  return (pred - gt).cwiseAbs().sum();
}

double normal_loss(const PointSet& pred, const PointSet& gt, const MeshTopology& topo) {
  double loss = 0.0;
  for (const auto& f : topo.faces) {
    Eigen::Vector3d a = gt.row(f[0]), b = gt.row(f[1]), c = gt.row(f[2]);
    Eigen::Vector3d n = (b - a).cross(c - a);
    const double norm = n.norm();
    if (norm < 1e-12) throw std::runtime_error("degenerate gt face");
    n /= norm;
    const int idx[3][2] = {{f[0], f[1]}, {f[1], f[2]}, {f[2], f[0]}};
    for (const auto& e : idx) {
      Eigen::Vector3d d = pred.row(e[0]) - pred.row(e[1]);
      const double len = d.norm();
      if (len < 1e-12) throw std::runtime_error("degenerate edge");
      loss += std::abs(d.dot(n) / len);
    }
  }
  return loss;
}

double edge_loss(const PointSet& pred, const PointSet& gt, const MeshTopology& topo) {
  double loss = 0.0;
  for (const auto& f : topo.faces) {
    const int idx[3][2] = {{f[0], f[1]}, {f[1], f[2]}, {f[2], f[0]}};
    for (const auto& e : idx) {
      const double lp = (pred.row(e[0]) - pred.row(e[1])).norm();
      const double lg = (gt.row(e[0]) - gt.row(e[1])).norm();
      loss += std::abs(lp - lg);
    }
  }
  return loss;
}

std::pair<double, double> consistency_losses(
    const AugmentedPair& pair, const Eigen::Matrix<double, Eigen::Dynamic, 2>& pred1_pose2d,
    const Eigen::Matrix<double, Eigen::Dynamic, 2>& pred2_pose2d, const PointSet& pred1_verts,
    const PointSet& pred2_verts) {
  if (pred1_pose2d.rows() != pred2_pose2d.rows() || pred1_verts.rows() != pred2_verts.rows())
    throw std::invalid_argument("consistency_losses: shape mismatch");
  const double l_c2d =
      (apply_affine(pair.aff, pred1_pose2d) - pred2_pose2d).cwiseAbs().sum();
  const double l_c3d =
      (pred1_verts * pair.rot.transpose() - pred2_verts).cwiseAbs().sum();
  return {l_c2d, l_c3d};
}

double total_loss(const LossReport& terms, const LossWeights& weights) {
  const double vals[] = {terms.l_p, terms.l_v,   terms.l_n,   terms.l_e,
                         terms.l_c2d, terms.l_c3d, terms.l_clip};
  for (double v : vals)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("invalid loss term");
  return weights.a1 * (terms.l_p + terms.l_v) + weights.a2 * (terms.l_n + terms.l_e) +
         weights.a3 * (terms.l_c2d + terms.l_c3d) + weights.a4 * terms.l_clip;
}

}  // namespace posetext
