#pragma once

#include "posetext/autodiff.hpp"
#include "posetext/hand.hpp"
#include "posetext/metrics.hpp"
#include "posetext/synth.hpp"

#include <utility>
#include <vector>

namespace posetext {

struct LossWeights {
  double a1 = 1.0;   // pose + vertex
  double a2 = 0.05;  // normal + edge
  double a3 = 0.1;   // 2D + 3D consistency
  double a4 = 0.1;   // contrastive
};

struct LossReport {
  double l_p = 0, l_v = 0, l_n = 0, l_e = 0, l_c2d = 0, l_c3d = 0, l_clip = 0;
  double total = 0;
};

// Directed face edges (i, j), three per triangle in index order. Shared mesh
// edges appear once per incident face.
std::vector<std::pair<int, int>> face_edges(const std::vector<std::array<int, 3>>& faces);

// --- plain-value losses -----------------------------------------------------

// Sum over points of the L1 norm of the 3-vector difference.
double pose_loss(const Pose3D& pred, const Pose3D& gt);
double vertex_loss(const PointSet& pred, const PointSet& gt);

// Sum over faces and their directed edges of |unit(pred_i - pred_j) . n_gt|,
// with n_gt the ground-truth face unit normal. Throws "degenerate edge" on a
// zero-length predicted edge.
double normal_loss(const PointSet& pred, const PointSet& gt, const MeshTopology& topo);

// Sum over faces and edges of | |pred edge| - |gt edge| |.
double edge_loss(const PointSet& pred, const PointSet& gt, const MeshTopology& topo);

// (l_c2d, l_c3d) per Eq-6 semantics: L1 between the affine-transformed
// view-1 2D prediction and the view-2 2D prediction, and between the rotated
// view-1 vertices and the view-2 vertices.
std::pair<double, double> consistency_losses(
    const AugmentedPair& pair, const Eigen::Matrix<double, Eigen::Dynamic, 2>& pred1_pose2d,
    const Eigen::Matrix<double, Eigen::Dynamic, 2>& pred2_pose2d, const PointSet& pred1_verts,
    const PointSet& pred2_verts);

// a1 (l_p + l_v) + a2 (l_n + l_e) + a3 (l_c2d + l_c3d) + a4 l_clip.
// Throws "invalid loss term" on a negative or non-finite term.
double total_loss(const LossReport& terms, const LossWeights& weights);

// --- tape losses (same math, differentiable w.r.t. predictions) -------------

template <typename S>
ad::Var<S> l1_sum(ad::Var<S> pred, ad::Var<S> gt) {
  return ad::sum(ad::abs_(ad::sub(pred, gt)));
}

template <typename S>
ad::Var<S> normal_loss_var(ad::Var<S> pred, const PointSet& gt,
                           const std::vector<std::array<int, 3>>& faces) {
  ad::Tape<S>& tape = *pred.tape();
  auto edges = face_edges(faces);
  const int E = static_cast<int>(edges.size());
  std::vector<int> from(E), to(E);
  ad::Arr<S> normals(static_cast<Eigen::Index>(E) * 3);
  for (int e = 0; e < E; ++e) {
    from[e] = edges[e].first;
    to[e] = edges[e].second;
  }
  // ground-truth unit normal per face, repeated for its three edges
  for (size_t f = 0; f < faces.size(); ++f) {
    Eigen::Vector3d a = gt.row(faces[f][0]), b = gt.row(faces[f][1]), c = gt.row(faces[f][2]);
    Eigen::Vector3d n = (b - a).cross(c - a);
    const double norm = n.norm();
    if (norm < 1e-12) throw std::runtime_error("degenerate gt face");
    n /= norm;
    for (int k = 0; k < 3; ++k)
      for (int d = 0; d < 3; ++d)
        normals[(static_cast<Eigen::Index>(f) * 3 + k) * 3 + d] = static_cast<S>(n[d]);
  }
  ad::Var<S> n_gt = tape.input(E, 3, std::move(normals));
  ad::Var<S> diff = ad::sub(ad::gather_rows(pred, from), ad::gather_rows(pred, to));
  ad::Var<S> unit = ad::l2_normalize_rows(diff, "degenerate edge");
  return ad::sum(ad::abs_(ad::dot_rows(unit, n_gt)));
}

template <typename S>
ad::Var<S> edge_loss_var(ad::Var<S> pred, const PointSet& gt,
                         const std::vector<std::array<int, 3>>& faces) {
  ad::Tape<S>& tape = *pred.tape();
  auto edges = face_edges(faces);
  const int E = static_cast<int>(edges.size());
  std::vector<int> from(E), to(E);
  ad::Arr<S> gt_len(E);
  for (int e = 0; e < E; ++e) {
    from[e] = edges[e].first;
    to[e] = edges[e].second;
    gt_len[e] = static_cast<S>((gt.row(edges[e].first) - gt.row(edges[e].second)).norm());
  }
  ad::Var<S> lens = ad::norm_rows(
      ad::sub(ad::gather_rows(pred, from), ad::gather_rows(pred, to)), nullptr);
  return ad::sum(ad::abs_(ad::sub(lens, tape.input(E, 1, std::move(gt_len)))));
}

}  // namespace posetext
