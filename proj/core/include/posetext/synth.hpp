#pragma once

#include "posetext/hand.hpp"
#include "posetext/metrics.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace posetext {

// Procedural articulated-hand skeleton. For each non-wrist joint, the bone
// from its parent has a sampled length, and the joint has a sampled
// articulation angle: MCP entries are in-palm splay around the finger's base
// azimuth, PIP/DIP/fingertip entries are cumulative flexion out of the palm
// plane.
struct SkeletonSpec {
  std::array<int, kNumJoints> parent{};                    // wrist = -1
  std::array<std::pair<double, double>, kNumJoints> length_range{};
  std::array<std::pair<double, double>, kNumJoints> angle_range{};
  std::array<double, 5> base_azimuth{};                    // per finger, radians
  std::uint64_t blend_seed = 1234;                         // fixes the vertex blend matrix

  void require_valid() const;
  static SkeletonSpec standard();
};

struct HandSample {
  Eigen::VectorXf image;  // (3, H, W) channel-major, values in [0, 1]
  Pose3D pose_gt;         // uvd bins, float32-quantized
  PointSet verts_gt;      // (n_final x 3) uvd bins, float32-quantized
  std::int64_t sample_id = 0;
  std::uint64_t seed = 0;
};

// A sample plus an in-plane-augmented second view. `aff` maps view1's 2D
// ground-truth pose onto view2's; `rot` maps view1's vertices onto view2's.
struct AugmentedPair {
  HandSample view1, view2;
  Eigen::Matrix<double, 2, 3> aff = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
};

// Row-stochastic (n_final x 21) blend matrix tying ground-truth vertices to
// the joints; depends only on (spec.blend_seed, n_final).
Eigen::MatrixXd vertex_blend_matrix(const SkeletonSpec& spec, int n_final);

// Fully deterministic sample: forward-kinematics pose under a seeded global
// rotation, scaled-orthographic projection into [0, L), blend-matrix
// vertices, and a Gaussian-blob rendering with per-joint fixed pseudo-colors
// (blob amplitude shaded by depth so the d axis is recoverable from pixels).
HandSample sample_hand(std::uint64_t seed, const SkeletonSpec& spec, const RunPreset& preset);

// Seeded in-plane affine (rotation <= +-45 deg, scale 0.8-1.2, translation
// <= +-0.1 L) applied to image and 2D pose, plus the matching depth-axis 3D
// rotation applied to vertices. Seed 0 yields identity transforms. Resamples
// up to 10 times if a joint leaves the frame, then throws
// "augmentation failed".
AugmentedPair augment_pair(const HandSample& sample, std::uint64_t seed,
                           const RunPreset& preset);

// Affine application helper: p2 = A * [u v 1]^T for each row of `uv`.
Eigen::Matrix<double, Eigen::Dynamic, 2> apply_affine(
    const Eigen::Matrix<double, 2, 3>& aff,
    const Eigen::Matrix<double, Eigen::Dynamic, 2>& uv);

}  // namespace posetext
