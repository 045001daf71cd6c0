#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace posetext {

inline constexpr int kNumJoints = 21;

// The fixed 21-joint skeleton vocabulary: wrist first, then per finger
// (thumb, index, middle, ring, little) the chain MCP, PIP, DIP, fingertip.
// The ordering is our convention; nothing downstream depends on it beyond
// determinism.
struct JointTable {
  std::array<std::string, kNumJoints> names;

  int index_of(const std::string& name) const;
};

const JointTable& canonical_joint_names();

// 21 joint positions in (u, v, d) heatmap-bin units, row j = joint j.
struct Pose3D {
  Eigen::Matrix<double, kNumJoints, 3> coords = Eigen::Matrix<double, kNumJoints, 3>::Zero();

  bool finite() const { return coords.allFinite(); }
  void require_valid() const;
};

// Vertex-count ladder with faces at the final level and one row-stochastic
// upsampling map per level transition.
struct MeshTopology {
  std::vector<int> levels;                                // strictly increasing
  std::vector<std::array<int, 3>> faces;                  // final level
  std::vector<Eigen::MatrixXd> upsample_maps;             // (n_{l+1} x n_l)
  std::vector<std::vector<std::array<int, 3>>> faces_per_level;  // intermediate (desk only)

  void validate() const;

  // Product of all upsampling maps: (n_final x n_0).
  Eigen::MatrixXd chain() const;
};

struct RunPreset {
  std::string name;               // "paper" or "desk"
  int image_size = 0;             // square RGB input
  int heatmap_resolution = 0;     // L, bins per axis
  std::array<int, 5> widths{};    // pyramid channel widths f0..f4
  int f4_spatial = 0;             // spatial side of f4
  std::array<int, 4> levels{};    // mesh vertex ladder
  std::array<int, 4> stage_dims{};// mesh token dims per stage
  int embed_dim = 0;              // E, common pose/text embedding dim
  int batch_size = 0;

  int f0_spatial() const { return image_size / 4; }

  static const RunPreset& desk();
  static const RunPreset& paper();
  static const RunPreset& by_name(const std::string& name);
};

// Desk preset: icosphere subdivision ladder 12/42/162/642 with exact midpoint
// upsampling maps. Paper preset: loads the ladder from `topology_file`
// (throws "topology file missing" when absent).
MeshTopology build_topology(const RunPreset& preset, const std::string& topology_file = "");

// Plain-text topology file round-trip (format: a `levels:` header line, `f`
// face lines for the final level, and `map l: row col value` triplets).
MeshTopology load_topology_file(const std::string& path);
void save_topology_file(const MeshTopology& topo, const std::string& path);

}  // namespace posetext
