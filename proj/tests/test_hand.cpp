#include "doctest.h"

#include "posetext/hand.hpp"
#include "posetext/rng.hpp"

#include <filesystem>
#include <set>

using namespace posetext;

TEST_CASE("canonical joint table has 21 unique names with the quoted examples") {
  const JointTable& t = canonical_joint_names();
  CHECK(t.names.size() == 21);
  std::set<std::string> unique(t.names.begin(), t.names.end());
  CHECK(unique.size() == 21);
  for (const char* name :
       {"index MCP", "thumb fingertip", "little PIP", "middle DIP", "ring fingertip"})
    CHECK_NOTHROW(t.index_of(name));
  CHECK(t.names[0] == "wrist");
  // stable across calls
  const JointTable& t2 = canonical_joint_names();
  CHECK(&t == &t2);
  CHECK(t2.names == t.names);
}

TEST_CASE("desk topology is the icosphere ladder with exact midpoint maps") {
  MeshTopology topo = build_topology(RunPreset::desk());
  CHECK(topo.levels == std::vector<int>{12, 42, 162, 642});
  for (const auto& m : topo.upsample_maps) {
    for (int r = 0; r < m.rows(); ++r) {
      CHECK(m.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
      // each row is either a carried vertex (single 1.0) or a midpoint (two 0.5)
      int nonzero = 0;
      for (int c = 0; c < m.cols(); ++c)
        if (m(r, c) != 0.0) ++nonzero;
      if (r < m.cols()) {
        CHECK(nonzero == 1);
        CHECK(m(r, r) == 1.0);
      } else {
        CHECK(nonzero == 2);
      }
    }
  }
  CHECK(topo.faces.size() == 1280);  // 20 * 4^3
  CHECK(topo.faces_per_level.size() == 3);

  // deterministic
  MeshTopology topo2 = build_topology(RunPreset::desk());
  CHECK(topo2.levels == topo.levels);
  for (size_t l = 0; l < topo.upsample_maps.size(); ++l)
    CHECK((topo2.upsample_maps[l] - topo.upsample_maps[l]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(topo2.faces == topo.faces);
}

TEST_CASE("upsample chain keeps vertices in the convex hull of their parents") {
  MeshTopology topo = build_topology(RunPreset::desk());
  Rng rng(99);
  Eigen::MatrixXd base(12, 3);
  for (int i = 0; i < base.size(); ++i) base(i / 3, i % 3) = rng.normal() * 4.0;
  Eigen::MatrixXd dense = topo.chain() * base;
  CHECK(dense.rows() == 642);
  // row-stochastic chain: every output inside the bounding box of the inputs
  for (int a = 0; a < 3; ++a) {
    CHECK(dense.col(a).minCoeff() >= base.col(a).minCoeff() - 1e-12);
    CHECK(dense.col(a).maxCoeff() <= base.col(a).maxCoeff() + 1e-12);
  }
}

TEST_CASE("paper topology loads from file; missing file is an error") {
  CHECK_THROWS_WITH(build_topology(RunPreset::paper(), "/nonexistent/topo.txt"),
                    "topology file missing");
  CHECK_THROWS_WITH(build_topology(RunPreset::paper()), "topology file missing");
  MeshTopology topo =
      build_topology(RunPreset::paper(), std::string(POSETEXT_DATA_DIR) + "/paper_topology.txt");
  CHECK(topo.levels == std::vector<int>{21, 98, 389, 778});
}

TEST_CASE("topology file round-trips") {
  MeshTopology topo = build_topology(RunPreset::desk());
  const std::string path =
      (std::filesystem::temp_directory_path() / "posetext_topo_roundtrip.txt").string();
  save_topology_file(topo, path);
  MeshTopology back = load_topology_file(path);
  back.validate();
  CHECK(back.levels == topo.levels);
  CHECK(back.faces == topo.faces);
  for (size_t l = 0; l < topo.upsample_maps.size(); ++l)
    CHECK((back.upsample_maps[l] - topo.upsample_maps[l]).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("preset shape tables") {
  const RunPreset& desk = RunPreset::desk();
  CHECK(desk.image_size == 64);
  CHECK(desk.heatmap_resolution == 16);
  CHECK(desk.widths == std::array<int, 5>{16, 16, 32, 64, 128});
  CHECK(desk.stage_dims == std::array<int, 4>{32, 32, 16, 8});
  CHECK(desk.batch_size == 32);
  CHECK(desk.embed_dim == 32);
  const RunPreset& paper = RunPreset::paper();
  CHECK(paper.image_size == 224);
  CHECK(paper.heatmap_resolution == 56);
  CHECK(paper.widths == std::array<int, 5>{56, 256, 512, 1024, 2048});
  CHECK(paper.levels == std::array<int, 4>{21, 98, 389, 778});
  CHECK(paper.batch_size == 48);
  CHECK_THROWS(RunPreset::by_name("laptop"));
}
