#include "posetext/hand.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace posetext {

namespace {

JointTable make_joint_table() {
  JointTable t;
  t.names[0] = "wrist";
  const char* fingers[5] = {"thumb", "index", "middle", "ring", "little"};
  const char* parts[4] = {"MCP", "PIP", "DIP", "fingertip"};
  int idx = 1;
  for (int f = 0; f < 5; ++f)
    for (int p = 0; p < 4; ++p) t.names[idx++] = std::string(fingers[f]) + " " + parts[p];
  return t;
}

}  // namespace

const JointTable& canonical_joint_names() {
  static const JointTable table = make_joint_table();
  return table;
}

int JointTable::index_of(const std::string& name) const {
  for (int i = 0; i < kNumJoints; ++i)
    if (names[i] == name) return i;
  throw std::invalid_argument("unknown joint name: " + name);
}

void Pose3D::require_valid() const {
  if (!finite()) throw std::invalid_argument("invalid pose");
}

void MeshTopology::validate() const {
  if (levels.size() < 2) throw std::invalid_argument("topology needs at least two levels");
  for (size_t i = 1; i < levels.size(); ++i)
    if (levels[i] <= levels[i - 1])
      throw std::invalid_argument("topology levels must be strictly increasing");
  const int n_final = levels.back();
  for (const auto& f : faces) {
    for (int v : f)
      if (v < 0 || v >= n_final) throw std::invalid_argument("face index out of range");
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
      throw std::invalid_argument("degenerate face");
  }
  if (upsample_maps.size() != levels.size() - 1)
    throw std::invalid_argument("one upsample map per level transition required");
  for (size_t l = 0; l + 1 < levels.size(); ++l) {
    const auto& m = upsample_maps[l];
    if (m.rows() != levels[l + 1] || m.cols() != levels[l])
      throw std::invalid_argument("upsample map shape mismatch");
    for (int r = 0; r < m.rows(); ++r) {
      double s = m.row(r).sum();
      if (std::abs(s - 1.0) > 1e-6)
        throw std::invalid_argument("upsample map row not stochastic");
    }
  }
  for (size_t l = 0; l < faces_per_level.size(); ++l) {
    for (const auto& f : faces_per_level[l])
      for (int v : f)
        if (v < 0 || v >= levels[l]) throw std::invalid_argument("level face index out of range");
  }
}

Eigen::MatrixXd MeshTopology::chain() const {
  Eigen::MatrixXd c = upsample_maps[0];
  for (size_t l = 1; l < upsample_maps.size(); ++l) c = upsample_maps[l] * c;
  return c;
}

const RunPreset& RunPreset::desk() {
  static const RunPreset p = [] {
    RunPreset r;
    r.name = "desk";
    r.image_size = 64;
    r.heatmap_resolution = 16;
    r.widths = {16, 16, 32, 64, 128};
    r.f4_spatial = 2;
    r.levels = {12, 42, 162, 642};
    r.stage_dims = {32, 32, 16, 8};
    r.embed_dim = 32;
    r.batch_size = 32;
    return r;
  }();
  return p;
}

const RunPreset& RunPreset::paper() {
  static const RunPreset p = [] {
    RunPreset r;
    r.name = "paper";
    r.image_size = 224;
    r.heatmap_resolution = 56;
    r.widths = {56, 256, 512, 1024, 2048};
    r.f4_spatial = 8;
    r.levels = {21, 98, 389, 778};
    r.stage_dims = {256, 128, 64, 32};
    r.embed_dim = 512;
    r.batch_size = 48;
    return r;
  }();
  return p;
}

const RunPreset& RunPreset::by_name(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw std::invalid_argument("unknown preset: " + name);
}

namespace {

struct IcoMesh {
  std::vector<Eigen::Vector3d> verts;
  std::vector<std::array<int, 3>> faces;
};

IcoMesh icosahedron() {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  IcoMesh m;
  const double v[12][3] = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                           {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                           {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : v) m.verts.push_back(Eigen::Vector3d(p[0], p[1], p[2]).normalized());
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  return m;
}

// One midpoint-subdivision step. Also emits the (new x old) upsampling map:
// carried vertices get a single 1.0, edge midpoints two entries of 0.5.
IcoMesh subdivide(const IcoMesh& in, Eigen::MatrixXd* map_out) {
  IcoMesh out;
  out.verts = in.verts;
  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    int id = static_cast<int>(out.verts.size());
    out.verts.push_back(((in.verts[a] + in.verts[b]) * 0.5).normalized());
    midpoint.emplace(key, id);
    return id;
  };
  for (const auto& f : in.faces) {
    int a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
    out.faces.push_back({f[0], a, c});
    out.faces.push_back({f[1], b, a});
    out.faces.push_back({f[2], c, b});
    out.faces.push_back({a, b, c});
  }
  if (map_out) {
    const int n_old = static_cast<int>(in.verts.size());
    const int n_new = static_cast<int>(out.verts.size());
    *map_out = Eigen::MatrixXd::Zero(n_new, n_old);
    for (int i = 0; i < n_old; ++i) (*map_out)(i, i) = 1.0;
    for (const auto& [edge, id] : midpoint) {
      (*map_out)(id, edge.first) = 0.5;
      (*map_out)(id, edge.second) = 0.5;
    }
  }
  return out;
}

MeshTopology desk_topology() {
  MeshTopology topo;
  IcoMesh mesh = icosahedron();
  topo.levels.push_back(static_cast<int>(mesh.verts.size()));
  topo.faces_per_level.push_back(mesh.faces);
  for (int l = 0; l < 3; ++l) {
    Eigen::MatrixXd map;
    mesh = subdivide(mesh, &map);
    topo.levels.push_back(static_cast<int>(mesh.verts.size()));
    topo.upsample_maps.push_back(std::move(map));
    topo.faces_per_level.push_back(mesh.faces);
  }
  topo.faces = mesh.faces;
  topo.faces_per_level.pop_back();  // final level lives in `faces`
  return topo;
}

}  // namespace

MeshTopology build_topology(const RunPreset& preset, const std::string& topology_file) {
  if (preset.name == "desk") {
    MeshTopology topo = desk_topology();
    topo.validate();
    return topo;
  }
  if (topology_file.empty() || !std::ifstream(topology_file).good())
    throw std::runtime_error("topology file missing");
  MeshTopology topo = load_topology_file(topology_file);
  topo.validate();
  return topo;
}

MeshTopology load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("topology file missing");
  MeshTopology topo;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty topology file");
  {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag != "levels:") throw std::runtime_error("topology file: expected levels header");
    int n;
    while (ss >> n) topo.levels.push_back(n);
  }
  if (topo.levels.size() < 2) throw std::runtime_error("topology file: bad levels header");
  std::vector<Eigen::MatrixXd> maps;
  for (size_t l = 0; l + 1 < topo.levels.size(); ++l)
    maps.push_back(Eigen::MatrixXd::Zero(topo.levels[l + 1], topo.levels[l]));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "f") {
      std::array<int, 3> f{};
      ss >> f[0] >> f[1] >> f[2];
      topo.faces.push_back(f);
    } else if (tag == "map") {
      int l, r, c;
      double v;
      ss >> l;
      ss.ignore(1);  // ':'
      ss >> r >> c >> v;
      if (l < 0 || l >= static_cast<int>(maps.size()))
        throw std::runtime_error("topology file: bad map level");
      maps[l](r, c) = v;
    } else {
      throw std::runtime_error("topology file: bad line: " + line);
    }
  }
  topo.upsample_maps = std::move(maps);
  return topo;
}

void save_topology_file(const MeshTopology& topo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write topology file: " + path);
  out << "levels:";
  for (int n : topo.levels) out << " " << n;
  out << "\n";
  for (const auto& f : topo.faces) out << "f " << f[0] << " " << f[1] << " " << f[2] << "\n";
  for (size_t l = 0; l < topo.upsample_maps.size(); ++l) {
    const auto& m = topo.upsample_maps[l];
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c)
        if (m(r, c) != 0.0) out << "map " << l << ": " << r << " " << c << " " << m(r, c) << "\n";
  }
}

}  // namespace posetext
