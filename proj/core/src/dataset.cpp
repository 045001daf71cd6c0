#include "posetext/dataset.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <stdexcept>

// Payload floats are written through raw byte copies; this code assumes a
// little-endian host, which covers every platform we build for.

namespace posetext {

using nlohmann::json;

void DatasetManifest::validate_against(std::uint64_t file_bytes) const {
  if (static_cast<int>(offsets.size()) != count)
    throw std::runtime_error("manifest offsets inconsistent with count");
  for (int i = 0; i < count; ++i) {
    if (offsets[i] >= file_bytes) throw std::runtime_error("manifest offset beyond file length");
    if (i > 0 && offsets[i] <= offsets[i - 1])
      throw std::runtime_error("manifest offsets not increasing");
  }
}

namespace {

int floats_per_sample(const RunPreset& preset, int n_verts) {
  return 3 * preset.image_size * preset.image_size + kNumJoints * 3 + n_verts * 3;
}

void append_sample(std::vector<float>& payload, const HandSample& s) {
  payload.insert(payload.end(), s.image.data(), s.image.data() + s.image.size());
  for (int j = 0; j < kNumJoints; ++j)
    for (int a = 0; a < 3; ++a) payload.push_back(static_cast<float>(s.pose_gt.coords(j, a)));
  for (int v = 0; v < s.verts_gt.rows(); ++v)
    for (int a = 0; a < 3; ++a) payload.push_back(static_cast<float>(s.verts_gt(v, a)));
}

json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["format"] = "posetext-dataset-v1";
  j["count"] = m.count;
  j["preset"] = m.preset;
  j["base_seed"] = m.base_seed;
  j["blend_seed"] = m.blend_seed;
  j["n_verts"] = m.n_verts;
  j["order"] = {"image", "pose", "verts"};
  j["offsets"] = m.offsets;
  return j;
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.count = j.at("count").get<int>();
  m.preset = j.at("preset").get<std::string>();
  m.base_seed = j.at("base_seed").get<std::uint64_t>();
  m.blend_seed = j.at("blend_seed").get<std::uint64_t>();
  m.n_verts = j.at("n_verts").get<int>();
  m.offsets = j.at("offsets").get<std::vector<std::uint64_t>>();
  return m;
}

std::vector<float> build_payload(const DatasetConfig& config, DatasetManifest& manifest) {
  if (config.count < 1) throw std::invalid_argument("dataset count must be >= 1");
  const RunPreset& preset = RunPreset::by_name(config.preset);
  SkeletonSpec spec = SkeletonSpec::standard();
  manifest.count = config.count;
  manifest.preset = preset.name;
  manifest.base_seed = config.base_seed;
  manifest.blend_seed = spec.blend_seed;
  manifest.n_verts = preset.levels.back();
  const int fps = floats_per_sample(preset, manifest.n_verts);
  std::vector<float> payload;
  payload.reserve(static_cast<size_t>(fps) * config.count);
  manifest.offsets.resize(config.count);
  for (int i = 0; i < config.count; ++i) {
    manifest.offsets[i] = static_cast<std::uint64_t>(payload.size()) * sizeof(float);
    append_sample(payload, sample_hand(config.base_seed + i, spec, preset));
  }
  return payload;
}

}  // namespace

DatasetManifest make_dataset(const DatasetConfig& config) {
  if (config.out_dir.empty()) throw std::invalid_argument("dataset out_dir required");
  std::filesystem::create_directories(config.out_dir);
  DatasetManifest manifest;
  std::vector<float> payload = build_payload(config, manifest);

  const std::string bin_path = config.out_dir + "/data.bin";
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + bin_path);
  bin.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  bin.close();

  std::ofstream mf(config.out_dir + "/manifest.json", std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot write manifest");
  mf << manifest_to_json(manifest).dump(2) << "\n";
  return manifest;
}

Dataset Dataset::load(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("missing dataset: " + dir);
  json j;
  mf >> j;
  Dataset ds;
  ds.manifest_ = manifest_from_json(j);
  const RunPreset& preset = RunPreset::by_name(ds.manifest_.preset);
  ds.floats_per_sample_ = floats_per_sample(preset, ds.manifest_.n_verts);

  std::ifstream bin(dir + "/data.bin", std::ios::binary | std::ios::ate);
  if (!bin) throw std::runtime_error("missing dataset: " + dir);
  const std::uint64_t bytes = static_cast<std::uint64_t>(bin.tellg());
  ds.manifest_.validate_against(bytes);
  if (bytes != static_cast<std::uint64_t>(ds.floats_per_sample_) * ds.manifest_.count * 4)
    throw std::runtime_error("dataset payload size mismatch");
  ds.payload_.resize(bytes / sizeof(float));
  bin.seekg(0);
  bin.read(reinterpret_cast<char*>(ds.payload_.data()), static_cast<std::streamsize>(bytes));
  return ds;
}

Dataset Dataset::generate(const DatasetConfig& config) {
  Dataset ds;
  ds.payload_ = build_payload(config, ds.manifest_);
  ds.floats_per_sample_ =
      floats_per_sample(RunPreset::by_name(ds.manifest_.preset), ds.manifest_.n_verts);
  return ds;
}

const RunPreset& Dataset::preset() const { return RunPreset::by_name(manifest_.preset); }

HandSample Dataset::sample(int index) const {
  if (index < 0 || index >= manifest_.count)
    throw std::out_of_range("dataset sample index out of range");
  const RunPreset& p = preset();
  const float* base = payload_.data() + static_cast<size_t>(index) * floats_per_sample_;
  HandSample s;
  const int img_floats = 3 * p.image_size * p.image_size;
  s.image = Eigen::Map<const Eigen::VectorXf>(base, img_floats);
  const float* pose = base + img_floats;
  for (int j = 0; j < kNumJoints; ++j)
    for (int a = 0; a < 3; ++a) s.pose_gt.coords(j, a) = pose[j * 3 + a];
  const float* verts = pose + kNumJoints * 3;
  s.verts_gt.resize(manifest_.n_verts, 3);
  for (int v = 0; v < manifest_.n_verts; ++v)
    for (int a = 0; a < 3; ++a) s.verts_gt(v, a) = verts[v * 3 + a];
  s.sample_id = index;
  s.seed = manifest_.base_seed + static_cast<std::uint64_t>(index);
  return s;
}

namespace {

// Minimal binary PPM (P6) reader; returns false when the file is absent.
bool read_ppm(const std::string& path, int& w, int& h, std::vector<unsigned char>& rgb) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string magic;
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255) throw std::runtime_error("unsupported PPM: " + path);
  in.get();  // single whitespace after header
  rgb.resize(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  return static_cast<bool>(in);
}

Eigen::VectorXf resize_to_preset(const std::vector<unsigned char>& rgb, int w, int h, int out) {
  Eigen::VectorXf img = Eigen::VectorXf::Zero(3 * out * out);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < out; ++y)
      for (int x = 0; x < out; ++x) {
        const double sx = std::min((x + 0.5) * w / out - 0.5, w - 1.0);
        const double sy = std::min((y + 0.5) * h / out - 0.5, h - 1.0);
        const int x0 = std::max(0, std::min(static_cast<int>(sx), w - 2));
        const int y0 = std::max(0, std::min(static_cast<int>(sy), h - 2));
        const double fx = std::min(std::max(sx - x0, 0.0), 1.0);
        const double fy = std::min(std::max(sy - y0, 0.0), 1.0);
        auto at = [&](int yy, int xx) {
          return rgb[(static_cast<size_t>(yy) * w + xx) * 3 + c] / 255.0;
        };
        const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                         fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        img[c * out * out + y * out + x] = static_cast<float>(v);
      }
  return img;
}

}  // namespace

std::vector<HandSample> load_external_annotations(const std::string& xyz_json_path,
                                                  const std::string& verts_json_path,
                                                  const RunPreset& preset,
                                                  const std::string& image_dir) {
  std::ifstream xf(xyz_json_path);
  if (!xf) throw std::runtime_error("cannot open " + xyz_json_path);
  json xyz;
  xf >> xyz;
  std::ifstream vf(verts_json_path);
  if (!vf) throw std::runtime_error("cannot open " + verts_json_path);
  json verts;
  vf >> verts;
  if (!xyz.is_array() || !verts.is_array() || xyz.size() != verts.size())
    throw std::runtime_error("annotation arrays malformed or mismatched");

  const double L = preset.heatmap_resolution;
  const double margin = 1.0;
  std::vector<HandSample> out;
  out.reserve(xyz.size());
  for (size_t i = 0; i < xyz.size(); ++i) {
    const auto& jp = xyz[i];
    const auto& jv = verts[i];
    if (jp.size() != kNumJoints) throw std::runtime_error("expected 21 joints per sample");
    HandSample s;
    s.sample_id = static_cast<std::int64_t>(i);
    for (int j = 0; j < kNumJoints; ++j)
      for (int a = 0; a < 3; ++a) s.pose_gt.coords(j, a) = jp[j][a].get<double>();
    s.verts_gt.resize(static_cast<int>(jv.size()), 3);
    for (int v = 0; v < s.verts_gt.rows(); ++v)
      for (int a = 0; a < 3; ++a) s.verts_gt(v, a) = jv[v][a].get<double>();

    // Similarity-map the labels into the bin cube (the same framing the
    // synthetic generator uses), keeping joints and vertices consistent.
    Eigen::RowVector3d lo = s.pose_gt.coords.colwise().minCoeff();
    Eigen::RowVector3d hi = s.pose_gt.coords.colwise().maxCoeff();
    const double extent = std::max({hi(0) - lo(0), hi(1) - lo(1), hi(2) - lo(2), 1e-12});
    const double scale = (L - 2.0 * margin) / extent;
    Eigen::RowVector3d center = 0.5 * (lo + hi);
    auto map_pts = [&](auto& pts) {
      for (int r = 0; r < pts.rows(); ++r)
        for (int a = 0; a < 3; ++a) pts(r, a) = (pts(r, a) - center(a)) * scale + 0.5 * L;
    };
    map_pts(s.pose_gt.coords);
    map_pts(s.verts_gt);

    s.image = Eigen::VectorXf::Zero(3 * preset.image_size * preset.image_size);
    if (!image_dir.empty()) {
      int w = 0, h = 0;
      std::vector<unsigned char> rgb;
      if (read_ppm(image_dir + "/" + std::to_string(i) + ".ppm", w, h, rgb))
        s.image = resize_to_preset(rgb, w, h, preset.image_size);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace posetext
