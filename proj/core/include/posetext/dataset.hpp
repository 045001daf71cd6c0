#pragma once

#include "posetext/synth.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace posetext {

struct DatasetManifest {
  int count = 0;
  std::string preset;
  std::uint64_t base_seed = 0;
  std::uint64_t blend_seed = 0;
  int n_verts = 0;
  std::vector<std::uint64_t> offsets;  // per-sample byte offsets into data.bin

  void validate_against(std::uint64_t file_bytes) const;
};

struct DatasetConfig {
  int count = 0;
  std::uint64_t base_seed = 0;
  std::string preset = "desk";
  std::string out_dir;
};

// Writes <out_dir>/manifest.json plus <out_dir>/data.bin (little-endian 32-bit
// floats; per sample: image tensor, 21x3 pose, n x 3 vertices). Sample i uses
// seed base_seed + i, so regeneration with the same config is bit-identical.
DatasetManifest make_dataset(const DatasetConfig& config);

// In-memory dataset backed by the float32 payload of a data file.
class Dataset {
 public:
  static Dataset load(const std::string& dir);
  // Build directly in memory with the same per-sample seeding as make_dataset.
  static Dataset generate(const DatasetConfig& config);

  int size() const { return manifest_.count; }
  const DatasetManifest& manifest() const { return manifest_; }
  const RunPreset& preset() const;
  HandSample sample(int index) const;

 private:
  DatasetManifest manifest_;
  std::vector<float> payload_;
  int floats_per_sample_ = 0;
};

// Loader for FreiHAND-style annotation files: JSON arrays of per-sample 21x3
// joints and n x 3 vertices (millimeter or meter scale), optionally paired
// with binary PPM images named <index>.ppm in `image_dir`. Labels are
// similarity-mapped into the preset's [0, L) bin cube; missing images yield
// black frames. Evaluation-side plumbing only.
std::vector<HandSample> load_external_annotations(const std::string& xyz_json_path,
                                                  const std::string& verts_json_path,
                                                  const RunPreset& preset,
                                                  const std::string& image_dir = "");

}  // namespace posetext
