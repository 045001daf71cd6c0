#pragma once

#include "posetext/hand.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace posetext {

// Which joints participate in the prompts. Mode "all" forces n = 21;
// mode "random" draws `n` distinct joints with the given seed.
struct SelectionSpec {
  int n = kNumJoints;
  std::uint64_t seed = 0;
  std::string mode = "all";  // "all" | "random"

  void require_valid() const;
  static SelectionSpec all();
  static SelectionSpec random(int n, std::uint64_t seed);
};

struct PromptTriple {
  std::string wx, wy, wz;
};

struct TokenSeq {
  std::vector<int> ids;
  std::string vocab_version;
};

enum class Axis { kX = 0, kY = 1, kZ = 2 };

// The joint indices the spec's selection picks, sorted ascending (set order).
std::vector<int> select_joints(const SelectionSpec& selection);

// Selected joints sorted ascending by the chosen coordinate; ties broken by
// ascending joint index. Throws "invalid pose" on non-finite coordinates.
std::vector<int> order_joints(const Pose3D& pose, Axis axis, const SelectionSpec& selection);

// The three axis-ordered prompt strings ("From left to right, the joints
// are ...", etc.), deterministic given (pose, selection).
PromptTriple generate_prompts(const Pose3D& pose, const SelectionSpec& selection);

// Closed word-level vocabulary: one token per line, line number = id.
class Vocabulary {
 public:
  static const Vocabulary& builtin();
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int id_of(const std::string& word) const;  // -1 when absent
  const std::string& word_of(int id) const { return words_[id]; }
  int size() const { return static_cast<int>(words_.size()); }
  const std::string& version() const { return version_; }

  int bos() const { return bos_; }
  int eos() const { return eos_; }
  int pad() const { return pad_; }

 private:
  void index();
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> by_word_;
  std::string version_;
  int bos_ = -1, eos_ = -1, pad_ = -1;
};

// Lowercased word/punctuation tokenization against the closed vocabulary,
// wrapped in BOS/EOS. Throws "unknown token" on out-of-vocabulary words.
TokenSeq tokenize(const std::string& prompt, const Vocabulary& vocab = Vocabulary::builtin());

}  // namespace posetext
