#include "posetext/prompts.hpp"

#include "posetext/rng.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace posetext {

void SelectionSpec::require_valid() const {
  if (mode != "all" && mode != "random")
    throw std::invalid_argument("selection mode must be \"all\" or \"random\"");
  if (n < 1 || n > kNumJoints) throw std::invalid_argument("selection n out of range");
  if (mode == "all" && n != kNumJoints)
    throw std::invalid_argument("selection mode \"all\" forces n = 21");
}

SelectionSpec SelectionSpec::all() { return SelectionSpec{}; }

SelectionSpec SelectionSpec::random(int n, std::uint64_t seed) {
  SelectionSpec s;
  s.n = n;
  s.seed = seed;
  s.mode = "random";
  s.require_valid();
  return s;
}

std::vector<int> select_joints(const SelectionSpec& selection) {
  selection.require_valid();
  std::vector<int> all(kNumJoints);
  std::iota(all.begin(), all.end(), 0);
  if (selection.mode == "all") return all;
  Rng rng(mix_seed(0x6a6f696e74ull, selection.seed));  // "joint"
  for (int i = 0; i < selection.n; ++i) {
    int j = i + static_cast<int>(rng.uniform_index(kNumJoints - i));
    std::swap(all[i], all[j]);
  }
  std::vector<int> picked(all.begin(), all.begin() + selection.n);
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<int> order_joints(const Pose3D& pose, Axis axis, const SelectionSpec& selection) {
  pose.require_valid();
  std::vector<int> idx = select_joints(selection);
  const int col = static_cast<int>(axis);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return pose.coords(a, col) < pose.coords(b, col);
  });
  return idx;
}

namespace {

std::string join_names(const std::vector<int>& order) {
  const JointTable& table = canonical_joint_names();
  std::ostringstream out;
  const size_t n = order.size();
  for (size_t i = 0; i < n; ++i) {
    if (i > 0) {
      if (n == 2)
        out << " ";
      else
        out << ", ";
      if (i + 1 == n) out << "and ";
    }
    out << table.names[order[i]];
  }
  return out.str();
}

}  // namespace

PromptTriple generate_prompts(const Pose3D& pose, const SelectionSpec& selection) {
  PromptTriple p;
  p.wx = "From left to right, the joints are " +
         join_names(order_joints(pose, Axis::kX, selection)) + ".";
  p.wy = "From top to bottom, the joints are " +
         join_names(order_joints(pose, Axis::kY, selection)) + ".";
  p.wz = "From near to far, the joints are " +
         join_names(order_joints(pose, Axis::kZ, selection)) + ".";
  return p;
}

void Vocabulary::index() {
  by_word_.clear();
  for (int i = 0; i < static_cast<int>(words_.size()); ++i) by_word_.emplace(words_[i], i);
  auto need = [&](const char* w) {
    auto it = by_word_.find(w);
    if (it == by_word_.end()) throw std::runtime_error(std::string("vocabulary missing ") + w);
    return it->second;
  };
  pad_ = need("<pad>");
  bos_ = need("<bos>");
  eos_ = need("<eos>");
  std::string joined;
  for (const auto& w : words_) {
    joined += w;
    joined += '\n';
  }
  std::ostringstream v;
  v << "fnv1a:" << std::hex << fnv1a(joined);
  version_ = v.str();
}

const Vocabulary& Vocabulary::builtin() {
  static const Vocabulary vocab = [] {
    Vocabulary v;
    v.words_ = {"<pad>",  "<bos>",  "<eos>",  "from",   "left",   "to",     "right",
                "top",    "bottom", "near",   "far",    "the",    "joints", "are",
                "and",    ",",      ".",      "wrist",  "thumb",  "index",  "middle",
                "ring",   "little", "mcp",    "pip",    "dip",    "fingertip"};
    v.index();
    return v;
  }();
  return vocab;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    v.words_.push_back(line);
  }
  // A trailing newline is part of the format, not an empty token.
  while (!v.words_.empty() && v.words_.back().empty()) v.words_.pop_back();
  v.index();
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
  for (const auto& w : words_) out << w << "\n";
}

int Vocabulary::id_of(const std::string& word) const {
  auto it = by_word_.find(word);
  return it == by_word_.end() ? -1 : it->second;
}

TokenSeq tokenize(const std::string& prompt, const Vocabulary& vocab) {
  TokenSeq seq;
  seq.vocab_version = vocab.version();
  seq.ids.push_back(vocab.bos());
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    int id = vocab.id_of(word);
    if (id < 0) throw std::runtime_error("unknown token");
    seq.ids.push_back(id);
    word.clear();
  };
  for (char c : prompt) {
    if (c == ' ') {
      flush();
    } else if (c == ',' || c == '.') {
      flush();
      int id = vocab.id_of(std::string(1, c));
      if (id < 0) throw std::runtime_error("unknown token");
      seq.ids.push_back(id);
    } else {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  seq.ids.push_back(vocab.eos());
  return seq;
}

}  // namespace posetext
