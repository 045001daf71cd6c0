#include "doctest.h"

#include "posetext/text_encoder.hpp"
#include "test_support.hpp"

#include <functional>

using namespace posetext;

namespace {

struct Fixture {
  ParamStore<double> store;
  TextEncoder<double> enc;

  explicit Fixture(std::uint64_t seed = 7) {
    store.init_seed = seed;
    enc = TextEncoder<double>::create(
        store, TextEncoderConfig::desk(Vocabulary::builtin().size(), 32));
  }
};

Eigen::VectorXd encode_one(Fixture& f, const std::string& prompt, int axis) {
  ad::Tape<double> tape;
  ParamBinding<double> bind;
  TokenSeq seq = tokenize(prompt);
  ad::Var<double> v =
      f.enc.encode_axis(tape, f.store, bind, seq, axis, Vocabulary::builtin().pad());
  Eigen::VectorXd out(v.size());
  for (int i = 0; i < v.size(); ++i) out[i] = v.value()[i];
  return out;
}

}  // namespace

TEST_CASE("encode_text shapes, determinism, and unit norm") {
  Fixture f;
  const std::string px = "From left to right, the joints are wrist and thumb MCP.";
  Eigen::VectorXd fx = encode_one(f, px, 0);
  CHECK(fx.size() == 32);
  CHECK(fx.norm() == doctest::Approx(1.0).epsilon(1e-6));
  Eigen::VectorXd fx2 = encode_one(f, px, 0);
  CHECK((fx - fx2).cwiseAbs().maxCoeff() == 0.0);

  // axis heads differ, so the same tokens encode differently per axis
  Eigen::VectorXd fy = encode_one(f, px, 1);
  CHECK((fx - fy).norm() > 1e-6);
}

TEST_CASE("two prompts differing in one name produce distinct features") {
  Fixture f(123);
  Eigen::VectorXd a =
      encode_one(f, "From left to right, the joints are wrist and thumb MCP.", 0);
  Eigen::VectorXd b =
      encode_one(f, "From left to right, the joints are wrist and index MCP.", 0);
  CHECK((a - b).norm() > 1e-4);
}

TEST_CASE("pad tokens appended after EOS leave the features unchanged") {
  Fixture f;
  TokenSeq seq = tokenize("From near to far, the joints are middle DIP and ring fingertip.");
  TokenSeq padded = seq;
  for (int k = 0; k < 5; ++k) padded.ids.push_back(Vocabulary::builtin().pad());

  ad::Tape<double> t1, t2;
  ParamBinding<double> b1, b2;
  ad::Var<double> v1 = f.enc.encode_axis(t1, f.store, b1, seq, 2, Vocabulary::builtin().pad());
  ad::Var<double> v2 =
      f.enc.encode_axis(t2, f.store, b2, padded, 2, Vocabulary::builtin().pad());
  for (int i = 0; i < v1.size(); ++i)
    CHECK(std::abs(v1.value()[i] - v2.value()[i]) < 1e-6);
}

TEST_CASE("over-long prompts are rejected") {
  Fixture f;
  TokenSeq seq;
  seq.ids.assign(f.enc.cfg.max_len + 1, Vocabulary::builtin().pad());
  ad::Tape<double> tape;
  ParamBinding<double> bind;
  CHECK_THROWS_WITH(f.enc.encode_axis(tape, f.store, bind, seq, 0, Vocabulary::builtin().pad()),
                    "prompt too long");
  // the longest real prompt (all 21 joints) must fit
  Pose3D pose;
  Rng rng(5);
  for (int j = 0; j < kNumJoints; ++j)
    for (int a = 0; a < 3; ++a) pose.coords(j, a) = rng.uniform(0, 16);
  PromptTriple p = generate_prompts(pose, SelectionSpec::all());
  TokenSeq longest = tokenize(p.wx);
  CHECK(static_cast<int>(longest.ids.size()) <= f.enc.cfg.max_len);
  CHECK_NOTHROW(f.enc.encode_axis(tape, f.store, bind, longest, 0, Vocabulary::builtin().pad()));
}

TEST_CASE("analytic parameter gradients match finite differences on an 8-sample batch") {
  Fixture f(99);
  Rng rng(17);
  std::vector<std::array<TokenSeq, 3>> batch;
  for (int i = 0; i < 8; ++i) {
    Pose3D pose;
    for (int j = 0; j < kNumJoints; ++j)
      for (int a = 0; a < 3; ++a) pose.coords(j, a) = rng.uniform(0, 16);
    PromptTriple p = generate_prompts(pose, SelectionSpec::random(4 + i, 100 + i));
    batch.push_back({tokenize(p.wx), tokenize(p.wy), tokenize(p.wz)});
  }

  // scalar probe: sum over all outputs of all samples and axes
  auto forward_probe = [&](const ParamStore<double>& store) {
    double acc = 0.0;
    for (const auto& sample : batch) {
      ad::Tape<double> tape;
      ParamBinding<double> bind;
      auto feats = f.enc.encode(tape, store, bind, sample[0], sample[1], sample[2],
                                Vocabulary::builtin().pad());
      acc += feats.fx.value().sum() + feats.fy.value().sum() + feats.fz.value().sum();
    }
    return acc;
  };

  // analytic gradient accumulated across the batch
  auto off = f.store.offsets();
  ad::Arr<double> analytic = ad::Arr<double>::Zero(f.store.total_size());
  for (const auto& sample : batch) {
    ad::Tape<double> tape;
    ParamBinding<double> bind;
    auto feats = f.enc.encode(tape, f.store, bind, sample[0], sample[1], sample[2],
                              Vocabulary::builtin().pad());
    tape.seed(feats.fx, ad::Arr<double>::Ones(32));
    tape.seed(feats.fy, ad::Arr<double>::Ones(32));
    tape.seed(feats.fz, ad::Arr<double>::Ones(32));
    tape.backward();
    bind.harvest(tape, f.store, off, analytic);
  }

  // probe a few entries of several named tensors
  Rng prng(23);
  std::vector<std::pair<int, Eigen::Index>> probes;  // (param, local index)
  for (const char* name : {"text.tok_embed", "text.pos_embed", "text.base0.head1.wq",
                           "text.base1.ff1.w", "text.phix0.head2.wv", "text.outy.w",
                           "text.base0.ln1.gain", "text.outz.b"}) {
    const int p = f.store.by_name.at(name);
    for (int k = 0; k < 3; ++k)
      probes.emplace_back(p, static_cast<Eigen::Index>(
                                 prng.uniform_index(f.store[p].value.size())));
  }
  double worst = 0.0;
  for (auto [p, li] : probes) {
    const double x0 = f.store[p].value[li];
    const double h = 1e-5 * std::max(1.0, std::abs(x0));
    f.store[p].value[li] = x0 + h;
    const double fp = forward_probe(f.store);
    f.store[p].value[li] = x0 - h;
    const double fm = forward_probe(f.store);
    f.store[p].value[li] = x0;
    const double fd = (fp - fm) / (2 * h);
    const double an = analytic[off[p] + li];
    worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
  }
  CHECK(worst < 1e-4);
}
