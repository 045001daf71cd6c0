#include "doctest.h"

#include "posetext/autodiff.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace posetext;
using ad::Arr;
using ad::Tape;
using ad::Var;

namespace {

// Generic single-input gradient check: builds y = reduce(op(x)) and compares
// the tape gradient against central differences.
void check_op(const std::function<Var<double>(Tape<double>&, Var<double>)>& op, int rows,
              int cols, std::uint64_t seed, double tol = 1e-6, double scale = 1.0) {
  Rng rng(seed);
  Arr<double> x0 = tsup::random_arr(rng, rows * cols, scale);
  auto eval = [&](const Arr<double>& x) {
    Tape<double> t;
    Var<double> in = t.input(rows, cols, x);
    Var<double> out = op(t, in);
    // deterministic weighted reduction so every output entry matters
    Arr<double> w(out.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 1.0);
    double v = 0;
    for (Eigen::Index i = 0; i < w.size(); ++i) v += w[i] * out.value()[i];
    return v;
  };
  Tape<double> t;
  Var<double> in = t.input(rows, cols, x0);
  Var<double> out = op(t, in);
  Arr<double> w(out.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 1.0);
  t.seed(out, w);
  t.backward();
  const Arr<double>* g = t.grad_of(in.id());
  REQUIRE(g != nullptr);
  auto probes = tsup::probe_indices(rng, rows * cols, std::min(24, rows * cols));
  CHECK(tsup::grad_check(eval, x0, *g, probes) < tol);
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  check_op([](Tape<double>& t, Var<double> x) { return ad::gelu(x); }, 5, 7, 11);
  check_op([](Tape<double>& t, Var<double> x) { return ad::abs_(x); }, 5, 7, 12);
  check_op([](Tape<double>& t, Var<double> x) { return ad::exp_(x); }, 4, 4, 13, 1e-6, 0.3);
  check_op([](Tape<double>& t, Var<double> x) {
    return ad::log_(ad::add(ad::mul(x, x), ad::scale(ad::mul(x, x), 0.0)));
  }, 4, 4, 14);
  check_op([](Tape<double>& t, Var<double> x) { return ad::softmax_rows(x); }, 6, 9, 15);
  check_op([](Tape<double>& t, Var<double> x) { return ad::logsoftmax_rows(x); }, 6, 9, 16);
  check_op([](Tape<double>& t, Var<double> x) { return ad::l2_normalize_rows(x); }, 5, 8, 17);
  check_op([](Tape<double>& t, Var<double> x) { return ad::norm_rows(x); }, 7, 3, 18);
  check_op([](Tape<double>& t, Var<double> x) { return ad::transpose(x); }, 5, 7, 19);
  check_op([](Tape<double>& t, Var<double> x) { return ad::clamp_max(x, 0.5); }, 5, 5, 20);
}

TEST_CASE("matmul family matches finite differences") {
  Rng rng(7);
  Arr<double> b0 = tsup::random_arr(rng, 7 * 4);
  check_op([&](Tape<double>& t, Var<double> x) {
    Var<double> b = t.input(7, 4, b0);
    return ad::matmul(x, b);
  }, 5, 7, 21);
  check_op([&](Tape<double>& t, Var<double> x) {
    Var<double> b = t.input(7, 4, b0);  // x (5x4), b (7x4) -> (5x7)
    return ad::matmul_nt(x, b);
  }, 5, 4, 22);
  check_op([&](Tape<double>& t, Var<double> x) {
    Var<double> b = t.input(7, 4, b0);  // x (7x5), b (7x4) -> (5x4)
    return ad::matmul_tn(x, b);
  }, 7, 5, 23);
  // gradient w.r.t. the second operand
  Arr<double> a0 = tsup::random_arr(rng, 6 * 7);
  check_op([&](Tape<double>& t, Var<double> x) {
    Var<double> a = t.input(6, 7, a0);
    return ad::matmul(a, x);
  }, 7, 3, 24);
}

TEST_CASE("layernorm matches finite differences, including affine params") {
  Rng rng(31);
  Arr<double> x0 = tsup::random_arr(rng, 6 * 10);
  Arr<double> g0 = tsup::random_arr(rng, 10, 0.3);
  g0 += 1.0;
  Arr<double> b0 = tsup::random_arr(rng, 10, 0.2);

  auto eval_x = [&](const Arr<double>& x) {
    Tape<double> t;
    Var<double> xv = t.input(6, 10, x);
    Var<double> out = ad::layernorm_rows(xv, t.input(1, 10, g0), t.input(1, 10, b0));
    return out.value().sum();
  };
  Tape<double> t;
  Var<double> xv = t.input(6, 10, x0);
  Var<double> gv = t.input(1, 10, g0);
  Var<double> bv = t.input(1, 10, b0);
  Var<double> out = ad::layernorm_rows(xv, gv, bv);
  t.seed(out, Arr<double>::Ones(out.size()));
  t.backward();
  Rng prng(32);
  CHECK(tsup::grad_check(eval_x, x0, *t.grad_of(xv.id()), tsup::probe_indices(prng, 60, 20)) <
        1e-6);

  auto eval_g = [&](const Arr<double>& g) {
    Tape<double> tt;
    Var<double> out2 =
        ad::layernorm_rows(tt.input(6, 10, x0), tt.input(1, 10, g), tt.input(1, 10, b0));
    return out2.value().sum();
  };
  CHECK(tsup::grad_check(eval_g, g0, *t.grad_of(gv.id()), {0, 3, 7, 9}) < 1e-6);
}

TEST_CASE("conv2d and conv1d match finite differences") {
  Rng rng(41);
  const int C = 3, H = 6, W = 6, Co = 4, k = 3;
  Arr<double> w0 = tsup::random_arr(rng, Co * k * k * C, 0.4);
  Arr<double> b0 = tsup::random_arr(rng, Co, 0.1);
  for (auto mode : {ad::Pad::kZero, ad::Pad::kReplicate}) {
    check_op([&](Tape<double>& t, Var<double> x) {
      return ad::conv2d(x, t.input(Co, k * k * C, w0), t.input(1, Co, b0), C, H, W, Co, k, 2,
                        1, mode);
    }, C, H * W, 42);
    // weight gradient
    Rng rng2(43);
    Arr<double> x0 = tsup::random_arr(rng2, C * H * W);
    check_op([&](Tape<double>& t, Var<double> wv) {
      return ad::conv2d(t.input(C, H * W, x0), wv, t.input(1, Co, b0), C, H, W, Co, k, 2, 1,
                        mode);
    }, Co, k * k * C, 44);
  }
  Arr<double> w1 = tsup::random_arr(rng, 5 * 3 * C, 0.4);
  Arr<double> b1 = tsup::random_arr(rng, 5, 0.1);
  check_op([&](Tape<double>& t, Var<double> x) {
    return ad::conv1d_same(x, t.input(5, 3 * C, w1), t.input(1, 5, b1), C, 9, 5, 3);
  }, C, 9, 45);
}

TEST_CASE("spatial resampling ops match finite differences") {
  check_op([](Tape<double>& t, Var<double> x) { return ad::resize1d_linear(x, 11); }, 4, 6, 51);
  check_op([](Tape<double>& t, Var<double> x) { return ad::upsample2x_bilinear(x, 4, 3, 5); },
           4, 15, 52);
  check_op([](Tape<double>& t, Var<double> x) { return ad::collapse_mean(x, 3, 4, 5, 0); },
           3, 20, 53);
  check_op([](Tape<double>& t, Var<double> x) { return ad::collapse_mean(x, 3, 4, 5, 1); },
           3, 20, 54);
  std::vector<std::pair<double, double>> xy = {{0.5, 1.25}, {-3.0, 0.0}, {4.9, 3.9}, {2.0, 2.0}};
  check_op([&](Tape<double>& t, Var<double> x) { return ad::bilinear_sample(x, 3, 4, 5, xy); },
           3, 20, 55);
}

TEST_CASE("structure ops match finite differences") {
  check_op([](Tape<double>& t, Var<double> x) { return ad::slice_rows(x, 1, 3); }, 6, 4, 61);
  check_op([](Tape<double>& t, Var<double> x) {
    return ad::concat_rows<double>({x, ad::scale(x, 2.0)});
  }, 4, 3, 62);
  check_op([](Tape<double>& t, Var<double> x) { return ad::gather_rows(x, {0, 2, 2, 1}); },
           4, 5, 63);
  check_op([](Tape<double>& t, Var<double> x) {
    Var<double> s = ad::mean(x);
    return ad::scale_by(ad::add(x, x), s);
  }, 3, 4, 64);
  check_op([](Tape<double>& t, Var<double> x) { return ad::dot_rows(x, ad::gelu(x)); }, 5, 3, 65);
  check_op([](Tape<double>& t, Var<double> x) {
    return ad::add_rowvec(x, ad::slice_rows(x, 0, 1));
  }, 4, 6, 66);
}

TEST_CASE("upsample2x keeps constants constant") {
  Tape<double> t;
  Arr<double> c = Arr<double>::Constant(2 * 4 * 4, 3.25);
  Var<double> x = t.input(2, 16, c);
  Var<double> up = ad::upsample2x_bilinear(x, 2, 4, 4);
  CHECK((up.value() - 3.25).abs().maxCoeff() == doctest::Approx(0.0));
  Var<double> rs = ad::resize1d_linear(x, 7);
  CHECK((rs.value() - 3.25).abs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("multi-seed backward accumulates from several outputs") {
  // y1 = sum(x^2), y2 = sum(3x); seeding both with weights a, b must give
  // a*2x + 3b.
  Rng rng(71);
  Arr<double> x0 = tsup::random_arr(rng, 6);
  Tape<double> t;
  Var<double> x = t.input(2, 3, x0);
  Var<double> y1 = ad::sum(ad::mul(x, x));
  Var<double> y2 = ad::sum(ad::scale(x, 3.0));
  t.seed(y1, 0.5);
  t.seed(y2, 2.0);
  t.backward();
  const Arr<double>& g = *t.grad_of(x.id());
  for (int i = 0; i < 6; ++i) CHECK(g[i] == doctest::Approx(0.5 * 2 * x0[i] + 2.0 * 3.0));
}
