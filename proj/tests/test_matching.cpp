#include "doctest.h"

#include "posetext/matching.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace posetext;

namespace {

Eigen::MatrixXd unit_rows(Rng& rng, int n, int d) {
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
    m.row(i) /= m.row(i).norm();
  }
  return m;
}

// Independent oracle: plain double loops over exp/log cross-entropy, with the
// same halved symmetric, axis-averaged convention.
double clip_loss_oracle(const LogitMatrices& lm) {
  auto one = [](const Eigen::MatrixXd& m) {
    const int B = static_cast<int>(m.rows());
    double row_term = 0.0, col_term = 0.0;
    for (int i = 0; i < B; ++i) {
      double denom = 0.0;
      for (int j = 0; j < B; ++j) denom += std::exp(m(i, j) - m.row(i).maxCoeff());
      row_term += -std::log(std::exp(m(i, i) - m.row(i).maxCoeff()) / denom);
      double denom_c = 0.0;
      for (int j = 0; j < B; ++j) denom_c += std::exp(m(j, i) - m.col(i).maxCoeff());
      col_term += -std::log(std::exp(m(i, i) - m.col(i).maxCoeff()) / denom_c);
    }
    return 0.5 * (row_term / B + col_term / B);
  };
  return (one(lm.m_lr) + one(lm.m_tb) + one(lm.m_nf)) / 3.0;
}

LogitMatrices random_matrices(Rng& rng, int B, double scale = 3.0) {
  LogitMatrices lm;
  auto fill = [&](Eigen::MatrixXd& m) {
    m.resize(B, B);
    for (int i = 0; i < B * B; ++i) m(i / B, i % B) = rng.normal() * scale;
  };
  fill(lm.m_lr);
  fill(lm.m_tb);
  fill(lm.m_nf);
  return lm;
}

}  // namespace

TEST_CASE("logit matrix formula and errors") {
  Rng rng(1);
  const int B = 4, E = 8;

  // identical unit embeddings with tau = 5: every entry 5
  Eigen::MatrixXd same(B, E);
  Eigen::RowVectorXd v = unit_rows(rng, 1, E);
  for (int i = 0; i < B; ++i) same.row(i) = v;
  LogitMatrices lm = logit_matrix(same, same, same, same, same, same, 5.0, 5.0, 5.0);
  CHECK((lm.m_lr.array() - 5.0).abs().maxCoeff() < 1e-12);

  // orthonormal pose/text pairs with tau = 1: identity matrix
  Eigen::MatrixXd ortho = Eigen::MatrixXd::Identity(B, E);
  LogitMatrices id = logit_matrix(ortho, ortho, ortho, ortho, ortho, ortho, 1.0, 1.0, 1.0);
  CHECK((id.m_tb - Eigen::MatrixXd::Identity(B, B)).cwiseAbs().maxCoeff() < 1e-12);

  // brute-force double-loop oracle on a random batch
  Eigen::MatrixXd p = unit_rows(rng, B, E), t = unit_rows(rng, B, E);
  LogitMatrices r = logit_matrix(p, p, p, t, t, t, 7.0, 7.0, 7.0);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j) {
      double dot = 0.0;
      for (int k = 0; k < E; ++k) dot += p(i, k) * t(j, k);
      CHECK(r.m_lr(i, j) == doctest::Approx(7.0 * dot).epsilon(1e-12));
    }

  // |m| <= tau with unit embeddings
  CHECK(r.m_lr.cwiseAbs().maxCoeff() <= 7.0 + 1e-9);

  Eigen::MatrixXd small = unit_rows(rng, B - 1, E);
  CHECK_THROWS_WITH(logit_matrix(p, p, p, small, small, small, 1, 1, 1), "batch mismatch");
  Eigen::MatrixXd not_unit = 2.0 * p;
  CHECK_THROWS(logit_matrix(not_unit, p, p, t, t, t, 1, 1, 1));
}

TEST_CASE("clip loss oracle across batch sizes, plus spec examples") {
  Rng rng(2);
  for (int B = 1; B <= 8; ++B) {
    LogitMatrices lm = random_matrices(rng, B);
    CHECK(clip_loss(lm) == doctest::Approx(clip_loss_oracle(lm)).epsilon(1e-6));
    CHECK(clip_loss(lm) >= 0.0);
  }

  // B = 1 is exactly zero
  LogitMatrices one = random_matrices(rng, 1);
  CHECK(clip_loss(one) == 0.0);

  // strong diagonal: -log(e^10 / (e^10 + 1))
  LogitMatrices strong;
  strong.m_lr = Eigen::MatrixXd::Zero(2, 2);
  strong.m_lr(0, 0) = strong.m_lr(1, 1) = 10.0;
  strong.m_tb = strong.m_lr;
  strong.m_nf = strong.m_lr;
  const double expect = -std::log(std::exp(10.0) / (std::exp(10.0) + 1.0));
  CHECK(clip_loss(strong) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(clip_loss(strong) == doctest::Approx(4.54e-5).epsilon(0.01));

  // anti-diagonal: diagonal maximally suppressed
  LogitMatrices anti;
  anti.m_lr = Eigen::MatrixXd::Zero(2, 2);
  anti.m_lr(0, 1) = anti.m_lr(1, 0) = 10.0;
  anti.m_tb = anti.m_lr;
  anti.m_nf = anti.m_lr;
  CHECK(clip_loss(anti) == doctest::Approx(10.0).epsilon(1e-4));
}

TEST_CASE("clip loss shift invariance and transpose symmetry") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    LogitMatrices lm = random_matrices(rng, 5);
    const double base = clip_loss(lm);

    LogitMatrices shifted = lm;
    shifted.m_lr.array() += 7.5;
    shifted.m_tb.array() += -3.25;
    shifted.m_nf.array() += 0.125;
    CHECK(std::abs(clip_loss(shifted) - base) < 1e-9);

    LogitMatrices transposed;
    transposed.m_lr = lm.m_lr.transpose();
    transposed.m_tb = lm.m_tb.transpose();
    transposed.m_nf = lm.m_nf.transpose();
    CHECK(std::abs(clip_loss(transposed) - base) < 1e-9);
  }
}

TEST_CASE("clip loss gradient matches finite differences") {
  Rng rng(4);
  const int B = 4;
  ad::Arr<double> flat = tsup::random_arr(rng, 3 * B * B, 2.0);
  auto eval = [B](const ad::Arr<double>& x) {
    ad::Tape<double> t;
    ad::Var<double> a = t.input(B, B, x.segment(0, B * B).eval());
    ad::Var<double> b = t.input(B, B, x.segment(B * B, B * B).eval());
    ad::Var<double> c = t.input(B, B, x.segment(2 * B * B, B * B).eval());
    return clip_loss_var(a, b, c).value()[0];
  };
  ad::Tape<double> t;
  ad::Var<double> a = t.input(B, B, flat.segment(0, B * B).eval());
  ad::Var<double> b = t.input(B, B, flat.segment(B * B, B * B).eval());
  ad::Var<double> c = t.input(B, B, flat.segment(2 * B * B, B * B).eval());
  ad::Var<double> loss = clip_loss_var(a, b, c);
  t.seed(loss, 1.0);
  t.backward();
  ad::Arr<double> analytic(3 * B * B);
  analytic.segment(0, B * B) = *t.grad_of(a.id());
  analytic.segment(B * B, B * B) = *t.grad_of(b.id());
  analytic.segment(2 * B * B, B * B) = *t.grad_of(c.id());
  Rng prng(5);
  CHECK(tsup::grad_check(eval, flat, analytic, tsup::probe_indices(prng, 3 * B * B, 24)) < 1e-4);
}

TEST_CASE("temperature parameterization clamps at 100") {
  ParamStore<double> store;
  store.init_seed = 1;
  Temperatures<double> temps = Temperatures<double>::create(store);
  {
    ad::Tape<double> tape;
    ParamBinding<double> bind;
    ad::Var<double> tau = temps.tau(tape, store, bind, 0);
    CHECK(tau.value()[0] == doctest::Approx(1.0 / 0.07).epsilon(1e-9));
  }
  store.entries[temps.log_tau[1]].value[0] = std::log(500.0);
  {
    ad::Tape<double> tape;
    ParamBinding<double> bind;
    CHECK(temps.tau(tape, store, bind, 1).value()[0] == doctest::Approx(100.0));
  }
}

TEST_CASE("retrieval top-1 counts diagonal argmax rows") {
  LogitMatrices lm;
  lm.m_lr = Eigen::MatrixXd::Identity(4, 4);
  lm.m_tb = Eigen::MatrixXd::Identity(4, 4);
  lm.m_nf = Eigen::MatrixXd::Zero(4, 4);
  lm.m_nf(0, 3) = 5.0;  // row 0 retrieves the wrong column
  lm.m_nf(1, 1) = 1.0;
  lm.m_nf(2, 2) = 1.0;
  lm.m_nf(3, 3) = 1.0;
  auto top1 = retrieval_top1(lm);
  CHECK(top1[0] == doctest::Approx(1.0));
  CHECK(top1[1] == doctest::Approx(1.0));
  CHECK(top1[2] == doctest::Approx(0.75));
}
