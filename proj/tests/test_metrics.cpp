#include "doctest.h"

#include "posetext/metrics.hpp"
#include "posetext/rng.hpp"

#include <cmath>

using namespace posetext;

namespace {

PointSet random_points(Rng& rng, int n, double scale = 1.0) {
  PointSet p(n, 3);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) p(i, a) = rng.normal() * scale;
  return p;
}

Eigen::Matrix3d rotation_from(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

// Independent oracle: direct numerical minimization of the similarity-aligned
// error over (axis-angle, log-scale, translation) by random-restart
// coordinate descent. Slow but implementation-independent.
double procrustes_error_oracle(const PointSet& pred, const PointSet& gt) {
  auto cost = [&](const Eigen::Matrix<double, 7, 1>& p) {
    Eigen::Vector3d axis = p.head<3>();
    const double angle = axis.norm();
    Eigen::Matrix3d R = angle < 1e-12
                            ? Eigen::Matrix3d::Identity()
                            : Eigen::AngleAxisd(angle, axis / angle).toRotationMatrix();
    const double s = std::exp(p(3));
    Eigen::RowVector3d t = p.tail<3>().transpose();
    PointSet moved = s * (pred * R.transpose());
    moved.rowwise() += t;
    return (moved - gt).squaredNorm();
  };
  Rng rng(7);
  double best = std::numeric_limits<double>::infinity();
  Eigen::Matrix<double, 7, 1> best_p = Eigen::Matrix<double, 7, 1>::Zero();
  for (int restart = 0; restart < 6; ++restart) {
    Eigen::Matrix<double, 7, 1> p = Eigen::Matrix<double, 7, 1>::Zero();
    if (restart > 0)
      for (int i = 0; i < 7; ++i) p(i) = rng.normal() * (i < 3 ? 1.0 : 0.3);
    double step = 0.5;
    double c = cost(p);
    while (step > 1e-9) {
      bool improved = false;
      for (int i = 0; i < 7; ++i) {
        for (double dir : {+1.0, -1.0}) {
          Eigen::Matrix<double, 7, 1> q = p;
          q(i) += dir * step;
          const double cq = cost(q);
          if (cq < c) {
            p = q;
            c = cq;
            improved = true;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    if (c < best) {
      best = c;
      best_p = p;
    }
  }
  (void)best_p;
  return best;
}

}  // namespace

TEST_CASE("pjpe mean and median") {
  Rng rng(1);
  PointSet gt = random_points(rng, 21);
  auto [m0, md0] = pjpe(gt, gt);
  CHECK(m0 == 0.0);
  CHECK(md0 == 0.0);

  PointSet off = gt;
  for (int i = 0; i < off.rows(); ++i) {
    off(i, 0) += 3.0;
    off(i, 1) += 4.0;
  }
  auto [m1, md1] = pjpe(off, gt);
  CHECK(m1 == doctest::Approx(5.0));
  CHECK(md1 == doctest::Approx(5.0));

  PointSet one = gt;
  one(4, 2) += 10.0;
  auto [m2, md2] = pjpe(one, gt);
  CHECK(m2 == doctest::Approx(10.0 / 21.0));
  CHECK(md2 == doctest::Approx(0.0));
}

TEST_CASE("procrustes recovers exact similarity transforms") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    PointSet gt = random_points(rng, 21, 2.0);
    Eigen::Matrix3d R = rotation_from(rng);
    const double s = rng.uniform(0.3, 2.5);
    Eigen::RowVector3d t(rng.normal(), rng.normal(), rng.normal());
    PointSet pred = s * (gt * R.transpose());
    pred.rowwise() += t;
    CHECK(pa_pjpe(pred, gt) <= 1e-6);
  }
  PointSet gt = random_points(rng, 21);
  PointSet aligned = procrustes_align(gt, gt);
  CHECK((aligned - gt).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("procrustes matches an independent numerical minimizer") {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    PointSet gt = random_points(rng, 10, 1.5);
    PointSet pred = gt + random_points(rng, 10, 0.2);
    PointSet aligned = procrustes_align(pred, gt);
    const double closed_form = (aligned - gt).squaredNorm();
    const double oracle = procrustes_error_oracle(pred, gt);
    CHECK(closed_form <= oracle + 1e-4);
    CHECK(std::abs(closed_form - oracle) < 1e-4 * std::max(1.0, oracle));
  }
}

TEST_CASE("procrustes degenerate input") {
  PointSet line(5, 3);
  for (int i = 0; i < 5; ++i) line.row(i) = Eigen::RowVector3d(i, 2.0 * i, -i);
  PointSet gt(5, 3);
  for (int i = 0; i < 5; ++i) gt.row(i) = Eigen::RowVector3d(i, 0, 0);
  CHECK_THROWS_WITH(procrustes_align(line, gt), "degenerate alignment");
  PointSet two(2, 3);
  two.setZero();
  CHECK_THROWS_WITH(procrustes_align(two, two), "degenerate alignment");
}

TEST_CASE("pa-pjpe is invariant and never worse than pjpe") {
  // Cases are drawn as similarity-transformed ground truth plus bounded
  // noise, the regime the aligned metric exists for. (The least-squares
  // alignment minimizes squared error, so the unsquared mean is not a
  // theorem under arbitrary perturbations.)
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    PointSet gt = random_points(rng, 8, 1.0);
    Eigen::Matrix3d R = rotation_from(rng);
    const double s = trial % 2 == 0 ? rng.uniform(0.5, 2.0) : rng.uniform(0.9, 1.1);
    Eigen::RowVector3d t(rng.normal(), rng.normal(), rng.normal());
    PointSet pred = s * (gt * R.transpose());
    pred.rowwise() += t;
    pred += random_points(rng, 8, trial % 2 == 0 ? 0.1 : 0.05);
    const double plain = pjpe(pred, gt).first;
    const double aligned = pa_pjpe(pred, gt);
    CHECK(aligned <= plain + 1e-9);
    if (trial % 100 == 0) {
      Eigen::Matrix3d R2 = rotation_from(rng);
      PointSet moved = 1.7 * (pred * R2.transpose());
      moved.rowwise() += Eigen::RowVector3d(0.3, -2.0, 1.1);
      CHECK(std::abs(pa_pjpe(moved, gt) - aligned) < 1e-6);
    }
  }
}

TEST_CASE("pck curve and auc") {
  std::vector<double> zeros(10, 0.0);
  auto [curve0, auc0] = pck_auc(zeros, 0.0, 5.0, 11);
  CHECK(auc0 == doctest::Approx(1.0));
  for (auto& [t, f] : curve0) CHECK(f == 1.0);

  std::vector<double> far(10, 99.0);
  auto [curve1, auc1] = pck_auc(far, 0.0, 5.0, 11);
  CHECK(auc1 == doctest::Approx(0.0));

  // single error at midpoint: auc -> 0.5 within one step width
  std::vector<double> mid{2.5};
  auto [curve2, auc2] = pck_auc(mid, 0.0, 5.0, 501);
  CHECK(std::abs(auc2 - 0.5) <= 1.0 / 500 + 1e-12);

  // monotone in threshold
  auto [curve3, auc3] = pck_auc({0.5, 1.5, 2.5, 4.0}, 0.0, 5.0, 21);
  for (size_t i = 1; i < curve3.size(); ++i) CHECK(curve3[i].second >= curve3[i - 1].second);
  (void)auc3;

  CHECK_THROWS(pck_auc({}, 0.0, 1.0, 5));
  CHECK_THROWS(pck_auc({1.0}, 1.0, 1.0, 5));
  CHECK_THROWS(pck_auc({1.0}, 0.0, 1.0, 1));
}

TEST_CASE("f-score") {
  Rng rng(23);
  PointSet cloud = random_points(rng, 40);
  CHECK(f_score(cloud, cloud, 1e-9) == doctest::Approx(1.0));

  PointSet shifted = cloud;
  shifted.col(0).array() += 100.0;
  CHECK(f_score(shifted, cloud, 1.0) == doctest::Approx(0.0));

  // constructed precision 1.0 / recall 0.5: predictions sit on half the gt
  PointSet gt(4, 3);
  gt << 0, 0, 0, 1, 0, 0, 100, 0, 0, 101, 0, 0;
  PointSet pred(2, 3);
  pred << 0, 0, 0, 1, 0, 0;
  CHECK(f_score(pred, gt, 0.1) == doctest::Approx(2.0 / 3.0));

  CHECK_THROWS(f_score(PointSet(0, 3), cloud, 1.0));
}
