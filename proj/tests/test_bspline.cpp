#include "agplan/bspline.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace agplan;

namespace {

BSplineTrajectory random_curve(std::mt19937_64& rng, int p, double dt) {
  std::uniform_int_distribution<int> count(p + 1, p + 12);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  std::vector<Vec3> q(static_cast<std::size_t>(count(rng)));
  for (auto& v : q) v = Vec3(coord(rng), coord(rng), coord(rng));
  return BSplineTrajectory(p, q, dt);
}

}  // namespace

TEST(BasisMatrix, CubicMatchesKnownForm) {
  Eigen::Matrix4d m3;
  m3 << 1, 4, 1, 0, -3, 0, 3, 0, 3, -6, 3, 0, -1, 3, -3, 1;
  EXPECT_LT((basis_matrix(3) - m3 / 6.0).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(BasisMatrix, PartitionOfUnity) {
  for (int p = 0; p <= kMaxSplineDegree; ++p) {
    const Eigen::MatrixXd& m = basis_matrix(p);
    // Constant term of the row sums is one, every higher power cancels.
    EXPECT_NEAR(m.row(0).sum(), 1.0, 1e-12) << p;
    for (int i = 1; i <= p; ++i) EXPECT_NEAR(m.row(i).sum(), 0.0, 1e-12) << p;
  }
  EXPECT_THROW(basis_matrix(6), Error);
}

TEST(BSpline, MatrixEvaluationMatchesDeBoor) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int p = 1 + trial % 5;
    const double dt = 0.1 + unit(rng);
    const auto c = random_curve(rng, p, dt);
    for (int s = 0; s < 20; ++s) {
      const double t = s == 0 ? 0.0 : s == 1 ? c.duration() : unit(rng) * c.duration();
      worst = std::max(worst, (c.evaluate(t) - oracle::de_boor(c.control_points(), p, dt, t)).norm());
    }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(BSpline, DerivativeCurveMatchesFiniteDifference) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  for (int p = 2; p <= 5; ++p) {
    const auto c = random_curve(rng, p, 0.4);
    const auto d = c.derivative();
    EXPECT_EQ(d.degree(), p - 1);
    EXPECT_EQ(d.size(), c.size() - 1);
    EXPECT_DOUBLE_EQ(d.duration(), c.duration());
    for (int s = 0; s < 10; ++s) {
      const double t = unit(rng) * c.duration();
      const double h = 1e-6;
      const Vec3 fd = (c.evaluate(t + h) - c.evaluate(t - h)) / (2 * h);
      EXPECT_LT((d.evaluate(t) - fd).norm(), 1e-5 * std::max(1.0, fd.norm()));
    }
  }
}

TEST(BSpline, KnotSpacingScalingLaws) {
  std::mt19937_64 rng(13);
  const auto c = random_curve(rng, 3, 0.5);
  auto stretched = c;
  stretched.set_knot_spacing(1.0);  // factor 2
  for (double f : {0.0, 0.3, 0.77, 1.0}) {
    const double t = f * c.duration();
    const double ts = f * stretched.duration();
    EXPECT_LT((c.evaluate(t) - stretched.evaluate(ts)).norm(), 1e-12);
    Vec3 v = c.derivative().evaluate(t);
    Vec3 vs = stretched.derivative().evaluate(ts);
    EXPECT_LT((v - 2.0 * vs).norm(), 1e-12);
    Vec3 a = c.derivative().derivative().evaluate(t);
    Vec3 as = stretched.derivative().derivative().evaluate(ts);
    EXPECT_LT((a - 4.0 * as).norm(), 1e-11);
    Vec3 j = c.derivative().derivative().derivative().evaluate(t);
    Vec3 js = stretched.derivative().derivative().derivative().evaluate(ts);
    EXPECT_LT((j - 8.0 * js).norm(), 1e-10);
  }
}

TEST(BSpline, RejectsInvalidConstruction) {
  EXPECT_THROW(BSplineTrajectory(3, std::vector<Vec3>(3, Vec3::Zero()), 0.1), Error);
  EXPECT_THROW(BSplineTrajectory(6, std::vector<Vec3>(8, Vec3::Zero()), 0.1), Error);
  EXPECT_THROW(BSplineTrajectory(3, std::vector<Vec3>(4, Vec3::Zero()), 0.0), Error);
  BSplineTrajectory c(2, std::vector<Vec3>(4, Vec3::Zero()), 0.5);
  EXPECT_THROW(c.evaluate(-0.1), Error);
  EXPECT_THROW(c.evaluate(c.duration() + 0.1), Error);
  EXPECT_NO_THROW(c.evaluate(c.duration()));
  BSplineTrajectory empty;
  EXPECT_EQ(empty.duration(), 0.0);
}

TEST(BSpline, ConstantControlPolygonGivesConstantCurve) {
  const Vec3 p(1.0, -2.0, 0.5);
  BSplineTrajectory c(4, std::vector<Vec3>(7, p), 0.2);
  for (double t = 0.0; t <= c.duration(); t += 0.05) EXPECT_LT((c.evaluate(t) - p).norm(), 1e-12);
}

TEST(BSpline, FitPassesThroughWaypointsWithBoundaryVelocity) {
  std::vector<Vec3> wp{{0, 0, 0}, {1, 0.5, 0}, {2, 1.5, 0.3}, {3, 1.0, 0.3}, {4, 0, 0}};
  const Vec3 v0(0.5, 0.0, 0.0);
  const auto c = fit_from_waypoints(wp, 0.5, 3, v0, Vec3::Zero());
  for (std::size_t k = 0; k < wp.size(); ++k) EXPECT_LT((c.evaluate(0.5 * k) - wp[k]).norm(), 1e-9);
  EXPECT_LT((c.derivative().evaluate(0.0) - v0).norm(), 1e-9);
  EXPECT_LT(c.derivative().evaluate(c.duration()).norm(), 1e-9);
  EXPECT_THROW(fit_from_waypoints(std::vector<Vec3>{Vec3::Zero()}, 0.5, 3), Error);
}

TEST(BSpline, BoundaryControlPointsRealiseState) {
  for (int p = 1; p <= 5; ++p) {
    const Vec3 pos(1, 2, 3), vel(0.3, -0.2, 0.1);
    auto start = boundary_control_points(p, pos, vel, 0.25, false);
    auto end = boundary_control_points(p, Vec3(5, 5, 1), Vec3::Zero(), 0.25, true);
    std::vector<Vec3> q = start;
    q.insert(q.end(), end.begin(), end.end());
    BSplineTrajectory c(p, q, 0.25);
    EXPECT_LT((c.evaluate(0.0) - pos).norm(), 1e-9) << p;
    EXPECT_LT((c.evaluate(c.duration()) - Vec3(5, 5, 1)).norm(), 1e-9) << p;
    if (p >= 2) {
      EXPECT_LT((c.derivative().evaluate(0.0) - vel).norm(), 1e-9) << p;
      EXPECT_LT(c.derivative().evaluate(c.duration()).norm(), 1e-9) << p;
    }
  }
}

TEST(BSpline, RetagPinsGroundPoints) {
  BSplineTrajectory c(3, {{0, 0, 0.2}, {1, 0, 0.25}, {2, 0, 1.0}, {3, 0, 0.1}, {4, 0, 0.05}}, 0.5);
  c.retag(0.3, 0.1);
  EXPECT_EQ(c.mode_tags()[2], Mode::Aerial);
  EXPECT_EQ(c.mode_tags()[0], Mode::Ground);
  EXPECT_DOUBLE_EQ(c[0].z(), 0.1);
  EXPECT_DOUBLE_EQ(c[2].z(), 1.0);
  EXPECT_THROW(c.set_mode_tags({Mode::Ground}), Error);
}
