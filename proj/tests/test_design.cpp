#include "gpvs/design.hpp"

#include "support/gen.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace gpvs;

TEST(Lhd, TwoRunsOneDimension) {
  const auto d = maximin_lhd(2, 1, {0.0, 1.0}, 1);
  std::vector<double> v{d.points(0, 0), d.points(1, 0)};
  std::sort(v.begin(), v.end());
  EXPECT_DOUBLE_EQ(v[0], 0.25);
  EXPECT_DOUBLE_EQ(v[1], 0.75);
}

TEST(Lhd, LatinPropertyHolds) {
  gen::Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    const auto n = static_cast<std::size_t>(gen::integer(rng, 2, 40));
    const auto p = static_cast<std::size_t>(gen::integer(rng, 1, 6));
    EXPECT_TRUE(is_latin(maximin_lhd(n, p, {-1.0, 2.0}, rng(), 2, 300)));
    EXPECT_TRUE(is_latin(random_lhd(n, p, {0.0, 1.0}, rng)));
  }
}

TEST(Lhd, PointsAtStratumMidpointsInsideBox) {
  const auto d = maximin_lhd(35, 5, {-0.75, 0.75}, 2024, 3);
  EXPECT_EQ(d.points.rows(), 35);
  EXPECT_EQ(d.points.cols(), 5);
  EXPECT_GT(d.points.minCoeff(), -0.75);
  EXPECT_LT(d.points.maxCoeff(), 0.75);
  const double w = 1.5 / 35.0;
  for (Eigen::Index i = 0; i < 35; ++i)
    for (Eigen::Index j = 0; j < 5; ++j)
      EXPECT_NEAR(d.points(i, j), -0.75 + (d.strata(i, j) + 0.5) * w, 1e-12);
}

TEST(Lhd, ImprovesOnFirstRandomDesign) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    std::mt19937_64 rng(seed);
    const auto plain = random_lhd(20, 3, {0.0, 1.0}, rng);
    const auto best = maximin_lhd(20, 3, {0.0, 1.0}, seed, 1);
    EXPECT_GE(best.maximin_dist, plain.maximin_dist);
  }
}

TEST(Lhd, ReportedDistanceIsTrueMinimum) {
  const auto d = maximin_lhd(15, 3, {0.0, 1.0}, 8, 2);
  double m = 1e300;
  for (Eigen::Index i = 0; i < 15; ++i)
    for (Eigen::Index k = i + 1; k < 15; ++k)
      m = std::min(m, (d.points.row(i) - d.points.row(k)).norm());
  EXPECT_DOUBLE_EQ(d.maximin_dist, m);
}

TEST(Lhd, DeterministicGivenSeed) {
  EXPECT_EQ(maximin_lhd(12, 3, {0.0, 1.0}, 5).points, maximin_lhd(12, 3, {0.0, 1.0}, 5).points);
}

TEST(Lhd, InvalidArguments) {
  EXPECT_THROW(maximin_lhd(1, 2, {0.0, 1.0}, 1), InvalidArgument);
  EXPECT_THROW(maximin_lhd(5, 2, {1.0, 1.0}, 1), InvalidArgument);
  EXPECT_THROW(maximin_lhd(5, 2, {0.0, 1.0}, 1, 0), InvalidArgument);
}

TEST(SimResponse, Origin) {
  EXPECT_DOUBLE_EQ(sim_response_mean(Eigen::VectorXd::Zero(5)), 12.0);
}

TEST(SimResponse, ThirdOfFirstCoordinate) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
  x(0) = 1.0 / 3.0;
  EXPECT_NEAR(sim_response_mean(x), 7.0, 1e-12);
}

TEST(SimResponse, FifthCoordinateInert) {
  gen::Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd x(5);
    for (int j = 0; j < 5; ++j)
      x(j) = gen::uniform(rng, -0.75, 0.75);
    Eigen::VectorXd y = x;
    y(4) = gen::uniform(rng, -5.0, 5.0);
    EXPECT_EQ(sim_response(x, 0.0, rng), sim_response(y, 0.0, rng));
  }
}

TEST(SimResponse, WrongDimension) {
  gen::Rng rng(4);
  EXPECT_THROW(sim_response(Eigen::VectorXd::Zero(4), 0.1, rng), InvalidArgument);
  EXPECT_THROW(sim_response(Eigen::VectorXd::Zero(5), -0.1, rng), InvalidArgument);
}

TEST(SimResponse, NoiseHasRequestedSpread) {
  gen::Rng rng(5);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
  double ss = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double e = sim_response(x, 0.1, rng) - 12.0;
    ss += e * e;
  }
  EXPECT_NEAR(std::sqrt(ss / n), 0.1, 0.003);
}

TEST(Rmspe, HandValues) {
  EXPECT_EQ(rmspe(Eigen::Vector2d(1, 2), Eigen::Vector2d(1, 2)), 0.0);
  EXPECT_NEAR(rmspe(Eigen::Vector2d(0, 0), Eigen::Vector2d(3, 4)), std::sqrt(12.5), 1e-15);
  EXPECT_THROW(rmspe(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3)), InvalidArgument);
  EXPECT_THROW(rmspe(Eigen::VectorXd(0), Eigen::VectorXd(0)), InvalidArgument);
}
