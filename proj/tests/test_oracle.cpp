#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "support/reference.hpp"
#include "walras/instance_io.hpp"
#include "walras/oracle.hpp"

using namespace walras;
using walras::testing::InstanceGenerator;

namespace {

const PolynomialCost kHalfSquare({{0.5, 2}});

}  // namespace

TEST(OracleSolve, TenFirms) {
  const MarketInstance m(std::vector<PolynomialCost>(10, kHalfSquare), 1000.0, 1e-4);
  const OracleSolution s = oracle_solve(m);
  EXPECT_NEAR(s.p_star, 100.0, 1e-10);
  for (double x : s.x_star) EXPECT_NEAR(x, 100.0, 1e-10);
  EXPECT_NEAR(s.f_star, 50000.0, 1e-8);
}

TEST(OracleSolve, SingleFirm) {
  const OracleSolution s = oracle_solve(MarketInstance({kHalfSquare}, 2.0, 1e-4));
  EXPECT_NEAR(s.p_star, 2.0, 1e-14);
  EXPECT_NEAR(s.x_star[0], 2.0, 1e-14);
  EXPECT_NEAR(s.f_star, 2.0, 1e-14);
}

TEST(OracleSolve, HundredFirmPreset) {
  const OracleSolution s = oracle_solve(preset("paper-100"));
  EXPECT_NEAR(s.p_star, 770.98, 0.01);
}

TEST(OracleSolve, KktAndStrongDualityOnRandomInstances) {
  InstanceGenerator gen(41);
  for (int trial = 0; trial < 100; ++trial) {
    const MarketInstance m = gen.market(1 + trial % 12, gen.uniform(0.1, 1e4), 1e-4);
    const OracleSolution s = oracle_solve(m);
    double total = 0.0;
    for (double x : s.x_star) {
      EXPECT_GE(x, 0.0);
      total += x;
    }
    EXPECT_GE(total, m.demand() - 1e-8);
    EXPECT_LE(s.kkt.max_stationarity, 1e-8 * std::max(1.0, s.p_star));
    EXPECT_LE(s.kkt.infeasibility, 1e-8);
    const double phi = dual_point(m, s.p_star).dual_value;
    EXPECT_LE(std::abs(s.f_star + phi), 1e-8 * std::max(1.0, s.f_star));
    const auto p_ref = static_cast<double>(walras::testing::ref_equilibrium_price(m));
    EXPECT_NEAR(s.p_star, p_ref, 1e-10 * std::max(1.0, p_ref));
  }
}

TEST(KktCheck, InfeasibleZero) {
  const MarketInstance m({kHalfSquare, kHalfSquare}, 5.0, 1e-4);
  const KktResiduals r = kkt_check(m, 0.0, std::vector<double>{0.0, 0.0});
  EXPECT_EQ(r.infeasibility, 5.0);
  EXPECT_EQ(r.max_stationarity, 0.0);
  EXPECT_EQ(r.complementary_slackness, 0.0);
}

TEST(KktCheck, PerturbationScalesWithCurvature) {
  const MarketInstance m(std::vector<PolynomialCost>(3, PolynomialCost({{2.0, 2}})), 30.0, 1e-4);
  const OracleSolution s = oracle_solve(m);
  std::vector<double> x = s.x_star;
  x[1] += 1e-3;
  const KktResiduals r = kkt_check(m, s.p_star, x);
  EXPECT_NEAR(r.stationarity[1], 4.0 * 1e-3, 1e-9);
}

TEST(KktCheck, RejectsNegativeInputs) {
  const MarketInstance m({kHalfSquare}, 1.0, 1e-4);
  EXPECT_THROW(kkt_check(m, -1.0, std::vector<double>{1.0}), std::domain_error);
  EXPECT_THROW(kkt_check(m, 1.0, std::vector<double>{-1.0}), std::domain_error);
}

TEST(BruteForce, Examples) {
  const GridSolution two = brute_force_small(MarketInstance({kHalfSquare, kHalfSquare}, 2.0, 1e-4), 1e-3);
  EXPECT_NEAR(two.x[0], 1.0, 1e-3);
  EXPECT_NEAR(two.x[1], 1.0, 1e-3);
  EXPECT_NEAR(two.value, 1.0, 1e-3);
  EXPECT_FALSE(two.boundary_hit);

  const GridSolution one = brute_force_small(MarketInstance({PolynomialCost({{3.0, 2}})}, 2.0, 1e-4), 1e-3);
  EXPECT_NEAR(one.x[0], 2.0, 1e-12);

  const GridSolution tiny = brute_force_small(MarketInstance({kHalfSquare, kHalfSquare}, 1e-9, 1e-4), 1e-3);
  EXPECT_LE(tiny.x[0] + tiny.x[1], 1e-3 + 1e-12);
}

TEST(BruteForce, FlagsBoundary) {
  // Firm 1 is nearly free, so the optimum puts everything on it.
  const MarketInstance m({PolynomialCost({{1e3, 2}}), PolynomialCost({{1e-6, 2}})}, 1.0, 1e-4);
  EXPECT_TRUE(brute_force_small(m, 0.01).boundary_hit);
}

TEST(BruteForce, RejectsLargeInstances) {
  const MarketInstance m(std::vector<PolynomialCost>(4, kHalfSquare), 1.0, 1e-4);
  EXPECT_THROW(brute_force_small(m, 0.1), std::invalid_argument);
}

TEST(BruteForce, AgreesWithOracle) {
  InstanceGenerator gen(42);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + trial % 3;
    const MarketInstance m = gen.market(n, gen.uniform(0.5, 5.0), 1e-4);
    const double step = n == 3 ? 5e-3 : 1e-3;
    const OracleSolution s = oracle_solve(m);
    const GridSolution g = brute_force_small(m, step);
    // Grid optimum can't beat the true optimum, and is within one grid cell of it.
    EXPECT_GE(g.value, s.f_star - 1e-9 * std::max(1.0, s.f_star));
    double slope = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      slope = std::max(slope, m.firm(k).marginal(s.x_star[k] + n * step));
    }
    EXPECT_LE(g.value - s.f_star, 2.0 * n * step * slope) << "trial " << trial;
  }
}
