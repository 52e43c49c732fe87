#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "support/reference.hpp"
#include "walras/instance_io.hpp"
#include "walras/oracle.hpp"
#include "walras/tatonnement.hpp"

using namespace walras;
using walras::testing::InstanceGenerator;

namespace {

const PolynomialCost kHalfSquare({{0.5, 2}});

MarketInstance ten_firms(double eps = 1e-4) {
  return MarketInstance(std::vector<PolynomialCost>(10, kHalfSquare), 1000.0, eps);
}

}  // namespace

TEST(SlaterBound, Examples) {
  EXPECT_EQ(slater_bound(ten_firms()), 200.0);
  EXPECT_EQ(slater_bound(MarketInstance({kHalfSquare}, 2.0, 1e-4)), 4.0);
}

TEST(SlaterBound, BoundsEquilibriumPrice) {
  InstanceGenerator gen(21);
  for (int trial = 0; trial < 200; ++trial) {
    const MarketInstance m = gen.market(1 + trial % 12, gen.uniform(0.1, 1e4), 1e-4);
    EXPECT_LE(static_cast<double>(walras::testing::ref_equilibrium_price(m)),
              slater_bound(m) * (1.0 + 1e-12));
  }
}

TEST(RunDichotomy, DegenerateCapRejected) {
  struct Flat {
    double value(double) const { return 0.0; }
    double marginal(double x) const { return x; }
    double modulus() const { return 1.0; }
  };
  const BasicMarket<Flat> m({Flat{}, Flat{}}, 10.0, 1e-4);
  EXPECT_THROW(run_dichotomy(m), InvalidInstance);
}

TEST(RunDichotomy, SlaterViolationRejected) {
  // value() claims a much steeper cost than marginal(), so the cap is too low.
  struct Inconsistent {
    double value(double x) const { return 0.01 * x * x; }
    double marginal(double x) const { return 10.0 * x; }
    double modulus() const { return 10.0; }
  };
  const BasicMarket<Inconsistent> m({Inconsistent{}}, 10.0, 1e-4);
  EXPECT_THROW(run_dichotomy(m), SlaterViolation);
}

TEST(RunDichotomy, TenFirmPrice) {
  const auto [trace, report] = run_dichotomy(ten_firms());
  EXPECT_NEAR(report.price, 100.0, 1e-5);
  EXPECT_TRUE(report.converged);
  EXPECT_LE(std::abs(report.constraint_residual), 1e-4);
  ASSERT_FALSE(trace.records.empty());
  EXPECT_EQ(trace.records.back().iteration, report.iterations);
}

TEST(RunDichotomy, PresetPrices) {
  const auto [t100, r100] = run_dichotomy(preset("paper-100"));
  EXPECT_NEAR(r100.price, 770.98, 0.01);
  const auto [t1000, r1000] = run_dichotomy(preset("paper-1000"));
  EXPECT_NEAR(r1000.price, 3987.44, 0.01);
}

TEST(RunDichotomy, BudgetExhaustion) {
  DichotomyOptions opts;
  opts.max_iterations = 3;
  const auto [trace, report] = run_dichotomy(preset("paper-100"), opts);
  EXPECT_FALSE(report.converged);
  EXPECT_EQ(report.iterations, 3);
  EXPECT_EQ(trace.records.size(), 3u);
}

TEST(RunDichotomy, BracketInvariants) {
  InstanceGenerator gen(22);
  for (int trial = 0; trial < 60; ++trial) {
    const MarketInstance m = gen.market(1 + trial % 10, gen.uniform(1.0, 1e4), 1e-6);
    const auto [trace, report] = run_dichotomy(m);
    PriceBracket prev{0.0, report.price_cap};
    for (const DichotomyStep& s : trace.records) {
      EXPECT_LE(dual_point(m, s.bracket.lo).dual_derivative, 0.0);
      EXPECT_GE(dual_point(m, s.bracket.hi).dual_derivative, 0.0);
      if (s.derivative != 0.0) {
        EXPECT_NEAR(s.bracket.width(), 0.5 * prev.width(), 4.0 * kMachineEpsilon * prev.hi);
      }
      EXPECT_EQ(s.price, prev.midpoint());
      prev = s.bracket;
    }
    if (report.converged) {
      const auto p_ref = static_cast<double>(walras::testing::ref_equilibrium_price(m));
      EXPECT_GE(p_ref, prev.lo - 1e-12 * report.price_cap);
      EXPECT_LE(p_ref, prev.hi + 1e-12 * report.price_cap);
    }
  }
}

TEST(ProjectFeasible, Examples) {
  const MarketInstance two({kHalfSquare, kHalfSquare}, 10.0, 1e-4);
  EXPECT_EQ(project_feasible(two, std::vector<double>{4.0, 6.0}), (std::vector<double>{4.0, 6.0}));
  EXPECT_EQ(project_feasible(two, std::vector<double>{4.0, 4.0}), (std::vector<double>{5.0, 5.0}));
  const auto x = project_feasible(ten_firms(), std::vector<double>(10, 99.99));
  for (double v : x) EXPECT_NEAR(v, 100.0, 1e-12);
}

TEST(ProjectFeasible, FeasibleAndNonnegative) {
  InstanceGenerator gen(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 10;
    const MarketInstance m = gen.market(n, gen.uniform(1.0, 100.0), 1e-4);
    std::vector<double> x(n);
    for (double& v : x) v = gen.uniform(0.0, 20.0);
    const auto y = project_feasible(m, std::vector<double>(x));
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_GE(y[k], x[k]);
      EXPECT_GE(y[k], 0.0);
      total += y[k];
    }
    EXPECT_GE(total, m.demand() * (1.0 - 1e-12));
  }
}

TEST(IterationBound, TenFirmValue) {
  // 2 * 10 * 1000 * 200^3 / 1e-8 = 1.6e19, log2 = 63.79.
  EXPECT_EQ(theoretical_iterations(ten_firms()), 64);
  EXPECT_EQ(dichotomy_iteration_bound(10.0, 1000.0, 200.0, 1e-4), 64);
}

TEST(IterationBound, Scaling) {
  const int base = dichotomy_iteration_bound(10.0, 1000.0, 200.0, 1e-4);
  EXPECT_EQ(dichotomy_iteration_bound(10.0, 1000.0, 200.0, 0.5e-4), base + 2);
  EXPECT_EQ(dichotomy_iteration_bound(20.0, 1000.0, 200.0, 1e-4), base + 1);
  EXPECT_EQ(dichotomy_iteration_bound(1.0, 1.0, 1.0, 10.0), 0);
}

TEST(Certificate, TenFirmRunPasses) {
  const MarketInstance m = ten_firms();
  const auto [trace, report] = run_dichotomy(m);
  const OracleSolution sol = oracle_solve(m);
  EXPECT_NEAR(sol.f_star, 50000.0, 1e-6);
  const CentralizedCertificate cert = certify_centralized(m, trace, report, sol.f_star);
  EXPECT_TRUE(cert.ok());
  EXPECT_GT(cert.checks, 0u);
}

TEST(Certificate, LemmaTwoAtEquilibriumAndCap) {
  const MarketInstance m = ten_firms();
  const double f_star = 50000.0;
  const DualPoint at_star = dual_point(m, 100.0);
  EXPECT_EQ(primal_value(m, std::span<const double>(at_star.productions)) - f_star, 0.0);
  EXPECT_EQ(100.0 * at_star.dual_derivative, 0.0);

  const DualPoint at_cap = dual_point(m, 200.0);
  const double lhs = primal_value(m, std::span<const double>(at_cap.productions)) - f_star;
  const double rhs = 200.0 * at_cap.dual_derivative;
  EXPECT_EQ(lhs, 150000.0);
  EXPECT_EQ(rhs, 200000.0);
  EXPECT_LE(lhs, rhs);
}

TEST(Certificate, DetectsWrongOptimum) {
  const MarketInstance m = ten_firms();
  const auto [trace, report] = run_dichotomy(m);
  // A claimed optimum far above the truth breaks weak duality.
  const CentralizedCertificate cert = certify_centralized(m, trace, report, 60000.0);
  EXPECT_FALSE(cert.ok());
}

TEST(Certificate, RandomInstancesPass) {
  InstanceGenerator gen(24);
  for (int trial = 0; trial < 40; ++trial) {
    const MarketInstance m = gen.market(1 + trial % 10, gen.uniform(1.0, 1e3), 1e-5);
    const auto [trace, report] = run_dichotomy(m);
    const auto f_star = static_cast<double>(walras::testing::ref_optimal_value(m));
    const CentralizedCertificate cert = certify_centralized(m, trace, report, f_star);
    for (const auto& v : cert.violations) {
      ADD_FAILURE() << "trial " << trial << ": " << v.check << " at " << v.trace_index << " lhs="
                    << v.lhs << " rhs=" << v.rhs;
    }
  }
}

TEST(Bounds, ObservedErrorBelowGeometricBound) {
  for (const char* name : {"paper-10", "paper-100", "paper-1000"}) {
    const MarketInstance m = preset(name);
    const auto [trace, report] = run_dichotomy(m);
    const double f_star = oracle_solve(m).f_star;
    const double L = smoothness_constant(m);
    for (const DichotomyStep& s : trace.records) {
      const auto x = best_responses(m, s.price);
      const double err = std::abs(primal_value(m, std::span<const double>(x)) - f_star);
      EXPECT_LE(err, primal_value_bound(s.iteration, L, empirical_dual_lipschitz(m, report.price_cap),
                                        report.price_cap) * (1.0 + 1e-9) + 1e-9 * f_star)
          << name << " iteration " << s.iteration;
    }
  }
}
