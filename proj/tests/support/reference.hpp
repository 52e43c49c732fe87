#pragma once

// Test-side reference computations that share no code with the library's
// best response or solvers: long double arithmetic on the raw term list and a
// Newton iteration guarded by bisection.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "walras/market.hpp"

namespace walras::testing {

using Terms = std::vector<CostTerm>;

inline long double ref_value(const Terms& terms, long double x) {
  long double s = 0.0L;
  for (const CostTerm& t : terms) s += t.coefficient * std::pow(x, t.exponent);
  return s;
}

inline long double ref_marginal(const Terms& terms, long double x) {
  long double s = 0.0L;
  for (const CostTerm& t : terms) {
    if (t.exponent >= 1) s += t.coefficient * t.exponent * std::pow(x, t.exponent - 1);
  }
  return s;
}

inline long double ref_curvature(const Terms& terms, long double x) {
  long double s = 0.0L;
  for (const CostTerm& t : terms) {
    if (t.exponent >= 2) {
      s += t.coefficient * t.exponent * (t.exponent - 1) * std::pow(x, t.exponent - 2);
    }
  }
  return s;
}

// Root of f'(x) = p on x >= 0, or 0 when f'(0) >= p.
inline long double ref_best_response(const Terms& terms, long double p) {
  if (ref_marginal(terms, 0.0L) >= p) return 0.0L;
  long double lo = 0.0L;
  long double hi = p;  // grows until f'(hi) >= p
  while (ref_marginal(terms, hi) < p) hi = 2.0L * hi + 1.0L;
  long double x = 0.5L * (lo + hi);
  for (int i = 0; i < 400; ++i) {
    const long double g = ref_marginal(terms, x) - p;
    if (g == 0.0L) return x;
    if (g < 0.0L) {
      lo = x;
    } else {
      hi = x;
    }
    const long double c = ref_curvature(terms, x);
    long double next = c > 0.0L ? x - g / c : 0.5L * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5L * (lo + hi);
    if (next == x) break;
    x = next;
  }
  return x;
}

inline long double ref_total_supply(const MarketInstance& m, long double p) {
  long double s = 0.0L;
  for (const PolynomialCost& f : m.firms()) {
    s += ref_best_response(Terms(f.terms().begin(), f.terms().end()), p);
  }
  return s;
}

// Equilibrium price from a fresh bracket [0, hi] found by doubling.
inline long double ref_equilibrium_price(const MarketInstance& m) {
  const long double C = m.demand();
  long double hi = 1.0L;
  while (ref_total_supply(m, hi) < C) hi *= 2.0L;
  long double lo = 0.0L;
  for (int i = 0; i < 300; ++i) {
    const long double mid = 0.5L * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (ref_total_supply(m, mid) < C) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5L * (lo + hi);
}

inline long double ref_optimal_value(const MarketInstance& m) {
  const long double p = ref_equilibrium_price(m);
  long double s = 0.0L;
  for (const PolynomialCost& f : m.firms()) {
    const Terms t(f.terms().begin(), f.terms().end());
    s += ref_value(t, ref_best_response(t, p));
  }
  return s;
}

// Random instance: every firm has a positive quadratic term, and with
// probability 1/2 a positive quartic term.
struct InstanceGenerator {
  std::mt19937_64 rng;

  explicit InstanceGenerator(std::uint64_t seed) : rng(seed) {}

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

  PolynomialCost firm() {
    Terms terms{{uniform(0.1, 5.0), 2}};
    if (std::bernoulli_distribution(0.5)(rng)) terms.push_back({uniform(0.01, 2.0), 4});
    return PolynomialCost(std::move(terms));
  }

  MarketInstance market(std::size_t n, double demand, double epsilon) {
    std::vector<PolynomialCost> firms;
    for (std::size_t k = 0; k < n; ++k) firms.push_back(firm());
    return MarketInstance(std::move(firms), demand, epsilon);
  }
};

}  // namespace walras::testing
