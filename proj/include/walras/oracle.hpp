#pragma once

// Ground truth for the allocation problem, computed without either pricing
// mechanism: a high-precision root of sum_k x_k(p) = C on [0, 2 p_max], a grid
// search for tiny instances and a KKT residual report.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "walras/market.hpp"
#include "walras/tatonnement.hpp"

namespace walras {

struct KktResiduals {
  std::vector<double> stationarity;  // per firm
  double max_stationarity = 0.0;
  double complementary_slackness = 0.0;  // |p (sum x - C)|
  double infeasibility = 0.0;            // max(0, C - sum x)
};

struct OracleSolution {
  std::vector<double> x_star;
  double f_star = 0.0;
  double p_star = 0.0;
  KktResiduals kkt;
};

inline constexpr int kOracleBisectionSteps = 200;

// Stationarity: |f_k'(x_k) - p| when x_k > 0, max(0, p - f_k'(0)) otherwise.
template <CostModel F>
KktResiduals kkt_check(const BasicMarket<F>& market, double p, std::span<const double> x) {
  detail::require_nonnegative(p, "price");
  if (x.size() != market.size()) {
    throw std::invalid_argument("production vector has wrong dimension");
  }
  KktResiduals r;
  r.stationarity.resize(x.size());
  double total = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    detail::require_nonnegative(x[k], "production");
    const F& f = market.firm(k);
    r.stationarity[k] = x[k] > 0.0 ? std::abs(f.marginal(x[k]) - p)
                                   : std::max(0.0, p - f.marginal(0.0));
    r.max_stationarity = std::max(r.max_stationarity, r.stationarity[k]);
    total += x[k];
  }
  r.complementary_slackness = std::abs(p * (total - market.demand()));
  r.infeasibility = std::max(0.0, market.demand() - total);
  return r;
}

template <CostModel F>
OracleSolution oracle_solve(const BasicMarket<F>& market) {
  auto excess = [&](double p) {
    double s = 0.0;
    for (const F& f : market.firms()) s += best_response(f, p);
    return s - market.demand();
  };
  double lo = 0.0;
  double hi = 2.0 * slater_bound(market);
  if (!(hi > 0.0) || excess(hi) < 0.0) {
    throw InvalidInstance("equilibrium price is not bracketed by [0, 2 p_max]");
  }
  for (int i = 0; i < kOracleBisectionSteps; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (excess(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  OracleSolution s;
  // hi keeps sum x >= C, so x* is feasible up to the inner solver's accuracy.
  s.p_star = hi;
  s.x_star = best_responses(market, s.p_star);
  s.f_star = primal_value(market, std::span<const double>(s.x_star));
  s.kkt = kkt_check(market, s.p_star, std::span<const double>(s.x_star));
  return s;
}

struct GridSolution {
  std::vector<double> x;
  double value = 0.0;
  double step = 0.0;
  bool boundary_hit = false;  // argmin on the upper edge of the box: grid too coarse
};

// Exhaustive grid search over {x >= 0, sum x >= C} for n <= 3. Coordinates
// range over 0, d, .., ceil(C/d) d; the last one takes the smallest grid value
// that restores feasibility, which is optimal because costs are nondecreasing.
template <CostModel F>
GridSolution brute_force_small(const BasicMarket<F>& market, double step) {
  const std::size_t n = market.size();
  if (n > 3) throw std::invalid_argument("grid search supports at most 3 firms");
  if (!(step > 0.0)) throw std::invalid_argument("grid step must be positive");
  const double demand = market.demand();
  const auto top = static_cast<long>(std::ceil(demand / step));

  GridSolution best;
  best.step = step;
  best.value = std::numeric_limits<double>::infinity();
  std::vector<long> idx(n, 0);
  std::vector<double> x(n, 0.0);

  auto evaluate = [&]() {
    double partial = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) partial += static_cast<double>(idx[k]) * step;
    const long last = std::max(0L, static_cast<long>(std::ceil((demand - partial) / step)));
    idx[n - 1] = std::min(last, top);
    double total = 0.0;
    double value = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] = static_cast<double>(idx[k]) * step;
      total += x[k];
      value += market.firm(k).value(x[k]);
    }
    if (total < demand) return;
    if (value < best.value) {
      best.value = value;
      best.x = x;
      best.boundary_hit = false;
      if (n > 1) {
        for (std::size_t k = 0; k < n; ++k) best.boundary_hit |= idx[k] == top;
      }
    }
  };

  if (n == 1) {
    evaluate();
  } else if (n == 2) {
    for (idx[0] = 0; idx[0] <= top; ++idx[0]) evaluate();
  } else {
    for (idx[0] = 0; idx[0] <= top; ++idx[0]) {
      for (idx[1] = 0; idx[0] + idx[1] <= top; ++idx[1]) evaluate();
    }
  }
  return best;
}

}  // namespace walras
