#pragma once

// Decentralized pricing: every firm sets its own price, the Center buys C
// units from the lowest-priced firms, and prices move by projected
// subgradient steps on
//
//   phi(p_1..p_n) = sum_k { p_k x_k(p_k) - f_k(x_k(p_k)) } - C min_k p_k,
//
// whose subgradient is g = x(p) - C lambda with lambda on the simplex and
// supported on argmin_k p_k. Iterates p^{t+1} = [p^t - h g(p^t)]_+ start at 0.
// The run stops on the duality-gap certificate
//
//   phi(p_bar) + f(x_bar) + 3R ||(y_bar - x_bar)_+||_2 <= eps,
//
// which implies f(x_bar) - f* <= eps and C - sum x_bar <= eps / p_max.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "walras/market.hpp"
#include "walras/tatonnement.hpp"

namespace walras {

enum class StepPolicy { fixed, adaptive };

// How iterates are averaged for the certificate. `step_weighted` weights
// p^t, x^t, y^t (t = 0..N-1) by the step h_t; with a fixed step this is the
// arithmetic mean. `uniform` takes plain means with p_bar over t = 1..N.
enum class Averaging { step_weighted, uniform };

enum class RunStatus { converged, equilibrium, budget_exhausted };

inline const char* to_string(StepPolicy p) {
  return p == StepPolicy::fixed ? "fixed" : "adaptive";
}

inline const char* to_string(Averaging a) {
  return a == Averaging::uniform ? "uniform" : "step_weighted";
}

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::converged:
      return "converged";
    case RunStatus::equilibrium:
      return "equilibrium";
    case RunStatus::budget_exhausted:
      return "budget exhausted";
  }
  return "unknown";
}

struct DemandAllocation {
  std::vector<double> lambda;
  std::vector<double> purchases;  // y = C lambda
};

// Prices within this relative distance of the minimum count as tied.
inline constexpr double kTieRelTolerance = 1e-12;

inline bool is_lowest_price(double p, double min_price) {
  return p <= min_price + kTieRelTolerance * min_price;
}

inline double min_price(std::span<const double> prices) {
  return *std::min_element(prices.begin(), prices.end());
}

// Equal split of C across the lowest-priced firms.
inline DemandAllocation allocate_demand(std::span<const double> prices, double demand) {
  if (prices.empty()) throw std::invalid_argument("no prices to allocate over");
  const double m = min_price(prices);
  std::size_t ties = 0;
  for (double p : prices) ties += is_lowest_price(p, m) ? 1 : 0;
  DemandAllocation a;
  a.lambda.assign(prices.size(), 0.0);
  a.purchases.assign(prices.size(), 0.0);
  const double share = 1.0 / static_cast<double>(ties);
  for (std::size_t k = 0; k < prices.size(); ++k) {
    if (is_lowest_price(prices[k], m)) {
      a.lambda[k] = share;
      a.purchases[k] = demand * share;
    }
  }
  return a;
}

// Simplex weights, support on the (tolerant) argmin set, y = C lambda.
inline bool allocation_consistent(std::span<const double> prices,
                                  const DemandAllocation& a, double demand) {
  if (a.lambda.size() != prices.size() || a.purchases.size() != prices.size()) return false;
  const double m = min_price(prices);
  double total = 0.0;
  for (std::size_t k = 0; k < prices.size(); ++k) {
    if (a.lambda[k] < 0.0) return false;
    if (a.lambda[k] > 0.0 && !is_lowest_price(prices[k], m)) return false;
    if (a.purchases[k] != demand * a.lambda[k]) return false;
    total += a.lambda[k];
  }
  return std::abs(total - 1.0) <= 1e-12;
}

template <CostModel F>
double multi_dual_value(const BasicMarket<F>& market, std::span<const double> prices) {
  if (prices.size() != market.size()) {
    throw std::invalid_argument("price vector has wrong dimension");
  }
  double profit = 0.0;
  for (std::size_t k = 0; k < prices.size(); ++k) {
    const F& f = market.firm(k);
    profit += firm_profit(f, prices[k], best_response(f, prices[k]));
  }
  return profit - market.demand() * min_price(prices);
}

template <CostModel F>
std::vector<double> productions_at(const BasicMarket<F>& market,
                                   std::span<const double> prices) {
  std::vector<double> x(prices.size());
  for (std::size_t k = 0; k < prices.size(); ++k) {
    x[k] = best_response(market.firm(k), prices[k]);
  }
  return x;
}

// g_k = x_k(p_k) - C lambda_k.
template <CostModel F>
std::vector<double> subgradient(const BasicMarket<F>& market,
                                std::span<const double> prices,
                                const DemandAllocation& allocation) {
  std::vector<double> g = productions_at(market, prices);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] -= allocation.purchases[k];
  return g;
}

// R = ||p^0 - p*||_2 <= p_max sqrt(n) with p^0 = 0.
template <CostModel F>
double price_radius(const BasicMarket<F>& market) {
  return slater_bound(market) * std::sqrt(static_cast<double>(market.size()));
}

// M with ||g(p)||_2 <= M on {p >= 0, ||p||_2 <= 3R}: ||x(3R 1)||_2 + C.
template <CostModel F>
double gradient_bound(const BasicMarket<F>& market, double radius) {
  double sq = 0.0;
  for (const F& f : market.firms()) {
    const double x = best_response(f, 3.0 * radius);
    sq += x * x;
  }
  return std::sqrt(sq) + market.demand();
}

inline double step_fixed(double radius, double gradient_bound, double horizon) {
  return 3.0 * radius / (gradient_bound * std::sqrt(horizon));
}

// eps / ||g||^2; nullopt at a zero subgradient (equilibrium, no step).
inline std::optional<double> step_adaptive(double epsilon, std::span<const double> g) {
  double sq = 0.0;
  for (double v : g) sq += v * v;
  if (sq == 0.0) return std::nullopt;
  return epsilon / sq;
}

// ceil(9 n (M p_max)^2 / eps^2). Kept in floating point: the value routinely
// exceeds 64-bit integer range.
inline double decentralized_iteration_bound(std::size_t n, double gradient_bound,
                                            double p_max, double epsilon) {
  const double mp = gradient_bound * p_max;
  return std::ceil(9.0 * static_cast<double>(n) * mp * mp / (epsilon * epsilon));
}

template <CostModel F>
double theoretical_iterations_decentralized(const BasicMarket<F>& market, double epsilon) {
  const double R = price_radius(market);
  return decentralized_iteration_bound(market.size(), gradient_bound(market, R),
                                       slater_bound(market), epsilon);
}

struct GapDiagnostics {
  double dual_term = 0.0;           // phi(p_bar)
  double primal_term = 0.0;         // f(x_bar)
  double infeasibility_term = 0.0;  // 3R ||(y_bar - x_bar)_+||_2
  double total = 0.0;
  double residual = 0.0;            // C - sum x_bar
  double residual_bound = 0.0;      // eps / p_max
  bool fires = false;
};

// Sum in firm order so a node-by-node evaluation reproduces it bitwise.
inline double positive_gap_norm(std::span<const double> purchases,
                                std::span<const double> productions) {
  double sq = 0.0;
  for (std::size_t k = 0; k < purchases.size(); ++k) {
    const double d = std::max(0.0, purchases[k] - productions[k]);
    sq += d * d;
  }
  return std::sqrt(sq);
}

inline GapDiagnostics assemble_gap(double dual_term, double primal_term, double radius,
                                   std::span<const double> avg_productions,
                                   std::span<const double> avg_purchases,
                                   double demand, double price_cap, double epsilon) {
  GapDiagnostics d;
  d.dual_term = dual_term;
  d.primal_term = primal_term;
  d.infeasibility_term = 3.0 * radius * positive_gap_norm(avg_purchases, avg_productions);
  d.total = d.dual_term + d.primal_term + d.infeasibility_term;
  double total_x = 0.0;
  for (double v : avg_productions) total_x += v;
  d.residual = demand - total_x;
  d.residual_bound = epsilon / price_cap;
  d.fires = d.total <= epsilon;
  return d;
}

template <CostModel F>
GapDiagnostics duality_gap_stop(const BasicMarket<F>& market,
                                std::span<const double> avg_prices,
                                std::span<const double> avg_productions,
                                std::span<const double> avg_purchases, double radius,
                                double price_cap, double epsilon) {
  return assemble_gap(multi_dual_value(market, avg_prices),
                      primal_value(market, avg_productions), radius, avg_productions,
                      avg_purchases, market.demand(), price_cap, epsilon);
}

struct SubgradientOptions {
  StepPolicy policy = StepPolicy::adaptive;
  Averaging averaging = Averaging::step_weighted;
  std::int64_t max_iterations = 200'000'000;
  // N in h = 3R / (M sqrt(N)) for the fixed policy; defaults to the
  // guaranteed iteration bound, which makes h = eps / M^2.
  std::optional<double> fixed_horizon;
  std::optional<std::vector<double>> initial_prices;
  bool keep_history = false;
};

struct SubgradientStep {
  std::int64_t iteration = 0;        // N after this step
  std::span<const double> prices;    // p^{N-1}, the iterate the step started from
  std::span<const double> next_prices;
  double gradient_norm = 0.0;
  double step = 0.0;
  const GapDiagnostics* gap = nullptr;
};

struct SubgradientRun {
  StepPolicy policy = StepPolicy::adaptive;
  Averaging averaging = Averaging::step_weighted;
  double radius = 0.0;          // R
  double gradient_bound = 0.0;  // M
  double price_cap = 0.0;       // p_max
  double fixed_step = 0.0;      // h for the fixed policy
  std::int64_t iterations = 0;
  std::vector<double> avg_prices;
  std::vector<double> avg_productions;
  std::vector<double> avg_purchases;
  double max_price_norm = 0.0;  // max_t ||p^t||_2
  RunStatus status = RunStatus::budget_exhausted;
  // Filled when keep_history is set: p^0..p^N and the gap after each step.
  std::vector<std::vector<double>> price_history;
  std::vector<double> gap_history;
};

struct DecentralizedReport {
  RunStatus status = RunStatus::budget_exhausted;
  std::int64_t iterations = 0;
  std::vector<double> prices;       // p_bar
  std::vector<double> productions;  // x_bar
  std::vector<double> purchases;    // y_bar
  double min_price = 0.0;
  double primal_value = 0.0;  // f(x_bar)
  double dual_value = 0.0;    // phi(p_bar)
  GapDiagnostics gap;
  double residual = 0.0;  // C - sum x_bar
  double theoretical_bound = 0.0;
  bool below_theoretical_bound = false;
};

inline double euclidean_norm(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

template <CostModel F>
std::pair<SubgradientRun, DecentralizedReport> run_projected_subgradient(
    const BasicMarket<F>& market, const SubgradientOptions& options = {},
    const std::function<void(const SubgradientStep&)>& observer = {}) {
  const std::size_t n = market.size();
  const double demand = market.demand();
  const double eps = market.epsilon();

  SubgradientRun run;
  run.policy = options.policy;
  run.averaging = options.averaging;
  run.price_cap = slater_bound(market);
  if (!(run.price_cap > 0.0) || !std::isfinite(run.price_cap)) {
    throw InvalidInstance("degenerate price cap: costs are flat between 0 and 2C/n");
  }
  run.radius = run.price_cap * std::sqrt(static_cast<double>(n));
  run.gradient_bound = gradient_bound(market, run.radius);
  const double bound =
      decentralized_iteration_bound(n, run.gradient_bound, run.price_cap, eps);
  run.fixed_step = step_fixed(run.radius, run.gradient_bound,
                              options.fixed_horizon.value_or(bound));

  std::vector<double> p = options.initial_prices.value_or(std::vector<double>(n, 0.0));
  if (p.size() != n) throw std::invalid_argument("initial price vector has wrong dimension");
  for (double v : p) detail::require_nonnegative(v, "initial price");

  const bool weighted = options.averaging == Averaging::step_weighted;
  std::vector<double> sum_p(n, 0.0), sum_x(n, 0.0), sum_y(n, 0.0);
  std::vector<double> avg_p(n), avg_x(n), avg_y(n), prev(n), g(n);
  double weight = 0.0;
  GapDiagnostics gap;
  run.max_price_norm = euclidean_norm(p);
  if (options.keep_history) run.price_history.push_back(p);

  for (std::int64_t t = 0;; ++t) {
    if (t >= options.max_iterations) {
      run.status = RunStatus::budget_exhausted;
      break;
    }
    const std::vector<double> x = productions_at(market, std::span<const double>(p));
    const DemandAllocation alloc = allocate_demand(p, demand);
    if (!allocation_consistent(p, alloc, demand)) {
      throw std::logic_error("demand allocation left the cheapest-seller simplex");
    }
    double gg = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      g[k] = x[k] - alloc.purchases[k];
      gg += g[k] * g[k];
    }
    if (gg == 0.0) {
      run.status = RunStatus::equilibrium;
      avg_p = p;
      avg_x = x;
      avg_y = alloc.purchases;
      gap = duality_gap_stop(market, std::span<const double>(avg_p),
                             std::span<const double>(avg_x), std::span<const double>(avg_y),
                             run.radius, run.price_cap, eps);
      break;
    }
    const double h = options.policy == StepPolicy::fixed ? run.fixed_step : eps / gg;
    const double w = weighted ? h : 1.0;
    prev = p;
    for (std::size_t k = 0; k < n; ++k) {
      sum_x[k] += w * x[k];
      sum_y[k] += w * alloc.purchases[k];
      if (weighted) sum_p[k] += w * p[k];
    }
    weight += w;
    for (std::size_t k = 0; k < n; ++k) {
      p[k] = std::max(0.0, p[k] - h * g[k]);
      if (!weighted) sum_p[k] += p[k];
    }
    run.max_price_norm = std::max(run.max_price_norm, euclidean_norm(p));
    run.iterations = t + 1;

    for (std::size_t k = 0; k < n; ++k) {
      avg_p[k] = sum_p[k] / weight;
      avg_x[k] = sum_x[k] / weight;
      avg_y[k] = sum_y[k] / weight;
    }
    gap = duality_gap_stop(market, std::span<const double>(avg_p),
                           std::span<const double>(avg_x), std::span<const double>(avg_y),
                           run.radius, run.price_cap, eps);
    if (options.keep_history) {
      run.price_history.push_back(p);
      run.gap_history.push_back(gap.total);
    }
    if (observer) {
      observer(SubgradientStep{run.iterations, prev, p, std::sqrt(gg), h, &gap});
    }
    if (gap.fires) {
      run.status = RunStatus::converged;
      break;
    }
  }

  if (run.iterations == 0 && run.status == RunStatus::budget_exhausted) {
    avg_p = p;
    avg_x = productions_at(market, std::span<const double>(p));
    avg_y = allocate_demand(p, demand).purchases;
    gap = duality_gap_stop(market, std::span<const double>(avg_p),
                           std::span<const double>(avg_x), std::span<const double>(avg_y),
                           run.radius, run.price_cap, eps);
  }
  run.avg_prices = avg_p;
  run.avg_productions = avg_x;
  run.avg_purchases = avg_y;

  DecentralizedReport report;
  report.status = run.status;
  report.iterations = run.iterations;
  report.prices = avg_p;
  report.productions = avg_x;
  report.purchases = avg_y;
  report.min_price = min_price(avg_p);
  report.primal_value = gap.primal_term;
  report.dual_value = gap.dual_term;
  report.gap = gap;
  report.residual = gap.residual;
  report.theoretical_bound = bound;
  report.below_theoretical_bound =
      run.status != RunStatus::budget_exhausted && static_cast<double>(run.iterations) < bound;
  return {std::move(run), std::move(report)};
}

}  // namespace walras
