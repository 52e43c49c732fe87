#pragma once

// Centralized tatonnement: the Center bisects the scalar dual price.
//
// The initial price interval is [0, p_max] with the Slater cap
//   p_max = (1/C) sum_k { f_k(2C/n) - f_k(0) },
// which bounds the equilibrium price from above. Each iteration announces the
// midpoint, collects best responses and keeps the half on which phi' changes
// sign. The loop stops once |sum_k x_k(p) - C| <= eps.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "walras/market.hpp"

namespace walras {

class SlaterViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PriceBracket {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  double midpoint() const { return 0.5 * (lo + hi); }
};

struct DichotomyStep {
  int iteration = 0;  // 1-based
  double price = 0.0;
  double total_production = 0.0;
  double derivative = 0.0;  // phi'(price)
  PriceBracket bracket;     // after the update
};

struct CentralizedTrace {
  std::vector<DichotomyStep> records;
};

struct EquilibriumReport {
  double price = 0.0;
  double price_cap = 0.0;
  std::vector<double> productions;            // x(p^N)
  std::vector<double> productions_projected;  // feasible projection of x(p^N)
  double primal_value = 0.0;                  // f(projected)
  double primal_value_unprojected = 0.0;      // f(x(p^N))
  double dual_value = 0.0;                    // phi(p^N)
  double duality_gap = 0.0;                   // primal_value + dual_value
  double constraint_residual = 0.0;           // C - sum x(p^N)
  double projected_residual = 0.0;            // C - sum projected
  double primal_lipschitz = 0.0;              // M_f estimate
  int iterations = 0;
  int theoretical_bound = 0;
  bool converged = false;
};

struct DichotomyOptions {
  int max_iterations = 200;
};

template <CostModel F>
double slater_bound(const BasicMarket<F>& market) {
  const double n = static_cast<double>(market.size());
  const double probe = 2.0 * market.demand() / n;
  double s = 0.0;
  for (const F& f : market.firms()) s += f.value(probe) - f.value(0.0);
  return s / market.demand();
}

// Uniform shift onto {sum x >= C}: x + ((C - sum x)/n) 1 when infeasible.
template <CostModel F>
std::vector<double> project_feasible(const BasicMarket<F>& market,
                                     std::span<const double> x) {
  if (x.size() != market.size()) {
    throw std::invalid_argument("production vector has wrong dimension");
  }
  double total = 0.0;
  for (double v : x) {
    detail::require_nonnegative(v, "production");
    total += v;
  }
  std::vector<double> out(x.begin(), x.end());
  if (total >= market.demand()) return out;
  const double shift = (market.demand() - total) / static_cast<double>(x.size());
  for (double& v : out) v += shift;
  return out;
}

// ceil(log2(2 L M_phi p_max^3 / eps^2)), clamped at 0.
inline int dichotomy_iteration_bound(double smoothness, double dual_lipschitz,
                                     double p_max, double epsilon) {
  const double arg =
      2.0 * smoothness * dual_lipschitz * p_max * p_max * p_max / (epsilon * epsilon);
  const double n = std::ceil(std::log2(arg));
  return n > 0.0 ? static_cast<int>(n) : 0;
}

template <CostModel F>
int theoretical_iterations(const BasicMarket<F>& market) {
  return dichotomy_iteration_bound(smoothness_constant(market),
                                   dual_lipschitz_bound(market),
                                   slater_bound(market), market.epsilon());
}

// Geometric primal bound after N halvings:
// f(x(p^N)) - f* <= (2 L M_phi p_max^3)^{1/2} / 2^{N/2}.
inline double primal_value_bound(int iterations, double smoothness,
                                 double dual_lipschitz, double p_max) {
  return std::sqrt(2.0 * smoothness * dual_lipschitz * p_max * p_max * p_max) /
         std::pow(2.0, 0.5 * iterations);
}

// Geometric bound on ||x(p^N) - x*||_2 after N halvings.
inline double argument_error_bound(int iterations, double smoothness,
                                   double dual_lipschitz, double primal_lipschitz,
                                   double mu, std::size_t n, double p_max) {
  const double nn = static_cast<double>(n);
  const double a = std::sqrt(8.0 * smoothness * dual_lipschitz * p_max * p_max * p_max /
                             (mu * mu));
  const double b = std::sqrt(8.0 * smoothness * dual_lipschitz * primal_lipschitz *
                             primal_lipschitz * p_max / (nn * mu * mu));
  const double c = std::sqrt(2.0 * smoothness * dual_lipschitz * p_max / nn);
  return std::sqrt(a + b) / std::pow(2.0, 0.25 * iterations) +
         c / std::pow(2.0, 0.5 * iterations);
}

// M_f: largest marginal cost over the box reachable at the price cap.
template <CostModel F>
double primal_lipschitz_estimate(const BasicMarket<F>& market, double p_max) {
  double m = 0.0;
  for (const F& f : market.firms()) {
    m = std::max(m, static_cast<double>(f.marginal(best_response(f, p_max))));
  }
  return m;
}

template <CostModel F>
EquilibriumReport make_report(const BasicMarket<F>& market, const DualPoint& at,
                              double p_max, int iterations, bool converged) {
  EquilibriumReport r;
  r.price = at.price;
  r.price_cap = p_max;
  r.productions = at.productions;
  r.productions_projected = project_feasible(market, std::span<const double>(at.productions));
  r.primal_value = primal_value(market, std::span<const double>(r.productions_projected));
  r.primal_value_unprojected = primal_value(market, std::span<const double>(r.productions));
  r.dual_value = at.dual_value;
  r.duality_gap = r.primal_value + r.dual_value;
  r.constraint_residual = -at.dual_derivative;
  double projected_total = 0.0;
  for (double v : r.productions_projected) projected_total += v;
  r.projected_residual = market.demand() - projected_total;
  r.primal_lipschitz = primal_lipschitz_estimate(market, p_max);
  r.iterations = iterations;
  r.converged = converged;
  return r;
}

template <CostModel F>
std::pair<CentralizedTrace, EquilibriumReport> run_dichotomy(
    const BasicMarket<F>& market, const DichotomyOptions& options = {}) {
  const double p_max = slater_bound(market);
  if (!(p_max > 0.0) || !std::isfinite(p_max)) {
    throw InvalidInstance("degenerate price cap: costs are flat between 0 and 2C/n");
  }
  if (dual_point(market, p_max).dual_derivative < 0.0) {
    throw SlaterViolation("Slater bound violated: supply at the price cap is below C");
  }

  CentralizedTrace trace;
  PriceBracket bracket{0.0, p_max};
  DualPoint at;
  bool converged = false;
  int n_iter = 0;
  while (n_iter < options.max_iterations) {
    const double p = bracket.midpoint();
    at = dual_point(market, p);
    const double d = at.dual_derivative;
    if (d > 0.0) {
      bracket.hi = p;
    } else if (d < 0.0) {
      bracket.lo = p;
    }
    ++n_iter;
    trace.records.push_back(DichotomyStep{n_iter, p, at.total_production, d, bracket});
    if (std::abs(d) <= market.epsilon()) {
      converged = true;
      break;
    }
  }
  if (n_iter == 0) at = dual_point(market, bracket.midpoint());

  EquilibriumReport report = make_report(market, at, p_max, n_iter, converged);
  report.theoretical_bound = theoretical_iterations(market);
  return {std::move(trace), std::move(report)};
}

inline constexpr double kMachineEpsilon = std::numeric_limits<double>::epsilon();

struct CertificateViolation {
  std::ptrdiff_t trace_index = -1;  // -1 for whole-run checks
  std::string check;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct CentralizedCertificate {
  std::vector<CertificateViolation> violations;
  std::size_t checks = 0;

  bool ok() const { return violations.empty(); }
};

// Runtime checks of the dichotomy's guarantees against a reference optimum
// f* obtained independently. Tolerances scale with max(1, |f*|).
template <CostModel F>
CentralizedCertificate certify_centralized(const BasicMarket<F>& market,
                                           const CentralizedTrace& trace,
                                           const EquilibriumReport& report,
                                           double reference_optimum) {
  CentralizedCertificate cert;
  const double scale = std::max(1.0, std::abs(reference_optimum));
  const double tol = 1e-9 * scale;
  const double p_max = report.price_cap;
  const double smooth = smoothness_constant(market);
  // The decay bound needs a valid Lipschitz constant of phi on [0, p_max];
  // C alone is too small whenever supply at p_max exceeds 2C.
  const double m_phi =
      std::max(dual_lipschitz_bound(market), empirical_dual_lipschitz(market, p_max));
  const double n = static_cast<double>(market.size());
  auto check = [&](bool ok, std::ptrdiff_t idx, const char* what, double lhs, double rhs) {
    ++cert.checks;
    if (!ok) cert.violations.push_back({idx, what, lhs, rhs});
  };

  PriceBracket prev{0.0, p_max};
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const DichotomyStep& s = trace.records[i];
    const auto idx = static_cast<std::ptrdiff_t>(i);
    const DualPoint d = dual_point(market, s.price);
    const double f_x = primal_value(market, std::span<const double>(d.productions));

    // Lemma 2: f(x(p)) - f* <= p (sum x(p) - C).
    const double lhs = f_x - reference_optimum;
    const double rhs = s.price * d.dual_derivative;
    check(lhs <= rhs + tol, idx, "lemma2", lhs, rhs);

    // Weak duality with the feasible projection and with x*.
    const auto proj = project_feasible(market, std::span<const double>(d.productions));
    const double f_proj = primal_value(market, std::span<const double>(proj));
    check(f_proj + d.dual_value >= -tol, idx, "weak_duality_projection",
          f_proj, -d.dual_value);
    check(reference_optimum + d.dual_value >= -tol, idx, "weak_duality_optimum",
          reference_optimum, -d.dual_value);

    // Bracket: halving up to rounding of the midpoint (an exact zero of phi'
    // leaves it untouched) and the sign invariant.
    if (s.derivative != 0.0) {
      const double half = 0.5 * prev.width();
      check(std::abs(s.bracket.width() - half) <= 4.0 * kMachineEpsilon * prev.hi, idx,
            "bracket_halving", s.bracket.width(), half);
    }
    const double d_lo = dual_point(market, s.bracket.lo).dual_derivative;
    const double d_hi = dual_point(market, s.bracket.hi).dual_derivative;
    check(d_lo <= 0.0 && d_hi >= 0.0, idx, "bracket_sign", d_lo, d_hi);
    prev = s.bracket;

    // Geometric decay of the projected primal value; the slack covers the
    // projection shift, M_f * ||shift||_2 = M_f * (C - sum x)_+ / sqrt(n).
    const double shift_norm = std::max(0.0, -d.dual_derivative) / std::sqrt(n);
    const double bound = primal_value_bound(s.iteration, smooth, m_phi, p_max) +
                         report.primal_lipschitz * shift_norm;
    check(f_proj - reference_optimum <= bound + tol, idx, "primal_decay",
          f_proj - reference_optimum, bound);
  }

  if (report.converged) {
    check(std::abs(report.constraint_residual) <= market.epsilon(), -1,
          "final_residual", std::abs(report.constraint_residual), market.epsilon());
  }
  check(report.primal_value >= reference_optimum - tol, -1, "projected_not_below_optimum",
        report.primal_value, reference_optimum);
  check(report.projected_residual <= 1e-9 * std::max(1.0, market.demand()), -1, "projected_feasible",
        report.projected_residual, 0.0);
  check(report.duality_gap >= -tol, -1, "duality_gap_nonnegative", report.duality_gap, 0.0);
  return cert;
}

}  // namespace walras
