#pragma once

// Cost models, firm best responses and the scalar dual oracle shared by both
// pricing mechanisms.
//
// Problem: minimize sum_k f_k(x_k) subject to sum_k x_k >= C, x >= 0.
// Dual (up to sign): phi(p) = sum_k { p x_k(p) - f_k(x_k(p)) } - p C, p >= 0,
// where x_k(p) = argmax_{x >= 0} { p x - f_k(x) } is firm k's profit-maximizing
// output at price p.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace walras {

class InvalidInstance : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A convex, nondecreasing cost function on x >= 0.
//
//   value(x)    -- f(x)
//   marginal(x) -- f'(x), continuous and strictly increasing
//   modulus()   -- strong convexity modulus mu (0 when unknown)
template <typename F>
concept CostModel = requires(const F& f, double x) {
  { f.value(x) } -> std::convertible_to<double>;
  { f.marginal(x) } -> std::convertible_to<double>;
  { f.modulus() } -> std::convertible_to<double>;
};

struct CostTerm {
  double coefficient = 0.0;
  int exponent = 0;

  friend bool operator==(const CostTerm&, const CostTerm&) = default;
};

namespace detail {

inline double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

inline void require_nonnegative(double x, const char* what) {
  if (!(x >= 0.0)) {
    throw std::domain_error(std::string(what) + " must be nonnegative");
  }
}

}  // namespace detail

// f(x) = sum_i c_i x^{e_i} with c_i >= 0. Exponent 0 is the constant term.
class PolynomialCost {
 public:
  PolynomialCost() = default;

  // `modulus` is a user-declared strong convexity modulus, needed when the
  // polynomial has no quadratic term (quartic-only costs are strongly convex
  // on compacts only).
  explicit PolynomialCost(std::vector<CostTerm> terms,
                          std::optional<double> modulus = std::nullopt)
      : terms_(std::move(terms)), declared_modulus_(modulus) {
    bool curved = false;
    for (const CostTerm& t : terms_) {
      if (!std::isfinite(t.coefficient) || t.coefficient < 0.0) {
        throw InvalidInstance("cost coefficient must be finite and nonnegative");
      }
      if (t.exponent < 0) {
        throw InvalidInstance("cost exponent must be a nonnegative integer");
      }
      if (t.exponent >= 2 && t.coefficient > 0.0) curved = true;
      if (t.exponent == 2) quadratic_ += t.coefficient;
      degree_ = std::max(degree_, t.coefficient > 0.0 ? t.exponent : 0);
    }
    if (!curved) {
      throw InvalidInstance(
          "cost needs a positive term of degree >= 2 to be strictly convex");
    }
    if (declared_modulus_ && !(*declared_modulus_ > 0.0)) {
      throw InvalidInstance("declared strong convexity modulus must be positive");
    }
  }

  double value(double x) const {
    detail::require_nonnegative(x, "production");
    double s = 0.0;
    for (const CostTerm& t : terms_) s += t.coefficient * detail::ipow(x, t.exponent);
    return s;
  }

  double marginal(double x) const {
    double s = 0.0;
    for (const CostTerm& t : terms_) {
      if (t.exponent >= 1) {
        s += t.coefficient * t.exponent * detail::ipow(x, t.exponent - 1);
      }
    }
    return s;
  }

  double curvature(double x) const {
    double s = 0.0;
    for (const CostTerm& t : terms_) {
      if (t.exponent >= 2) {
        s += t.coefficient * t.exponent * (t.exponent - 1) *
             detail::ipow(x, t.exponent - 2);
      }
    }
    return s;
  }

  // mu = 2 a_2, unless a modulus was declared explicitly.
  double modulus() const {
    if (declared_modulus_) return *declared_modulus_;
    return 2.0 * quadratic_;
  }

  // x with f'(x) = p for costs of degree <= 2; nullopt otherwise.
  std::optional<double> closed_form_response(double p) const {
    if (degree_ > 2) return std::nullopt;
    double linear = 0.0;
    for (const CostTerm& t : terms_) {
      if (t.exponent == 1) linear += t.coefficient;
    }
    return std::max(0.0, (p - linear) / (2.0 * quadratic_));
  }

  std::span<const CostTerm> terms() const { return terms_; }
  std::optional<double> declared_modulus() const { return declared_modulus_; }
  int degree() const { return degree_; }

  friend bool operator==(const PolynomialCost& a, const PolynomialCost& b) {
    return a.terms_ == b.terms_ && a.declared_modulus_ == b.declared_modulus_;
  }

 private:
  std::vector<CostTerm> terms_;
  std::optional<double> declared_modulus_;
  double quadratic_ = 0.0;
  int degree_ = 0;
};

static_assert(CostModel<PolynomialCost>);

// Relative bracket width at which the bisection best response stops.
inline constexpr double kBestResponseRelWidth = 1e-12;

// argmax_{x >= 0} { p x - f(x) }: 0 when f'(0) >= p, otherwise the root of
// f'(x) = p. Uses the cost's closed form when it has one.
template <CostModel F>
double best_response(const F& f, double p) {
  detail::require_nonnegative(p, "price");
  if (f.marginal(0.0) >= p) return 0.0;
  if constexpr (requires { { f.closed_form_response(p) } -> std::same_as<std::optional<double>>; }) {
    if (auto x = f.closed_form_response(p)) return *x;
  }
  double lo = 0.0;
  double hi = 1.0;
  for (int doublings = 0; f.marginal(hi) < p; ++doublings) {
    if (doublings > 2000 || !std::isfinite(hi)) {
      throw std::domain_error("marginal cost never reaches the price");
    }
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > kBestResponseRelWidth * hi) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f.marginal(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

template <CostModel F>
double eval_cost(const F& f, double x) {
  return f.value(x);
}

// n firms, required total output C and a tolerance eps (units of whichever
// stopping quantity the mechanism uses).
template <CostModel F>
class BasicMarket {
 public:
  using cost_type = F;

  BasicMarket(std::vector<F> firms, double demand, double epsilon)
      : firms_(std::move(firms)), demand_(demand), epsilon_(epsilon) {
    if (firms_.empty()) throw InvalidInstance("market needs at least one firm");
    if (!(demand_ > 0.0) || !std::isfinite(demand_)) {
      throw InvalidInstance("demand C must be positive");
    }
    if (!(epsilon_ > 0.0) || !std::isfinite(epsilon_)) {
      throw InvalidInstance("epsilon must be positive");
    }
  }

  std::span<const F> firms() const { return firms_; }
  const F& firm(std::size_t k) const { return firms_[k]; }
  std::size_t size() const { return firms_.size(); }
  double demand() const { return demand_; }
  double epsilon() const { return epsilon_; }

  BasicMarket with_epsilon(double epsilon) const {
    return BasicMarket(firms_, demand_, epsilon);
  }

 private:
  std::vector<F> firms_;
  double demand_;
  double epsilon_;
};

using MarketInstance = BasicMarket<PolynomialCost>;

struct DualPoint {
  double price = 0.0;
  std::vector<double> productions;
  double dual_value = 0.0;       // phi(p)
  double dual_derivative = 0.0;  // phi'(p) = sum x_k(p) - C
  double total_production = 0.0;
};

template <CostModel F>
std::vector<double> best_responses(const BasicMarket<F>& market, double p) {
  std::vector<double> x(market.size());
  for (std::size_t k = 0; k < market.size(); ++k) x[k] = best_response(market.firm(k), p);
  return x;
}

// Firm k's profit p x - f(x) at its best response. Both dual functions sum
// these terms in firm order so they agree bitwise at uniform prices.
template <CostModel F>
double firm_profit(const F& f, double p, double x) {
  return p * x - f.value(x);
}

template <CostModel F>
DualPoint dual_point(const BasicMarket<F>& market, double p) {
  DualPoint d;
  d.price = p;
  d.productions = best_responses(market, p);
  double profit = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < market.size(); ++k) {
    profit += firm_profit(market.firm(k), p, d.productions[k]);
    total += d.productions[k];
  }
  d.dual_value = profit - p * market.demand();
  d.dual_derivative = total - market.demand();
  d.total_production = total;
  return d;
}

// f(x) = sum_k f_k(x_k).
template <CostModel F>
double primal_value(const BasicMarket<F>& market, std::span<const double> x) {
  if (x.size() != market.size()) {
    throw std::invalid_argument("production vector has wrong dimension");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += market.firm(k).value(x[k]);
  return s;
}

template <CostModel F>
double min_modulus(const BasicMarket<F>& market) {
  double mu = std::numeric_limits<double>::infinity();
  for (const F& f : market.firms()) mu = std::min(mu, static_cast<double>(f.modulus()));
  return mu;
}

// Lipschitz constant of phi': L = n / min_k mu_k.
template <CostModel F>
double smoothness_constant(const BasicMarket<F>& market) {
  const double mu = min_modulus(market);
  if (!(mu > 0.0)) {
    throw InvalidInstance(
        "strong convexity modulus undefined: no quadratic term and no declared modulus");
  }
  return static_cast<double>(market.size()) / mu;
}

// Working Lipschitz constant of phi itself on [0, p_max]; taken to be C.
template <CostModel F>
double dual_lipschitz_bound(const BasicMarket<F>& market) {
  return market.demand();
}

// Exact Lipschitz constant of phi on [0, p_max]. phi' is nondecreasing, so
// the extremes of |phi'| sit at the endpoints.
template <CostModel F>
double empirical_dual_lipschitz(const BasicMarket<F>& market, double p_max) {
  const double at_zero = std::abs(dual_point(market, 0.0).dual_derivative);
  const double at_cap = std::abs(dual_point(market, p_max).dual_derivative);
  return std::max(at_zero, at_cap);
}

}  // namespace walras
