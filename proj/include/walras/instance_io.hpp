#pragma once

// Instance documents (YAML; plain JSON parses as well) and built-in presets.
//
//   demand_C: 10000
//   epsilon: 1.0e-4
//   firms:
//     - terms: [[1.0, 2]]            # one firm, f(x) = x^2
//     - count: 10                    # ten identical firms
//       terms: [[0.5, 2]]
//       modulus: 1.0                 # optional declared mu
//     - repeat: 50                   # pattern a, b, a, b, ...
//       pattern:
//         - terms: [[0.5, 2], [0.5, 4]]
//         - terms: [[2.0, 2]]
//   solver:                          # optional
//     mechanism: centralized         # or decentralized
//     step_policy: adaptive          # or fixed
//     averaging: step_weighted       # or uniform
//     max_iterations: 1000000
//
// Each term is [coefficient, exponent]. Firms expand in declaration order.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "walras/decentral.hpp"
#include "walras/market.hpp"
#include "walras/protocol.hpp"

namespace walras {

class InstanceParseError : public std::runtime_error {
 public:
  InstanceParseError(int line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  int line() const { return line_; }  // 1-based, 0 when unknown

 private:
  int line_;
};

struct SolverSection {
  std::optional<Mechanism> mechanism;
  std::optional<StepPolicy> step_policy;
  std::optional<Averaging> averaging;
  std::optional<std::int64_t> max_iterations;

  friend bool operator==(const SolverSection&, const SolverSection&) = default;
};

struct InstanceDocument {
  MarketInstance market;
  SolverSection solver;
};

namespace detail {

inline int line_of(const YAML::Node& node) { return node.Mark().line + 1; }

[[noreturn]] inline void fail(const YAML::Node& node, const std::string& what) {
  throw InstanceParseError(node ? line_of(node) : 0, what);
}

template <typename T>
T scalar_as(const YAML::Node& node, const char* what) {
  if (!node || !node.IsScalar()) fail(node, std::string(what) + " must be a scalar");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(node, std::string(what) + " has the wrong type: '" + node.Scalar() + "'");
  }
}

inline PolynomialCost parse_cost(const YAML::Node& entry) {
  const YAML::Node terms = entry["terms"];
  if (!terms || !terms.IsSequence() || terms.size() == 0) {
    fail(terms ? terms : entry, "firm needs a non-empty 'terms' list");
  }
  std::vector<CostTerm> out;
  for (const YAML::Node& t : terms) {
    if (!t.IsSequence() || t.size() != 2) fail(t, "term must be [coefficient, exponent]");
    const auto c = scalar_as<double>(t[0], "coefficient");
    const auto e = scalar_as<int>(t[1], "exponent");
    if (!(c >= 0.0)) fail(t[0], "coefficient must be nonnegative");
    if (e < 0) fail(t[1], "exponent must be a nonnegative integer");
    out.push_back({c, e});
  }
  std::optional<double> modulus;
  if (const YAML::Node m = entry["modulus"]) modulus = scalar_as<double>(m, "modulus");
  try {
    return PolynomialCost(std::move(out), modulus);
  } catch (const InvalidInstance& e) {
    fail(entry, e.what());
  }
}

inline std::int64_t positive_count(const YAML::Node& node, const char* what) {
  const auto v = scalar_as<std::int64_t>(node, what);
  if (v < 1) fail(node, std::string(what) + " must be at least 1");
  return v;
}

inline void expand_firms(const YAML::Node& firms, std::vector<PolynomialCost>& out) {
  for (const YAML::Node& entry : firms) {
    if (!entry.IsMap()) fail(entry, "firm entry must be a mapping");
    if (const YAML::Node rep = entry["repeat"]) {
      const std::int64_t times = positive_count(rep, "repeat");
      const YAML::Node pattern = entry["pattern"];
      if (!pattern || !pattern.IsSequence() || pattern.size() == 0) {
        fail(pattern ? pattern : entry, "'repeat' needs a non-empty 'pattern' list");
      }
      std::vector<PolynomialCost> one_cycle;
      expand_firms(pattern, one_cycle);
      for (std::int64_t i = 0; i < times; ++i) {
        out.insert(out.end(), one_cycle.begin(), one_cycle.end());
      }
      continue;
    }
    const std::int64_t count =
        entry["count"] ? positive_count(entry["count"], "count") : std::int64_t{1};
    const PolynomialCost cost = parse_cost(entry);
    out.insert(out.end(), static_cast<std::size_t>(count), cost);
  }
}

template <typename E>
E parse_enum(const YAML::Node& node, const char* what,
             std::initializer_list<std::pair<std::string_view, E>> names) {
  const auto s = scalar_as<std::string>(node, what);
  for (const auto& [name, value] : names) {
    if (s == name) return value;
  }
  fail(node, std::string("unknown ") + what + " '" + s + "'");
}

}  // namespace detail

inline Mechanism parse_mechanism(std::string_view s) {
  if (s == "centralized") return Mechanism::centralized;
  if (s == "decentralized") return Mechanism::decentralized;
  throw std::invalid_argument("unknown mechanism '" + std::string(s) + "'");
}

inline InstanceDocument parse_instance_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw InstanceParseError(e.mark.line + 1, e.msg);
  }
  if (!root || !root.IsMap()) throw InstanceParseError(1, "instance must be a mapping");

  const YAML::Node firms = root["firms"];
  if (!firms || !firms.IsSequence() || firms.size() == 0) {
    detail::fail(firms ? firms : root, "'firms' must be a non-empty list");
  }
  std::vector<PolynomialCost> costs;
  detail::expand_firms(firms, costs);

  const YAML::Node demand_node = root["demand_C"];
  if (!demand_node) detail::fail(root, "missing 'demand_C'");
  const auto demand = detail::scalar_as<double>(demand_node, "demand_C");
  if (!(demand > 0.0)) detail::fail(demand_node, "demand_C must be positive");

  const YAML::Node eps_node = root["epsilon"];
  if (!eps_node) detail::fail(root, "missing 'epsilon'");
  const auto epsilon = detail::scalar_as<double>(eps_node, "epsilon");
  if (!(epsilon > 0.0)) detail::fail(eps_node, "epsilon must be positive");

  SolverSection solver;
  if (const YAML::Node s = root["solver"]) {
    if (!s.IsMap()) detail::fail(s, "'solver' must be a mapping");
    if (const YAML::Node m = s["mechanism"]) {
      solver.mechanism = detail::parse_enum<Mechanism>(
          m, "mechanism",
          {{"centralized", Mechanism::centralized}, {"decentralized", Mechanism::decentralized}});
    }
    if (const YAML::Node p = s["step_policy"]) {
      solver.step_policy = detail::parse_enum<StepPolicy>(
          p, "step_policy", {{"fixed", StepPolicy::fixed}, {"adaptive", StepPolicy::adaptive}});
    }
    if (const YAML::Node a = s["averaging"]) {
      solver.averaging = detail::parse_enum<Averaging>(
          a, "averaging",
          {{"step_weighted", Averaging::step_weighted}, {"uniform", Averaging::uniform}});
    }
    if (const YAML::Node it = s["max_iterations"]) {
      solver.max_iterations = detail::positive_count(it, "max_iterations");
    }
  }
  return {MarketInstance(std::move(costs), demand, epsilon), solver};
}

inline InstanceDocument parse_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_instance_text(ss.str());
}

// Normalized form: runs of identical consecutive firms collapse into one
// entry with a count; reals keep 17 significant digits.
inline std::string serialize_instance(const InstanceDocument& doc) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "demand_C" << YAML::Value << doc.market.demand();
  out << YAML::Key << "epsilon" << YAML::Value << doc.market.epsilon();
  out << YAML::Key << "firms" << YAML::Value << YAML::BeginSeq;
  const auto firms = doc.market.firms();
  for (std::size_t i = 0; i < firms.size();) {
    std::size_t j = i + 1;
    while (j < firms.size() && firms[j] == firms[i]) ++j;
    out << YAML::BeginMap;
    if (j - i > 1) out << YAML::Key << "count" << YAML::Value << (j - i);
    out << YAML::Key << "terms" << YAML::Value << YAML::BeginSeq;
    for (const CostTerm& t : firms[i].terms()) {
      out << YAML::Flow << YAML::BeginSeq << t.coefficient << t.exponent << YAML::EndSeq;
    }
    out << YAML::EndSeq;
    if (auto m = firms[i].declared_modulus()) out << YAML::Key << "modulus" << YAML::Value << *m;
    out << YAML::EndMap;
    i = j;
  }
  out << YAML::EndSeq;
  const SolverSection& s = doc.solver;
  if (s.mechanism || s.step_policy || s.averaging || s.max_iterations) {
    out << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
    if (s.mechanism) out << YAML::Key << "mechanism" << YAML::Value << to_string(*s.mechanism);
    if (s.step_policy) {
      out << YAML::Key << "step_policy" << YAML::Value << to_string(*s.step_policy);
    }
    if (s.averaging) out << YAML::Key << "averaging" << YAML::Value << to_string(*s.averaging);
    if (s.max_iterations) {
      out << YAML::Key << "max_iterations" << YAML::Value << *s.max_iterations;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Presets

inline std::vector<std::string> preset_names() {
  return {"paper-10", "paper-100", "paper-1000"};
}

// paper-10:   10 firms with f = x^2/2, C = 1e3.
// paper-100:  firms alternate f = x^2/2 + x^4/2 (odd k) and f = 2x^2 (even k), C = 1e4.
// paper-1000: firms alternate f = x^2 (odd k) and f = 2x^2 + 4x^4 (even k), C = 1e6.
// All use eps = 1e-4.
inline MarketInstance preset(std::string_view name) {
  constexpr double eps = 1e-4;
  if (name == "paper-10") {
    return MarketInstance(std::vector<PolynomialCost>(10, PolynomialCost({{0.5, 2}})), 1e3, eps);
  }
  auto alternating = [](std::size_t pairs, const PolynomialCost& odd,
                        const PolynomialCost& even) {
    std::vector<PolynomialCost> firms;
    firms.reserve(2 * pairs);
    for (std::size_t i = 0; i < pairs; ++i) {
      firms.push_back(odd);
      firms.push_back(even);
    }
    return firms;
  };
  if (name == "paper-100") {
    return MarketInstance(
        alternating(50, PolynomialCost({{0.5, 2}, {0.5, 4}}), PolynomialCost({{2.0, 2}})), 1e4,
        eps);
  }
  if (name == "paper-1000") {
    return MarketInstance(
        alternating(500, PolynomialCost({{1.0, 2}}), PolynomialCost({{2.0, 2}, {4.0, 4}})), 1e6,
        eps);
  }
  throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

}  // namespace walras
