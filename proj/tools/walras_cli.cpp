// walras: run the pricing mechanisms on a preset or instance file.
//
//   walras centralized   --preset paper-10
//   walras decentralized --preset paper-10 --epsilon 1e-1 --out run/ --trace
//   walras oracle        --instance market.yaml
//   walras simulate      --preset paper-100 --mechanism centralized --out run/ --trace
//   walras verify        --preset paper-1000
//
// Exit codes: 0 success, 1 usage or input error, 2 invariant violation,
// 3 iteration budget exhausted.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "walras/walras.hpp"
#include "walras/instance_io.hpp"
#include "walras/report_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace walras;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitViolation = 2;
constexpr int kExitBudget = 3;

struct Flags {
  std::string preset;
  std::string instance;
  std::optional<double> epsilon;
  std::optional<std::string> mechanism;
  std::optional<std::string> step_policy;
  std::optional<std::string> averaging;
  std::optional<std::int64_t> max_iters;
  std::string out;
  bool trace = false;
  std::int64_t trace_stride = 1;
};

struct Setup {
  MarketInstance market;
  Mechanism mechanism = Mechanism::centralized;
  StepPolicy policy = StepPolicy::adaptive;
  Averaging averaging = Averaging::step_weighted;
  std::optional<std::int64_t> max_iters;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Setup resolve(const Flags& f) {
  if (f.preset.empty() == f.instance.empty()) {
    throw UsageError("exactly one of --preset and --instance is required");
  }
  InstanceDocument doc = f.preset.empty()
                             ? parse_instance(f.instance)
                             : InstanceDocument{preset(f.preset), SolverSection{}};
  Setup s{f.epsilon ? doc.market.with_epsilon(*f.epsilon) : doc.market,
          doc.solver.mechanism.value_or(Mechanism::centralized),
          doc.solver.step_policy.value_or(StepPolicy::adaptive),
          doc.solver.averaging.value_or(Averaging::step_weighted), doc.solver.max_iterations};
  if (f.mechanism) s.mechanism = parse_mechanism(*f.mechanism);
  if (f.step_policy) s.policy = *f.step_policy == "fixed" ? StepPolicy::fixed : StepPolicy::adaptive;
  if (f.averaging) {
    s.averaging = *f.averaging == "uniform" ? Averaging::uniform : Averaging::step_weighted;
  }
  if (f.max_iters) s.max_iters = *f.max_iters;
  return s;
}

std::ofstream open_output(const Flags& f, const std::string& name) {
  fs::create_directories(f.out);
  const fs::path path = fs::path(f.out) / name;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  return os;
}

void emit_report(const Flags& f, const json& report) {
  std::cout << report.dump(2) << '\n';
  if (!f.out.empty()) {
    std::ofstream os = open_output(f, "report.json");
    os << report.dump(2) << '\n';
  }
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

int cmd_centralized(const Flags& f) {
  const Setup s = resolve(f);
  DichotomyOptions opts;
  if (s.max_iters) opts.max_iterations = static_cast<int>(*s.max_iters);
  const auto start = std::chrono::steady_clock::now();
  const auto [trace, report] = run_dichotomy(s.market, opts);
  json j = to_json(report);
  j["runtime_ms"] = elapsed_ms(start);
  emit_report(f, j);
  if (f.trace && !f.out.empty()) {
    std::ofstream os = open_output(f, "trace.csv");
    write_centralized_trace(os, trace);
  }
  return report.converged ? kExitOk : kExitBudget;
}

int cmd_decentralized(const Flags& f) {
  const Setup s = resolve(f);
  SubgradientOptions opts;
  opts.policy = s.policy;
  opts.averaging = s.averaging;
  if (s.max_iters) opts.max_iterations = *s.max_iters;

  std::ofstream trace_file;
  std::optional<DecentralizedTraceWriter> writer;
  if (f.trace && !f.out.empty()) {
    trace_file = open_output(f, "trace.csv");
    writer.emplace(trace_file, f.trace_stride);
  }
  std::function<void(const SubgradientStep&)> observer;
  if (writer) observer = [&](const SubgradientStep& step) { (*writer)(step); };

  const auto start = std::chrono::steady_clock::now();
  const auto [run, report] = run_projected_subgradient(s.market, opts, observer);
  if (writer) writer->finish();
  json j = to_json(report, run);
  j["runtime_ms"] = elapsed_ms(start);
  emit_report(f, j);
  return report.status == RunStatus::budget_exhausted ? kExitBudget : kExitOk;
}

int cmd_oracle(const Flags& f) {
  const Setup s = resolve(f);
  const OracleSolution sol = oracle_solve(s.market);
  json j = to_json(sol);
  j["price_cap"] = slater_bound(s.market);
  emit_report(f, j);
  return kExitOk;
}

int cmd_simulate(const Flags& f) {
  const Setup s = resolve(f);
  std::ofstream log_file;
  if (f.trace && !f.out.empty()) log_file = open_output(f, "messages.csv");
  std::int64_t messages = 0;
  auto sink = [&](const ProtocolMessage& m) {
    ++messages;
    if (log_file.is_open()) write_message(log_file, m);
  };

  ProtocolOutcome outcome;
  if (s.mechanism == Mechanism::centralized) {
    CentralizedProtocolOptions opts;
    if (s.max_iters) opts.max_rounds = *s.max_iters;
    outcome = simulate_centralized(s.market, sink, opts);
  } else {
    DecentralizedProtocolOptions opts;
    opts.policy = s.policy;
    opts.averaging = s.averaging;
    if (s.max_iters) opts.budget = *s.max_iters;
    outcome = simulate_decentralized(s.market, sink, opts);
  }
  json j = to_json(outcome);
  j["messages"] = messages;
  emit_report(f, j);
  return outcome.status == RunStatus::budget_exhausted ? kExitBudget : kExitOk;
}

// Certificates against the oracle optimum. Centralized: every trace point.
// Decentralized (only with --mechanism decentralized): the gap conclusions at
// the stop and iterate confinement.
int cmd_verify(const Flags& f) {
  const Setup s = resolve(f);
  const OracleSolution sol = oracle_solve(s.market);
  json j;
  j["p_star"] = sol.p_star;
  j["f_star"] = sol.f_star;
  bool ok = true;
  bool exhausted = false;

  DichotomyOptions copts;
  if (s.max_iters) copts.max_iterations = static_cast<int>(*s.max_iters);
  const auto [trace, report] = run_dichotomy(s.market, copts);
  const CentralizedCertificate cert = certify_centralized(s.market, trace, report, sol.f_star);
  json violations = json::array();
  for (const CertificateViolation& v : cert.violations) {
    violations.push_back({{"index", v.trace_index}, {"check", v.check}, {"lhs", v.lhs},
                          {"rhs", v.rhs}});
  }
  const bool bracket_has_root = !trace.records.empty() &&
                                trace.records.back().bracket.lo <= sol.p_star &&
                                sol.p_star <= trace.records.back().bracket.hi;
  const bool below_cap = sol.p_star <= report.price_cap;
  j["centralized"] = {{"checks", cert.checks},
                      {"violations", violations},
                      {"p_star_in_final_bracket", bracket_has_root},
                      {"p_star_below_price_cap", below_cap},
                      {"iterations", report.iterations}};
  ok = ok && cert.ok() && below_cap && (bracket_has_root || !report.converged);
  exhausted = exhausted || !report.converged;

  const CentralizedProtocolOptions popts{copts.max_iterations};
  const RoundLog log = simulate_centralized(s.market, popts);
  const CentralizedTrace replayed =
      replay_centralized(log.messages, s.market.demand(), report.price_cap);
  bool same = replayed.records.size() == trace.records.size();
  for (std::size_t i = 0; same && i < trace.records.size(); ++i) {
    const DichotomyStep& a = trace.records[i];
    const DichotomyStep& b = replayed.records[i];
    same = a.price == b.price && a.total_production == b.total_production &&
           a.derivative == b.derivative && a.bracket.lo == b.bracket.lo &&
           a.bracket.hi == b.bracket.hi;
  }
  const bool conserved = messages_conserved(log.messages, s.market.size(), Mechanism::centralized);
  j["centralized"]["protocol_replay_exact"] = same;
  j["centralized"]["messages_conserved"] = conserved;
  ok = ok && same && conserved;

  if (s.mechanism == Mechanism::decentralized) {
    SubgradientOptions dopts;
    dopts.policy = s.policy;
    dopts.averaging = s.averaging;
    if (s.max_iters) dopts.max_iterations = *s.max_iters;
    const auto [run, drep] = run_projected_subgradient(s.market, dopts);
    const double eps = s.market.epsilon();
    const double primal_excess = drep.primal_value - sol.f_star;
    const bool gap_valid = drep.status == RunStatus::budget_exhausted ||
                           (primal_excess <= eps && drep.residual <= eps / run.price_cap);
    const bool confined = run.max_price_norm <= 2.0 * run.radius;
    j["decentralized"] = {{"status", to_string(drep.status)},
                          {"iterations", drep.iterations},
                          {"primal_excess", primal_excess},
                          {"residual", drep.residual},
                          {"gap_conclusions_hold", gap_valid},
                          {"max_price_norm", run.max_price_norm},
                          {"confinement_radius", 2.0 * run.radius},
                          {"confined", confined}};
    ok = ok && gap_valid && confined;
    exhausted = exhausted || drep.status == RunStatus::budget_exhausted;
  }

  j["ok"] = ok;
  emit_report(f, j);
  if (!ok) return kExitViolation;
  return exhausted ? kExitBudget : kExitOk;
}

void add_common(CLI::App* cmd, Flags& f) {
  auto* p = cmd->add_option("--preset", f.preset, "built-in instance")
                ->check(CLI::IsMember(preset_names()));
  auto* i = cmd->add_option("--instance", f.instance, "instance file (YAML)")
                ->check(CLI::ExistingFile);
  p->excludes(i);
  cmd->add_option("--epsilon", f.epsilon, "tolerance override")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--mechanism", f.mechanism, "centralized or decentralized")
      ->check(CLI::IsMember({"centralized", "decentralized"}));
  cmd->add_option("--step-policy", f.step_policy, "fixed or adaptive")
      ->check(CLI::IsMember({"fixed", "adaptive"}));
  cmd->add_option("--averaging", f.averaging, "step_weighted or uniform")
      ->check(CLI::IsMember({"step_weighted", "uniform"}));
  cmd->add_option("--max-iters", f.max_iters, "iteration or round budget")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "output directory for report.json and traces");
  cmd->add_flag("--trace", f.trace, "write the trace CSV (needs --out)");
  cmd->add_option("--trace-stride", f.trace_stride, "keep every k-th decentralized row")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Market equilibrium pricing by centralized and decentralized tatonnement"};
  app.require_subcommand(1);
  Flags flags;
  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const Flags&);
  };
  const Entry entries[] = {
      {"centralized", "bisection on the uniform price", cmd_centralized},
      {"decentralized", "projected subgradient on per-firm prices", cmd_decentralized},
      {"oracle", "reference optimum and KKT residuals", cmd_oracle},
      {"simulate", "message-passing simulation of a mechanism", cmd_simulate},
      {"verify", "certificate suite; exit 2 on any violated invariant", cmd_verify},
  };
  std::vector<std::pair<CLI::App*, const Entry*>> commands;
  for (const Entry& e : entries) {
    CLI::App* cmd = app.add_subcommand(e.name, e.help);
    add_common(cmd, flags);
    commands.emplace_back(cmd, &e);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (const auto& [cmd, entry] : commands) {
      if (cmd->parsed()) return entry->run(flags);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InstanceParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const SlaterViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitViolation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
