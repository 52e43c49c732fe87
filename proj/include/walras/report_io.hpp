#pragma once

// JSON run reports and CSV traces. Reals are written with 17 significant
// digits so a trace can be replayed bit for bit.
//
// Centralized trace columns:
//   iteration,price,total_production,derivative,bracket_lo,bracket_hi
// Decentralized trace columns:
//   iteration,min_price,gradient_norm,step,dual_term,primal_term,
//   infeasibility_term,gap,residual

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "walras/decentral.hpp"
#include "walras/oracle.hpp"
#include "walras/protocol.hpp"
#include "walras/tatonnement.hpp"

namespace walras {

inline constexpr const char* kCentralizedTraceHeader =
    "iteration,price,total_production,derivative,bracket_lo,bracket_hi";
inline constexpr const char* kDecentralizedTraceHeader =
    "iteration,min_price,gradient_norm,step,dual_term,primal_term,infeasibility_term,gap,"
    "residual";

inline void write_centralized_trace(std::ostream& os, const CentralizedTrace& trace) {
  os << kCentralizedTraceHeader << '\n';
  for (const DichotomyStep& s : trace.records) {
    os << s.iteration << ',' << format_real(s.price) << ',' << format_real(s.total_production)
       << ',' << format_real(s.derivative) << ',' << format_real(s.bracket.lo) << ','
       << format_real(s.bracket.hi) << '\n';
  }
}

// Streams one decentralized row per observed step. Rows whose iteration is
// not a multiple of `stride` are skipped, except the final one passed to
// finish().
class DecentralizedTraceWriter {
 public:
  explicit DecentralizedTraceWriter(std::ostream& os, std::int64_t stride = 1)
      : os_(os), stride_(stride < 1 ? 1 : stride) {
    os_ << kDecentralizedTraceHeader << '\n';
  }

  void operator()(const SubgradientStep& s) {
    last_ = Row{s.iteration, min_price(s.next_prices), s.gradient_norm, s.step, *s.gap};
    have_last_ = true;
    if (s.iteration % stride_ == 0) {
      write(last_);
      written_ = s.iteration;
    }
  }

  void finish() {
    if (have_last_ && written_ != last_.iteration) write(last_);
  }

 private:
  struct Row {
    std::int64_t iteration = 0;
    double min_price = 0.0;
    double gradient_norm = 0.0;
    double step = 0.0;
    GapDiagnostics gap;
  };

  void write(const Row& r) {
    os_ << r.iteration << ',' << format_real(r.min_price) << ',' << format_real(r.gradient_norm)
        << ',' << format_real(r.step) << ',' << format_real(r.gap.dual_term) << ','
        << format_real(r.gap.primal_term) << ',' << format_real(r.gap.infeasibility_term) << ','
        << format_real(r.gap.total) << ',' << format_real(r.gap.residual) << '\n';
  }

  std::ostream& os_;
  std::int64_t stride_;
  Row last_;
  bool have_last_ = false;
  std::int64_t written_ = -1;
};

inline nlohmann::json to_json(const EquilibriumReport& r) {
  return {
      {"mechanism", "centralized"},
      {"price", r.price},
      {"price_cap", r.price_cap},
      {"iterations", r.iterations},
      {"theoretical_bound", r.theoretical_bound},
      {"converged", r.converged},
      {"primal_value", r.primal_value},
      {"primal_value_unprojected", r.primal_value_unprojected},
      {"dual_value", r.dual_value},
      {"duality_gap", r.duality_gap},
      {"constraint_residual", r.constraint_residual},
      {"projected_residual", r.projected_residual},
      {"primal_lipschitz", r.primal_lipschitz},
      {"productions", r.productions},
      {"productions_projected", r.productions_projected},
  };
}

inline nlohmann::json to_json(const GapDiagnostics& g) {
  return {
      {"dual_term", g.dual_term},
      {"primal_term", g.primal_term},
      {"infeasibility_term", g.infeasibility_term},
      {"total", g.total},
      {"residual", g.residual},
      {"residual_bound", g.residual_bound},
      {"fires", g.fires},
  };
}

inline nlohmann::json to_json(const DecentralizedReport& r, const SubgradientRun& run) {
  return {
      {"mechanism", "decentralized"},
      {"status", to_string(r.status)},
      {"step_policy", to_string(run.policy)},
      {"averaging", to_string(run.averaging)},
      {"iterations", r.iterations},
      {"theoretical_bound", r.theoretical_bound},
      {"converged_before_theoretical_bound", r.below_theoretical_bound},
      {"price_cap", run.price_cap},
      {"radius", run.radius},
      {"gradient_bound", run.gradient_bound},
      {"max_price_norm", run.max_price_norm},
      {"min_price", r.min_price},
      {"primal_value", r.primal_value},
      {"dual_value", r.dual_value},
      {"gap", to_json(r.gap)},
      {"residual", r.residual},
      {"prices", r.prices},
      {"productions", r.productions},
      {"purchases", r.purchases},
  };
}

inline nlohmann::json to_json(const OracleSolution& s) {
  return {
      {"p_star", s.p_star},
      {"f_star", s.f_star},
      {"x_star", s.x_star},
      {"kkt",
       {{"max_stationarity", s.kkt.max_stationarity},
        {"complementary_slackness", s.kkt.complementary_slackness},
        {"infeasibility", s.kkt.infeasibility}}},
  };
}

inline nlohmann::json to_json(const ProtocolOutcome& o) {
  return {
      {"mechanism", to_string(o.mechanism)},
      {"rounds", o.rounds},
      {"status", to_string(o.status)},
      {"price", o.price},
      {"avg_prices", o.avg_prices},
      {"gap", to_json(o.gap)},
  };
}

}  // namespace walras
