#pragma once

// Both pricing mechanisms written as synchronous message passing between a
// Center node and n firm nodes.
//
// Firms hold only their own cost function. The Center types below have no
// member that can hold a cost model: all the Center ever sees are prices,
// quantities and the per-firm certificate terms the firms choose to report.
//
// Centralized round t (t = 1, 2, ..):
//   Center -> all  PriceAnnouncement(p)
//   firm k -> Center  ProductionReport(k, x_k(p))     for k = 0..n-1
//
// Decentralized round t (t = 0, 1, ..):
//   firm k -> Center  FirmQuote(k, p_k, x_k(p_k), averaged terms)
//   Center -> firm k  AllocationNotice(k, y_k, h)      unless the Center stops
// The round after the last price update is quote-only: the Center reads the
// certificate terms, evaluates the gap and stops.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "walras/decentral.hpp"
#include "walras/market.hpp"
#include "walras/tatonnement.hpp"

namespace walras {

using NodeId = std::int32_t;
inline constexpr NodeId kCenter = -1;
inline constexpr NodeId kAllFirms = -2;

struct PriceAnnouncement {
  double price = 0.0;
};

struct ProductionReport {
  std::int32_t firm = 0;
  double quantity = 0.0;
};

struct FirmQuote {
  std::int32_t firm = 0;
  double price = 0.0;
  double quantity = 0.0;
  // Certificate terms over the rounds so far; absent in round 0.
  bool has_average = false;
  double avg_price = 0.0;
  double avg_quantity = 0.0;
  double avg_profit = 0.0;  // p_bar x(p_bar) - f(x(p_bar))
  double avg_cost = 0.0;    // f(x_bar)
};

struct AllocationNotice {
  std::int32_t firm = 0;
  double purchase = 0.0;
  double step = 0.0;
};

using Payload = std::variant<PriceAnnouncement, ProductionReport, FirmQuote, AllocationNotice>;

struct ProtocolMessage {
  std::int64_t round = 0;
  NodeId sender = kCenter;
  NodeId receiver = kCenter;
  Payload payload;
};

enum class Mechanism { centralized, decentralized };

inline const char* to_string(Mechanism m) {
  return m == Mechanism::centralized ? "centralized" : "decentralized";
}

struct ProtocolOutcome {
  Mechanism mechanism = Mechanism::centralized;
  std::int64_t rounds = 0;
  RunStatus status = RunStatus::budget_exhausted;
  double price = 0.0;               // centralized: last announced price
  std::vector<double> avg_prices;   // decentralized: p_bar at stop
  GapDiagnostics gap;               // decentralized: certificate at stop
};

struct RoundLog {
  std::vector<ProtocolMessage> messages;
  ProtocolOutcome outcome;
};

template <typename Sink>
concept MessageSink = std::invocable<Sink&, const ProtocolMessage&>;

// ---------------------------------------------------------------------------
// Centralized nodes

template <CostModel F>
class ProducerNode {
 public:
  ProducerNode(std::int32_t id, F cost) : id_(id), cost_(std::move(cost)) {}

  ProductionReport respond(const PriceAnnouncement& a) const {
    return {id_, best_response(cost_, a.price)};
  }

  std::int32_t id() const { return id_; }

 private:
  std::int32_t id_;
  F cost_;
};

class AuctioneerNode {
 public:
  AuctioneerNode(std::size_t firms, double demand, double tolerance, double price_cap,
                 std::int64_t max_rounds)
      : firms_(firms),
        demand_(demand),
        tolerance_(tolerance),
        bracket_{0.0, price_cap},
        max_rounds_(max_rounds) {}

  std::optional<PriceAnnouncement> announce() {
    if (done_ || round_ >= max_rounds_) return std::nullopt;
    ++round_;
    price_ = bracket_.midpoint();
    supply_ = 0.0;
    reports_ = 0;
    return PriceAnnouncement{price_};
  }

  void receive(const ProductionReport& r) {
    if (r.firm != static_cast<std::int32_t>(reports_)) {
      throw std::logic_error("production reports must arrive in firm order");
    }
    supply_ += r.quantity;
    ++reports_;
  }

  // Returns true when the Center stops.
  bool close_round() {
    if (reports_ != firms_) throw std::logic_error("round closed before all reports arrived");
    const double excess = supply_ - demand_;
    if (excess > 0.0) {
      bracket_.hi = price_;
    } else if (excess < 0.0) {
      bracket_.lo = price_;
    }
    if (std::abs(excess) <= tolerance_) {
      done_ = true;
      converged_ = true;
    } else if (round_ >= max_rounds_) {
      done_ = true;
    }
    return done_;
  }

  std::int64_t round() const { return round_; }
  double price() const { return price_; }
  bool converged() const { return converged_; }
  const PriceBracket& bracket() const { return bracket_; }

 private:
  std::size_t firms_;
  double demand_;
  double tolerance_;
  PriceBracket bracket_;
  std::int64_t max_rounds_;
  std::int64_t round_ = 0;
  double price_ = 0.0;
  double supply_ = 0.0;
  std::size_t reports_ = 0;
  bool done_ = false;
  bool converged_ = false;
};

struct CentralizedProtocolOptions {
  std::int64_t max_rounds = 200;
};

template <CostModel F, MessageSink Sink>
ProtocolOutcome simulate_centralized(const BasicMarket<F>& market, Sink&& sink,
                                     const CentralizedProtocolOptions& options = {}) {
  const double p_max = slater_bound(market);
  if (!(p_max > 0.0) || !std::isfinite(p_max)) {
    throw InvalidInstance("degenerate price cap: costs are flat between 0 and 2C/n");
  }
  if (dual_point(market, p_max).dual_derivative < 0.0) {
    throw SlaterViolation("Slater bound violated: supply at the price cap is below C");
  }
  std::vector<ProducerNode<F>> firms;
  firms.reserve(market.size());
  for (std::size_t k = 0; k < market.size(); ++k) {
    firms.emplace_back(static_cast<std::int32_t>(k), market.firm(k));
  }
  AuctioneerNode center(market.size(), market.demand(), market.epsilon(), p_max,
                        options.max_rounds);

  while (auto announcement = center.announce()) {
    const std::int64_t round = center.round();
    sink(ProtocolMessage{round, kCenter, kAllFirms, *announcement});
    for (const ProducerNode<F>& firm : firms) {
      const ProductionReport report = firm.respond(*announcement);
      sink(ProtocolMessage{round, firm.id(), kCenter, report});
      center.receive(report);
    }
    if (center.close_round()) break;
  }

  ProtocolOutcome out;
  out.mechanism = Mechanism::centralized;
  out.rounds = center.round();
  out.price = center.price();
  out.status = center.converged() ? RunStatus::converged : RunStatus::budget_exhausted;
  return out;
}

template <CostModel F>
RoundLog simulate_centralized(const BasicMarket<F>& market,
                              const CentralizedProtocolOptions& options = {}) {
  RoundLog log;
  log.outcome = simulate_centralized(
      market, [&](const ProtocolMessage& m) { log.messages.push_back(m); }, options);
  return log;
}

// Rebuilds the dichotomy trace from a centralized log alone.
inline CentralizedTrace replay_centralized(std::span<const ProtocolMessage> messages,
                                           double demand, double price_cap) {
  CentralizedTrace trace;
  PriceBracket bracket{0.0, price_cap};
  std::optional<DichotomyStep> open;
  auto flush = [&]() {
    if (!open) return;
    open->derivative = open->total_production - demand;
    if (open->derivative > 0.0) {
      bracket.hi = open->price;
    } else if (open->derivative < 0.0) {
      bracket.lo = open->price;
    }
    open->bracket = bracket;
    trace.records.push_back(*open);
    open.reset();
  };
  for (const ProtocolMessage& m : messages) {
    if (const auto* a = std::get_if<PriceAnnouncement>(&m.payload)) {
      flush();
      open = DichotomyStep{static_cast<int>(m.round), a->price, 0.0, 0.0, {}};
    } else if (const auto* r = std::get_if<ProductionReport>(&m.payload)) {
      if (!open) throw std::invalid_argument("production report before any announcement");
      open->total_production += r->quantity;
    }
  }
  flush();
  return trace;
}

// ---------------------------------------------------------------------------
// Decentralized nodes

template <CostModel F>
class PricingFirmNode {
 public:
  PricingFirmNode(std::int32_t id, F cost, double initial_price, Averaging averaging)
      : id_(id), cost_(std::move(cost)), price_(initial_price), averaging_(averaging) {}

  FirmQuote quote() {
    quantity_ = best_response(cost_, price_);
    FirmQuote q;
    q.firm = id_;
    q.price = price_;
    q.quantity = quantity_;
    if (weight_ > 0.0) {
      q.has_average = true;
      q.avg_price = sum_price_ / weight_;
      q.avg_quantity = sum_quantity_ / weight_;
      q.avg_profit = firm_profit(cost_, q.avg_price, best_response(cost_, q.avg_price));
      q.avg_cost = cost_.value(q.avg_quantity);
    }
    return q;
  }

  void apply(const AllocationNotice& notice) {
    if (notice.firm != id_) throw std::logic_error("notice delivered to the wrong firm");
    const bool weighted = averaging_ == Averaging::step_weighted;
    const double g = quantity_ - notice.purchase;
    const double w = weighted ? notice.step : 1.0;
    sum_quantity_ += w * quantity_;
    if (weighted) sum_price_ += w * price_;
    weight_ += w;
    price_ = std::max(0.0, price_ - notice.step * g);
    if (!weighted) sum_price_ += price_;
  }

  std::int32_t id() const { return id_; }
  double price() const { return price_; }

 private:
  std::int32_t id_;
  F cost_;
  double price_;
  Averaging averaging_;
  double quantity_ = 0.0;
  double sum_price_ = 0.0;
  double sum_quantity_ = 0.0;
  double weight_ = 0.0;
};

class ClearingHouseNode {
 public:
  struct Config {
    std::size_t firms = 0;
    double demand = 0.0;
    double epsilon = 0.0;
    double radius = 0.0;
    double price_cap = 0.0;
    StepPolicy policy = StepPolicy::adaptive;
    Averaging averaging = Averaging::step_weighted;
    double fixed_step = 0.0;
    std::int64_t budget = 0;  // maximum number of price updates
  };

  explicit ClearingHouseNode(Config c)
      : cfg_(c), quotes_(c.firms), sum_purchases_(c.firms, 0.0) {}

  void begin_round() { received_ = 0; }

  void receive(const FirmQuote& q) {
    if (q.firm != static_cast<std::int32_t>(received_)) {
      throw std::logic_error("quotes must arrive in firm order");
    }
    quotes_[received_++] = q;
  }

  // Either the notices for this round or nullopt when the Center stops.
  std::optional<std::vector<AllocationNotice>> decide() {
    if (received_ != cfg_.firms) throw std::logic_error("decision before all quotes arrived");
    const std::size_t n = cfg_.firms;
    std::vector<double> prices(n), quantities(n);
    for (std::size_t k = 0; k < n; ++k) {
      prices[k] = quotes_[k].price;
      quantities[k] = quotes_[k].quantity;
    }

    if (weight_ > 0.0) {
      std::vector<double> avg_p(n), avg_x(n), avg_y(n);
      double profit = 0.0;
      double cost = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        avg_p[k] = quotes_[k].avg_price;
        avg_x[k] = quotes_[k].avg_quantity;
        avg_y[k] = sum_purchases_[k] / weight_;
        profit += quotes_[k].avg_profit;
        cost += quotes_[k].avg_cost;
      }
      gap_ = assemble_gap(profit - cfg_.demand * min_price(avg_p), cost, cfg_.radius, avg_x,
                          avg_y, cfg_.demand, cfg_.price_cap, cfg_.epsilon);
      avg_prices_ = avg_p;
      if (gap_.fires) return stop(RunStatus::converged);
    }
    if (updates_ >= cfg_.budget) return stop(RunStatus::budget_exhausted);

    const DemandAllocation alloc = allocate_demand(prices, cfg_.demand);
    double gg = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double g = quantities[k] - alloc.purchases[k];
      gg += g * g;
    }
    if (gg == 0.0) {
      avg_prices_ = prices;
      return stop(RunStatus::equilibrium);
    }
    const double h = cfg_.policy == StepPolicy::fixed ? cfg_.fixed_step : cfg_.epsilon / gg;
    const double w = cfg_.averaging == Averaging::step_weighted ? h : 1.0;
    std::vector<AllocationNotice> notices(n);
    for (std::size_t k = 0; k < n; ++k) {
      sum_purchases_[k] += w * alloc.purchases[k];
      notices[k] = AllocationNotice{static_cast<std::int32_t>(k), alloc.purchases[k], h};
    }
    weight_ += w;
    ++updates_;
    return notices;
  }

  RunStatus status() const { return status_; }
  std::int64_t updates() const { return updates_; }
  const GapDiagnostics& gap() const { return gap_; }
  const std::vector<double>& avg_prices() const { return avg_prices_; }

 private:
  std::nullopt_t stop(RunStatus s) {
    status_ = s;
    return std::nullopt;
  }

  Config cfg_;
  std::vector<FirmQuote> quotes_;
  std::vector<double> sum_purchases_;
  std::vector<double> avg_prices_;
  double weight_ = 0.0;
  std::size_t received_ = 0;
  std::int64_t updates_ = 0;
  GapDiagnostics gap_;
  RunStatus status_ = RunStatus::budget_exhausted;
};

struct DecentralizedProtocolOptions {
  StepPolicy policy = StepPolicy::adaptive;
  Averaging averaging = Averaging::step_weighted;
  std::int64_t budget = 200'000'000;
  std::optional<double> fixed_horizon;
  std::optional<std::vector<double>> initial_prices;
};

template <CostModel F, MessageSink Sink>
ProtocolOutcome simulate_decentralized(const BasicMarket<F>& market, Sink&& sink,
                                       const DecentralizedProtocolOptions& options = {}) {
  const std::size_t n = market.size();
  ClearingHouseNode::Config cfg;
  cfg.firms = n;
  cfg.demand = market.demand();
  cfg.epsilon = market.epsilon();
  cfg.price_cap = slater_bound(market);
  if (!(cfg.price_cap > 0.0) || !std::isfinite(cfg.price_cap)) {
    throw InvalidInstance("degenerate price cap: costs are flat between 0 and 2C/n");
  }
  cfg.radius = cfg.price_cap * std::sqrt(static_cast<double>(n));
  const double m = gradient_bound(market, cfg.radius);
  cfg.fixed_step = step_fixed(
      cfg.radius, m,
      options.fixed_horizon.value_or(
          decentralized_iteration_bound(n, m, cfg.price_cap, cfg.epsilon)));
  cfg.policy = options.policy;
  cfg.averaging = options.averaging;
  cfg.budget = options.budget;

  ProtocolOutcome out;
  out.mechanism = Mechanism::decentralized;
  if (options.budget <= 0) {
    out.status = RunStatus::budget_exhausted;
    return out;
  }

  const std::vector<double> p0 = options.initial_prices.value_or(std::vector<double>(n, 0.0));
  if (p0.size() != n) throw std::invalid_argument("initial price vector has wrong dimension");
  std::vector<PricingFirmNode<F>> firms;
  firms.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    firms.emplace_back(static_cast<std::int32_t>(k), market.firm(k), p0[k], options.averaging);
  }
  ClearingHouseNode center(cfg);

  for (std::int64_t round = 0;; ++round) {
    center.begin_round();
    for (PricingFirmNode<F>& firm : firms) {
      const FirmQuote q = firm.quote();
      sink(ProtocolMessage{round, firm.id(), kCenter, q});
      center.receive(q);
    }
    auto notices = center.decide();
    out.rounds = round + 1;
    if (!notices) break;
    for (const AllocationNotice& notice : *notices) {
      sink(ProtocolMessage{round, kCenter, notice.firm, notice});
      firms[static_cast<std::size_t>(notice.firm)].apply(notice);
    }
  }
  out.status = center.status();
  out.gap = center.gap();
  out.avg_prices = center.avg_prices();
  return out;
}

template <CostModel F>
RoundLog simulate_decentralized(const BasicMarket<F>& market,
                                const DecentralizedProtocolOptions& options = {}) {
  RoundLog log;
  log.outcome = simulate_decentralized(
      market, [&](const ProtocolMessage& m) { log.messages.push_back(m); }, options);
  return log;
}

// Streams a decentralized log and yields p^t once all n quotes of round t
// have been seen.
class DecentralizedReplayer {
 public:
  explicit DecentralizedReplayer(std::size_t firms) : prices_(firms), seen_(0) {}

  std::optional<std::vector<double>> push(const ProtocolMessage& m) {
    const auto* q = std::get_if<FirmQuote>(&m.payload);
    if (q == nullptr) return std::nullopt;
    if (seen_ == 0) round_ = m.round;
    if (m.round != round_) throw std::invalid_argument("quotes of a round are interleaved");
    prices_.at(static_cast<std::size_t>(q->firm)) = q->price;
    if (++seen_ < prices_.size()) return std::nullopt;
    seen_ = 0;
    return prices_;
  }

 private:
  std::vector<double> prices_;
  std::size_t seen_;
  std::int64_t round_ = 0;
};

inline std::vector<std::vector<double>> replay_decentralized(
    std::span<const ProtocolMessage> messages, std::size_t firms) {
  DecentralizedReplayer replayer(firms);
  std::vector<std::vector<double>> out;
  for (const ProtocolMessage& m : messages) {
    if (auto p = replayer.push(m)) out.push_back(std::move(*p));
  }
  return out;
}

// Message conservation: 1 announcement + n reports per centralized round;
// n quotes + n notices per decentralized round, n quotes in the last one.
// Checked on the fly so arbitrarily long logs need not be stored.
class ConservationMonitor {
 public:
  ConservationMonitor(std::size_t firms, Mechanism mechanism)
      : firms_(firms), mechanism_(mechanism) {}

  void push(const ProtocolMessage& m) {
    if (!ok_) return;
    if (m.round != round_) {
      if (m.round <= round_) {
        ok_ = false;
        return;
      }
      if (round_ >= 0) close(false);
      round_ = m.round;
      first_ = second_ = 0;
    }
    const bool centralized = mechanism_ == Mechanism::centralized;
    const bool is_first = centralized ? std::holds_alternative<PriceAnnouncement>(m.payload)
                                      : std::holds_alternative<FirmQuote>(m.payload);
    const bool is_second = centralized ? std::holds_alternative<ProductionReport>(m.payload)
                                       : std::holds_alternative<AllocationNotice>(m.payload);
    if (is_first && second_ == 0) {
      ++first_;
    } else if (is_second) {
      ++second_;
    } else {
      ok_ = false;
    }
  }

  // Call once after the last message.
  bool finish() {
    if (ok_ && round_ >= 0) close(true);
    return ok_;
  }

 private:
  void close(bool last) {
    if (mechanism_ == Mechanism::centralized) {
      ok_ = ok_ && first_ == 1 && second_ == firms_;
    } else {
      ok_ = ok_ && first_ == firms_ && (second_ == firms_ || (last && second_ == 0));
    }
  }

  std::size_t firms_;
  Mechanism mechanism_;
  std::int64_t round_ = -1;
  std::size_t first_ = 0;
  std::size_t second_ = 0;
  bool ok_ = true;
};

inline bool messages_conserved(std::span<const ProtocolMessage> messages, std::size_t firms,
                               Mechanism mechanism) {
  ConservationMonitor monitor(firms, mechanism);
  for (const ProtocolMessage& m : messages) monitor.push(m);
  return monitor.finish();
}

// ---------------------------------------------------------------------------
// Line-delimited export: round,sender,receiver,kind,values...

inline std::string node_name(NodeId id) {
  if (id == kCenter) return "center";
  if (id == kAllFirms) return "all";
  return "firm" + std::to_string(id);
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_message(std::ostream& os, const ProtocolMessage& m) {
  os << m.round << ',' << node_name(m.sender) << ',' << node_name(m.receiver) << ',';
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, PriceAnnouncement>) {
          os << "price_announcement," << format_real(p.price);
        } else if constexpr (std::is_same_v<T, ProductionReport>) {
          os << "production_report," << p.firm << ',' << format_real(p.quantity);
        } else if constexpr (std::is_same_v<T, FirmQuote>) {
          os << "firm_quote," << p.firm << ',' << format_real(p.price) << ','
             << format_real(p.quantity);
          if (p.has_average) {
            os << ',' << format_real(p.avg_price) << ',' << format_real(p.avg_quantity) << ','
               << format_real(p.avg_profit) << ',' << format_real(p.avg_cost);
          }
        } else {
          os << "allocation_notice," << p.firm << ',' << format_real(p.purchase) << ','
             << format_real(p.step);
        }
      },
      m.payload);
  os << '\n';
}

}  // namespace walras
