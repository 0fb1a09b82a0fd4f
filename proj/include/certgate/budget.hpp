#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "certgate/canonical.hpp"
#include "certgate/errors.hpp"

namespace certgate {

// Global error-probability accounting. A run owns one budget of size
// delta; every confirmation test draws its allocation from a spending
// schedule, and the ledger records each draw so the whole history can
// be audited or replayed. Once the schedule has nothing left to give,
// confirmation stops; screening never spends.

enum class ScheduleKind { uniform, harmonic, cths };

inline std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::uniform: return "uniform";
    case ScheduleKind::harmonic: return "harmonic";
    case ScheduleKind::cths: return "cths";
  }
  return "?";
}

inline ScheduleKind schedule_kind_from(const std::string& s) {
  if (s == "uniform") return ScheduleKind::uniform;
  if (s == "harmonic") return ScheduleKind::harmonic;
  if (s == "cths") return ScheduleKind::cths;
  throw InvalidArgument("unknown schedule kind '" + s + "'");
}

enum class BudgetEvent { round_advance, confirmation };

inline std::string to_string(BudgetEvent e) {
  return e == BudgetEvent::round_advance ? "round_advance" : "confirmation";
}

inline BudgetEvent budget_event_from(const std::string& s) {
  if (s == "round_advance") return BudgetEvent::round_advance;
  if (s == "confirmation") return BudgetEvent::confirmation;
  throw InvalidArgument("unknown budget event '" + s + "'");
}

// One ledger line: which event, at which round, under which confirmation
// counter, and how much error probability it consumed (zero for
// round_advance events).
struct LedgerEntry {
  BudgetEvent event = BudgetEvent::round_advance;
  std::size_t round = 0;
  std::size_t confirm = 0;
  double amount = 0.0;

  std::string label() const {
    std::string s = to_string(event);
    s += " t=" + std::to_string(round);
    s += " k=" + std::to_string(confirm);
    s += " amount=" + format_real(amount);
    return s;
  }
};

// H_B by direct summation; B is always small here.
inline double harmonic_number(std::size_t B) {
  if (B == 0) throw InvalidArgument("harmonic_number: B must be >= 1");
  double h = 0.0;
  for (std::size_t i = 1; i <= B; ++i) h += 1.0 / static_cast<double>(i);
  return h;
}

namespace detail {
inline void check_budget_args(double delta, std::size_t horizon,
                              const char* who) {
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw InvalidArgument(std::string(who) + ": delta must lie in (0, 1)");
  }
  if (horizon == 0) {
    throw InvalidArgument(std::string(who) + ": horizon must be >= 1");
  }
}
}  // namespace detail

// Equal split over a known horizon of T rounds.
inline double uniform_allocation(double delta, std::size_t T, std::size_t t) {
  detail::check_budget_args(delta, T, "uniform_allocation");
  if (t < 1 || t > T) {
    throw InvalidArgument("uniform_allocation: t outside 1..T");
  }
  return delta / static_cast<double>(T);
}

// Front-loaded split over rounds: delta / (t * H_B). Sums to delta over
// t = 1..B.
inline double harmonic_allocation(double delta, std::size_t B, std::size_t t) {
  detail::check_budget_args(delta, B, "harmonic_allocation");
  if (t < 1 || t > B) {
    throw InvalidArgument("harmonic_allocation: t outside 1..B");
  }
  return delta / (static_cast<double>(t) * harmonic_number(B));
}

// Confirmation-triggered harmonic split: the k-th confirmation event
// costs delta / (k * H_B) no matter which round it lands in, so quiet
// rounds do not burn budget.
inline double cths_allocation(double delta, std::size_t B, std::size_t k) {
  detail::check_budget_args(delta, B, "cths_allocation");
  if (k < 1 || k > B) {
    throw InvalidArgument("cths_allocation: k outside 1..B");
  }
  return delta / (static_cast<double>(k) * harmonic_number(B));
}

// Spending state. next_delta reads a state and returns the successor
// without touching its input, so historical states can be kept for
// audit and a refused draw leaves the caller's state whole.
struct BudgetState {
  ScheduleKind kind = ScheduleKind::uniform;
  double global_delta = 0.1;
  std::size_t horizon = 1;       // T for uniform, B otherwise
  std::size_t round_index = 0;   // t of the round in progress, 0 before start
  std::size_t confirm_index = 0; // confirmation events taken so far
  bool round_consumed = false;   // round-indexed schedules: test taken this t
  double spent = 0.0;
  std::vector<LedgerEntry> ledger;

  static BudgetState make(ScheduleKind kind, double delta,
                          std::size_t horizon) {
    detail::check_budget_args(delta, horizon, "BudgetState");
    BudgetState s;
    s.kind = kind;
    s.global_delta = delta;
    s.horizon = horizon;
    return s;
  }

  // Whether a confirmation drawn now would succeed for a test running
  // in current_round.
  bool can_confirm(std::size_t current_round) const {
    if (kind == ScheduleKind::cths) return confirm_index < horizon;
    return round_index >= 1 && round_index <= horizon &&
           round_index == current_round && !round_consumed;
  }
};

// Advances the state by one event and returns the error probability the
// event makes available: a round_advance returns the new round's
// allocation (informational for round-indexed schedules, zero for
// cths), a confirmation returns and consumes the allocation the test is
// entitled to. Throws BudgetExhausted when the schedule has nothing
// left for the requested event; the input state is never modified, so
// a refused draw cannot corrupt the caller's ledger.
inline std::pair<double, BudgetState> next_delta(const BudgetState& prev,
                                                 BudgetEvent event) {
  BudgetState s = prev;
  if (event == BudgetEvent::round_advance) {
    if (s.kind != ScheduleKind::cths && s.round_index >= s.horizon) {
      throw BudgetExhausted("no rounds left in the spending schedule");
    }
    s.round_index += 1;
    s.round_consumed = false;
    double alloc = 0.0;
    if (s.kind == ScheduleKind::uniform) {
      alloc = uniform_allocation(s.global_delta, s.horizon, s.round_index);
    } else if (s.kind == ScheduleKind::harmonic) {
      alloc = harmonic_allocation(s.global_delta, s.horizon, s.round_index);
    }
    s.ledger.push_back(
        {BudgetEvent::round_advance, s.round_index, s.confirm_index, 0.0});
    return {alloc, std::move(s)};
  }

  // Confirmation event.
  double amount = 0.0;
  if (s.kind == ScheduleKind::cths) {
    if (s.confirm_index >= s.horizon) {
      throw BudgetExhausted("all confirmation allocations consumed");
    }
    s.confirm_index += 1;
    amount = cths_allocation(s.global_delta, s.horizon, s.confirm_index);
  } else {
    if (!s.can_confirm(s.round_index) || s.round_index == 0) {
      throw BudgetExhausted("no allocation available for this round");
    }
    amount = s.kind == ScheduleKind::uniform
                 ? uniform_allocation(s.global_delta, s.horizon, s.round_index)
                 : harmonic_allocation(s.global_delta, s.horizon,
                                       s.round_index);
    s.confirm_index += 1;
    s.round_consumed = true;
  }
  s.spent += amount;
  s.ledger.push_back(
      {BudgetEvent::confirmation, s.round_index, s.confirm_index, amount});
  return {amount, std::move(s)};
}

// Rebuilds a state by replaying a ledger against a fresh budget. The
// result must match the live state field for field; this is the
// transcript auditor's tool.
inline BudgetState replay_ledger(ScheduleKind kind, double delta,
                                 std::size_t horizon,
                                 const std::vector<LedgerEntry>& ledger) {
  BudgetState s = BudgetState::make(kind, delta, horizon);
  for (const LedgerEntry& e : ledger) {
    auto [amount, next] = next_delta(s, e.event);
    s = std::move(next);
    const LedgerEntry& got = s.ledger.back();
    if (got.event != e.event || got.round != e.round ||
        got.confirm != e.confirm || got.amount != e.amount) {
      throw ReplayError("ledger replay diverged at " + e.label());
    }
  }
  return s;
}

}  // namespace certgate
