#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "certgate/budget.hpp"
#include "certgate/certify.hpp"
#include "certgate/config.hpp"
#include "certgate/errors.hpp"
#include "certgate/harness.hpp"
#include "certgate/propose.hpp"
#include "certgate/rng.hpp"

namespace certgate {

// The gate: a two-stage accept/reject protocol around self-modification.
// Screening is a cheap unbudgeted filter; only budgeted confirmation can
// commit an edit, and commits are irreversible. Every accepted edit
// carries a certificate whose error probability was paid for out of a
// global budget, so the chance any accepted edit is harmful stays below
// the configured delta for the whole run.

struct GateConfig {
  CertifyMode mode = CertifyMode::hoeffding;
  ScheduleKind schedule = ScheduleKind::uniform;
  double global_delta = 0.05;
  // Budget horizon: rounds for uniform/harmonic, confirmations for cths.
  std::size_t horizon = 1;
  std::size_t total_rounds = 1;
  std::size_t screen_seeds = 1;
  std::size_t confirm_seeds = 2;
  // Escalate to confirmation iff the screening mean reaches this.
  double screen_threshold = 0.0;
  // Propose every K-th round; 0 disables the periodic trigger.
  std::size_t proposal_period = 1;
  // Also propose when the incumbent's screening score improved by at
  // most stagnation_epsilon over the last stagnation_window rounds;
  // window 0 disables the stagnation trigger (and skips the incumbent
  // probes that feed it).
  std::size_t stagnation_window = 0;
  double stagnation_epsilon = 0.0;
  // Optional fresh wealth after each commit (e-value mode only). The
  // default keeps one wealth process for the whole run.
  bool wealth_reset_on_commit = false;
  // Certification range; must equal the harness's delta bounds.
  double r_lo = -1.0;
  double r_hi = 1.0;
  std::size_t max_candidates = 1;

  void validate() const {
    if (!(global_delta > 0.0 && global_delta < 1.0)) {
      throw InvalidArgument("gate: global_delta must be in (0, 1)");
    }
    if (horizon == 0) throw InvalidArgument("gate: horizon must be >= 1");
    if (total_rounds == 0) {
      throw InvalidArgument("gate: total_rounds must be >= 1");
    }
    if (schedule != ScheduleKind::cths && total_rounds > horizon) {
      throw InvalidArgument(
          "gate: round-indexed schedules cannot run past their horizon");
    }
    if (screen_seeds == 0) {
      throw InvalidArgument("gate: screen_seeds must be >= 1");
    }
    if (confirm_seeds < 2) {
      throw InvalidArgument("gate: confirm_seeds must be >= 2");
    }
    if (!(r_lo < r_hi) || r_lo > 0.0 || r_hi < 0.0) {
      throw InvalidArgument("gate: delta range must straddle zero");
    }
    if (stagnation_epsilon < 0.0) {
      throw InvalidArgument("gate: stagnation_epsilon must be >= 0");
    }
    if (proposal_period == 0 && stagnation_window == 0) {
      throw InvalidArgument("gate: no proposal trigger enabled");
    }
    if (max_candidates == 0) {
      throw InvalidArgument("gate: max_candidates must be >= 1");
    }
  }
};

// Screening seeds are a fixed pool starting at 0; confirmation seeds
// live in a disjoint pool so the confirmation evidence is independent
// of the data that selected the candidate.
inline constexpr std::int64_t kConfirmSeedBase = std::int64_t{1} << 20;

inline std::vector<std::int64_t> screen_seed_pool(std::size_t n) {
  std::vector<std::int64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = static_cast<std::int64_t>(i);
  return seeds;
}

inline std::vector<std::int64_t> confirm_seed_pool(std::size_t n) {
  std::vector<std::int64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) {
    seeds[i] = kConfirmSeedBase + static_cast<std::int64_t>(i);
  }
  return seeds;
}

enum class EntryKind { baseline, screen, confirm, abort };

inline std::string to_string(EntryKind k) {
  switch (k) {
    case EntryKind::baseline: return "baseline";
    case EntryKind::screen: return "screen";
    case EntryKind::confirm: return "confirm";
    case EntryKind::abort: return "abort";
  }
  throw InvalidArgument("unknown entry kind");
}

inline EntryKind entry_kind_from(const std::string& s) {
  if (s == "baseline") return EntryKind::baseline;
  if (s == "screen") return EntryKind::screen;
  if (s == "confirm") return EntryKind::confirm;
  if (s == "abort") return EntryKind::abort;
  throw InvalidArgument("unknown entry kind '" + s + "'");
}

// One row of the immutable modification registry. Confirm entries carry
// the certificate that justified (or refused) the edit; accept always
// means the edit was committed.
struct RegistryEntry {
  EntryKind kind = EntryKind::screen;
  std::size_t round = 0;
  Configuration proposal;
  std::optional<PairedDeltas> deltas;
  double mean = 0.0;
  std::optional<Certificate> certificate;
  std::optional<LedgerEntry> budget_event;
  // baseline | escalate | no_escalate | accept | reject | abort
  std::string decision;
  bool budget_exhausted = false;
  std::string note;
};

struct Registry {
  std::vector<RegistryEntry> entries;

  std::size_t commits() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.decision == "accept" ? 1 : 0;
    return n;
  }
};

// True when the score series improved by at most eps over the last
// `window` steps. Needs window+1 observations; never stagnant before.
inline bool is_stagnant(const std::vector<double>& scores, std::size_t window,
                        double eps) {
  if (window == 0 || scores.size() < window + 1) return false;
  const double now = scores.back();
  const double then = scores[scores.size() - 1 - window];
  return now - then <= eps;
}

// Commit is a pure handover with a guard: only an accepting certificate
// may move the incumbent. The caller never rolls a commit back.
inline Configuration commit(const Configuration& proposal,
                            const Certificate& cert) {
  if (cert.decision != Decision::accept) {
    throw InvalidArgument("commit requires an accepting certificate");
  }
  return proposal;
}

struct GateResult {
  Configuration incumbent;
  Registry registry;
  BudgetState budget;
  WealthState wealth;
  ProposalHistory history;
  // Incumbent id at the end of each round, trajectory[t-1] for round t.
  std::vector<std::string> trajectory;
};

using GateObserver = std::function<void(const RegistryEntry&)>;

namespace detail {

inline double incumbent_screen_score(const Harness& harness,
                                     const Configuration& incumbent,
                                     std::size_t screen_seeds) {
  double sum = 0.0;
  const auto seeds = screen_seed_pool(screen_seeds);
  for (const auto seed : seeds) {
    sum += harness.evaluate(incumbent, seed, Stage::screen);
  }
  return sum / static_cast<double>(seeds.size());
}

}  // namespace detail

// Runs the full protocol for cfg.total_rounds rounds. Each proposing
// round screens ranked candidates in order; the first escalation that
// survives confirmation is committed and ends the round. Harness
// failures abort the round without touching the incumbent or, in fixed
// confidence modes, the budget: confirmation evidence is evaluated
// before any allocation is drawn.
inline GateResult run_outer_loop(const Harness& harness,
                                 const Proposer& proposer,
                                 const GateConfig& cfg,
                                 const Configuration& baseline,
                                 std::uint64_t run_seed,
                                 const GateObserver& observer = {}) {
  cfg.validate();
  if (harness.delta_lo() != cfg.r_lo || harness.delta_hi() != cfg.r_hi) {
    throw InvalidArgument(
        "gate: certification range disagrees with the harness delta bounds");
  }
  const bool evalue = cfg.mode == CertifyMode::evalue;

  GateResult result;
  result.incumbent = baseline;
  result.budget = BudgetState::make(cfg.schedule, cfg.global_delta,
                                    cfg.horizon);
  result.wealth = WealthState{};

  auto emit = [&](RegistryEntry entry) {
    result.registry.entries.push_back(std::move(entry));
    if (observer) observer(result.registry.entries.back());
  };

  {
    RegistryEntry e;
    e.kind = EntryKind::baseline;
    e.round = 0;
    e.proposal = baseline;
    e.decision = "baseline";
    emit(std::move(e));
  }

  const auto screen_seeds = screen_seed_pool(cfg.screen_seeds);
  const auto confirm_seeds = confirm_seed_pool(cfg.confirm_seeds);
  std::vector<double> incumbent_scores;

  for (std::size_t t = 1; t <= cfg.total_rounds; ++t) {
    if (!evalue) {
      result.budget = next_delta(result.budget, BudgetEvent::round_advance)
                          .second;
    }

    bool triggered =
        cfg.proposal_period > 0 && t % cfg.proposal_period == 0;
    if (cfg.stagnation_window > 0) {
      incumbent_scores.push_back(detail::incumbent_screen_score(
          harness, result.incumbent, cfg.screen_seeds));
      triggered = triggered || is_stagnant(incumbent_scores,
                                           cfg.stagnation_window,
                                           cfg.stagnation_epsilon);
    }
    if (!triggered) {
      result.trajectory.push_back(result.incumbent.id);
      continue;
    }

    auto candidates = rank_candidates(
        proposer.candidates(result.incumbent, result.history,
                            mix_key(run_seed, t)),
        result.history);
    if (candidates.size() > cfg.max_candidates) {
      candidates.resize(cfg.max_candidates);
    }

    for (const auto& candidate : candidates) {
      result.history.record_proposed(candidate.id);
      if (candidate.id == result.incumbent.id) {
        RegistryEntry e;
        e.kind = EntryKind::screen;
        e.round = t;
        e.proposal = candidate;
        e.decision = "no_escalate";
        e.note = "candidate equals incumbent";
        emit(std::move(e));
        continue;
      }

      PairedDeltas screen_deltas;
      try {
        screen_deltas = paired_evaluate(harness, result.incumbent, candidate,
                                        screen_seeds, Stage::screen);
      } catch (const HarnessError& ex) {
        RegistryEntry e;
        e.kind = EntryKind::abort;
        e.round = t;
        e.proposal = candidate;
        e.decision = "abort";
        e.note = ex.what();
        emit(std::move(e));
        break;  // something is wrong with this round; keep the incumbent
      }
      const double screen_mean = screen_deltas.mean();
      result.history.record_screen_mean(candidate.id, screen_mean);

      if (screen_mean < cfg.screen_threshold) {
        RegistryEntry e;
        e.kind = EntryKind::screen;
        e.round = t;
        e.proposal = candidate;
        e.deltas = std::move(screen_deltas);
        e.mean = screen_mean;
        e.decision = "no_escalate";
        emit(std::move(e));
        continue;
      }

      if (!evalue && !result.budget.can_confirm(t)) {
        RegistryEntry e;
        e.kind = EntryKind::screen;
        e.round = t;
        e.proposal = candidate;
        e.deltas = std::move(screen_deltas);
        e.mean = screen_mean;
        e.decision = "escalate";
        e.budget_exhausted = true;
        e.note = "confirmation budget exhausted";
        emit(std::move(e));
        break;  // nothing left to confirm with this round
      }

      PairedDeltas confirm_deltas;
      try {
        confirm_deltas = paired_evaluate(harness, result.incumbent, candidate,
                                         confirm_seeds, Stage::confirm);
      } catch (const HarnessError& ex) {
        RegistryEntry e;
        e.kind = EntryKind::abort;
        e.round = t;
        e.proposal = candidate;
        e.decision = "abort";
        e.note = ex.what();
        emit(std::move(e));
        break;
      }

      double delta_t = cfg.global_delta;
      std::optional<LedgerEntry> budget_event;
      if (!evalue) {
        auto [allocated, next_state] =
            next_delta(result.budget, BudgetEvent::confirmation);
        delta_t = allocated;
        result.budget = std::move(next_state);
        budget_event = result.budget.ledger.back();
      }

      const Certificate cert =
          certify(confirm_deltas, delta_t, result.wealth, cfg.mode,
                  cfg.global_delta);

      RegistryEntry e;
      e.kind = EntryKind::confirm;
      e.round = t;
      e.proposal = candidate;
      e.deltas = std::move(confirm_deltas);
      e.mean = e.deltas->mean();
      e.certificate = cert;
      e.budget_event = std::move(budget_event);
      const bool accepted = cert.decision == Decision::accept;
      e.decision = accepted ? "accept" : "reject";
      emit(std::move(e));

      if (accepted) {
        result.incumbent = commit(candidate, cert);
        if (evalue && cfg.wealth_reset_on_commit) {
          result.wealth = WealthState{};
        }
        break;  // at most one commit per round
      }
    }

    result.trajectory.push_back(result.incumbent.id);
  }

  return result;
}

}  // namespace certgate
