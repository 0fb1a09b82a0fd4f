#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "certgate/config.hpp"
#include "certgate/errors.hpp"
#include "certgate/rng.hpp"

namespace certgate {

// Candidate generation. Proposers are heuristics with zero statistical
// obligations: anything they emit still has to survive screening and a
// budgeted confirmation, so the only hard rules here are determinism
// and never proposing the incumbent itself.

struct ContinuousDomain {
  double lo = 0.0;
  double hi = 1.0;
  bool log_scale = false;
  // Half-width of the additive perturbation for linear-scale params;
  // 0 means a tenth of the domain width.
  double mutation_scale = 0.0;
};

struct IntDomain {
  std::int64_t lo = 0;
  std::int64_t hi = 1;
};

struct CategoricalDomain {
  std::vector<std::string> values;
};

using ParamDomain =
    std::variant<ContinuousDomain, IntDomain, CategoricalDomain>;

struct ParamSpace {
  std::map<std::string, ParamDomain> domains;

  void validate() const {
    for (const auto& [name, dom] : domains) {
      if (const auto* c = std::get_if<ContinuousDomain>(&dom)) {
        if (!(c->lo <= c->hi)) {
          throw InvalidArgument("param space: " + name + ": lo > hi");
        }
        if (c->log_scale && !(c->lo > 0.0)) {
          throw InvalidArgument("param space: " + name +
                                ": log scale requires lo > 0");
        }
        if (c->mutation_scale < 0.0) {
          throw InvalidArgument("param space: " + name +
                                ": negative mutation_scale");
        }
      } else if (const auto* i = std::get_if<IntDomain>(&dom)) {
        if (i->lo > i->hi) {
          throw InvalidArgument("param space: " + name + ": lo > hi");
        }
      } else {
        const auto& cat = std::get<CategoricalDomain>(dom);
        if (cat.values.empty()) {
          throw InvalidArgument("param space: " + name + ": no values");
        }
      }
    }
  }

  // A pinned domain admits exactly one value and cannot be mutated.
  static bool pinned(const ParamDomain& dom) {
    if (const auto* c = std::get_if<ContinuousDomain>(&dom)) {
      return c->lo == c->hi;
    }
    if (const auto* i = std::get_if<IntDomain>(&dom)) return i->lo == i->hi;
    return std::get<CategoricalDomain>(dom).values.size() < 2;
  }
};

// What the proposer may know about the past: which configs have already
// been proposed, and their historical screening means.
struct ProposalHistory {
  std::unordered_set<std::string> proposed_ids;
  std::unordered_map<std::string, double> screen_mean_sum;
  std::unordered_map<std::string, std::size_t> screen_mean_count;

  void record_proposed(const std::string& id) { proposed_ids.insert(id); }

  void record_screen_mean(const std::string& id, double mean) {
    screen_mean_sum[id] += mean;
    screen_mean_count[id] += 1;
  }

  double mean_screen_score(const std::string& id) const {
    auto it = screen_mean_count.find(id);
    if (it == screen_mean_count.end() || it->second == 0) return 0.0;
    return screen_mean_sum.at(id) / static_cast<double>(it->second);
  }
};

// Orders candidates by historical screening mean, best first; configs
// with no history score 0. The sort is stable, so ties keep the
// proposer's order. Exploitation heuristic only; it cannot change what
// gets certified, just what gets screened first.
inline std::vector<Configuration> rank_candidates(
    std::vector<Configuration> candidates, const ProposalHistory& history) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](const Configuration& a, const Configuration& b) {
                     return history.mean_screen_score(a.id) >
                            history.mean_screen_score(b.id);
                   });
  return candidates;
}

namespace detail {

inline ParamValue mutate_value(const std::string& name,
                               const ParamDomain& dom, const ParamValue& cur,
                               CounterRng& rng) {
  if (const auto* c = std::get_if<ContinuousDomain>(&dom)) {
    const double v = param_as_real(cur);
    if (c->log_scale) {
      const double factor = std::exp(rng.next_uniform(-std::log(3.0),
                                                      std::log(3.0)));
      return std::clamp(v * factor, c->lo, c->hi);
    }
    const double scale =
        c->mutation_scale > 0.0 ? c->mutation_scale : (c->hi - c->lo) / 10.0;
    return std::clamp(v + rng.next_uniform(-scale, scale), c->lo, c->hi);
  }
  if (const auto* i = std::get_if<IntDomain>(&dom)) {
    const auto* cv = std::get_if<std::int64_t>(&cur);
    if (cv == nullptr) {
      throw InvalidArgument("param " + name + ": integer domain needs an "
                            "integer value");
    }
    // Uniform over the domain excluding the current value.
    std::int64_t pick = rng.next_int(i->lo, i->hi - 1);
    if (pick >= *cv) pick += 1;
    return pick;
  }
  const auto& cat = std::get<CategoricalDomain>(dom);
  const auto* cv = std::get_if<std::string>(&cur);
  std::vector<std::string> pool;
  for (const std::string& v : cat.values) {
    if (cv == nullptr || v != *cv) pool.push_back(v);
  }
  if (pool.empty()) {
    throw InvalidArgument("param " + name + ": no alternative value");
  }
  return pool[static_cast<std::size_t>(
      rng.next_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
}

}  // namespace detail

// Mutates 1-2 uniformly chosen non-pinned parameters of the incumbent.
// Returns up to max_candidates distinct configurations, none equal to
// the incumbent; an all-pinned space yields none. Deterministic in
// rng_seed.
inline std::vector<Configuration> mutate_candidates(
    const Configuration& incumbent, const ParamSpace& space,
    std::uint64_t rng_seed, std::size_t max_candidates) {
  space.validate();
  std::vector<std::string> mutable_names;
  for (const auto& [name, dom] : space.domains) {
    if (!incumbent.has(name)) {
      throw InvalidArgument("param space names '" + name +
                            "' absent from the incumbent");
    }
    if (!ParamSpace::pinned(dom)) mutable_names.push_back(name);
  }
  std::vector<Configuration> out;
  if (mutable_names.empty() || max_candidates == 0) return out;

  CounterRng rng(mix_key(rng_seed, fnv1a64("mutate")));
  std::unordered_set<std::string> seen{incumbent.id};
  for (std::size_t c = 0; c < max_candidates; ++c) {
    for (int attempt = 0; attempt < 16; ++attempt) {
      const std::size_t count =
          mutable_names.size() >= 2 && rng.next_unit() < 0.5 ? 2 : 1;
      std::vector<std::string> picks = mutable_names;
      // Partial shuffle: the first `count` entries are the mutated params.
      for (std::size_t i = 0; i < count; ++i) {
        const auto j = static_cast<std::size_t>(rng.next_int(
            static_cast<std::int64_t>(i),
            static_cast<std::int64_t>(picks.size()) - 1));
        std::swap(picks[i], picks[j]);
      }
      auto params = incumbent.params;
      for (std::size_t i = 0; i < count; ++i) {
        const auto& name = picks[i];
        params[name] = detail::mutate_value(name, space.domains.at(name),
                                            incumbent.at(name), rng);
      }
      auto candidate = Configuration::make(std::move(params));
      if (seen.insert(candidate.id).second) {
        out.push_back(std::move(candidate));
        break;
      }
    }
  }
  return out;
}

// Replays a fixed list in order: the first preset not yet proposed is
// the round's single candidate. Exhausted list proposes nothing.
inline std::vector<Configuration> preset_candidates(
    const Configuration& incumbent, const std::vector<Configuration>& presets,
    const ProposalHistory& history) {
  for (const Configuration& p : presets) {
    if (p.id == incumbent.id) continue;
    if (history.proposed_ids.count(p.id) != 0) continue;
    return {p};
  }
  return {};
}

enum class ProposerKind { preset, mutate };

inline std::string to_string(ProposerKind k) {
  return k == ProposerKind::preset ? "preset" : "mutate";
}

inline ProposerKind proposer_kind_from(const std::string& s) {
  if (s == "preset") return ProposerKind::preset;
  if (s == "mutate") return ProposerKind::mutate;
  throw InvalidArgument("unknown proposer kind '" + s + "'");
}

inline std::vector<Configuration> propose(
    ProposerKind kind, const Configuration& incumbent, const ParamSpace& space,
    const ProposalHistory& history, const std::vector<Configuration>& presets,
    std::uint64_t rng_seed, std::size_t max_candidates) {
  if (kind == ProposerKind::preset) {
    return preset_candidates(incumbent, presets, history);
  }
  return mutate_candidates(incumbent, space, rng_seed, max_candidates);
}

// Stateless interface the outer loop drives once per proposing round.
class Proposer {
 public:
  virtual ~Proposer() = default;
  virtual std::vector<Configuration> candidates(
      const Configuration& incumbent, const ProposalHistory& history,
      std::uint64_t rng_seed) const = 0;
};

class PresetProposer final : public Proposer {
 public:
  explicit PresetProposer(std::vector<Configuration> presets)
      : presets_(std::move(presets)) {}

  std::vector<Configuration> candidates(const Configuration& incumbent,
                                        const ProposalHistory& history,
                                        std::uint64_t) const override {
    return preset_candidates(incumbent, presets_, history);
  }

  const std::vector<Configuration>& presets() const { return presets_; }

 private:
  std::vector<Configuration> presets_;
};

class MutateProposer final : public Proposer {
 public:
  MutateProposer(ParamSpace space, std::size_t per_round)
      : space_(std::move(space)), per_round_(per_round) {
    space_.validate();
    if (per_round_ == 0) {
      throw InvalidArgument("mutate proposer: per_round must be >= 1");
    }
  }

  std::vector<Configuration> candidates(const Configuration& incumbent,
                                        const ProposalHistory&,
                                        std::uint64_t rng_seed) const override {
    return mutate_candidates(incumbent, space_, rng_seed, per_round_);
  }

 private:
  ParamSpace space_;
  std::size_t per_round_;
};

}  // namespace certgate
