#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "certgate/certify.hpp"
#include "certgate/config.hpp"
#include "certgate/errors.hpp"
#include "certgate/rng.hpp"

namespace certgate {

// Where an evaluation is consumed. Screening and confirmation draw from
// disjoint seed pools; the stage tag keeps their noise streams disjoint
// too, so screening outcomes can never leak into confirmation evidence.
enum class Stage { screen, confirm };

inline std::string to_string(Stage s) {
  return s == Stage::screen ? "screen" : "confirm";
}

// An evaluation backend. Implementations must be pure: the score is a
// function of (config, seed, stage) only, identical across calls,
// instances, and call orderings. Purity is what makes paired
// differences meaningful and whole runs replayable.
class Harness {
 public:
  virtual ~Harness() = default;

  virtual double evaluate(const Configuration& config, std::int64_t seed,
                          Stage stage) const = 0;

  // Declared bounds for one paired score difference. The statistical
  // guarantees are conditional on every difference lying inside.
  virtual double delta_lo() const = 0;
  virtual double delta_hi() const = 0;

  // Folds a raw score difference into the declared range. The default
  // assumes differences are already bounded; backends with unbounded
  // score noise override this with a clamp, which makes the certified
  // quantity the folded difference by definition.
  virtual double bound_delta(double raw) const { return raw; }
};

// Evaluates proposal and incumbent on a common seed set and returns the
// paired differences (proposal minus incumbent), seeds in ascending
// order. Any evaluation failure voids the whole batch.
inline PairedDeltas paired_evaluate(const Harness& h,
                                    const Configuration& incumbent,
                                    const Configuration& proposal,
                                    std::vector<std::int64_t> seeds,
                                    Stage stage) {
  if (seeds.empty()) {
    throw InvalidArgument("paired_evaluate: empty seed set");
  }
  std::sort(seeds.begin(), seeds.end());
  if (std::adjacent_find(seeds.begin(), seeds.end()) != seeds.end()) {
    throw InvalidArgument("paired_evaluate: duplicate seeds");
  }
  PairedDeltas d;
  d.lo = h.delta_lo();
  d.hi = h.delta_hi();
  d.seed_ids = seeds;
  d.values.reserve(seeds.size());
  for (std::int64_t seed : seeds) {
    const double inc = h.evaluate(incumbent, seed, stage);
    const double prop = h.evaluate(proposal, seed, stage);
    d.values.push_back(h.bound_delta(prop - inc));
  }
  d.validate();
  return d;
}

// Synthetic score distributions for calibration and stress runs.
//
//   gaussian          normal noise around base_mean plus per-config
//                     effects; a seed-shared noise component makes
//                     pairing reduce variance
//   bernoulli_scaled  two-point scores base_mean +- base_sd with the
//                     hit probability tilted by the effect
//   offset_injection  effects act only on screening scores, while every
//                     non-baseline config gains confirm_offset at
//                     confirmation; separates screening appeal from
//                     confirmed improvement by construction
enum class SyntheticFamily { gaussian, bernoulli_scaled, offset_injection };

inline std::string to_string(SyntheticFamily f) {
  switch (f) {
    case SyntheticFamily::gaussian: return "gaussian";
    case SyntheticFamily::bernoulli_scaled: return "bernoulli_scaled";
    case SyntheticFamily::offset_injection: return "offset_injection";
  }
  return "?";
}

inline SyntheticFamily synthetic_family_from(const std::string& s) {
  if (s == "gaussian") return SyntheticFamily::gaussian;
  if (s == "bernoulli_scaled") return SyntheticFamily::bernoulli_scaled;
  if (s == "offset_injection") return SyntheticFamily::offset_injection;
  throw InvalidArgument("unknown synthetic family '" + s + "'");
}

struct SyntheticSpec {
  SyntheticFamily family = SyntheticFamily::gaussian;
  double base_mean = 0.0;
  double base_sd = 1.0;
  // Fraction of gaussian score variance shared by all configs on the
  // same seed. Pairing cancels the shared part.
  double seed_corr = 0.75;
  // "name=value" -> additive score shift for configs matching it.
  std::map<std::string, double> proposal_effect;
  double confirm_offset = 0.0;
  double delta_lo = -1.0;
  double delta_hi = 1.0;

  void validate() const {
    if (!(base_sd >= 0.0) || !std::isfinite(base_sd)) {
      throw InvalidArgument("synthetic spec: base_sd must be >= 0");
    }
    if (family == SyntheticFamily::bernoulli_scaled && base_sd <= 0.0) {
      throw InvalidArgument(
          "synthetic spec: bernoulli_scaled requires base_sd > 0");
    }
    if (!(seed_corr >= 0.0) || !(seed_corr <= 1.0)) {
      throw InvalidArgument("synthetic spec: seed_corr outside [0, 1]");
    }
    if (!(delta_lo < delta_hi)) {
      throw InvalidArgument("synthetic spec: requires delta_lo < delta_hi");
    }
    if (!std::isfinite(base_mean) || !std::isfinite(confirm_offset)) {
      throw InvalidArgument("synthetic spec: non-finite field");
    }
  }

  std::string canonical() const {
    std::string s = "family=" + to_string(family);
    s += ";base_mean=" + format_real(base_mean);
    s += ";base_sd=" + format_real(base_sd);
    s += ";seed_corr=" + format_real(seed_corr);
    s += ";confirm_offset=" + format_real(confirm_offset);
    s += ";delta_lo=" + format_real(delta_lo);
    s += ";delta_hi=" + format_real(delta_hi);
    for (const auto& [sig, shift] : proposal_effect) {
      s += ";effect:" + sig + "=" + format_real(shift);
    }
    return s;
  }
};

class SyntheticHarness final : public Harness {
 public:
  SyntheticHarness(SyntheticSpec spec, std::string baseline_id,
                   std::uint64_t salt)
      : spec_(std::move(spec)), baseline_id_(std::move(baseline_id)) {
    spec_.validate();
    key_ = mix_key(fnv1a64(spec_.canonical()), salt);
    for (const auto& [sig, shift] : spec_.proposal_effect) {
      const auto eq = sig.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw InvalidArgument("proposal_effect key must look like name=value");
      }
      effects_.push_back({sig.substr(0, eq), sig.substr(eq + 1), shift});
    }
  }

  double evaluate(const Configuration& config, std::int64_t seed,
                  Stage stage) const override {
    const double effect = effect_of(config);
    double mean = spec_.base_mean;
    switch (spec_.family) {
      case SyntheticFamily::gaussian:
        mean += effect;
        return mean + spec_.base_sd * noise(config, seed, stage);
      case SyntheticFamily::bernoulli_scaled: {
        // Two-point support at base_mean +- base_sd; the effect tilts
        // the hit probability so the mean shifts by exactly the effect
        // while the range stays fixed.
        const double p = std::clamp(
            0.5 + effect / (2.0 * spec_.base_sd), 0.0, 1.0);
        CounterRng rng(idio_key(config, seed, stage));
        return spec_.base_mean +
               (rng.next_unit() < p ? spec_.base_sd : -spec_.base_sd);
      }
      case SyntheticFamily::offset_injection: {
        if (stage == Stage::screen) {
          mean += effect;
        } else if (config.id != baseline_id_) {
          mean += spec_.confirm_offset;
        }
        return mean + spec_.base_sd * noise(config, seed, stage);
      }
    }
    throw InvalidArgument("unreachable synthetic family");
  }

  double delta_lo() const override { return spec_.delta_lo; }
  double delta_hi() const override { return spec_.delta_hi; }

  // Gaussian tails are unbounded; fold differences into the declared
  // range so the boundedness contract holds by construction.
  double bound_delta(double raw) const override {
    return std::clamp(raw, spec_.delta_lo, spec_.delta_hi);
  }

  const SyntheticSpec& spec() const { return spec_; }

 private:
  struct Effect {
    std::string name;
    std::string value;
    double shift;
  };

  double effect_of(const Configuration& config) const {
    double sum = 0.0;
    for (const Effect& e : effects_) {
      if (config.has(e.name) && render_param(config.at(e.name)) == e.value) {
        sum += e.shift;
      }
    }
    return sum;
  }

  std::uint64_t stage_tag(Stage stage) const {
    return fnv1a64(to_string(stage));
  }

  std::uint64_t idio_key(const Configuration& config, std::int64_t seed,
                         Stage stage) const {
    std::uint64_t k = mix_key(key_, fnv1a64("idio"));
    k = mix_key(k, fnv1a64(config.id));
    k = mix_key(k, static_cast<std::uint64_t>(seed));
    return mix_key(k, stage_tag(stage));
  }

  std::uint64_t shared_key(std::int64_t seed, Stage stage) const {
    std::uint64_t k = mix_key(key_, fnv1a64("shared"));
    k = mix_key(k, static_cast<std::uint64_t>(seed));
    return mix_key(k, stage_tag(stage));
  }

  // Unit-variance noise with a seed-shared component: variance splits
  // seed_corr shared, 1 - seed_corr config-specific.
  double noise(const Configuration& config, std::int64_t seed,
               Stage stage) const {
    CounterRng shared(shared_key(seed, stage));
    CounterRng idio(idio_key(config, seed, stage));
    return std::sqrt(spec_.seed_corr) * shared.next_gaussian() +
           std::sqrt(1.0 - spec_.seed_corr) * idio.next_gaussian();
  }

  SyntheticSpec spec_;
  std::string baseline_id_;
  std::uint64_t key_ = 0;
  std::vector<Effect> effects_;
};

inline std::unique_ptr<Harness> make_synthetic(const SyntheticSpec& spec,
                                               const Configuration& baseline,
                                               std::uint64_t salt) {
  return std::make_unique<SyntheticHarness>(spec, baseline.id, salt);
}

}  // namespace certgate
