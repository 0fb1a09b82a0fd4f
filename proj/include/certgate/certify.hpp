#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "certgate/errors.hpp"

namespace certgate {

// Statistical certification of a candidate edit from paired, bounded
// score differences. Three interchangeable certifiers:
//
//   hoeffding  fixed-n lower confidence bound from the range alone
//   bernstein  fixed-n bound that also uses the sample variance
//   evalue     anytime-valid wealth test over normalized differences
//
// All three control the probability of certifying a harmful edit at the
// stated level, provided every difference truly lies in the declared
// range.

enum class CertifyMode { hoeffding, bernstein, evalue };

inline std::string to_string(CertifyMode m) {
  switch (m) {
    case CertifyMode::hoeffding: return "hoeffding";
    case CertifyMode::bernstein: return "bernstein";
    case CertifyMode::evalue: return "evalue";
  }
  return "?";
}

inline CertifyMode certify_mode_from(const std::string& s) {
  if (s == "hoeffding") return CertifyMode::hoeffding;
  if (s == "bernstein") return CertifyMode::bernstein;
  if (s == "evalue") return CertifyMode::evalue;
  throw InvalidArgument("unknown certify mode '" + s + "'");
}

enum class Decision { accept, reject };

inline std::string to_string(Decision d) {
  return d == Decision::accept ? "accept" : "reject";
}

// Paired differences proposal - incumbent on a common seed set, each
// value guaranteed to lie in [lo, hi].
struct PairedDeltas {
  std::vector<double> values;
  double lo = -1.0;
  double hi = 1.0;
  std::vector<std::int64_t> seed_ids;

  std::size_t n() const { return values.size(); }

  void validate() const {
    if (values.empty()) throw InsufficientSamples("paired deltas: empty sample");
    if (!(lo < hi)) throw InvalidArgument("paired deltas: requires lo < hi");
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
      throw InvalidArgument("paired deltas: non-finite range");
    }
    if (!seed_ids.empty() && seed_ids.size() != values.size()) {
      throw InvalidArgument("paired deltas: seed_ids length mismatch");
    }
    for (double v : values) {
      if (!std::isfinite(v) || v < lo || v > hi) {
        throw RangeViolation("paired delta outside declared range");
      }
    }
  }

  double mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }

  // Unbiased sample variance (divisor n - 1). Requires n >= 2.
  double sample_variance() const {
    if (values.size() < 2) {
      throw InsufficientSamples("sample variance requires n >= 2");
    }
    const double m = mean();
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return s / static_cast<double>(values.size() - 1);
  }
};

// Differences rescaled to [-1, 1] by R = max(|lo|, |hi|).
struct NormalizedDeltas {
  std::vector<double> xs;
  double scale = 1.0;
};

inline NormalizedDeltas normalize(const PairedDeltas& d) {
  d.validate();
  const double scale = std::max(std::fabs(d.lo), std::fabs(d.hi));
  if (!(scale > 0.0)) {
    throw InvalidArgument("normalize: degenerate range, max(|lo|,|hi|) == 0");
  }
  NormalizedDeltas out;
  out.scale = scale;
  out.xs.reserve(d.values.size());
  for (double v : d.values) out.xs.push_back(v / scale);
  return out;
}

namespace detail {
inline void check_delta(double delta, const char* who) {
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw InvalidArgument(std::string(who) + ": delta must lie in (0, 1)");
  }
}
}  // namespace detail

// Range-only lower confidence bound: with probability at least 1 - delta,
// the true mean difference exceeds the returned value.
inline double hoeffding_lcb(const PairedDeltas& d, double delta) {
  d.validate();
  detail::check_delta(delta, "hoeffding_lcb");
  const double n = static_cast<double>(d.n());
  const double width = d.hi - d.lo;
  return d.mean() - width * std::sqrt(std::log(1.0 / delta) / (2.0 * n));
}

// Variance-adaptive lower confidence bound. Tighter than the range bound
// when the empirical variance is small relative to the range.
inline double bernstein_lcb(const PairedDeltas& d, double delta) {
  d.validate();
  detail::check_delta(delta, "bernstein_lcb");
  if (d.n() < 2) {
    throw InsufficientSamples("bernstein_lcb requires n >= 2");
  }
  const double n = static_cast<double>(d.n());
  const double width = d.hi - d.lo;
  const double var = d.sample_variance();
  const double log_term = std::log(3.0 / delta);
  return d.mean() - std::sqrt(2.0 * var * log_term / n) -
         3.0 * width * log_term / n;
}

// Multiplicative wealth process. Kept in log space so long favorable
// streaks cannot overflow; a multiplicand of exactly zero is absorbing
// and recorded by a flag rather than -inf arithmetic.
class WealthState {
 public:
  double wealth() const {
    if (absorbed_) return 0.0;
    if (log_wealth_ > kMaxLogWealth) return std::numeric_limits<double>::max();
    return std::exp(log_wealth_);
  }

  double log_wealth() const { return log_wealth_; }
  bool absorbed() const { return absorbed_; }

  // Per-step wealth multiplicands, oldest first.
  const std::vector<double>& history() const { return history_; }

  // Multiplies wealth by factor, which must be finite and >= 0.
  void apply_factor(double factor) {
    if (!std::isfinite(factor) || factor < 0.0) {
      throw InvalidArgument("wealth factor must be finite and non-negative");
    }
    history_.push_back(factor);
    if (absorbed_) return;
    if (factor == 0.0) {
      absorbed_ = true;
      return;
    }
    log_wealth_ += std::log(factor);
  }

 private:
  // exp overflows just above 709; cap the exposed wealth at max double.
  static constexpr double kMaxLogWealth = 700.0;
  double log_wealth_ = 0.0;
  bool absorbed_ = false;
  std::vector<double> history_;
};

// One wealth update with a normalized difference x in [-1, 1] and a bet
// size lambda in [0, 1]. The multiplicand 1 + lambda * x has expectation
// at most 1 whenever the true mean difference is <= 0, which is what
// makes the accept rule safe at any stopping time.
inline WealthState evalue_step(WealthState w, double x, double lambda) {
  if (!std::isfinite(x) || x < -1.0 || x > 1.0) {
    throw RangeViolation("evalue_step: x outside [-1, 1]");
  }
  if (!std::isfinite(lambda) || lambda < 0.0 || lambda > 1.0) {
    throw InvalidArgument("evalue_step: lambda outside [0, 1]");
  }
  w.apply_factor(1.0 + lambda * x);
  return w;
}

// Chooses the bet size before each sample is revealed. Implementations
// may look at the wealth trajectory so far but never at the new sample.
class LambdaPolicy {
 public:
  virtual ~LambdaPolicy() = default;
  virtual double next(const WealthState& w, std::size_t sample_index) const = 0;
};

class ConstantLambda final : public LambdaPolicy {
 public:
  explicit ConstantLambda(double value) : value_(value) {
    if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
      throw InvalidArgument("ConstantLambda: value outside [0, 1]");
    }
  }
  double next(const WealthState&, std::size_t) const override { return value_; }

 private:
  double value_;
};

// Full bet minus a safety margin, so a single worst-case sample cannot
// absorb the wealth at zero.
class CappedLambda final : public LambdaPolicy {
 public:
  explicit CappedLambda(double epsilon = 0.05) : value_(1.0 - epsilon) {
    if (!(epsilon > 0.0) || !(epsilon < 1.0)) {
      throw InvalidArgument("CappedLambda: epsilon outside (0, 1)");
    }
  }
  double next(const WealthState&, std::size_t) const override { return value_; }

 private:
  double value_;
};

// Feeds one batch of normalized differences through the wealth process
// in order. Returns the updated state and the batch factor E_t (product
// of the per-sample multiplicands).
inline std::pair<WealthState, double> evalue_round(WealthState w,
                                                   const NormalizedDeltas& nd,
                                                   const LambdaPolicy& policy) {
  double round_factor = 1.0;
  for (std::size_t i = 0; i < nd.xs.size(); ++i) {
    const double lambda = policy.next(w, i);
    w = evalue_step(std::move(w), nd.xs[i], lambda);
    round_factor *= w.history().back();
  }
  return {std::move(w), round_factor};
}

// The certified outcome of one confirmation test.
struct Certificate {
  CertifyMode mode = CertifyMode::hoeffding;
  std::size_t n = 0;
  double mean = 0.0;          // raw task units
  double lcb = 0.0;           // 0 in evalue mode
  double delta_spent = 0.0;   // allocation charged (global delta in evalue mode)
  double wealth_before = 1.0;
  double wealth_after = 1.0;
  double threshold = 0.0;     // 1 / global delta in evalue mode, else 0
  Decision decision = Decision::reject;
};

// Runs the confirmation test for one batch of paired differences.
//
// Fixed-n modes charge delta_t from the spending schedule and accept iff
// the lower confidence bound is positive; the wealth state is untouched.
// The evalue mode ignores the per-round allocation entirely: its anytime
// guarantee is priced once by the global level, and the accept rule is
// wealth >= 1 / global_delta. Certificates record which price was paid.
inline Certificate certify(const PairedDeltas& d, double delta_t,
                           WealthState& wealth, CertifyMode mode,
                           double global_delta,
                           const LambdaPolicy& policy = ConstantLambda(1.0)) {
  d.validate();
  detail::check_delta(global_delta, "certify");

  Certificate cert;
  cert.mode = mode;
  cert.n = d.n();
  cert.mean = d.mean();
  cert.wealth_before = wealth.wealth();

  if (mode == CertifyMode::evalue) {
    const NormalizedDeltas nd = normalize(d);
    auto [next, round_factor] = evalue_round(std::move(wealth), nd, policy);
    (void)round_factor;
    wealth = std::move(next);
    cert.lcb = 0.0;
    cert.delta_spent = global_delta;
    cert.wealth_after = wealth.wealth();
    cert.threshold = 1.0 / global_delta;
    cert.decision = cert.wealth_after >= cert.threshold ? Decision::accept
                                                        : Decision::reject;
    return cert;
  }

  detail::check_delta(delta_t, "certify");
  cert.lcb = mode == CertifyMode::hoeffding ? hoeffding_lcb(d, delta_t)
                                            : bernstein_lcb(d, delta_t);
  cert.delta_spent = delta_t;
  cert.wealth_after = cert.wealth_before;
  cert.threshold = 0.0;
  cert.decision = cert.lcb > 0.0 ? Decision::accept : Decision::reject;
  return cert;
}

}  // namespace certgate
