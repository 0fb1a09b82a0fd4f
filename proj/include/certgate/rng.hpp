#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace certgate {

// Deterministic, platform-independent randomness. Every stream is a pure
// function of (key, counter), so any draw can be reproduced from the
// master seed and the mixing path that derived the key. No global state.

// splitmix64 finalizer. Bijective on 64-bit values.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a child key from a parent key and a stream label. Chaining
// mix_key calls builds a tree of statistically independent streams.
constexpr std::uint64_t mix_key(std::uint64_t key, std::uint64_t part) noexcept {
  return mix64(key ^ mix64(part));
}

// FNV-1a over bytes; used to hash canonical text into stream labels.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based generator: out_i = mix64(key ^ mix64(i)). Stateless apart
// from the cursor, so sequences never depend on call interleaving.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t next_u64() noexcept { return mix64(key_ ^ mix64(counter_++)); }

  // Uniform in [0, 1), 53 bits of precision.
  double next_unit() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * next_unit();
  }

  // Uniform integer in [lo, hi] by rejection-free scaling; the bias for
  // 64-bit ranges this small is far below anything observable here.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi) noexcept {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Standard normal via the Marsaglia polar method. Consumes a variable
  // number of counter steps, which is fine because each logical stream
  // owns its whole counter space.
  double next_gaussian() noexcept {
    for (;;) {
      const double u = 2.0 * next_unit() - 1.0;
      const double v = 2.0 * next_unit() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) {
        return u * std::sqrt(-2.0 * std::log(s) / s);
      }
    }
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace certgate
