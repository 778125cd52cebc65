#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace artgest {

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Deterministic counter-free PRNG (xoshiro256**). Distributions are
/// implemented here rather than via <random> so that streams are identical
/// across standard-library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& s : state_) s = x = detail::splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (no cached second sample, keeps the
  /// stream position a pure function of the call count).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t state_[4];
};

/// Derives an independent stream from a base seed and a tag path, e.g.
/// derive_seed(cfg_seed, {kAugmentStream, epoch, instance_index}). Streams
/// for distinct tag paths are decorrelated, which is what makes data-loader
/// results independent of worker count.
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> tags) {
  uint64_t s = detail::splitmix64(base ^ 0xa0761d6478bd642fULL);
  for (uint64_t t : tags) s = detail::splitmix64(s ^ detail::splitmix64(t));
  return s;
}

// Well-known stream tags.
inline constexpr uint64_t kInitStream = 1;
inline constexpr uint64_t kAugmentStream = 2;
inline constexpr uint64_t kShuffleStream = 3;
inline constexpr uint64_t kDropoutStream = 4;
inline constexpr uint64_t kSyntheticStream = 5;

}  // namespace artgest
