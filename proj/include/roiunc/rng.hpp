#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace roiunc {

// SplitMix64 finalizer (Vigna, public domain). Used both as a sequential
// generator and, in stateless form, as the counter-based generator that makes
// phantom synthesis and bootstrap replicates reproducible bit-for-bit: every
// draw is a pure function of (key, counter).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// FNV-1a 64-bit string hash, used to fold image ids into RNG keys.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// Stateless counter RNG: draw(counter) never depends on call order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static CounterRng keyed(std::uint64_t seed, std::uint64_t stream) {
    return CounterRng(splitmix64(seed ^ splitmix64(stream)));
  }

  std::uint64_t bits(std::uint64_t counter) const { return splitmix64(key_ ^ splitmix64(counter)); }

  // Uniform in (0, 1]; never returns 0 so it is safe under log().
  double uniform01(std::uint64_t counter) const {
    return static_cast<double>((bits(counter) >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, n) via the multiply-shift reduction.
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits(counter)) * n) >> 64);
  }

  // Standard normal via Box-Muller; consumes counters 2c and 2c+1.
  double normal(std::uint64_t counter) const {
    const double u1 = uniform01(2 * counter);
    const double u2 = uniform01(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

// Sequential convenience wrapper over the same stream.
class SequentialRng {
 public:
  explicit SequentialRng(std::uint64_t seed) : rng_(seed) {}

  std::uint64_t bits() { return rng_.bits(counter_++); }
  double uniform01() { return rng_.uniform01(counter_++); }
  std::uint64_t below(std::uint64_t n) { return rng_.below(counter_++, n); }
  double normal() { return rng_.normal(counter_++); }

 private:
  CounterRng rng_;
  std::uint64_t counter_ = 0;
};

}  // namespace roiunc
