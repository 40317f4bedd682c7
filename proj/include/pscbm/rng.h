#ifndef PSCBM_RNG_H_
#define PSCBM_RNG_H_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace pscbm {

// SplitMix64 (Steele, Lea, Flood 2014). Every random choice in the library
// draws from this generator so that selections are reproducible from the
// seed alone, independent of the standard library implementation.
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, n) by rejection: draws r until
  // r >= (2^64 - n) mod n, then returns r mod n. n must be > 0.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  // Uniform double in [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; uses two fresh uniforms per call.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

// Independent stream for sub-task `index` under `seed`: SplitMix64 seeded
// with seed + (index + 1) * 0xD1B54A32D192ED03.
inline SplitMix64 derive_stream(std::uint64_t seed, std::uint64_t index) {
  return SplitMix64(seed + (index + 1) * 0xD1B54A32D192ED03ULL);
}

// In-place Fisher-Yates over the first `count` positions: position t is
// swapped with t + uniform_below(size - t).
template <typename T>
void partial_shuffle(std::span<T> items, std::size_t count, SplitMix64& rng) {
  const std::size_t n = items.size();
  if (count > n) count = n;
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t j = t + static_cast<std::size_t>(rng.uniform_below(n - t));
    std::swap(items[t], items[j]);
  }
}

}  // namespace pscbm

#endif  // PSCBM_RNG_H_
