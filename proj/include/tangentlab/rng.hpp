#pragma once

// Seeded 64-bit PRNG used for every random choice in the library.
// std::mt19937 + std::normal_distribution would be deterministic only per
// standard-library implementation; this generator fixes the byte stream
// itself, which the reproducibility contract of the experiment runner needs.

#include <cstdint>
#include <cmath>
#include <vector>

namespace tangentlab {

// SplitMix64 (Steele, Lea, Flood): tiny state, passes BigCrush, and a single
// 64-bit seed always yields a usable stream (no zero-state pathology).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 random mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via the Marsaglia polar method; caches the spare deviate.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  // Unbiased uniform integer in [0, n), n >= 1 (rejection sampling).
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = ~0ull - ~0ull % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed from (seed, stream index) so one run
// seed can drive initialization, data generation, and batch order separately.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 g(seed ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
  return g.next_u64();
}

// In-place Fisher-Yates shuffle.
inline void shuffle_indices(std::vector<int>& idx, SplitMix64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.next_below(i)]);
  }
}

}  // namespace tangentlab
