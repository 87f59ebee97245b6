#ifndef MODELAB_RNG_HPP
#define MODELAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "modelab/types.hpp"

namespace modelab {

/** Seeded PRNG with explicit uniform/normal mappings.
 *
 * std::mt19937_64 output is standardized bit-for-bit; the distribution
 * adaptors in <random> are not. Mapping the raw bits here keeps every
 * draw reproducible from the seed alone.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  real uniform() { return static_cast<real>(engine_() >> 11) * 0x1.0p-53; }

  real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased for any n.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  int below_int(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

  // Box-Muller; two engine draws per normal.
  real normal(real mean = 0.0, real stddev = 1.0) {
    const real u1 = 1.0 - uniform();  // (0, 1]
    const real u2 = uniform();
    const real radius = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * radius * std::cos(2.0 * M_PI * u2);
  }

  vec normal_vec(Index n, real mean = 0.0, real stddev = 1.0) {
    vec out(n);
    for (Index i = 0; i < n; ++i) out[i] = normal(mean, stddev);
    return out;
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Distinct, reproducible sub-seed per (seed, purpose tag).
inline std::uint64_t seed_for(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed ^ (tag * 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace modelab

#endif
