#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace eqfa {

/// Seeded RNG with portable uniform/normal draws. std::mt19937_64 output is
/// specified by the standard; the distributions here are implemented by hand
/// because the std:: distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed, 0x9e3779b97f4a7c15ull)) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Uniform integer in [0, n); n must be positive and small against 2^64.
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  /// Derive an independent deterministic stream for (label, index). Used to
  /// make per-epoch / per-sample draws independent of iteration history.
  Rng fork(std::uint64_t label, std::uint64_t index = 0) const {
    return Rng(mix(mix(seed_, label), index));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a xor-combined state
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace eqfa
