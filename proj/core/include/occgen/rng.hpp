#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace occgen {

// Deterministic random source. All distribution transforms are implemented
// here rather than with std::*_distribution so that streams are bit-stable
// across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t bits() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1], safe as a log argument.
  double uniform_pos() {
    return (static_cast<double>(bits() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n), rejection sampled.
  uint64_t uniform_int(uint64_t n);

  // Standard normal via Box-Muller, second value cached.
  double normal();

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  // Marsaglia-Tsang; shapes below one are boosted through Gamma(a + 1).
  double gamma(double shape);

  double beta(double a, double b);

  // Derive a child seed from structured coordinates, splitmix64 mixing.
  static uint64_t mix(std::initializer_list<uint64_t> words);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace occgen
