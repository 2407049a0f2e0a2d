#pragma once

#include <cmath>
#include <cstdint>

namespace translution {

/// splitmix64; identical seeds yield identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// uniform in [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

  /// Box-Muller normal truncated to two standard deviations.
  double trunc_normal(double stddev) {
    for (;;) {
      const double u1 = 1.0 - uniform();
      const double u2 = uniform();
      const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
      if (std::abs(z) <= 2.0) return z * stddev;
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace translution
