#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace avgpg {

/// Seeded random stream. Uniforms are built from the raw 64-bit engine output
/// so that traces are identical across standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Index drawn from a cumulative distribution (last entry ~ 1).
  int from_cdf(std::span<const double> cdf) {
    const double u = uniform();
    const int n = static_cast<int>(cdf.size());
    for (int i = 0; i + 1 < n; ++i) {
      if (u < cdf[static_cast<std::size_t>(i)]) return i;
    }
    return n - 1;
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace avgpg
