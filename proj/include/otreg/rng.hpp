#pragma once

#include <cmath>
#include <cstdint>

namespace otreg {

// SplitMix64 (Vigna's fixed-increment variant). The exact constants and the
// derived real/Gaussian mappings below are part of the corpus file contract:
// any reimplementation that follows them reproduces corpora bit for bit.
struct Rng {
  std::uint64_t state = 0;

  explicit Rng(std::uint64_t seed = 0) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // [0, 1) from the high 53 bits.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // [-1, 1)
  double symmetric() { return 2.0 * unit() - 1.0; }

  // Inclusive [lo, hi].
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  // Box-Muller cosine branch; consumes exactly two raw draws per call.
  double gaussian() {
    const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(next() >> 11) * 0x1.0p-53;        // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
};

}  // namespace otreg
