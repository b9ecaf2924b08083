#pragma once

// Portable sampling helpers. std::*_distribution output is implementation
// defined, so anything that must reproduce across toolchains goes through here.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace cmr::detail {

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n).
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform01(rng) * static_cast<double>(n));
}

/// Box-Muller pair from two uniforms; u1 is mapped to (0, 1].
struct GaussianPair {
  double first;
  double second;
};

inline GaussianPair gaussian_pair(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(theta), r * std::sin(theta)};
}

inline double gaussian(std::mt19937_64& rng) { return gaussian_pair(rng).first; }

}  // namespace cmr::detail
