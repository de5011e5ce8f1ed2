#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace hal {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent per-instance streams.
[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) noexcept {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

[[nodiscard]] inline Rng make_rng(std::uint64_t master, std::uint64_t index = 0) {
  return Rng(mix_seed(master, index));
}

// The standard library distributions are implementation-defined; these keep
// streams reproducible across toolchains.

[[nodiscard]] inline double uniform01(Rng& rng) {
  // 53 random bits mapped into (0, 1).
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Box-Muller, one draw per call (the sine branch is discarded).
[[nodiscard]] inline double standard_normal(Rng& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

[[nodiscard]] inline double standard_exponential(Rng& rng) {
  return -std::log(uniform01(rng));
}

[[nodiscard]] inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

}  // namespace hal
