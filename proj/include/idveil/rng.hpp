// Counter-based splittable random number generator.
//
// The generator is a pure function of (key, counter): draws advance the
// counter, split() derives a child key without touching the parent counter.
// That gives two properties the rest of the library leans on:
//   * identical seed  =>  bit-identical sample stream, on any platform;
//   * child streams are independent of how much the parent or any sibling
//     has been consumed, so work can be farmed out per (label) and the
//     results match a serial run exactly.
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "idveil/common.hpp"

namespace idveil {

namespace detail {
// splitmix64 finalizer; full-period bijection on 64-bit values.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : key_(detail::mix64(seed ^ 0x1905f79cbb61a8a3ULL)), counter_(0) {}

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  // Uniform on the open interval (0, 1); never returns an endpoint, so it is
  // safe to feed into log().
  double next_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_open01();
  }

  // Standard normal via Box-Muller; consumes exactly two draws per value.
  double gaussian() {
    const double r = next_open01();
    const double t = next_open01();
    return std::sqrt(-2.0 * std::log(r)) * std::cos(6.283185307179586477 * t);
  }

  // Laplace(0, scale) by inverse CDF: x = -b * sgn(u) * ln(1 - 2|u|) with
  // u uniform on (-1/2, 1/2).
  double laplace(double scale) {
    if (!(scale > 0.0)) {
      throw parameter_error("laplace: scale must be positive, got " +
                            std::to_string(scale));
    }
    const double u = next_open01() - 0.5;
    const double sgn = (u < 0.0) ? -1.0 : (u > 0.0 ? 1.0 : 0.0);
    return -scale * sgn * std::log1p(-2.0 * std::abs(u));
  }

  // Child generator for an independent stream. Children with distinct labels
  // are disjoint; the same (parent key, label) always yields the same child
  // regardless of what has been drawn from the parent.
  [[nodiscard]] Rng split(std::uint64_t label) const {
    Rng child(0);
    child.key_ = detail::mix64(key_ ^ detail::mix64(label + 0x45d9f3b3335b369ULL));
    child.counter_ = 0;
    return child;
  }

  [[nodiscard]] Rng split(std::string_view label) const {
    return split(fnv1a64(label));
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace idveil
