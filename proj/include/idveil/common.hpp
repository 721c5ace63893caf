// Shared error types and small helpers used across the library.
#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace idveil {

// Invalid argument values (bad sizes, non-positive scales, ...). CLI exit code 2.
struct parameter_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Dimension mismatches between tensors, models and inputs.
struct shape_error : parameter_error {
  using parameter_error::parameter_error;
};

// Operations attempted in the wrong state (untrained model, missing files, ...).
// CLI exit code 3.
struct state_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training diverged (NaN loss). Carries the step at which it happened.
struct training_error : state_error {
  training_error(const std::string& what, std::uint64_t step)
      : state_error(what + " at step " + std::to_string(step)), step(step) {}
  std::uint64_t step;
};

// A requested trend/assertion check did not hold. CLI exit code 4.
struct check_failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
  return fnv1a64(s.data(), s.size(), h);
}

template <typename T>
std::uint64_t fnv1a64_values(std::span<const T> values,
                             std::uint64_t h = kFnvOffset) {
  return fnv1a64(values.data(), values.size_bytes(), h);
}

// Shortest decimal form that parses back to the identical double. Keeps
// config files and CSVs byte-reproducible across runs.
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace idveil
