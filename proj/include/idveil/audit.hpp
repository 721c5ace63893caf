// Empirical certification of the Laplace identity mechanism.
//
// The analytic audit draws outputs y ~ M(a) and evaluates the closed-form
// log density ratio
//
//   log p(y | a) / p(y | b)  =  (eps / delta_f) * (||y - b||_1 - ||y - a||_1)
//
// which is bounded by eps whenever delta_f >= ||a - b||_1. The histogram
// audit replays the same comparison through an arbitrary deterministic
// post-processing map into a small discrete space, with statistical slack.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "idveil/common.hpp"
#include "idveil/privacy.hpp"
#include "idveil/rng.hpp"

namespace idveil {

struct AuditReport {
  double epsilon = 0;
  double delta_f = 0;
  std::size_t samples = 0;
  double max_ratio = 0;
  bool pass = false;
  // False when no histogram cell collected enough mass to compare; an
  // inconclusive audit is neither a pass nor a failure.
  bool conclusive = true;

  std::string csv_row() const {
    return format_double(epsilon) + "," + format_double(delta_f) + "," +
           std::to_string(samples) + "," + format_double(max_ratio) + "," +
           (pass ? "1" : "0");
  }

  std::string summary() const {
    std::string verdict = conclusive ? (pass ? "PASS" : "FAIL") : "INCONCLUSIVE";
    return "audit eps=" + format_double(epsilon) +
           " delta_f=" + format_double(delta_f) +
           " samples=" + std::to_string(samples) +
           " max_log_ratio=" + format_double(max_ratio) + " -> " + verdict;
  }
};

inline constexpr double kAuditTolerance = 1e-9;
inline const char* kAuditCsvHeader = "epsilon,delta_f,samples,max_ratio,pass";

inline double log_density_ratio(std::span<const double> y,
                                std::span<const double> a,
                                std::span<const double> b,
                                const PrivacyParams& params) {
  return (params.epsilon / params.delta_f) *
         (l1_distance(y, b) - l1_distance(y, a));
}

// --- Exact evaluation of the triangle step ---------------------------------
//
// ||y-b||_1 - ||y-a||_1 <= ||a-b||_1 holds over the reals for every y, but a
// straight double evaluation can exceed the bound by an ulp in the region
// where it is tight. The check below decides the inequality exactly using
// error-free transformations: every |u - v| of doubles is representable as an
// unevaluated (hi, lo) pair, and the sign of the summed expansion is exact.

namespace detail {

inline void two_sum(double x, double v, double& s, double& err) {
  s = x + v;
  const double bv = s - x;
  err = (x - (s - bv)) + (v - bv);
}

// Adds v to the expansion (nonoverlapping components, increasing magnitude).
inline void grow_expansion(std::vector<double>& e, double v) {
  double q = v;
  std::size_t out = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    double s, err;
    two_sum(q, e[i], s, err);
    q = s;
    if (err != 0.0) e[out++] = err;
  }
  e.resize(out);
  if (q != 0.0) e.push_back(q);
}

inline int expansion_sign(const std::vector<double>& e) {
  if (e.empty()) return 0;
  const double top = e.back();
  return top > 0.0 ? 1 : (top < 0.0 ? -1 : 0);
}

// Appends sign * |x - y| to the expansion as an exact two-term sum.
inline void add_abs_diff(std::vector<double>& e, double x, double y,
                         double sign) {
  double s, err;
  two_sum(x, -y, s, err);
  if (s < 0.0 || (s == 0.0 && err < 0.0)) {
    s = -s;
    err = -err;
  }
  grow_expansion(e, sign * s);
  if (err != 0.0) grow_expansion(e, sign * err);
}

}  // namespace detail

// Exact decision of ||y-b||_1 - ||y-a||_1 <= ||a-b||_1.
inline bool l1_triangle_holds_exact(std::span<const double> y,
                                    std::span<const double> a,
                                    std::span<const double> b) {
  require_same_size(y, a, "l1_triangle_holds_exact");
  require_same_size(a, b, "l1_triangle_holds_exact");
  std::vector<double> e;
  for (std::size_t i = 0; i < y.size(); ++i) {
    detail::add_abs_diff(e, y[i], b[i], +1.0);
    detail::add_abs_diff(e, y[i], a[i], -1.0);
    detail::add_abs_diff(e, a[i], b[i], -1.0);
  }
  return detail::expansion_sign(e) <= 0;
}

// --- Analytic audit ---------------------------------------------------------

inline AuditReport audit_mechanism(std::span<const double> a,
                                   std::span<const double> b,
                                   const PrivacyParams& params,
                                   std::size_t samples, Rng& rng) {
  params.validate();
  require_same_size(a, b, "audit_mechanism");
  if (samples == 0) {
    throw parameter_error("audit_mechanism: need at least one sample");
  }
  const double pair_dist = l1_distance(a, b);
  if (params.delta_f < pair_dist) {
    throw parameter_error(
        "audit_mechanism: sensitivity " + format_double(params.delta_f) +
        " is below the pair distance " + format_double(pair_dist) +
        "; the bound is not claimed for this pair");
  }

  AuditReport report;
  report.epsilon = params.epsilon;
  report.delta_f = params.delta_f;
  report.samples = samples;

  if (params.delta_f == 0.0) {
    // Identity mechanism; reachable only when a == b.
    report.max_ratio = 0.0;
    report.pass = true;
    return report;
  }

  const double scale = params.noise_scale();
  std::vector<double> y(a.size());
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = a[i] + rng.laplace(scale);
    }
    const double ratio = log_density_ratio(y, a, b, params);
    if (ratio > worst) worst = ratio;
  }
  report.max_ratio = worst;
  report.pass = worst <= params.epsilon + kAuditTolerance;
  return report;
}

// --- Post-processing audit ---------------------------------------------------

using PostMap = std::function<std::size_t(const std::vector<float>&)>;

inline constexpr std::size_t kMaxPostCells = 10000;
inline constexpr std::size_t kMinCellCount = 100;

inline AuditReport audit_postprocessed(std::span<const float> a,
                                       std::span<const float> b,
                                       const PrivacyParams& params,
                                       const PostMap& postmap,
                                       std::size_t cell_count,
                                       std::size_t samples, Rng& rng) {
  params.validate();
  require_same_size(a, b, "audit_postprocessed");
  if (cell_count == 0 || cell_count > kMaxPostCells) {
    throw parameter_error("audit_postprocessed: cell count must be in [1, " +
                          std::to_string(kMaxPostCells) + "]");
  }
  if (samples == 0) {
    throw parameter_error("audit_postprocessed: need at least one sample");
  }

  Rng rng_a = rng.split("side-a");
  Rng rng_b = rng.split("side-b");
  std::vector<std::size_t> hist_a(cell_count, 0), hist_b(cell_count, 0);
  auto run_side = [&](std::span<const float> input, Rng& side_rng,
                      std::vector<std::size_t>& hist) {
    for (std::size_t s = 0; s < samples; ++s) {
      std::vector<float> noisy = perturb_identity<float>(input, params, side_rng);
      const std::size_t cell = postmap(noisy);
      if (cell >= cell_count) {
        throw parameter_error("audit_postprocessed: postmap produced cell " +
                              std::to_string(cell) + " out of range");
      }
      ++hist[cell];
    }
  };
  run_side(a, rng_a, hist_a);
  run_side(b, rng_b, hist_b);

  AuditReport report;
  report.epsilon = params.epsilon;
  report.delta_f = params.delta_f;
  report.samples = samples;
  report.conclusive = false;
  report.max_ratio = 0.0;
  report.pass = true;
  for (std::size_t c = 0; c < cell_count; ++c) {
    if (hist_a[c] < kMinCellCount || hist_b[c] < kMinCellCount) continue;
    report.conclusive = true;
    const double na = static_cast<double>(hist_a[c]);
    const double nb = static_cast<double>(hist_b[c]);
    const double ratio = std::abs(std::log(na / nb));
    const double slack = 3.0 * std::sqrt(1.0 / na + 1.0 / nb);
    if (ratio > report.max_ratio) report.max_ratio = ratio;
    if (ratio > params.epsilon + slack) report.pass = false;
  }
  if (!report.conclusive) report.pass = false;
  return report;
}

}  // namespace idveil
