// Image-similarity metrics, rank correlation and the attribute probe used to
// score how much of the ground-truth attribute signal survives anonymization.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "idveil/corpus.hpp"
#include "idveil/solve.hpp"
#include "idveil/tensor.hpp"

namespace idveil {

// Reported for bit-identical inputs so aggregate statistics stay finite.
inline constexpr double kPsnrIdenticalSentinel = 99.0;

inline double psnr(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty()) {
    throw shape_error("psnr: inputs must be non-empty and equal length");
  }
  double mse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrIdenticalSentinel;
  return 10.0 * std::log10(1.0 / mse);
}

// Mean local SSIM over uniform 8x8 windows at stride 1 (window shrinks to the
// grid side for tiny inputs). Inputs are [0,1] vectors reshaped to the square
// grid; constants use the standard 0.01/0.03 settings for unit dynamic range.
inline double ssim(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty()) {
    throw shape_error("ssim: inputs must be non-empty and equal length");
  }
  const auto side = static_cast<std::size_t>(
      std::llround(std::sqrt(static_cast<double>(a.size()))));
  if (side * side != a.size()) {
    throw shape_error("ssim: input length " + std::to_string(a.size()) +
                      " is not a perfect square");
  }
  const std::size_t win = std::min<std::size_t>(8, side);
  const double inv_n = 1.0 / static_cast<double>(win * win);
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;

  double acc = 0;
  std::size_t windows = 0;
  for (std::size_t r = 0; r + win <= side; ++r) {
    for (std::size_t c = 0; c + win <= side; ++c) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t i = 0; i < win; ++i) {
        const std::size_t base = (r + i) * side + c;
        for (std::size_t j = 0; j < win; ++j) {
          const double va = a[base + j];
          const double vb = b[base + j];
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      }
      const double mu_a = sa * inv_n;
      const double mu_b = sb * inv_n;
      const double var_a = saa * inv_n - mu_a * mu_a;
      const double var_b = sbb * inv_n - mu_b * mu_b;
      const double cov = sab * inv_n - mu_a * mu_b;
      acc += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
             ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++windows;
    }
  }
  return acc / static_cast<double>(windows);
}

// Spearman rank correlation with average ranks for ties. Returns 0 when
// either side has no variation.
inline double spearman(std::span<const double> xs, std::span<const double> ys) {
  require_same_size(xs, ys, "spearman");
  if (xs.size() < 2) {
    throw parameter_error("spearman: need at least two points");
  }
  auto ranks = [](std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(xs);
  const auto ry = ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Fixed corpus-level ridge regression from pixels to the ground-truth
// attribute factors. Fit once on the train split, then frozen; fidelity of an
// anonymized image is how much of the probe's recovery power survives.
class AttributeProbe {
 public:
  static AttributeProbe fit(const Corpus& corpus, Split split = Split::train) {
    const auto idx = corpus.indices_of(split);
    if (idx.empty()) {
      throw parameter_error("attribute probe: empty fit split");
    }
    const std::size_t m = corpus.manifest.pixel_dim;
    const std::size_t d = corpus.manifest.attr_factor_dim;
    const std::size_t f = m + 1;  // bias feature
    const double ridge = 1e-3 * static_cast<double>(idx.size());

    Tensor<double> gram({f, f});
    Tensor<double> moment({f, d});
    std::vector<double> feat(f, 1.0);
    AttributeProbe probe;
    probe.target_mean_.assign(d, 0.0);
    for (std::size_t n : idx) {
      const auto x = corpus.image(n);
      for (std::size_t i = 0; i < m; ++i) feat[i] = x[i];
      const auto z = corpus.attr_factors.row(n);
      for (std::size_t i = 0; i < f; ++i) {
        for (std::size_t j = i; j < f; ++j) {
          gram.at(i, j) += feat[i] * feat[j];
        }
        for (std::size_t t = 0; t < d; ++t) {
          moment.at(i, t) += feat[i] * z[t];
        }
      }
      for (std::size_t t = 0; t < d; ++t) probe.target_mean_[t] += z[t];
    }
    for (std::size_t i = 0; i < f; ++i) {
      for (std::size_t j = 0; j < i; ++j) gram.at(i, j) = gram.at(j, i);
      gram.at(i, i) += ridge;
    }
    for (double& v : probe.target_mean_) v /= static_cast<double>(idx.size());
    probe.weights_ = cholesky_solve(std::move(gram), moment);
    return probe;
  }

  std::vector<double> predict(std::span<const float> x) const {
    const std::size_t m = weights_.dim(0) - 1;
    if (x.size() != m) {
      throw shape_error("attribute probe: pixel dim mismatch");
    }
    const std::size_t d = weights_.dim(1);
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      for (std::size_t t = 0; t < d; ++t) out[t] += xi * weights_.at(i, t);
    }
    for (std::size_t t = 0; t < d; ++t) out[t] += weights_.at(m, t);
    return out;
  }

  double squared_error(std::span<const float> x,
                       std::span<const float> target) const {
    const auto pred = predict(x);
    if (target.size() != pred.size()) {
      throw parameter_error("attribute probe: missing or mismatched "
                            "ground-truth factors");
    }
    double acc = 0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
      const double dd = pred[t] - static_cast<double>(target[t]);
      acc += dd * dd;
    }
    return acc;
  }

  double baseline_error(std::span<const float> target) const {
    if (target.size() != target_mean_.size()) {
      throw parameter_error("attribute probe: missing or mismatched "
                            "ground-truth factors");
    }
    double acc = 0;
    for (std::size_t t = 0; t < target.size(); ++t) {
      const double dd = static_cast<double>(target[t]) - target_mean_[t];
      acc += dd * dd;
    }
    return acc;
  }

  std::size_t pixel_dim() const { return weights_.dim(0) - 1; }

 private:
  Tensor<double> weights_;  // (pixel_dim + 1) x attr_dim
  std::vector<double> target_mean_;
};

// R^2 of recovering the attribute factors from the anonymized image, relative
// to recovering them from the original. Near 1 means attributes preserved;
// clamped below at 0 (an anonymized image cannot be "negatively useful").
inline double attribute_fidelity(std::span<const float> x,
                                 std::span<const float> x_hat,
                                 const GroundTruthFactors& gt,
                                 const AttributeProbe& probe) {
  const std::span<const float> target(gt.attribute);
  const double base = probe.baseline_error(target);
  if (base <= 0.0) return 0.0;
  const double r2_orig = 1.0 - probe.squared_error(x, target) / base;
  const double r2_anon = 1.0 - probe.squared_error(x_hat, target) / base;
  if (r2_orig <= 1e-9) return 0.0;
  return std::max(0.0, r2_anon) / r2_orig;
}

}  // namespace idveil
