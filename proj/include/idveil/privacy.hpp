// Laplace mechanism over identity embeddings: L1 sensitivity estimation,
// the calibrated perturbation itself, and parallel composition.
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "idveil/common.hpp"
#include "idveil/model.hpp"
#include "idveil/rng.hpp"
#include "idveil/tensor.hpp"

namespace idveil {

struct PrivacyParams {
  double epsilon = 6.0;
  double delta_f = 0.0;  // L1 sensitivity

  void validate() const {
    if (!(epsilon > 0.0)) {
      throw parameter_error("privacy params: epsilon must be positive, got " +
                            format_double(epsilon));
    }
    if (delta_f < 0.0) {
      throw parameter_error("privacy params: sensitivity must be >= 0");
    }
  }

  // Laplace scale; strictly decreasing in epsilon for fixed sensitivity.
  double noise_scale() const { return delta_f / epsilon; }
};

enum class SensitivityMethod { corpus_max, analytic_cap };

struct SensitivityEstimate {
  double delta_f = 0.0;
  std::string corpus_hash;
  SensitivityMethod method = SensitivityMethod::corpus_max;
};

// Exact maximum pairwise L1 distance over the embedding set (the O(N^2 d)
// scan). Embeddings are rows of a (count x dim) tensor.
inline SensitivityEstimate compute_sensitivity(const Tensor<float>& embeddings,
                                               std::string corpus_hash = {}) {
  if (embeddings.rank() != 2 || embeddings.dim(0) < 2) {
    throw parameter_error(
        "compute_sensitivity: need at least 2 embeddings of equal dimension");
  }
  const std::size_t n = embeddings.dim(0);
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = l1_distance(embeddings.row(i), embeddings.row(j));
      if (d > best) best = d;
    }
  }
  return SensitivityEstimate{best, std::move(corpus_hash),
                             SensitivityMethod::corpus_max};
}

// Conservative alternative for unit-norm embeddings: ||a - b||_1 <=
// sqrt(d) ||a - b||_2 <= 2 sqrt(d).
inline SensitivityEstimate analytic_sensitivity_cap(std::size_t embedding_dim,
                                                    std::string corpus_hash = {}) {
  return SensitivityEstimate{2.0 * std::sqrt(static_cast<double>(embedding_dim)),
                             std::move(corpus_hash),
                             SensitivityMethod::analytic_cap};
}

// Adds i.i.d. Laplace(0, delta_f / epsilon) noise per coordinate. A zero
// sensitivity degenerates to the identity map. The output is intentionally
// not re-normalized.
template <typename T>
std::vector<T> perturb_identity(std::span<const T> embedding,
                                const PrivacyParams& params, Rng& rng) {
  params.validate();
  std::vector<T> out(embedding.begin(), embedding.end());
  if (params.delta_f == 0.0) return out;
  const double scale = params.noise_scale();
  for (auto& v : out) {
    v = static_cast<T>(static_cast<double>(v) + rng.laplace(scale));
  }
  return out;
}

inline IdentityEmbedding perturb_identity(const IdentityEmbedding& id,
                                          const PrivacyParams& params,
                                          Rng& rng) {
  return IdentityEmbedding{
      perturb_identity<float>(std::span<const float>(id.values), params, rng)};
}

// Independent mechanisms on disjoint partitions jointly give the worst
// (largest) budget.
inline double compose_parallel(std::span<const double> epsilons) {
  if (epsilons.empty()) {
    throw parameter_error("compose_parallel: empty budget list");
  }
  double worst = epsilons[0];
  for (double e : epsilons) {
    if (!(e > 0.0)) {
      throw parameter_error("compose_parallel: budgets must be positive");
    }
    if (e > worst) worst = e;
  }
  return worst;
}

}  // namespace idveil
