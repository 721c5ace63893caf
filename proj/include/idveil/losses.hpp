// The four training losses, as standalone evaluators. The training loop
// derives its gradients by hand; these functions are the reference values it
// reports and that the tests check against.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "idveil/model.hpp"

namespace idveil {

inline constexpr double kProbClamp = 1e-6;

inline double clamped_log(double p) {
  return std::log(std::clamp(p, kProbClamp, 1.0 - kProbClamp));
}

// log D(x_real) + log(1 - D(x_fake)). The discriminator ascends this; the
// generator descends it (only the fake term carries generator gradient).
template <typename T>
double adversarial_loss(std::span<const T> x_real, std::span<const T> x_fake,
                        const DiscriminatorNet<T>& d) {
  typename DiscriminatorNet<T>::Trace tr;
  const double p_real = static_cast<double>(d.forward(x_real, tr));
  const double p_fake = static_cast<double>(d.forward(x_fake, tr));
  return clamped_log(p_real) + clamped_log(1.0 - p_fake);
}

// 1 - cos(f(x_hat), f(x)); in [0, 2] since the embeddings are unit norm.
template <typename T>
double identity_loss(std::span<const T> x_hat, std::span<const T> x,
                     const Model<T>& model) {
  typename IdentityEncoderNet<T>::Trace a, b;
  model.identity.forward(x_hat, a);
  model.identity.forward(x, b);
  return 1.0 - cosine_similarity(std::span<const T>(a.embed),
                                 std::span<const T>(b.embed));
}

// (1/2) sum_k || g_k(x_hat) - g_k(x) ||^2.
template <typename T>
double attribute_loss(std::span<const T> x_hat, std::span<const T> x,
                      const Model<T>& model) {
  typename AttributeEncoderNet<T>::Trace a, b;
  model.attribute.forward(x_hat, a);
  model.attribute.forward(x, b);
  double acc = 0;
  for (std::size_t k = 0; k < a.act_lvl.size(); ++k) {
    acc += squared_distance(std::span<const T>(a.act_lvl[k]),
                            std::span<const T>(b.act_lvl[k]));
  }
  return 0.5 * acc;
}

// (1/2) || x_hat - x ||^2 for a reconstruction pair; exactly zero when the
// identity and attribute sources are different images.
template <typename T>
double reconstruction_loss(std::span<const T> x_hat, std::span<const T> x,
                           bool same_pair) {
  if (!same_pair) return 0.0;
  return 0.5 * squared_distance(x_hat, x);
}

inline double total_loss(double adv, double att, double id, double rec,
                         double lambda_att, double lambda_id,
                         double lambda_rec) {
  return adv + lambda_att * att + lambda_id * id + lambda_rec * rec;
}

}  // namespace idveil
