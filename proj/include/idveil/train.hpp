// Alternating training loop: one discriminator ascent step on the
// adversarial loss, then one generator step on the full weighted objective,
// per batch. Batches mix reconstruction pairs with identity/attribute swap
// pairs; swap pairs contribute no reconstruction term, exactly.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "idveil/checkpoint.hpp"
#include "idveil/corpus.hpp"
#include "idveil/losses.hpp"
#include "idveil/model.hpp"

namespace idveil {

struct PairLosses {
  double adv = 0, id = 0, att = 0, rec = 0;

  PairLosses& operator+=(const PairLosses& o) {
    adv += o.adv;
    id += o.id;
    att += o.att;
    rec += o.rec;
    return *this;
  }
};

struct LossRecord {
  std::uint64_t step;
  double adv, id, att, rec, total;
};

inline std::string loss_history_csv(const std::vector<LossRecord>& history) {
  std::string out = "step,loss_adv,loss_id,loss_att,loss_rec,loss_total\n";
  for (const auto& r : history) {
    out += std::to_string(r.step) + "," + format_double(r.adv) + "," +
           format_double(r.id) + "," + format_double(r.att) + "," +
           format_double(r.rec) + "," + format_double(r.total) + "\n";
  }
  return out;
}

// y = h(f(x_id), g(x_att)), forward only.
template <typename T>
std::vector<T> generate_swap(const Model<T>& model, std::span<const T> x_id,
                             std::span<const T> x_att) {
  typename IdentityEncoderNet<T>::Trace tf;
  typename AttributeEncoderNet<T>::Trace tg;
  typename FusionGeneratorNet<T>::Trace th;
  model.identity.forward(x_id, tf);
  model.attribute.forward(x_att, tg);
  model.fusion.forward(tf.embed, tg.act_lvl, th);
  return std::move(th.y);
}

// Forward-only total generator objective for one pair; the oracle the
// gradient checks differentiate numerically.
template <typename T>
double pair_total_loss(const Model<T>& model, std::span<const T> x_id,
                       std::span<const T> x_att, bool same_pair,
                       double lambda_att, double lambda_id, double lambda_rec) {
  std::vector<T> y = generate_swap(model, x_id, x_att);
  const std::span<const T> ys(y);
  const double adv = adversarial_loss<T>(x_att, ys, model.disc);
  const double id = identity_loss<T>(ys, x_id, model);
  const double att = attribute_loss<T>(ys, x_att, model);
  const double rec = reconstruction_loss<T>(ys, x_att, same_pair);
  return total_loss(adv, att, id, rec, lambda_att, lambda_id, lambda_rec);
}

// One generator backward pass. Accumulates generator parameter gradients
// scaled by `scale` (1/batch for a mean) and returns the pair's loss values.
// The discriminator's gradient buffers are written as a side effect of
// backpropagating through it; the discriminator phase zeroes them first.
template <typename T>
PairLosses generator_accumulate(Model<T>& model, std::span<const T> x_id,
                                std::span<const T> x_att, bool same_pair,
                                double lambda_att, double lambda_id,
                                double lambda_rec, double scale) {
  typename IdentityEncoderNet<T>::Trace tr_f1, tr_fh;
  typename AttributeEncoderNet<T>::Trace tr_g2, tr_gh;
  typename FusionGeneratorNet<T>::Trace tr_h;
  typename DiscriminatorNet<T>::Trace tr_dh, tr_dx;

  model.identity.forward(x_id, tr_f1);
  model.attribute.forward(x_att, tr_g2);
  model.fusion.forward(tr_f1.embed, tr_g2.act_lvl, tr_h);
  const std::vector<T>& y = tr_h.y;
  const std::span<const T> ys(y);

  model.identity.forward(ys, tr_fh);
  model.attribute.forward(ys, tr_gh);
  const double p_fake = static_cast<double>(model.disc.forward(ys, tr_dh));
  const double p_real = static_cast<double>(model.disc.forward(x_att, tr_dx));

  PairLosses losses;
  losses.adv = clamped_log(p_real) + clamped_log(1.0 - p_fake);
  losses.id = 1.0 - dot(std::span<const T>(tr_fh.embed),
                        std::span<const T>(tr_f1.embed));
  double att_acc = 0;
  for (std::size_t k = 0; k < tr_gh.act_lvl.size(); ++k) {
    att_acc += squared_distance(std::span<const T>(tr_gh.act_lvl[k]),
                                std::span<const T>(tr_g2.act_lvl[k]));
  }
  losses.att = 0.5 * att_acc;
  losses.rec = same_pair ? 0.5 * squared_distance(ys, x_att) : 0.0;

  // Gradient at the generated image, gathered from every loss path.
  std::vector<T> dy(y.size(), T(0));
  if (same_pair && lambda_rec != 0.0) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      dy[i] = static_cast<T>(lambda_rec * scale *
                             (static_cast<double>(y[i]) -
                              static_cast<double>(x_att[i])));
    }
  }
  {
    std::vector<std::vector<T>> d_lvl(tr_gh.act_lvl.size());
    for (std::size_t k = 0; k < d_lvl.size(); ++k) {
      d_lvl[k].resize(tr_gh.act_lvl[k].size());
      for (std::size_t i = 0; i < d_lvl[k].size(); ++i) {
        d_lvl[k][i] = static_cast<T>(
            lambda_att * scale *
            (static_cast<double>(tr_gh.act_lvl[k][i]) -
             static_cast<double>(tr_g2.act_lvl[k][i])));
      }
    }
    model.attribute.backward(tr_gh, d_lvl, std::span<T>(dy));
  }
  {
    std::vector<T> d_embed(tr_fh.embed.size());
    for (std::size_t i = 0; i < d_embed.size(); ++i) {
      d_embed[i] = static_cast<T>(-lambda_id * scale *
                                  static_cast<double>(tr_f1.embed[i]));
    }
    model.identity.backward(tr_fh, d_embed, std::span<T>(dy));
  }
  model.disc.backward(tr_dh, static_cast<T>(-p_fake * scale), std::span<T>(dy));

  // Through the fusion generator, then into the two source encodings.
  std::vector<T> d_id(tr_f1.embed.size(), T(0));
  std::vector<std::vector<T>> d_att(tr_g2.act_lvl.size());
  model.fusion.backward(tr_h, dy, std::span<T>(d_id), d_att);

  for (std::size_t i = 0; i < d_id.size(); ++i) {
    d_id[i] += static_cast<T>(-lambda_id * scale *
                              static_cast<double>(tr_fh.embed[i]));
  }
  model.identity.backward(tr_f1, d_id, {});

  for (std::size_t k = 0; k < d_att.size(); ++k) {
    if (d_att[k].empty()) d_att[k].assign(tr_g2.act_lvl[k].size(), T(0));
    for (std::size_t i = 0; i < d_att[k].size(); ++i) {
      d_att[k][i] += static_cast<T>(
          lambda_att * scale *
          (static_cast<double>(tr_g2.act_lvl[k][i]) -
           static_cast<double>(tr_gh.act_lvl[k][i])));
    }
  }
  model.attribute.backward(tr_g2, d_att, {});
  return losses;
}

// One discriminator ascent contribution (descends -[log D(real) + log(1-D(fake))]).
template <typename T>
void discriminator_accumulate(Model<T>& model, std::span<const T> x_real,
                              std::span<const T> x_fake, double scale) {
  typename DiscriminatorNet<T>::Trace tr;
  const double p_real = static_cast<double>(model.disc.forward(x_real, tr));
  model.disc.backward(tr, static_cast<T>((p_real - 1.0) * scale), {});
  const double p_fake = static_cast<double>(model.disc.forward(x_fake, tr));
  model.disc.backward(tr, static_cast<T>(p_fake * scale), {});
}

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> history;
};

inline TrainResult train_stage1(const Corpus& corpus, const ModelDims& dims,
                                const TrainConfig& config, Rng& rng) {
  config.validate();
  dims.validate();
  if (dims.input_dim != corpus.manifest.pixel_dim) {
    throw shape_error("train: model input dim " +
                      std::to_string(dims.input_dim) +
                      " does not match corpus pixel dim " +
                      std::to_string(corpus.manifest.pixel_dim));
  }
  const auto train_idx = corpus.indices_of(Split::train);
  if (train_idx.empty()) {
    throw parameter_error("train: corpus has an empty train split");
  }

  TrainResult result;
  result.checkpoint = Checkpoint(dims);
  Checkpoint& ck = result.checkpoint;
  ck.config = config;
  ck.manifest_hash = corpus.manifest.hash();
  Model<float>& model = ck.model;
  model.init(rng);

  const std::size_t batch = config.batch_size;
  const std::size_t n_cross = static_cast<std::size_t>(
      std::llround(config.cross_fraction * static_cast<double>(batch)));
  if (n_cross > 0 && corpus.manifest.train_subjects < 2) {
    throw parameter_error("train: swap pairs need at least 2 train subjects");
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);

  Adam<float> opt_gen(model.generator_params(), model.generator_grads(),
                      config.learning_rate, config.beta1, config.beta2);
  Adam<float> opt_disc(model.discriminator_params(),
                       model.discriminator_grads(), config.learning_rate,
                       config.beta1, config.beta2);

  Rng batch_rng = rng.split("batches");
  std::vector<std::size_t> id_src(batch), att_src(batch);
  std::vector<FaceVector> fakes(batch);

  for (std::uint64_t step = 1; step <= config.max_steps; ++step) {
    for (std::size_t b = 0; b < batch; ++b) {
      id_src[b] = train_idx[batch_rng.next_u64() % train_idx.size()];
      if (b < n_cross) {
        std::size_t other;
        do {
          other = train_idx[batch_rng.next_u64() % train_idx.size()];
        } while (corpus.subject_of[other] == corpus.subject_of[id_src[b]]);
        att_src[b] = other;
      } else {
        att_src[b] = id_src[b];
      }
    }

    model.zero_discriminator_grads();
    for (std::size_t b = 0; b < batch; ++b) {
      fakes[b] = generate_swap<float>(model, corpus.image(id_src[b]),
                                      corpus.image(att_src[b]));
      discriminator_accumulate(model, corpus.image(att_src[b]),
                               std::span<const float>(fakes[b]), inv_batch);
    }
    opt_disc.step();

    model.zero_generator_grads();
    PairLosses sums;
    for (std::size_t b = 0; b < batch; ++b) {
      sums += generator_accumulate(model, corpus.image(id_src[b]),
                                   corpus.image(att_src[b]), b >= n_cross,
                                   config.lambda_att, config.lambda_id,
                                   config.lambda_rec, inv_batch);
    }
    opt_gen.step();

    const double adv = sums.adv * inv_batch;
    const double id = sums.id * inv_batch;
    const double att = sums.att * inv_batch;
    const double rec = sums.rec * inv_batch;
    const double total = total_loss(adv, att, id, rec, config.lambda_att,
                                    config.lambda_id, config.lambda_rec);
    if (!std::isfinite(total)) {
      throw training_error("training diverged (non-finite loss)", step);
    }
    if (step % config.log_interval == 0 || step == config.max_steps) {
      result.history.push_back({step, adv, id, att, rec, total});
    }
  }
  ck.steps = config.max_steps;
  return result;
}

}  // namespace idveil
