// Independently trained identity verifier: a subject classifier whose
// penultimate activations serve as the embedding, with a cosine threshold
// calibrated at the equal-error-rate point. Stands in for an external
// verification service; it never shares weights, widths or training subjects
// with the pipeline encoder.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "idveil/checkpoint.hpp"
#include "idveil/corpus.hpp"
#include "idveil/layers.hpp"
#include "idveil/tensor_io.hpp"

namespace idveil {

struct EerResult {
  double tau = 0;  // cosine threshold: "same person" iff cos >= tau
  double eer = 0;
};

// Threshold where the impostor false-accept rate and the genuine
// false-reject rate meet.
inline EerResult equal_error_rate(std::span<const double> genuine,
                                  std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw parameter_error("equal_error_rate: need both pair populations");
  }
  std::vector<double> candidates(genuine.begin(), genuine.end());
  candidates.insert(candidates.end(), impostor.begin(), impostor.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());
  EerResult best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (double tau : candidates) {
    const double far =
        static_cast<double>(std::count_if(impostor.begin(), impostor.end(),
                                          [&](double s) { return s >= tau; })) /
        static_cast<double>(impostor.size());
    const double frr =
        static_cast<double>(std::count_if(genuine.begin(), genuine.end(),
                                          [&](double s) { return s < tau; })) /
        static_cast<double>(genuine.size());
    const double gap = std::abs(far - frr);
    if (gap < best_gap) {
      best_gap = gap;
      best.tau = tau;
      best.eer = 0.5 * (far + frr);
    }
  }
  return best;
}

struct VerifierConfig {
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t batch_size = 32;
  std::uint64_t steps = 1500;
  std::uint64_t seed = 11;
};

class Verifier {
 public:
  Verifier() = default;
  Verifier(std::size_t input_dim, const VerifierConfig& cfg,
           std::size_t class_count)
      : config_(cfg),
        l1_(cfg.hidden1, input_dim),
        l2_(cfg.hidden2, cfg.hidden1),
        head_(class_count, cfg.hidden2) {}

  std::vector<float> embed(std::span<const float> x) const {
    std::vector<float> a1(l1_.out_dim()), e(l2_.out_dim());
    std::vector<float> pre(l1_.out_dim());
    l1_.forward(x, pre);
    leaky_relu<float>(pre, std::span<float>(a1));
    std::vector<float> pre2(l2_.out_dim());
    l2_.forward(a1, pre2);
    leaky_relu<float>(pre2, std::span<float>(e));
    return e;
  }

  // Class index (position within the verifier-train subject list) with the
  // highest logit.
  std::size_t classify(std::span<const float> x) const {
    const auto e = embed(x);
    std::vector<float> logits(head_.out_dim());
    head_.forward(e, logits);
    return static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
  }

  double tau() const { return tau_; }
  double eer() const { return eer_; }
  std::uint64_t steps_trained() const { return steps_; }
  const VerifierConfig& config() const { return config_; }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ostringstream out;
    out << "input_dim = " << l1_.in_dim() << "\n";
    out << "hidden1 = " << config_.hidden1 << "\n";
    out << "hidden2 = " << config_.hidden2 << "\n";
    out << "class_count = " << head_.out_dim() << "\n";
    out << "learning_rate = " << format_double(config_.learning_rate) << "\n";
    out << "beta1 = " << format_double(config_.beta1) << "\n";
    out << "beta2 = " << format_double(config_.beta2) << "\n";
    out << "batch_size = " << config_.batch_size << "\n";
    out << "steps = " << config_.steps << "\n";
    out << "seed = " << config_.seed << "\n";
    out << "steps_trained = " << steps_ << "\n";
    out << "tau = " << format_double(tau_) << "\n";
    out << "eer = " << format_double(eer_) << "\n";
    write_file(dir / "config.txt", out.str());
    save_tensor(dir / "l1_w.idpt", l1_.weight);
    save_tensor(dir / "l1_b.idpt", l1_.bias);
    save_tensor(dir / "l2_w.idpt", l2_.weight);
    save_tensor(dir / "l2_b.idpt", l2_.bias);
    save_tensor(dir / "head_w.idpt", head_.weight);
    save_tensor(dir / "head_b.idpt", head_.bias);
  }

  static Verifier load(const std::filesystem::path& dir) {
    auto kv = detail::parse_key_values(read_file(dir / "config.txt"));
    auto need = [&](const char* key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) {
        throw state_error(std::string("verifier: missing key ") + key);
      }
      return it->second;
    };
    VerifierConfig cfg;
    cfg.hidden1 = std::stoull(need("hidden1"));
    cfg.hidden2 = std::stoull(need("hidden2"));
    cfg.learning_rate = std::stod(need("learning_rate"));
    cfg.beta1 = std::stod(need("beta1"));
    cfg.beta2 = std::stod(need("beta2"));
    cfg.batch_size = std::stoull(need("batch_size"));
    cfg.steps = std::stoull(need("steps"));
    cfg.seed = std::stoull(need("seed"));
    Verifier v(std::stoull(need("input_dim")), cfg,
               std::stoull(need("class_count")));
    v.steps_ = std::stoull(need("steps_trained"));
    v.tau_ = std::stod(need("tau"));
    v.eer_ = std::stod(need("eer"));
    v.l1_.weight = load_tensor(dir / "l1_w.idpt");
    v.l1_.bias = load_tensor(dir / "l1_b.idpt");
    v.l2_.weight = load_tensor(dir / "l2_w.idpt");
    v.l2_.bias = load_tensor(dir / "l2_b.idpt");
    v.head_.weight = load_tensor(dir / "head_w.idpt");
    v.head_.bias = load_tensor(dir / "head_b.idpt");
    return v;
  }

  friend Verifier train_verifier(const Corpus& corpus,
                                 const VerifierConfig& cfg, Rng& rng);

 private:
  VerifierConfig config_;
  Dense<float> l1_, l2_, head_;
  double tau_ = 0;
  double eer_ = 0.5;
  std::uint64_t steps_ = 0;
};

inline double identity_distance(std::span<const float> a,
                                std::span<const float> b, const Verifier& v) {
  const auto ea = v.embed(a);
  const auto eb = v.embed(b);
  return 1.0 - cosine_similarity(std::span<const float>(ea),
                                 std::span<const float>(eb));
}

inline bool judged_different(std::span<const float> a, std::span<const float> b,
                             const Verifier& v) {
  return identity_distance(a, b, v) > 1.0 - v.tau();
}

inline double protection_success_rate(
    std::span<const std::pair<FaceVector, FaceVector>> pairs,
    const Verifier& v) {
  if (pairs.empty()) {
    throw parameter_error("protection_success_rate: empty pair list");
  }
  std::size_t hidden = 0;
  for (const auto& [original, anonymized] : pairs) {
    if (judged_different(original, anonymized, v)) ++hidden;
  }
  return static_cast<double>(hidden) / static_cast<double>(pairs.size());
}

namespace detail {

// Genuine/impostor cosine pair populations for a split, holding out each
// subject's last image as the query side.
template <typename EmbedFn>
void eer_pair_sims(const Corpus& corpus, Split split, EmbedFn&& embed,
                   std::vector<double>& genuine, std::vector<double>& impostor) {
  const std::size_t per = corpus.manifest.images_per_subject;
  std::vector<std::size_t> held;
  std::vector<std::vector<float>> held_emb;
  for (std::size_t s = 0; s < corpus.manifest.subjects; ++s) {
    if (corpus.manifest.split_of_subject(s) != split) continue;
    const std::size_t h = s * per + (per - 1);
    held.push_back(h);
    held_emb.push_back(embed(corpus.image(h)));
    for (std::size_t p = 0; p + 1 < per; ++p) {
      const auto e = embed(corpus.image(s * per + p));
      genuine.push_back(cosine_similarity(std::span<const float>(held_emb.back()),
                                          std::span<const float>(e)));
    }
  }
  for (std::size_t i = 0; i < held.size(); ++i) {
    for (std::size_t j = i + 1; j < held.size(); ++j) {
      impostor.push_back(cosine_similarity(std::span<const float>(held_emb[i]),
                                           std::span<const float>(held_emb[j])));
    }
  }
}

}  // namespace detail

inline Verifier train_verifier(const Corpus& corpus, const VerifierConfig& cfg,
                               Rng& rng) {
  std::vector<std::size_t> subjects;
  for (std::size_t s = 0; s < corpus.manifest.subjects; ++s) {
    if (corpus.manifest.split_of_subject(s) == Split::verifier_train) {
      subjects.push_back(s);
    }
  }
  if (subjects.size() < 20) {
    throw parameter_error("train_verifier: verifier split has " +
                          std::to_string(subjects.size()) +
                          " subjects, need at least 20");
  }

  Verifier v(corpus.manifest.pixel_dim, cfg, subjects.size());
  Rng init = rng.split("verifier-init");
  v.l1_.init_xavier(init);
  v.l2_.init_xavier(init);
  v.head_.init_xavier(init);

  // Train on all but each subject's last image; those are kept for threshold
  // calibration.
  const std::size_t per = corpus.manifest.images_per_subject;
  std::vector<std::pair<std::size_t, std::size_t>> pool;  // (image, class)
  for (std::size_t c = 0; c < subjects.size(); ++c) {
    for (std::size_t p = 0; p + 1 < per; ++p) {
      pool.emplace_back(subjects[c] * per + p, c);
    }
  }

  Adam<float> opt({&v.l1_.weight, &v.l1_.bias, &v.l2_.weight, &v.l2_.bias,
                   &v.head_.weight, &v.head_.bias},
                  {&v.l1_.grad_weight, &v.l1_.grad_bias, &v.l2_.grad_weight,
                   &v.l2_.grad_bias, &v.head_.grad_weight, &v.head_.grad_bias},
                  cfg.learning_rate, cfg.beta1, cfg.beta2);
  Rng batch_rng = rng.split("verifier-batches");
  const std::size_t batch = std::min(cfg.batch_size, pool.size());
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const std::size_t classes = subjects.size();

  std::vector<float> pre1(cfg.hidden1), a1(cfg.hidden1);
  std::vector<float> pre2(cfg.hidden2), a2(cfg.hidden2);
  std::vector<float> logits(classes), probs(classes);
  for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
    v.l1_.zero_grad();
    v.l2_.zero_grad();
    v.head_.zero_grad();
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const auto [img, cls] = pool[batch_rng.next_u64() % pool.size()];
      const auto x = corpus.image(img);
      v.l1_.forward(x, pre1);
      leaky_relu<float>(pre1, std::span<float>(a1));
      v.l2_.forward(a1, pre2);
      leaky_relu<float>(pre2, std::span<float>(a2));
      v.head_.forward(a2, logits);
      const float peak = *std::max_element(logits.begin(), logits.end());
      double z = 0;
      for (std::size_t c = 0; c < classes; ++c) {
        probs[c] = std::exp(logits[c] - peak);
        z += probs[c];
      }
      std::vector<float> d_logits(classes);
      for (std::size_t c = 0; c < classes; ++c) {
        probs[c] = static_cast<float>(probs[c] / z);
        d_logits[c] = static_cast<float>(
            (probs[c] - (c == cls ? 1.0 : 0.0)) * inv_batch);
      }
      std::vector<float> d_a2(a2.size(), 0.f);
      v.head_.backward(a2, d_logits, std::span<float>(d_a2));
      leaky_relu_backward<float>(pre2, std::span<float>(d_a2));
      std::vector<float> d_a1(a1.size(), 0.f);
      v.l2_.backward(a1, d_a2, std::span<float>(d_a1));
      leaky_relu_backward<float>(pre1, std::span<float>(d_a1));
      v.l1_.backward(x, d_a1, {});
    }
    opt.step();
  }
  v.steps_ = cfg.steps;

  std::vector<double> genuine, impostor;
  detail::eer_pair_sims(corpus, Split::verifier_train,
                        [&](std::span<const float> x) { return v.embed(x); },
                        genuine, impostor);
  const EerResult eer = equal_error_rate(genuine, impostor);
  v.tau_ = eer.tau;
  v.eer_ = eer.eer;
  return v;
}

// Equal-error-rate cosine threshold for the pipeline's own identity encoder,
// calibrated on the training split. Used to measure protection as the
// pipeline itself sees it, alongside the independent verifier.
inline double calibrate_encoder_threshold(const Corpus& corpus,
                                          const Checkpoint& ck) {
  std::vector<double> genuine, impostor;
  detail::eer_pair_sims(
      corpus, Split::train,
      [&](std::span<const float> x) {
        typename IdentityEncoderNet<float>::Trace tr;
        ck.model.identity.forward(x, tr);
        return tr.embed;
      },
      genuine, impostor);
  return equal_error_rate(genuine, impostor).tau;
}

}  // namespace idveil
