// Frozen-weights anonymization: encode, perturb the identity embedding,
// fuse with the original attribute stack. Plus the budget-sweep harness that
// measures the privacy/utility trade-off across an epsilon grid.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "idveil/checkpoint.hpp"
#include "idveil/metrics.hpp"
#include "idveil/privacy.hpp"
#include "idveil/verifier.hpp"

namespace idveil {

// X -> encode -> perturb -> fuse with the untouched attribute stack.
// `renormalize` optionally projects the perturbed embedding back to the unit
// sphere before fusion; off by default (the mechanism output is fed through
// as-is).
inline FaceVector anonymize(const FaceVector& x, const Checkpoint& ck,
                            const PrivacyParams& params, Rng& rng,
                            bool renormalize = false) {
  params.validate();
  if (!ck.trained()) {
    throw state_error("anonymize: checkpoint has no training steps");
  }
  const std::uint64_t before = ck.hash();
  IdentityEmbedding id = encode_identity(x, ck);
  AttributeStack att = encode_attributes(x, ck);
  IdentityEmbedding noisy = perturb_identity(id, params, rng);
  if (renormalize) {
    double n = l2_norm(std::span<const float>(noisy.values));
    if (n < 1e-12) n = 1e-12;
    for (auto& v : noisy.values) v = static_cast<float>(v / n);
  }
  FaceVector out = fuse(noisy, att, ck);
  if (ck.hash() != before) {
    throw state_error("anonymize: model parameters changed during inference");
  }
  return out;
}

struct SweepSpec {
  std::vector<double> epsilons = {1.1, 2, 5, 10, 25, 50, 100, 200, 400, 800};
  std::size_t samples_per_image = 20;

  void validate() const {
    if (epsilons.empty()) {
      throw parameter_error("sweep: empty epsilon grid");
    }
    double prev = 0.0;
    for (double e : epsilons) {
      if (!(e > prev)) {
        throw parameter_error(
            "sweep: epsilons must be positive and strictly increasing");
      }
      prev = e;
    }
    if (samples_per_image == 0) {
      throw parameter_error("sweep: samples_per_image must be >= 1");
    }
  }
};

struct AnonymizationJob {
  std::vector<std::size_t> images;  // corpus indices to anonymize
  double delta_f = 0.0;
  std::uint64_t seed = 0;
  bool renormalize = false;
  std::size_t threads = 1;
};

struct SweepRow {
  double epsilon = 0;
  double mean_id_dis = 0;
  double psr = 0;
  double mean_psnr = 0;
  double mean_ssim = 0;
  double attr_fidelity = 0;
  // Protection as judged by the pipeline's own encoder; kept out of the CSV.
  double psr_self = 0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  // Per epsilon, the anonymized sample whose verifier distance is closest to
  // that epsilon's mean distance.
  std::vector<FaceVector> flagged;

  std::string csv() const {
    std::string out =
        "epsilon,mean_id_dis,psr,mean_psnr,mean_ssim,attr_fidelity\n";
    for (const auto& r : rows) {
      out += format_double(r.epsilon) + "," + format_double(r.mean_id_dis) +
             "," + format_double(r.psr) + "," + format_double(r.mean_psnr) +
             "," + format_double(r.mean_ssim) + "," +
             format_double(r.attr_fidelity) + "\n";
    }
    return out;
  }
};

namespace detail {

// Deterministic stream for one (epsilon, image, sample) cell, independent of
// scheduling order.
inline Rng sweep_cell_rng(std::uint64_t seed, std::size_t eps_idx,
                          std::size_t img_idx, std::size_t sample_idx) {
  return Rng(seed).split("sweep").split(eps_idx).split(img_idx).split(
      sample_idx);
}

template <typename Fn>
void parallel_over(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += threads) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace detail

inline SweepReport run_sweep(const SweepSpec& spec, const AnonymizationJob& job,
                             const Corpus& corpus, const Checkpoint& ck,
                             const Verifier& verifier, double encoder_tau,
                             const AttributeProbe& probe) {
  spec.validate();
  if (job.images.empty()) {
    throw parameter_error("sweep: no input images");
  }
  if (!ck.trained()) {
    throw state_error("sweep: checkpoint has no training steps");
  }
  const std::uint64_t model_hash_before = ck.hash();
  const std::size_t n_img = job.images.size();
  const std::size_t k = spec.samples_per_image;

  // Per-image originals: verifier embedding, pipeline embedding, probe error.
  std::vector<std::vector<float>> orig_emb(n_img), orig_self(n_img);
  std::vector<double> orig_probe_err(n_img), probe_base(n_img);
  for (std::size_t i = 0; i < n_img; ++i) {
    const auto x = corpus.image(job.images[i]);
    orig_emb[i] = verifier.embed(x);
    typename IdentityEncoderNet<float>::Trace tr;
    ck.model.identity.forward(x, tr);
    orig_self[i] = std::move(tr.embed);
    const auto gt = corpus.factors(job.images[i]);
    orig_probe_err[i] = probe.squared_error(x, std::span<const float>(gt.attribute));
    probe_base[i] = probe.baseline_error(std::span<const float>(gt.attribute));
  }

  SweepReport report;
  report.rows.resize(spec.epsilons.size());
  report.flagged.resize(spec.epsilons.size());

  struct ImageAccum {
    double id_dis = 0, psnr = 0, ssim = 0, probe_err = 0;
    std::size_t judged_diff = 0, judged_diff_self = 0;
    std::vector<double> sample_id_dis;
  };

  for (std::size_t e = 0; e < spec.epsilons.size(); ++e) {
    PrivacyParams params{spec.epsilons[e], job.delta_f};
    std::vector<ImageAccum> acc(n_img);
    detail::parallel_over(n_img, job.threads, [&](std::size_t i) {
      const std::size_t img = job.images[i];
      const FaceVector x(corpus.image(img).begin(), corpus.image(img).end());
      const auto gt = corpus.factors(img);
      // The attribute stack is computed once per image inside anonymize; the
      // per-sample loop only redraws the identity noise.
      ImageAccum& a = acc[i];
      a.sample_id_dis.resize(k);
      for (std::size_t s = 0; s < k; ++s) {
        Rng cell = detail::sweep_cell_rng(job.seed, e, i, s);
        const FaceVector y = anonymize(x, ck, params, cell, job.renormalize);
        const auto emb = verifier.embed(y);
        const double dist =
            1.0 - cosine_similarity(std::span<const float>(orig_emb[i]),
                                    std::span<const float>(emb));
        a.sample_id_dis[s] = dist;
        a.id_dis += dist;
        if (dist > 1.0 - verifier.tau()) ++a.judged_diff;
        typename IdentityEncoderNet<float>::Trace tr;
        ck.model.identity.forward(std::span<const float>(y), tr);
        const double self_cos =
            cosine_similarity(std::span<const float>(orig_self[i]),
                              std::span<const float>(tr.embed));
        if (self_cos < encoder_tau) ++a.judged_diff_self;
        a.psnr += psnr(x, y);
        a.ssim += ssim(x, y);
        a.probe_err += probe.squared_error(std::span<const float>(y),
                                           std::span<const float>(gt.attribute));
      }
    });

    // Serial reduction in image order keeps the report independent of the
    // thread count.
    SweepRow& row = report.rows[e];
    row.epsilon = spec.epsilons[e];
    double base_sum = 0, orig_err_sum = 0, anon_err_sum = 0;
    for (std::size_t i = 0; i < n_img; ++i) {
      row.mean_id_dis += acc[i].id_dis;
      row.mean_psnr += acc[i].psnr;
      row.mean_ssim += acc[i].ssim;
      row.psr += static_cast<double>(acc[i].judged_diff);
      row.psr_self += static_cast<double>(acc[i].judged_diff_self);
      anon_err_sum += acc[i].probe_err;
      orig_err_sum += orig_probe_err[i];
      base_sum += probe_base[i];
    }
    const double total = static_cast<double>(n_img * k);
    row.mean_id_dis /= total;
    row.mean_psnr /= total;
    row.mean_ssim /= total;
    row.psr /= total;
    row.psr_self /= total;
    const double r2_orig = 1.0 - orig_err_sum / base_sum;
    const double r2_anon =
        1.0 - (anon_err_sum / static_cast<double>(k)) / base_sum;
    row.attr_fidelity =
        (r2_orig <= 1e-9) ? 0.0 : std::max(0.0, r2_anon) / r2_orig;

    // Flag the sample whose identity distance sits closest to the mean, then
    // regenerate it from its cell stream.
    std::size_t best_i = 0, best_s = 0;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_img; ++i) {
      for (std::size_t s = 0; s < k; ++s) {
        const double gap = std::abs(acc[i].sample_id_dis[s] - row.mean_id_dis);
        if (gap < best_gap) {
          best_gap = gap;
          best_i = i;
          best_s = s;
        }
      }
    }
    Rng cell = detail::sweep_cell_rng(job.seed, e, best_i, best_s);
    const std::size_t img = job.images[best_i];
    const FaceVector x(corpus.image(img).begin(), corpus.image(img).end());
    report.flagged[e] = anonymize(x, ck, params, cell, job.renormalize);
  }

  if (ck.hash() != model_hash_before) {
    throw state_error("sweep: model parameters changed during the run");
  }
  return report;
}

}  // namespace idveil
