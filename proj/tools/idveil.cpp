// idveil command line: corpus generation, disentangler training,
// anonymization, budget sweeps, DP audits, verifier training and metric
// reports. Every command resolves its parameters as defaults < config file
// < flags, and persists the resolved set next to its outputs.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "idveil/anonymize.hpp"
#include "idveil/audit.hpp"
#include "idveil/checkpoint.hpp"
#include "idveil/config.hpp"
#include "idveil/corpus.hpp"
#include "idveil/metrics.hpp"
#include "idveil/privacy.hpp"
#include "idveil/train.hpp"
#include "idveil/verifier.hpp"

namespace fs = std::filesystem;
using namespace idveil;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParameter = 2;
constexpr int kExitState = 3;
constexpr int kExitCheck = 4;

std::string flag_name(const std::string& key) {
  std::string f = "--" + key;
  for (auto& c : f) {
    if (c == '_') c = '-';
  }
  return f;
}

// Shared resolution: config file fills whatever the command line left alone.
void resolve(CLI::App* cmd, const ParamSet& params, const std::string& config_path) {
  if (config_path.empty()) return;
  const auto file_values = load_config_file(config_path);
  params.apply(file_values, [&](const std::string& key) {
    return cmd->count(flag_name(key)) > 0;
  });
}

void persist_resolved(const fs::path& out_dir, const ParamSet& params) {
  fs::create_directories(out_dir);
  write_file(out_dir / "resolved_config.txt", params.resolved());
}

std::vector<std::size_t> select_images(const Corpus& corpus,
                                       const std::string& split_name,
                                       std::size_t limit) {
  Split split = Split::test;
  if (split_name == "train") {
    split = Split::train;
  } else if (split_name == "verifier-train") {
    split = Split::verifier_train;
  } else if (split_name != "test") {
    throw parameter_error("unknown split '" + split_name + "'");
  }
  auto idx = corpus.indices_of(split);
  if (limit > 0 && idx.size() > limit) idx.resize(limit);
  return idx;
}

// Identity embeddings of a corpus slice, one per row.
Tensor<float> slice_embeddings(const Corpus& corpus,
                               const std::vector<std::size_t>& images,
                               const Checkpoint& ck) {
  Tensor<float> out({images.size(), ck.dims.id_dim});
  for (std::size_t i = 0; i < images.size(); ++i) {
    FaceVector x(corpus.image(images[i]).begin(), corpus.image(images[i]).end());
    const auto e = encode_identity(x, ck);
    std::copy(e.values.begin(), e.values.end(), out.row(i).begin());
  }
  return out;
}

double resolve_sensitivity(const Corpus& corpus, const Checkpoint& ck,
                           double override_value, const std::string& method) {
  if (override_value > 0) return override_value;
  if (method == "analytic-cap") {
    return analytic_sensitivity_cap(ck.dims.id_dim, corpus.manifest.hash())
        .delta_f;
  }
  if (method != "corpus-max") {
    throw parameter_error("unknown sensitivity method '" + method + "'");
  }
  const auto images = corpus.indices_of(Split::test);
  return compute_sensitivity(slice_embeddings(corpus, images, ck),
                             corpus.manifest.hash())
      .delta_f;
}

// ---------------------------------------------------------------------------

struct GenParams {
  std::uint64_t seed = 7;
  std::size_t subjects = 200;
  std::size_t images_per_subject = 10;
  std::size_t pixel_dim = 256;
  std::size_t id_factor_dim = 8;
  std::size_t attr_factor_dim = 8;
  std::size_t train_subjects = 120;
  std::size_t verifier_subjects = 40;
  std::size_t test_subjects = 40;
  std::string out;
};

int cmd_gen(const GenParams& p, const ParamSet& params) {
  CorpusManifest m;
  m.seed = p.seed;
  m.subjects = p.subjects;
  m.images_per_subject = p.images_per_subject;
  m.pixel_dim = p.pixel_dim;
  m.id_factor_dim = p.id_factor_dim;
  m.attr_factor_dim = p.attr_factor_dim;
  m.train_subjects = p.train_subjects;
  m.verifier_subjects = p.verifier_subjects;
  m.test_subjects = p.test_subjects;
  m.validate();
  persist_resolved(p.out, params);
  Rng rng(m.seed);
  const Corpus corpus = generate_corpus(m, rng);
  corpus.save(p.out);
  std::cout << "corpus: " << corpus.manifest.image_count() << " images, "
            << m.subjects << " subjects -> " << p.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainParams {
  std::string corpus;
  std::string out;
  double lambda_att = 10.0, lambda_id = 5.0, lambda_rec = 10.0;
  double learning_rate = 4e-4, beta1 = 0.0, beta2 = 0.999;
  std::size_t batch_size = 32;
  double cross_fraction = 0.5;
  std::uint64_t max_steps = 6000;
  std::uint64_t seed = 1;
  std::uint64_t log_interval = 50;
  std::size_t id_dim = 16;
  std::size_t id_hidden1 = 128, id_hidden2 = 64;
  std::size_t attr_hidden = 64, attr_bottleneck = 32;
  std::vector<std::size_t> attr_levels = {32, 16, 8};
  std::size_t fusion_width = 64;
  std::size_t disc_hidden1 = 64, disc_hidden2 = 32;
};

int cmd_train(const TrainParams& p, const ParamSet& params) {
  const Corpus corpus = Corpus::load(p.corpus);
  ModelDims dims;
  dims.input_dim = corpus.manifest.pixel_dim;
  dims.id_dim = p.id_dim;
  dims.id_hidden1 = p.id_hidden1;
  dims.id_hidden2 = p.id_hidden2;
  dims.attr_hidden = p.attr_hidden;
  dims.attr_bottleneck = p.attr_bottleneck;
  dims.attr_level_dims = p.attr_levels;
  dims.fusion_width = p.fusion_width;
  dims.disc_hidden1 = p.disc_hidden1;
  dims.disc_hidden2 = p.disc_hidden2;

  TrainConfig cfg;
  cfg.lambda_att = p.lambda_att;
  cfg.lambda_id = p.lambda_id;
  cfg.lambda_rec = p.lambda_rec;
  cfg.learning_rate = p.learning_rate;
  cfg.beta1 = p.beta1;
  cfg.beta2 = p.beta2;
  cfg.batch_size = p.batch_size;
  cfg.cross_fraction = p.cross_fraction;
  cfg.max_steps = p.max_steps;
  cfg.seed = p.seed;
  cfg.log_interval = p.log_interval;
  cfg.validate();
  dims.validate();

  persist_resolved(p.out, params);
  Rng rng(cfg.seed);
  const TrainResult result = train_stage1(corpus, dims, cfg, rng);
  result.checkpoint.save(p.out);
  write_file(fs::path(p.out) / "loss_history.csv",
             loss_history_csv(result.history));
  if (!result.history.empty()) {
    const auto& last = result.history.back();
    std::cout << "trained " << cfg.max_steps << " steps; final losses: adv="
              << format_double(last.adv) << " id=" << format_double(last.id)
              << " att=" << format_double(last.att)
              << " rec=" << format_double(last.rec) << "\n";
  } else {
    std::cout << "trained 0 steps (checkpoint equals initialization)\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct VerifyTrainParams {
  std::string corpus;
  std::string out;
  std::size_t hidden1 = 64, hidden2 = 32;
  double learning_rate = 1e-3, beta1 = 0.9, beta2 = 0.999;
  std::size_t batch_size = 32;
  std::uint64_t steps = 1500;
  std::uint64_t seed = 11;
};

int cmd_verify_train(const VerifyTrainParams& p, const ParamSet& params) {
  const Corpus corpus = Corpus::load(p.corpus);
  VerifierConfig cfg;
  cfg.hidden1 = p.hidden1;
  cfg.hidden2 = p.hidden2;
  cfg.learning_rate = p.learning_rate;
  cfg.beta1 = p.beta1;
  cfg.beta2 = p.beta2;
  cfg.batch_size = p.batch_size;
  cfg.steps = p.steps;
  cfg.seed = p.seed;
  persist_resolved(p.out, params);
  Rng rng(cfg.seed);
  const Verifier v = train_verifier(corpus, cfg, rng);
  v.save(p.out);
  std::cout << "verifier trained: eer=" << format_double(v.eer())
            << " tau=" << format_double(v.tau()) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AnonymizeParams {
  std::string corpus;
  std::string checkpoint;
  std::string verifier;
  std::string out;
  double epsilon = 6.0;
  double delta_f = 0.0;  // 0 = derive from the corpus
  std::string sensitivity_method = "corpus-max";
  std::string split = "test";
  std::size_t limit = 100;
  std::size_t samples = 1;
  std::uint64_t seed = 0;
  bool renormalize = false;
};

int cmd_anonymize(const AnonymizeParams& p, const ParamSet& params) {
  const Corpus corpus = Corpus::load(p.corpus);
  const Checkpoint ck = Checkpoint::load(p.checkpoint);
  const Verifier verifier = Verifier::load(p.verifier);
  const auto images = select_images(corpus, p.split, p.limit);
  if (images.empty()) throw parameter_error("anonymize: empty image slice");
  const double delta_f =
      resolve_sensitivity(corpus, ck, p.delta_f, p.sensitivity_method);
  const PrivacyParams privacy{p.epsilon, delta_f};
  privacy.validate();
  persist_resolved(p.out, params);
  const AttributeProbe probe = AttributeProbe::fit(corpus);

  Tensor<float> anon({images.size() * p.samples, corpus.manifest.pixel_dim});
  Tensor<float> indices({images.size() * p.samples});
  std::string csv =
      "image,sample,id_dis,judged_different,psnr,ssim,attr_fidelity\n";
  Rng root(p.seed);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const FaceVector x(corpus.image(images[i]).begin(),
                       corpus.image(images[i]).end());
    const auto gt = corpus.factors(images[i]);
    for (std::size_t s = 0; s < p.samples; ++s) {
      Rng cell = root.split("anonymize").split(i).split(s);
      const FaceVector y = anonymize(x, ck, privacy, cell, p.renormalize);
      const std::size_t row = i * p.samples + s;
      std::copy(y.begin(), y.end(), anon.row(row).begin());
      indices[row] = static_cast<float>(images[i]);
      const double dist = identity_distance(x, y, verifier);
      csv += std::to_string(images[i]) + "," + std::to_string(s) + "," +
             format_double(dist) + "," +
             (dist > 1.0 - verifier.tau() ? "1" : "0") + "," +
             format_double(psnr(x, y)) + "," + format_double(ssim(x, y)) +
             "," + format_double(attribute_fidelity(x, y, gt, probe)) + "\n";
    }
  }
  save_tensor(fs::path(p.out) / "anon.idpt", anon);
  save_tensor(fs::path(p.out) / "indices.idpt", indices);
  write_file(fs::path(p.out) / "metrics.csv", csv);
  std::cout << "anonymized " << images.size() << " images x " << p.samples
            << " samples at epsilon=" << format_double(p.epsilon)
            << " (delta_f=" << format_double(delta_f) << ") -> " << p.out
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SweepParams {
  std::string corpus;
  std::string checkpoint;
  std::string verifier;
  std::string out;
  std::vector<double> epsilons = {1.1, 2, 5, 10, 25, 50, 100, 200, 400, 800};
  std::size_t samples = 20;
  double delta_f = 0.0;
  std::string sensitivity_method = "corpus-max";
  std::string split = "test";
  std::size_t limit = 100;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool renormalize = false;
  bool assert_trends = false;
};

int cmd_sweep(const SweepParams& p, const ParamSet& params) {
  const Corpus corpus = Corpus::load(p.corpus);
  const Checkpoint ck = Checkpoint::load(p.checkpoint);
  const Verifier verifier = Verifier::load(p.verifier);

  SweepSpec spec;
  spec.epsilons = p.epsilons;
  spec.samples_per_image = p.samples;
  spec.validate();

  AnonymizationJob job;
  job.images = select_images(corpus, p.split, p.limit);
  job.delta_f = resolve_sensitivity(corpus, ck, p.delta_f, p.sensitivity_method);
  job.seed = p.seed;
  job.renormalize = p.renormalize;
  job.threads = p.threads;

  persist_resolved(p.out, params);
  const AttributeProbe probe = AttributeProbe::fit(corpus);
  const double encoder_tau = calibrate_encoder_threshold(corpus, ck);
  const SweepReport report =
      run_sweep(spec, job, corpus, ck, verifier, encoder_tau, probe);

  write_file(fs::path(p.out) / "sweep.csv", report.csv());
  for (std::size_t e = 0; e < report.flagged.size(); ++e) {
    Tensor<float> t({report.flagged[e].size()});
    std::copy(report.flagged[e].begin(), report.flagged[e].end(),
              t.raw().begin());
    save_tensor(fs::path(p.out) / ("flagged_" + std::to_string(e) + ".idpt"), t);
  }
  std::cout << report.csv();

  if (p.assert_trends) {
    std::vector<double> eps, psr_col, psnr_col, ssim_col, fid_col, self_col;
    for (const auto& r : report.rows) {
      eps.push_back(r.epsilon);
      psr_col.push_back(r.psr);
      psnr_col.push_back(r.mean_psnr);
      ssim_col.push_back(r.mean_ssim);
      fid_col.push_back(r.attr_fidelity);
      self_col.push_back(r.psr_self);
    }
    struct Check {
      const char* name;
      double rho;
      bool ok;
    };
    const std::vector<Check> checks = {
        {"rho(eps, psr) <= -0.9", spearman(eps, psr_col),
         spearman(eps, psr_col) <= -0.9},
        {"rho(eps, psnr) >= 0.9", spearman(eps, psnr_col),
         spearman(eps, psnr_col) >= 0.9},
        {"rho(eps, ssim) >= 0.9", spearman(eps, ssim_col),
         spearman(eps, ssim_col) >= 0.9},
        {"rho(eps, attr_fidelity) >= 0.8", spearman(eps, fid_col),
         spearman(eps, fid_col) >= 0.8},
        {"rho(psr, psr_self) >= 0.8", spearman(psr_col, self_col),
         spearman(psr_col, self_col) >= 0.8},
    };
    bool all_ok = true;
    for (const auto& c : checks) {
      std::cout << (c.ok ? "trend ok:   " : "trend FAIL: ") << c.name
                << " (rho=" << format_double(c.rho) << ")\n";
      all_ok = all_ok && c.ok;
    }
    if (!all_ok) throw check_failure("sweep trend assertions failed");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AuditParams {
  std::string corpus;
  std::string checkpoint;
  std::string out;
  std::vector<double> epsilons = {0.5, 1.1, 6, 100, 800};
  std::size_t pairs = 50;
  std::size_t samples = 10000;
  double delta_f = 0.0;
  std::string sensitivity_method = "corpus-max";
  std::uint64_t seed = 0;
  bool postprocess = false;
  std::size_t post_samples = 20000;
  std::size_t post_pixel = 0;
  std::size_t post_bins = 8;
};

int cmd_audit(const AuditParams& p, const ParamSet& params) {
  const Corpus corpus = Corpus::load(p.corpus);
  const Checkpoint ck = Checkpoint::load(p.checkpoint);
  const auto images = corpus.indices_of(Split::test);
  if (images.size() < 2) throw parameter_error("audit: need >= 2 test images");
  const Tensor<float> embeds = slice_embeddings(corpus, images, ck);
  const double delta_f =
      resolve_sensitivity(corpus, ck, p.delta_f, p.sensitivity_method);
  persist_resolved(p.out, params);

  Rng root(p.seed);
  Rng pair_rng = root.split("pairs");
  std::string csv = std::string(kAuditCsvHeader) + "\n";
  bool any_fail = false;
  for (double eps : p.epsilons) {
    for (std::size_t k = 0; k < p.pairs; ++k) {
      std::size_t i = pair_rng.next_u64() % embeds.dim(0);
      std::size_t j = pair_rng.next_u64() % embeds.dim(0);
      const auto a_row = embeds.row(i);
      const auto b_row = embeds.row(j);
      std::vector<double> a(a_row.begin(), a_row.end());
      std::vector<double> b(b_row.begin(), b_row.end());
      Rng audit_rng = root.split("audit").split(static_cast<std::uint64_t>(
          eps * 1000)).split(k);
      const AuditReport report = audit_mechanism(
          a, b, PrivacyParams{eps, delta_f}, p.samples, audit_rng);
      csv += report.csv_row() + "\n";
      std::cout << report.summary() << "\n";
      any_fail = any_fail || !report.pass;
    }
  }
  write_file(fs::path(p.out) / "audit.csv", csv);

  if (p.postprocess) {
    // Fix one test image's attribute stack; the post-processing map fuses the
    // noisy embedding with it and quantizes one output pixel.
    const std::size_t per = corpus.manifest.images_per_subject;
    const std::size_t img_a = images[0];
    const std::size_t img_b = images[1 % images.size()];
    FaceVector xa(corpus.image(img_a).begin(), corpus.image(img_a).end());
    FaceVector xb(corpus.image(img_b).begin(), corpus.image(img_b).end());
    (void)per;
    const AttributeStack att = encode_attributes(xa, ck);
    const auto ea = encode_identity(xa, ck);
    const auto eb = encode_identity(xb, ck);
    const std::size_t pixel = p.post_pixel % corpus.manifest.pixel_dim;
    const std::size_t bins = p.post_bins;
    PostMap postmap = [&](const std::vector<float>& noisy) -> std::size_t {
      const FaceVector y = fuse(IdentityEmbedding{noisy}, att, ck);
      const double v = std::clamp(static_cast<double>(y[pixel]), 0.0, 1.0);
      return std::min<std::size_t>(bins - 1, static_cast<std::size_t>(
                                                 v * static_cast<double>(bins)));
    };
    std::string post_csv = std::string(kAuditCsvHeader) + "\n";
    for (double eps : p.epsilons) {
      Rng post_rng = root.split("postprocess").split(
          static_cast<std::uint64_t>(eps * 1000));
      const AuditReport report = audit_postprocessed(
          ea.values, eb.values, PrivacyParams{eps, delta_f}, postmap, bins,
          p.post_samples, post_rng);
      post_csv += report.csv_row() + "\n";
      std::cout << "postprocess " << report.summary() << "\n";
      any_fail = any_fail || (report.conclusive && !report.pass);
    }
    write_file(fs::path(p.out) / "audit_postprocessed.csv", post_csv);
  }
  if (any_fail) throw check_failure("one or more audits failed");
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct MetricsParams {
  std::string corpus;
  std::string verifier;
  std::string run;  // directory produced by the anonymize command
  std::string out;
};

int cmd_metrics(const MetricsParams& p, const ParamSet& params) {
  const Corpus corpus = Corpus::load(p.corpus);
  const Verifier verifier = Verifier::load(p.verifier);
  const Tensor<float> anon = load_tensor(fs::path(p.run) / "anon.idpt");
  const Tensor<float> indices = load_tensor(fs::path(p.run) / "indices.idpt");
  if (anon.rank() != 2 || anon.dim(0) != indices.size() ||
      anon.dim(1) != corpus.manifest.pixel_dim) {
    throw state_error("metrics: run tensors do not match the corpus");
  }
  persist_resolved(p.out, params);
  const AttributeProbe probe = AttributeProbe::fit(corpus);

  std::string csv =
      "image,id_dis,judged_different,psnr,ssim,attr_fidelity\n";
  double sum_dis = 0, sum_psnr = 0, sum_ssim = 0, sum_fid = 0;
  std::size_t protected_count = 0;
  const std::size_t n = anon.dim(0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto img = static_cast<std::size_t>(indices[r]);
    const FaceVector x(corpus.image(img).begin(), corpus.image(img).end());
    const FaceVector y(anon.row(r).begin(), anon.row(r).end());
    const auto gt = corpus.factors(img);
    const double dis = identity_distance(x, y, verifier);
    const bool diff = dis > 1.0 - verifier.tau();
    const double pn = psnr(x, y);
    const double ss = ssim(x, y);
    const double fid = attribute_fidelity(x, y, gt, probe);
    csv += std::to_string(img) + "," + format_double(dis) + "," +
           (diff ? "1" : "0") + "," + format_double(pn) + "," +
           format_double(ss) + "," + format_double(fid) + "\n";
    sum_dis += dis;
    sum_psnr += pn;
    sum_ssim += ss;
    sum_fid += fid;
    if (diff) ++protected_count;
  }
  write_file(fs::path(p.out) / "metrics.csv", csv);
  const double dn = static_cast<double>(n);
  std::string agg = "mean_id_dis,psr,mean_psnr,mean_ssim,attr_fidelity\n";
  agg += format_double(sum_dis / dn) + "," +
         format_double(static_cast<double>(protected_count) / dn) + "," +
         format_double(sum_psnr / dn) + "," + format_double(sum_ssim / dn) +
         "," + format_double(sum_fid / dn) + "\n";
  write_file(fs::path(p.out) / "aggregates.csv", agg);
  std::cout << agg;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"identity-veiling pipeline: disentangle, perturb, reconstruct"};
  app.require_subcommand(1);

  GenParams gen;
  TrainParams train;
  VerifyTrainParams vtrain;
  AnonymizeParams anon;
  SweepParams sweep;
  AuditParams audit;
  MetricsParams metrics;
  ParamSet gen_ps, train_ps, vtrain_ps, anon_ps, sweep_ps, audit_ps, metrics_ps;
  std::string gen_cfg, train_cfg, vtrain_cfg, anon_cfg, sweep_cfg, audit_cfg,
      metrics_cfg;

  const std::string default_out = default_output_root().string();

  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic corpus");
  {
    gen.out = default_out + "/corpus";
    gen_cmd->add_option("--config", gen_cfg, "key = value config file");
    gen_cmd->add_option("--seed", gen.seed, "corpus seed");
    gen_cmd->add_option("--subjects", gen.subjects, "number of subjects");
    gen_cmd->add_option("--images-per-subject", gen.images_per_subject,
                        "images per subject");
    gen_cmd->add_option("--pixel-dim", gen.pixel_dim,
                        "face vector length (perfect square)");
    gen_cmd->add_option("--id-factor-dim", gen.id_factor_dim,
                        "identity factor dimension");
    gen_cmd->add_option("--attr-factor-dim", gen.attr_factor_dim,
                        "attribute factor dimension");
    gen_cmd->add_option("--train-subjects", gen.train_subjects,
                        "subjects in the train split");
    gen_cmd->add_option("--verifier-subjects", gen.verifier_subjects,
                        "subjects in the verifier-train split");
    gen_cmd->add_option("--test-subjects", gen.test_subjects,
                        "subjects in the test split");
    gen_cmd->add_option("--out", gen.out, "output directory");
    gen_ps.add_u64("seed", &gen.seed);
    gen_ps.add_size("subjects", &gen.subjects);
    gen_ps.add_size("images_per_subject", &gen.images_per_subject);
    gen_ps.add_size("pixel_dim", &gen.pixel_dim);
    gen_ps.add_size("id_factor_dim", &gen.id_factor_dim);
    gen_ps.add_size("attr_factor_dim", &gen.attr_factor_dim);
    gen_ps.add_size("train_subjects", &gen.train_subjects);
    gen_ps.add_size("verifier_subjects", &gen.verifier_subjects);
    gen_ps.add_size("test_subjects", &gen.test_subjects);
    gen_ps.add_string("out", &gen.out);
  }

  auto* train_cmd = app.add_subcommand("train", "train the disentangler");
  {
    train.out = default_out + "/checkpoint";
    train_cmd->add_option("--config", train_cfg, "key = value config file");
    train_cmd->add_option("--corpus", train.corpus, "corpus directory")
        ->required();
    train_cmd->add_option("--out", train.out, "checkpoint output directory");
    train_cmd->add_option("--lambda-att", train.lambda_att,
                          "attribute loss weight");
    train_cmd->add_option("--lambda-id", train.lambda_id,
                          "identity loss weight");
    train_cmd->add_option("--lambda-rec", train.lambda_rec,
                          "reconstruction loss weight");
    train_cmd->add_option("--learning-rate", train.learning_rate,
                          "Adam learning rate");
    train_cmd->add_option("--beta1", train.beta1, "Adam beta1");
    train_cmd->add_option("--beta2", train.beta2, "Adam beta2");
    train_cmd->add_option("--batch-size", train.batch_size, "batch size");
    train_cmd->add_option("--cross-fraction", train.cross_fraction,
                          "fraction of identity/attribute swap pairs");
    train_cmd->add_option("--max-steps", train.max_steps, "training steps");
    train_cmd->add_option("--seed", train.seed, "training seed");
    train_cmd->add_option("--log-interval", train.log_interval,
                          "steps between loss log rows");
    train_cmd->add_option("--id-dim", train.id_dim,
                          "identity embedding dimension");
    train_cmd->add_option("--id-hidden1", train.id_hidden1,
                          "identity encoder hidden width 1");
    train_cmd->add_option("--id-hidden2", train.id_hidden2,
                          "identity encoder hidden width 2");
    train_cmd->add_option("--attr-hidden", train.attr_hidden,
                          "attribute encoder hidden width");
    train_cmd->add_option("--attr-bottleneck", train.attr_bottleneck,
                          "attribute encoder bottleneck width");
    train_cmd->add_option("--attr-levels", train.attr_levels,
                          "attribute level dimensions");
    train_cmd->add_option("--fusion-width", train.fusion_width,
                          "fusion generator state width");
    train_cmd->add_option("--disc-hidden1", train.disc_hidden1,
                          "discriminator hidden width 1");
    train_cmd->add_option("--disc-hidden2", train.disc_hidden2,
                          "discriminator hidden width 2");
    train_ps.add_string("corpus", &train.corpus);
    train_ps.add_string("out", &train.out);
    train_ps.add_double("lambda_att", &train.lambda_att);
    train_ps.add_double("lambda_id", &train.lambda_id);
    train_ps.add_double("lambda_rec", &train.lambda_rec);
    train_ps.add_double("learning_rate", &train.learning_rate);
    train_ps.add_double("beta1", &train.beta1);
    train_ps.add_double("beta2", &train.beta2);
    train_ps.add_size("batch_size", &train.batch_size);
    train_ps.add_double("cross_fraction", &train.cross_fraction);
    train_ps.add_u64("max_steps", &train.max_steps);
    train_ps.add_u64("seed", &train.seed);
    train_ps.add_u64("log_interval", &train.log_interval);
    train_ps.add_size("id_dim", &train.id_dim);
    train_ps.add_size("id_hidden1", &train.id_hidden1);
    train_ps.add_size("id_hidden2", &train.id_hidden2);
    train_ps.add_size("attr_hidden", &train.attr_hidden);
    train_ps.add_size("attr_bottleneck", &train.attr_bottleneck);
    train_ps.add_size_list("attr_levels", &train.attr_levels);
    train_ps.add_size("fusion_width", &train.fusion_width);
    train_ps.add_size("disc_hidden1", &train.disc_hidden1);
    train_ps.add_size("disc_hidden2", &train.disc_hidden2);
  }

  auto* vtrain_cmd =
      app.add_subcommand("verify-train", "train the independent verifier");
  {
    vtrain.out = default_out + "/verifier";
    vtrain_cmd->add_option("--config", vtrain_cfg, "key = value config file");
    vtrain_cmd->add_option("--corpus", vtrain.corpus, "corpus directory")
        ->required();
    vtrain_cmd->add_option("--out", vtrain.out, "verifier output directory");
    vtrain_cmd->add_option("--hidden1", vtrain.hidden1, "hidden width 1");
    vtrain_cmd->add_option("--hidden2", vtrain.hidden2,
                           "hidden width 2 (embedding)");
    vtrain_cmd->add_option("--learning-rate", vtrain.learning_rate,
                           "Adam learning rate");
    vtrain_cmd->add_option("--beta1", vtrain.beta1, "Adam beta1");
    vtrain_cmd->add_option("--beta2", vtrain.beta2, "Adam beta2");
    vtrain_cmd->add_option("--batch-size", vtrain.batch_size, "batch size");
    vtrain_cmd->add_option("--steps", vtrain.steps, "training steps");
    vtrain_cmd->add_option("--seed", vtrain.seed, "training seed");
    vtrain_ps.add_string("corpus", &vtrain.corpus);
    vtrain_ps.add_string("out", &vtrain.out);
    vtrain_ps.add_size("hidden1", &vtrain.hidden1);
    vtrain_ps.add_size("hidden2", &vtrain.hidden2);
    vtrain_ps.add_double("learning_rate", &vtrain.learning_rate);
    vtrain_ps.add_double("beta1", &vtrain.beta1);
    vtrain_ps.add_double("beta2", &vtrain.beta2);
    vtrain_ps.add_size("batch_size", &vtrain.batch_size);
    vtrain_ps.add_u64("steps", &vtrain.steps);
    vtrain_ps.add_u64("seed", &vtrain.seed);
  }

  auto* anon_cmd =
      app.add_subcommand("anonymize", "anonymize a corpus slice");
  {
    anon.out = default_out + "/anonymized";
    anon_cmd->add_option("--config", anon_cfg, "key = value config file");
    anon_cmd->add_option("--corpus", anon.corpus, "corpus directory")
        ->required();
    anon_cmd->add_option("--checkpoint", anon.checkpoint,
                         "trained checkpoint directory")
        ->required();
    anon_cmd->add_option("--verifier", anon.verifier, "verifier directory")
        ->required();
    anon_cmd->add_option("--out", anon.out, "output directory");
    anon_cmd->add_option("--epsilon", anon.epsilon,
                         "privacy budget (recommended range 5-15)");
    anon_cmd->add_option("--delta-f", anon.delta_f,
                         "L1 sensitivity override (0 = derive from corpus)");
    anon_cmd->add_option("--sensitivity-method", anon.sensitivity_method,
                         "corpus-max or analytic-cap");
    anon_cmd->add_option("--split", anon.split,
                         "corpus split: train, verifier-train or test");
    anon_cmd->add_option("--limit", anon.limit, "max images (0 = all)");
    anon_cmd->add_option("--samples", anon.samples, "samples per image");
    anon_cmd->add_option("--seed", anon.seed, "noise seed");
    anon_cmd->add_flag("--renormalize", anon.renormalize,
                       "project the perturbed embedding back to unit norm");
    anon_ps.add_string("corpus", &anon.corpus);
    anon_ps.add_string("checkpoint", &anon.checkpoint);
    anon_ps.add_string("verifier", &anon.verifier);
    anon_ps.add_string("out", &anon.out);
    anon_ps.add_double("epsilon", &anon.epsilon);
    anon_ps.add_double("delta_f", &anon.delta_f);
    anon_ps.add_string("sensitivity_method", &anon.sensitivity_method);
    anon_ps.add_string("split", &anon.split);
    anon_ps.add_size("limit", &anon.limit);
    anon_ps.add_size("samples", &anon.samples);
    anon_ps.add_u64("seed", &anon.seed);
    anon_ps.add_bool("renormalize", &anon.renormalize);
  }

  auto* sweep_cmd =
      app.add_subcommand("sweep", "privacy/utility trade-off across budgets");
  {
    sweep.out = default_out + "/sweep";
    sweep_cmd->add_option("--config", sweep_cfg, "key = value config file");
    sweep_cmd->add_option("--corpus", sweep.corpus, "corpus directory")
        ->required();
    sweep_cmd->add_option("--checkpoint", sweep.checkpoint,
                          "trained checkpoint directory")
        ->required();
    sweep_cmd->add_option("--verifier", sweep.verifier, "verifier directory")
        ->required();
    sweep_cmd->add_option("--out", sweep.out, "output directory");
    sweep_cmd->add_option("--epsilons", sweep.epsilons,
                          "epsilon grid, strictly increasing");
    sweep_cmd->add_option("--samples", sweep.samples, "samples per image");
    sweep_cmd->add_option("--delta-f", sweep.delta_f,
                          "L1 sensitivity override (0 = derive)");
    sweep_cmd->add_option("--sensitivity-method", sweep.sensitivity_method,
                          "corpus-max or analytic-cap");
    sweep_cmd->add_option("--split", sweep.split, "corpus split");
    sweep_cmd->add_option("--limit", sweep.limit, "max images (0 = all)");
    sweep_cmd->add_option("--seed", sweep.seed, "noise seed");
    sweep_cmd->add_option("--threads", sweep.threads, "worker thread cap");
    sweep_cmd->add_flag("--renormalize", sweep.renormalize,
                        "renormalize perturbed embeddings");
    sweep_cmd->add_flag("--assert-trends", sweep.assert_trends,
                        "fail (exit 4) unless the monotone trends hold");
    sweep_ps.add_string("corpus", &sweep.corpus);
    sweep_ps.add_string("checkpoint", &sweep.checkpoint);
    sweep_ps.add_string("verifier", &sweep.verifier);
    sweep_ps.add_string("out", &sweep.out);
    sweep_ps.add_double_list("epsilons", &sweep.epsilons);
    sweep_ps.add_size("samples", &sweep.samples);
    sweep_ps.add_double("delta_f", &sweep.delta_f);
    sweep_ps.add_string("sensitivity_method", &sweep.sensitivity_method);
    sweep_ps.add_string("split", &sweep.split);
    sweep_ps.add_size("limit", &sweep.limit);
    sweep_ps.add_u64("seed", &sweep.seed);
    sweep_ps.add_size("threads", &sweep.threads);
    sweep_ps.add_bool("renormalize", &sweep.renormalize);
    sweep_ps.add_bool("assert_trends", &sweep.assert_trends);
  }

  auto* audit_cmd =
      app.add_subcommand("audit", "certify the privacy bound empirically");
  {
    audit.out = default_out + "/audit";
    audit_cmd->add_option("--config", audit_cfg, "key = value config file");
    audit_cmd->add_option("--corpus", audit.corpus, "corpus directory")
        ->required();
    audit_cmd->add_option("--checkpoint", audit.checkpoint,
                          "trained checkpoint directory")
        ->required();
    audit_cmd->add_option("--out", audit.out, "output directory");
    audit_cmd->add_option("--epsilons", audit.epsilons, "budgets to audit");
    audit_cmd->add_option("--pairs", audit.pairs, "random pairs per budget");
    audit_cmd->add_option("--samples", audit.samples,
                          "mechanism samples per pair");
    audit_cmd->add_option("--delta-f", audit.delta_f,
                          "L1 sensitivity override (0 = derive)");
    audit_cmd->add_option("--sensitivity-method", audit.sensitivity_method,
                          "corpus-max or analytic-cap");
    audit_cmd->add_option("--seed", audit.seed, "audit seed");
    audit_cmd->add_flag("--postprocess", audit.postprocess,
                        "also audit through the full reconstruction postmap");
    audit_cmd->add_option("--post-samples", audit.post_samples,
                          "samples per side for the post-processing audit");
    audit_cmd->add_option("--post-pixel", audit.post_pixel,
                          "output pixel quantized by the postmap");
    audit_cmd->add_option("--post-bins", audit.post_bins,
                          "quantization bins for the postmap");
    audit_ps.add_string("corpus", &audit.corpus);
    audit_ps.add_string("checkpoint", &audit.checkpoint);
    audit_ps.add_string("out", &audit.out);
    audit_ps.add_double_list("epsilons", &audit.epsilons);
    audit_ps.add_size("pairs", &audit.pairs);
    audit_ps.add_size("samples", &audit.samples);
    audit_ps.add_double("delta_f", &audit.delta_f);
    audit_ps.add_string("sensitivity_method", &audit.sensitivity_method);
    audit_ps.add_u64("seed", &audit.seed);
    audit_ps.add_bool("postprocess", &audit.postprocess);
    audit_ps.add_size("post_samples", &audit.post_samples);
    audit_ps.add_size("post_pixel", &audit.post_pixel);
    audit_ps.add_size("post_bins", &audit.post_bins);
  }

  auto* metrics_cmd =
      app.add_subcommand("metrics", "score an anonymization run");
  {
    metrics.out = default_out + "/metrics";
    metrics_cmd->add_option("--config", metrics_cfg, "key = value config file");
    metrics_cmd->add_option("--corpus", metrics.corpus, "corpus directory")
        ->required();
    metrics_cmd->add_option("--verifier", metrics.verifier,
                            "verifier directory")
        ->required();
    metrics_cmd->add_option("--run", metrics.run,
                            "anonymize output directory")
        ->required();
    metrics_cmd->add_option("--out", metrics.out, "output directory");
    metrics_ps.add_string("corpus", &metrics.corpus);
    metrics_ps.add_string("verifier", &metrics.verifier);
    metrics_ps.add_string("run", &metrics.run);
    metrics_ps.add_string("out", &metrics.out);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitParameter;
  }

  try {
    if (gen_cmd->parsed()) {
      resolve(gen_cmd, gen_ps, gen_cfg);
      return cmd_gen(gen, gen_ps);
    }
    if (train_cmd->parsed()) {
      resolve(train_cmd, train_ps, train_cfg);
      return cmd_train(train, train_ps);
    }
    if (vtrain_cmd->parsed()) {
      resolve(vtrain_cmd, vtrain_ps, vtrain_cfg);
      return cmd_verify_train(vtrain, vtrain_ps);
    }
    if (anon_cmd->parsed()) {
      resolve(anon_cmd, anon_ps, anon_cfg);
      return cmd_anonymize(anon, anon_ps);
    }
    if (sweep_cmd->parsed()) {
      resolve(sweep_cmd, sweep_ps, sweep_cfg);
      return cmd_sweep(sweep, sweep_ps);
    }
    if (audit_cmd->parsed()) {
      resolve(audit_cmd, audit_ps, audit_cfg);
      return cmd_audit(audit, audit_ps);
    }
    if (metrics_cmd->parsed()) {
      resolve(metrics_cmd, metrics_ps, metrics_cfg);
      return cmd_metrics(metrics, metrics_ps);
    }
  } catch (const check_failure& e) {
    std::cerr << "check failed: " << e.what() << "\n";
    return kExitCheck;
  } catch (const parameter_error& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return kExitParameter;
  } catch (const training_error& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitState;
  } catch (const state_error& e) {
    std::cerr << "state error: " << e.what() << "\n";
    return kExitState;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
