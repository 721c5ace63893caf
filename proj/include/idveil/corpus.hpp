// Synthetic corpus with known ground-truth identity and attribute factors.
//
// Each "face" is a pixel vector in [0,1]^m produced by a fixed random mixing
// of a per-subject identity factor and a per-image attribute factor:
//
//   x = sigmoid(W_id z_id + W_at z_at + W_ix t + b),   t_r = (u_r.z_id)(v_r.z_at)
//
// The rank-4 bilinear term t makes the factors interact, so recovering them
// is not a purely linear problem. All maps are drawn once per corpus from the
// manifest seed; regenerating with the same manifest is bit-identical.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "idveil/common.hpp"
#include "idveil/rng.hpp"
#include "idveil/tensor.hpp"
#include "idveil/tensor_io.hpp"

namespace idveil {

enum class Split { train, verifier_train, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::verifier_train: return "verifier-train";
    case Split::test: return "test";
  }
  return "?";
}

struct CorpusManifest {
  std::uint64_t seed = 7;
  std::size_t subjects = 200;
  std::size_t images_per_subject = 10;
  std::size_t pixel_dim = 256;
  std::size_t id_factor_dim = 8;
  std::size_t attr_factor_dim = 8;
  std::size_t train_subjects = 120;
  std::size_t verifier_subjects = 40;
  std::size_t test_subjects = 40;

  std::size_t image_count() const { return subjects * images_per_subject; }

  void validate() const {
    if (subjects < 3) {
      throw parameter_error("manifest: need at least 3 subjects, got " +
                            std::to_string(subjects));
    }
    if (images_per_subject < 2) {
      throw parameter_error("manifest: need at least 2 images per subject");
    }
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(
        static_cast<double>(pixel_dim))));
    if (side * side != pixel_dim) {
      throw parameter_error("manifest: pixel_dim " + std::to_string(pixel_dim) +
                            " is not a perfect square");
    }
    if (train_subjects + verifier_subjects + test_subjects != subjects) {
      throw parameter_error("manifest: split sizes must sum to subject count");
    }
    if (train_subjects == 0 || verifier_subjects == 0 || test_subjects == 0) {
      throw parameter_error("manifest: every split needs at least one subject");
    }
    if (id_factor_dim == 0 || attr_factor_dim == 0) {
      throw parameter_error("manifest: factor dimensions must be positive");
    }
  }

  Split split_of_subject(std::size_t subject) const {
    if (subject < train_subjects) return Split::train;
    if (subject < train_subjects + verifier_subjects) {
      return Split::verifier_train;
    }
    return Split::test;
  }

  std::string to_text() const {
    std::ostringstream out;
    out << "seed = " << seed << "\n";
    out << "subjects = " << subjects << "\n";
    out << "images_per_subject = " << images_per_subject << "\n";
    out << "pixel_dim = " << pixel_dim << "\n";
    out << "id_factor_dim = " << id_factor_dim << "\n";
    out << "attr_factor_dim = " << attr_factor_dim << "\n";
    out << "train_subjects = " << train_subjects << "\n";
    out << "verifier_subjects = " << verifier_subjects << "\n";
    out << "test_subjects = " << test_subjects << "\n";
    return out.str();
  }

  static CorpusManifest from_text(const std::string& text);

  std::string hash() const { return to_hex(fnv1a64(to_text())); }
};

namespace detail {
inline std::map<std::string, std::string> parse_key_values(
    const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}
}  // namespace detail

inline CorpusManifest CorpusManifest::from_text(const std::string& text) {
  auto kv = detail::parse_key_values(text);
  CorpusManifest m;
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw state_error(std::string("manifest: missing key ") + key);
    }
    return it->second;
  };
  m.seed = std::stoull(need("seed"));
  m.subjects = std::stoull(need("subjects"));
  m.images_per_subject = std::stoull(need("images_per_subject"));
  m.pixel_dim = std::stoull(need("pixel_dim"));
  m.id_factor_dim = std::stoull(need("id_factor_dim"));
  m.attr_factor_dim = std::stoull(need("attr_factor_dim"));
  m.train_subjects = std::stoull(need("train_subjects"));
  m.verifier_subjects = std::stoull(need("verifier_subjects"));
  m.test_subjects = std::stoull(need("test_subjects"));
  return m;
}

struct GroundTruthFactors {
  std::vector<float> identity;
  std::vector<float> attribute;
};

// Euclidean distance between ground-truth identity factors.
inline double oracle_identity_distance(const GroundTruthFactors& a,
                                       const GroundTruthFactors& b) {
  if (a.identity.size() != b.identity.size()) {
    throw shape_error("oracle_identity_distance: factor dimension mismatch");
  }
  return std::sqrt(squared_distance(std::span<const float>(a.identity),
                                    std::span<const float>(b.identity)));
}

struct Corpus {
  CorpusManifest manifest;
  Tensor<float> pixels;        // image_count x pixel_dim
  std::vector<std::uint32_t> subject_of;
  Tensor<float> id_factors;    // image_count x id_factor_dim
  Tensor<float> attr_factors;  // image_count x attr_factor_dim

  std::span<const float> image(std::size_t i) const { return pixels.row(i); }

  GroundTruthFactors factors(std::size_t i) const {
    auto idr = id_factors.row(i);
    auto atr = attr_factors.row(i);
    return {std::vector<float>(idr.begin(), idr.end()),
            std::vector<float>(atr.begin(), atr.end())};
  }

  Split split_of_image(std::size_t i) const {
    return manifest.split_of_subject(subject_of[i]);
  }

  std::vector<std::size_t> indices_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < subject_of.size(); ++i) {
      if (split_of_image(i) == s) out.push_back(i);
    }
    return out;
  }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_file(dir / "manifest.txt", manifest.to_text());
    save_tensor(dir / "pixels.idpt", pixels);
    Tensor<float> subjects({subject_of.size()});
    for (std::size_t i = 0; i < subject_of.size(); ++i) {
      subjects[i] = static_cast<float>(subject_of[i]);
    }
    save_tensor(dir / "subjects.idpt", subjects);
    save_tensor(dir / "id_factors.idpt", id_factors);
    save_tensor(dir / "attr_factors.idpt", attr_factors);
  }

  static Corpus load(const std::filesystem::path& dir) {
    Corpus c;
    c.manifest = CorpusManifest::from_text(read_file(dir / "manifest.txt"));
    c.manifest.validate();
    c.pixels = load_tensor(dir / "pixels.idpt");
    Tensor<float> subjects = load_tensor(dir / "subjects.idpt");
    c.subject_of.resize(subjects.size());
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      c.subject_of[i] = static_cast<std::uint32_t>(subjects[i]);
    }
    c.id_factors = load_tensor(dir / "id_factors.idpt");
    c.attr_factors = load_tensor(dir / "attr_factors.idpt");
    if (c.pixels.rank() != 2 || c.pixels.dim(0) != c.manifest.image_count() ||
        c.pixels.dim(1) != c.manifest.pixel_dim) {
      throw state_error("corpus: pixel tensor does not match manifest");
    }
    return c;
  }
};

namespace detail {
inline float clipped_gaussian(Rng& rng) {
  const double g = rng.gaussian();
  return static_cast<float>(std::clamp(g, -3.0, 3.0));
}
}  // namespace detail

// The fixed corpus-level mixing maps. Map scales are chosen so the pre-squash
// activation has roughly unit spread and pixels cover (0,1) without hard
// saturation.
struct PixelSynthesizer {
  static constexpr std::size_t kInteractionRank = 4;

  Tensor<float> w_id;  // pixel_dim x id_factor_dim
  Tensor<float> w_at;  // pixel_dim x attr_factor_dim
  Tensor<float> w_ix;  // pixel_dim x kInteractionRank
  Tensor<float> bias;  // pixel_dim
  Tensor<float> u;     // kInteractionRank x id_factor_dim
  Tensor<float> v;     // kInteractionRank x attr_factor_dim

  static PixelSynthesizer create(std::size_t pixel_dim, std::size_t id_dim,
                                 std::size_t attr_dim, Rng& rng) {
    const double sz = std::sqrt(3.0 / static_cast<double>(id_dim));
    const double sa = std::sqrt(3.0 / static_cast<double>(attr_dim));
    PixelSynthesizer s;
    s.w_id = random_uniform<float>({pixel_dim, id_dim}, rng, -sz, sz);
    s.w_at = random_uniform<float>({pixel_dim, attr_dim}, rng, -sa, sa);
    s.w_ix = random_uniform<float>({pixel_dim, kInteractionRank}, rng, -0.45, 0.45);
    s.bias = random_uniform<float>({pixel_dim}, rng, -0.5, 0.5);
    s.u = random_uniform<float>({kInteractionRank, id_dim}, rng, -sz, sz);
    s.v = random_uniform<float>({kInteractionRank, attr_dim}, rng, -sa, sa);
    return s;
  }

  std::vector<float> render(std::span<const float> z_id,
                            std::span<const float> z_at) const {
    const std::size_t m = bias.size();
    std::vector<float> interact(kInteractionRank);
    for (std::size_t r = 0; r < kInteractionRank; ++r) {
      interact[r] = dot(u.row(r), z_id) * dot(v.row(r), z_at);
    }
    std::vector<float> px(m);
    for (std::size_t j = 0; j < m; ++j) {
      const double pre = dot(w_id.row(j), z_id) + dot(w_at.row(j), z_at) +
                         dot(w_ix.row(j), std::span<const float>(interact)) +
                         bias[j];
      px[j] = static_cast<float>(1.0 / (1.0 + std::exp(-pre)));
    }
    return px;
  }
};

inline Corpus generate_corpus(const CorpusManifest& manifest, Rng& rng) {
  manifest.validate();
  const std::size_t dz = manifest.id_factor_dim;
  const std::size_t da = manifest.attr_factor_dim;

  Rng map_rng = rng.split("mixing-maps");
  const PixelSynthesizer synth =
      PixelSynthesizer::create(manifest.pixel_dim, dz, da, map_rng);

  Corpus c;
  c.manifest = manifest;
  c.pixels = Tensor<float>({manifest.image_count(), manifest.pixel_dim});
  c.id_factors = Tensor<float>({manifest.image_count(), dz});
  c.attr_factors = Tensor<float>({manifest.image_count(), da});
  c.subject_of.resize(manifest.image_count());

  Rng id_rng_root = rng.split("identity-factors");
  Rng at_rng_root = rng.split("attribute-factors");

  std::vector<float> z_id(dz), z_at(da);
  for (std::size_t s = 0; s < manifest.subjects; ++s) {
    Rng id_rng = id_rng_root.split(s);
    for (auto& zi : z_id) zi = detail::clipped_gaussian(id_rng);
    for (std::size_t p = 0; p < manifest.images_per_subject; ++p) {
      const std::size_t n = s * manifest.images_per_subject + p;
      Rng at_rng = at_rng_root.split(n);
      for (auto& za : z_at) za = detail::clipped_gaussian(at_rng);
      const auto px = synth.render(z_id, z_at);
      std::copy(px.begin(), px.end(), c.pixels.row(n).begin());
      c.subject_of[n] = static_cast<std::uint32_t>(s);
      std::copy(z_id.begin(), z_id.end(), c.id_factors.row(n).begin());
      std::copy(z_at.begin(), z_at.end(), c.attr_factors.row(n).begin());
    }
  }
  return c;
}

// Loader seam for plugging a different image source into the pipeline. Only
// the synthetic generator ships.
class CorpusSource {
 public:
  virtual ~CorpusSource() = default;
  virtual Corpus load() = 0;
};

class SyntheticCorpusSource final : public CorpusSource {
 public:
  explicit SyntheticCorpusSource(CorpusManifest manifest)
      : manifest_(std::move(manifest)) {}
  Corpus load() override {
    Rng rng(manifest_.seed);
    return generate_corpus(manifest_, rng);
  }

 private:
  CorpusManifest manifest_;
};

}  // namespace idveil
