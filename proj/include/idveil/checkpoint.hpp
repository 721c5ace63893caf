// Trained-model persistence and the public inference surface.
//
// A checkpoint is a directory: `config.txt` (architecture, training config,
// step counter, corpus manifest hash, all as `key = value` lines) plus one
// tensor file per named parameter block. Loading then saving reproduces the
// directory byte for byte.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>

#include "idveil/common.hpp"
#include "idveil/corpus.hpp"
#include "idveil/model.hpp"
#include "idveil/tensor_io.hpp"

namespace idveil {

struct TrainConfig {
  double lambda_att = 10.0;
  double lambda_id = 5.0;
  double lambda_rec = 10.0;
  double learning_rate = 4e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  std::size_t batch_size = 32;
  double cross_fraction = 0.5;
  std::uint64_t max_steps = 6000;
  std::uint64_t seed = 1;
  std::uint64_t log_interval = 50;

  void validate() const {
    if (lambda_att < 0 || lambda_id < 0 || lambda_rec < 0) {
      throw parameter_error("train config: loss weights must be >= 0");
    }
    if (cross_fraction < 0.0 || cross_fraction > 1.0) {
      throw parameter_error("train config: cross_fraction must be in [0,1]");
    }
    if (batch_size == 0) {
      throw parameter_error("train config: batch_size must be positive");
    }
    if (!(learning_rate > 0.0)) {
      throw parameter_error("train config: learning rate must be positive");
    }
    if (log_interval == 0) {
      throw parameter_error("train config: log_interval must be positive");
    }
  }
};

inline std::uint64_t param_hash(const Model<float>& model) {
  auto params = const_cast<Model<float>&>(model).named_params();
  std::uint64_t h = kFnvOffset;
  for (auto& [name, tensor] : params) {
    h = fnv1a64(name, h);
    h = fnv1a64(tensor->raw().data(), tensor->raw().size() * sizeof(float), h);
  }
  return h;
}

struct Checkpoint {
  ModelDims dims;
  TrainConfig config;
  std::uint64_t steps = 0;
  std::string manifest_hash;
  Model<float> model;

  Checkpoint() = default;
  explicit Checkpoint(const ModelDims& d) : dims(d), model(d) {}

  bool trained() const { return steps > 0; }

  std::uint64_t hash() const { return param_hash(model); }

  std::string config_text() const {
    std::ostringstream out;
    out << "input_dim = " << dims.input_dim << "\n";
    out << "id_dim = " << dims.id_dim << "\n";
    out << "id_hidden1 = " << dims.id_hidden1 << "\n";
    out << "id_hidden2 = " << dims.id_hidden2 << "\n";
    out << "attr_hidden = " << dims.attr_hidden << "\n";
    out << "attr_bottleneck = " << dims.attr_bottleneck << "\n";
    out << "attr_levels =";
    for (std::size_t d : dims.attr_level_dims) out << " " << d;
    out << "\n";
    out << "fusion_width = " << dims.fusion_width << "\n";
    out << "disc_hidden1 = " << dims.disc_hidden1 << "\n";
    out << "disc_hidden2 = " << dims.disc_hidden2 << "\n";
    out << "lambda_att = " << format_double(config.lambda_att) << "\n";
    out << "lambda_id = " << format_double(config.lambda_id) << "\n";
    out << "lambda_rec = " << format_double(config.lambda_rec) << "\n";
    out << "learning_rate = " << format_double(config.learning_rate) << "\n";
    out << "beta1 = " << format_double(config.beta1) << "\n";
    out << "beta2 = " << format_double(config.beta2) << "\n";
    out << "batch_size = " << config.batch_size << "\n";
    out << "cross_fraction = " << format_double(config.cross_fraction) << "\n";
    out << "max_steps = " << config.max_steps << "\n";
    out << "seed = " << config.seed << "\n";
    out << "log_interval = " << config.log_interval << "\n";
    out << "steps = " << steps << "\n";
    out << "manifest_hash = " << manifest_hash << "\n";
    return out.str();
  }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_file(dir / "config.txt", config_text());
    auto params = const_cast<Model<float>&>(model).named_params();
    for (auto& [name, tensor] : params) {
      save_tensor(dir / (name + ".idpt"), *tensor);
    }
  }

  static Checkpoint load(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "config.txt")) {
      throw state_error("checkpoint: " + dir.string() +
                        " does not contain config.txt");
    }
    auto kv = detail::parse_key_values(read_file(dir / "config.txt"));
    auto need = [&](const char* key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) {
        throw state_error(std::string("checkpoint: missing key ") + key);
      }
      return it->second;
    };
    ModelDims dims;
    dims.input_dim = std::stoull(need("input_dim"));
    dims.id_dim = std::stoull(need("id_dim"));
    dims.id_hidden1 = std::stoull(need("id_hidden1"));
    dims.id_hidden2 = std::stoull(need("id_hidden2"));
    dims.attr_hidden = std::stoull(need("attr_hidden"));
    dims.attr_bottleneck = std::stoull(need("attr_bottleneck"));
    dims.attr_level_dims.clear();
    {
      std::istringstream lv(need("attr_levels"));
      std::size_t d;
      while (lv >> d) dims.attr_level_dims.push_back(d);
    }
    dims.fusion_width = std::stoull(need("fusion_width"));
    dims.disc_hidden1 = std::stoull(need("disc_hidden1"));
    dims.disc_hidden2 = std::stoull(need("disc_hidden2"));
    Checkpoint ck(dims);
    ck.config.lambda_att = std::stod(need("lambda_att"));
    ck.config.lambda_id = std::stod(need("lambda_id"));
    ck.config.lambda_rec = std::stod(need("lambda_rec"));
    ck.config.learning_rate = std::stod(need("learning_rate"));
    ck.config.beta1 = std::stod(need("beta1"));
    ck.config.beta2 = std::stod(need("beta2"));
    ck.config.batch_size = std::stoull(need("batch_size"));
    ck.config.cross_fraction = std::stod(need("cross_fraction"));
    ck.config.max_steps = std::stoull(need("max_steps"));
    ck.config.seed = std::stoull(need("seed"));
    ck.config.log_interval = std::stoull(need("log_interval"));
    ck.steps = std::stoull(need("steps"));
    ck.manifest_hash = need("manifest_hash");
    auto params = ck.model.named_params();
    for (auto& [name, tensor] : params) {
      Tensor<float> loaded = load_tensor(dir / (name + ".idpt"));
      if (loaded.shape() != tensor->shape()) {
        throw state_error("checkpoint: tensor " + name +
                          " has unexpected shape");
      }
      *tensor = std::move(loaded);
    }
    return ck;
  }
};

// --- Inference surface -----------------------------------------------------

inline IdentityEmbedding encode_identity(const FaceVector& x,
                                         const Checkpoint& ck) {
  typename IdentityEncoderNet<float>::Trace tr;
  ck.model.identity.forward(std::span<const float>(x), tr);
  return IdentityEmbedding{std::move(tr.embed)};
}

inline AttributeStack encode_attributes(const FaceVector& x,
                                        const Checkpoint& ck) {
  typename AttributeEncoderNet<float>::Trace tr;
  ck.model.attribute.forward(std::span<const float>(x), tr);
  return AttributeStack{std::move(tr.act_lvl)};
}

inline FaceVector fuse(const IdentityEmbedding& id, const AttributeStack& att,
                       const Checkpoint& ck) {
  typename FusionGeneratorNet<float>::Trace tr;
  ck.model.fusion.forward(std::span<const float>(id.values), att.levels, tr);
  return std::move(tr.y);
}

}  // namespace idveil
