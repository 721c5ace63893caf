// The disentangling network: identity encoder f, multi-level attribute
// encoder g, gated fusion generator h and a small discriminator.
//
// Each network keeps hand-derived forward/backward passes. Forward passes
// into per-call traces so the same (possibly shared, read-only) model can run
// concurrently and so several forward passes per step can coexist.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "idveil/common.hpp"
#include "idveil/layers.hpp"
#include "idveil/tensor.hpp"
#include "idveil/tensor_io.hpp"

namespace idveil {

using FaceVector = std::vector<float>;

struct IdentityEmbedding {
  std::vector<float> values;  // unit L2 norm
};

struct AttributeStack {
  std::vector<std::vector<float>> levels;
};

struct ModelDims {
  std::size_t input_dim = 256;
  std::size_t id_dim = 16;
  std::size_t id_hidden1 = 128;
  std::size_t id_hidden2 = 64;
  std::size_t attr_hidden = 64;
  std::size_t attr_bottleneck = 32;
  std::vector<std::size_t> attr_level_dims = {32, 16, 8};
  std::size_t fusion_width = 64;
  std::size_t disc_hidden1 = 64;
  std::size_t disc_hidden2 = 32;

  void validate() const {
    if (input_dim == 0 || id_dim == 0 || attr_level_dims.empty()) {
      throw parameter_error("model dims: zero-sized architecture");
    }
    for (std::size_t d : attr_level_dims) {
      if (d == 0) throw parameter_error("model dims: empty attribute level");
    }
  }

  bool operator==(const ModelDims&) const = default;
};

// ---------------------------------------------------------------------------
// Identity encoder f: two leaky-ReLU hidden layers, linear head, then L2
// normalization onto the unit sphere.

template <typename T>
struct IdentityEncoderNet {
  Dense<T> l1, l2, l3;

  struct Trace {
    std::vector<T> x, pre1, act1, pre2, act2, raw, embed;
    double norm = 0;
  };

  IdentityEncoderNet() = default;
  IdentityEncoderNet(const ModelDims& d)
      : l1(d.id_hidden1, d.input_dim),
        l2(d.id_hidden2, d.id_hidden1),
        l3(d.id_dim, d.id_hidden2) {}

  void forward(std::span<const T> x, Trace& tr) const {
    if (x.size() != l1.in_dim()) {
      throw shape_error("identity encoder: input dim " +
                        std::to_string(x.size()) + ", expected " +
                        std::to_string(l1.in_dim()));
    }
    tr.x.assign(x.begin(), x.end());
    tr.pre1.resize(l1.out_dim());
    tr.act1.resize(l1.out_dim());
    tr.pre2.resize(l2.out_dim());
    tr.act2.resize(l2.out_dim());
    tr.raw.resize(l3.out_dim());
    tr.embed.resize(l3.out_dim());
    l1.forward(x, tr.pre1);
    leaky_relu<T>(tr.pre1, std::span<T>(tr.act1));
    l2.forward(tr.act1, tr.pre2);
    leaky_relu<T>(tr.pre2, std::span<T>(tr.act2));
    l3.forward(tr.act2, tr.raw);
    double n = l2_norm(std::span<const T>(tr.raw));
    if (n < 1e-12) n = 1e-12;
    tr.norm = n;
    for (std::size_t i = 0; i < tr.raw.size(); ++i) {
      tr.embed[i] = static_cast<T>(static_cast<double>(tr.raw[i]) / n);
    }
  }

  // d_embed is the gradient at the normalized embedding; input gradient is
  // accumulated into dx when non-empty.
  void backward(const Trace& tr, std::span<const T> d_embed, std::span<T> dx) {
    // Through y = z / ||z||:  dz = (dy - y (y . dy)) / ||z||.
    std::vector<T> d_raw(tr.raw.size());
    const double inner =
        dot(std::span<const T>(tr.embed), std::span<const T>(d_embed));
    for (std::size_t i = 0; i < d_raw.size(); ++i) {
      d_raw[i] = static_cast<T>(
          (static_cast<double>(d_embed[i]) -
           static_cast<double>(tr.embed[i]) * inner) /
          tr.norm);
    }
    std::vector<T> d_act2(tr.act2.size(), T(0));
    l3.backward(tr.act2, d_raw, std::span<T>(d_act2));
    leaky_relu_backward<T>(tr.pre2, std::span<T>(d_act2));
    std::vector<T> d_act1(tr.act1.size(), T(0));
    l2.backward(tr.act1, d_act2, std::span<T>(d_act1));
    leaky_relu_backward<T>(tr.pre1, std::span<T>(d_act1));
    l1.backward(tr.x, d_act1, dx);
  }
};

// ---------------------------------------------------------------------------
// Attribute encoder g: a dense encoder into a bottleneck, then a chain of
// decoder layers whose activations are exposed as the attribute levels.

template <typename T>
struct AttributeEncoderNet {
  Dense<T> enc1, enc2;
  std::vector<Dense<T>> levels;

  struct Trace {
    std::vector<T> x, pre_e1, a_e1, pre_e2, a_e2;
    std::vector<std::vector<T>> pre_lvl, act_lvl;
  };

  AttributeEncoderNet() = default;
  AttributeEncoderNet(const ModelDims& d)
      : enc1(d.attr_hidden, d.input_dim),
        enc2(d.attr_bottleneck, d.attr_hidden) {
    std::size_t prev = d.attr_bottleneck;
    for (std::size_t dim : d.attr_level_dims) {
      levels.emplace_back(dim, prev);
      prev = dim;
    }
  }

  void forward(std::span<const T> x, Trace& tr) const {
    if (x.size() != enc1.in_dim()) {
      throw shape_error("attribute encoder: input dim mismatch");
    }
    tr.x.assign(x.begin(), x.end());
    tr.pre_e1.resize(enc1.out_dim());
    tr.a_e1.resize(enc1.out_dim());
    tr.pre_e2.resize(enc2.out_dim());
    tr.a_e2.resize(enc2.out_dim());
    enc1.forward(x, tr.pre_e1);
    leaky_relu<T>(tr.pre_e1, std::span<T>(tr.a_e1));
    enc2.forward(tr.a_e1, tr.pre_e2);
    leaky_relu<T>(tr.pre_e2, std::span<T>(tr.a_e2));
    tr.pre_lvl.assign(levels.size(), {});
    tr.act_lvl.assign(levels.size(), {});
    const std::vector<T>* prev = &tr.a_e2;
    for (std::size_t k = 0; k < levels.size(); ++k) {
      tr.pre_lvl[k].resize(levels[k].out_dim());
      tr.act_lvl[k].resize(levels[k].out_dim());
      levels[k].forward(*prev, tr.pre_lvl[k]);
      leaky_relu<T>(tr.pre_lvl[k], std::span<T>(tr.act_lvl[k]));
      prev = &tr.act_lvl[k];
    }
  }

  // d_levels carries one gradient per exposed level (may be empty vectors for
  // levels without incoming gradient).
  void backward(const Trace& tr, const std::vector<std::vector<T>>& d_levels,
                std::span<T> dx) {
    std::vector<T> carry;  // gradient flowing down the decoder chain
    for (std::size_t k = levels.size(); k-- > 0;) {
      std::vector<T> d_out = carry;
      d_out.resize(levels[k].out_dim(), T(0));
      if (k < d_levels.size() && !d_levels[k].empty()) {
        for (std::size_t i = 0; i < d_out.size(); ++i) {
          d_out[i] += d_levels[k][i];
        }
      }
      leaky_relu_backward<T>(tr.pre_lvl[k], std::span<T>(d_out));
      const std::vector<T>& input = (k == 0) ? tr.a_e2 : tr.act_lvl[k - 1];
      carry.assign(input.size(), T(0));
      levels[k].backward(input, d_out, std::span<T>(carry));
    }
    leaky_relu_backward<T>(tr.pre_e2, std::span<T>(carry));
    std::vector<T> d_a_e1(tr.a_e1.size(), T(0));
    enc2.backward(tr.a_e1, carry, std::span<T>(d_a_e1));
    leaky_relu_backward<T>(tr.pre_e1, std::span<T>(d_a_e1));
    enc1.backward(tr.x, d_a_e1, dx);
  }
};

// ---------------------------------------------------------------------------
// Fusion generator h. The running state starts as a learned transform of the
// first attribute level and passes through one block per level; each block
// blends the state with a projection of the identity embedding under a gate
// computed from that level's attributes:
//
//   a_0 = lrelu(W att_1 + c_0)
//   gate = sigmoid(G att_k + c),  state' = lrelu(U (gate*state + (1-gate)*P id) + e)
//
// With every gate forced to 1 the identity input cannot reach the output.

template <typename T>
struct FusionGeneratorNet {
  struct Block {
    Dense<T> gate, id_proj, mix;
  };

  Dense<T> state_in;  // first attribute level -> initial state
  std::vector<Block> blocks;
  Dense<T> out;

  struct Trace {
    std::vector<T> id;
    std::vector<std::vector<T>> att;
    std::vector<T> state_pre;
    std::vector<std::vector<T>> a_in, gate_pre, gate, idp, blend, mix_pre;
    std::vector<T> final_state, out_pre, y;
  };

  FusionGeneratorNet() = default;
  FusionGeneratorNet(const ModelDims& d)
      : state_in(d.fusion_width, d.attr_level_dims.front()),
        out(d.input_dim, d.fusion_width) {
    for (std::size_t dim : d.attr_level_dims) {
      blocks.push_back(Block{Dense<T>(d.fusion_width, dim),
                             Dense<T>(d.fusion_width, d.id_dim),
                             Dense<T>(d.fusion_width, d.fusion_width)});
    }
  }

  void forward(std::span<const T> id, const std::vector<std::vector<T>>& att,
               Trace& tr) const {
    if (att.size() != blocks.size()) {
      throw shape_error("fusion: expected " + std::to_string(blocks.size()) +
                        " attribute levels, got " + std::to_string(att.size()));
    }
    if (id.size() != blocks.front().id_proj.in_dim()) {
      throw shape_error("fusion: identity embedding dim mismatch");
    }
    const std::size_t w = out.in_dim();
    tr.id.assign(id.begin(), id.end());
    tr.att = att;
    const std::size_t n = blocks.size();
    tr.a_in.assign(n, {});
    tr.gate_pre.assign(n, {});
    tr.gate.assign(n, {});
    tr.idp.assign(n, {});
    tr.blend.assign(n, {});
    tr.mix_pre.assign(n, {});
    if (att[0].size() != state_in.in_dim()) {
      throw shape_error("fusion: attribute level 0 dim mismatch");
    }
    tr.state_pre.resize(w);
    state_in.forward(att[0], tr.state_pre);
    std::vector<T> state(w);
    leaky_relu<T>(tr.state_pre, std::span<T>(state));
    for (std::size_t k = 0; k < n; ++k) {
      const Block& b = blocks[k];
      if (att[k].size() != b.gate.in_dim()) {
        throw shape_error("fusion: attribute level " + std::to_string(k) +
                          " dim mismatch");
      }
      tr.a_in[k] = state;
      tr.gate_pre[k].resize(w);
      tr.gate[k].resize(w);
      tr.idp[k].resize(w);
      tr.blend[k].resize(w);
      tr.mix_pre[k].resize(w);
      b.gate.forward(att[k], tr.gate_pre[k]);
      sigmoid<T>(tr.gate_pre[k], std::span<T>(tr.gate[k]));
      b.id_proj.forward(id, tr.idp[k]);
      for (std::size_t i = 0; i < w; ++i) {
        tr.blend[k][i] = tr.gate[k][i] * state[i] +
                         (T(1) - tr.gate[k][i]) * tr.idp[k][i];
      }
      b.mix.forward(tr.blend[k], tr.mix_pre[k]);
      state.resize(w);
      leaky_relu<T>(tr.mix_pre[k], std::span<T>(state));
    }
    tr.final_state = state;
    tr.out_pre.resize(out.out_dim());
    tr.y.resize(out.out_dim());
    out.forward(state, tr.out_pre);
    sigmoid<T>(tr.out_pre, std::span<T>(tr.y));
  }

  // dy is the gradient at the [0,1] output. Identity/attribute input
  // gradients are accumulated into d_id / d_att (sized by the caller).
  void backward(const Trace& tr, std::span<const T> dy, std::span<T> d_id,
                std::vector<std::vector<T>>& d_att) {
    const std::size_t w = out.in_dim();
    std::vector<T> d_out_pre(dy.begin(), dy.end());
    sigmoid_backward<T>(tr.y, std::span<T>(d_out_pre));
    std::vector<T> d_state(w, T(0));
    out.backward(tr.final_state, d_out_pre, std::span<T>(d_state));
    for (std::size_t k = blocks.size(); k-- > 0;) {
      Block& b = blocks[k];
      std::vector<T> d_mix_pre = d_state;
      leaky_relu_backward<T>(tr.mix_pre[k], std::span<T>(d_mix_pre));
      std::vector<T> d_blend(w, T(0));
      b.mix.backward(tr.blend[k], d_mix_pre, std::span<T>(d_blend));
      std::vector<T> d_gate(w), d_idp(w);
      d_state.assign(w, T(0));
      for (std::size_t i = 0; i < w; ++i) {
        d_gate[i] = d_blend[i] * (tr.a_in[k][i] - tr.idp[k][i]);
        d_state[i] = d_blend[i] * tr.gate[k][i];
        d_idp[i] = d_blend[i] * (T(1) - tr.gate[k][i]);
      }
      sigmoid_backward<T>(tr.gate[k], std::span<T>(d_gate));
      if (d_att[k].size() != tr.att[k].size()) {
        d_att[k].assign(tr.att[k].size(), T(0));
      }
      b.gate.backward(tr.att[k], d_gate, std::span<T>(d_att[k]));
      b.id_proj.backward(tr.id, d_idp, d_id);
    }
    leaky_relu_backward<T>(tr.state_pre, std::span<T>(d_state));
    if (d_att[0].size() != tr.att[0].size()) {
      d_att[0].assign(tr.att[0].size(), T(0));
    }
    state_in.backward(tr.att[0], d_state, std::span<T>(d_att[0]));
  }
};

// ---------------------------------------------------------------------------
// Discriminator: probability that the input is a real corpus image.

template <typename T>
struct DiscriminatorNet {
  Dense<T> l1, l2, l3;

  struct Trace {
    std::vector<T> x, pre1, a1, pre2, a2, logit;
    T prob = T(0);
  };

  DiscriminatorNet() = default;
  DiscriminatorNet(const ModelDims& d)
      : l1(d.disc_hidden1, d.input_dim),
        l2(d.disc_hidden2, d.disc_hidden1),
        l3(1, d.disc_hidden2) {}

  T forward(std::span<const T> x, Trace& tr) const {
    if (x.size() != l1.in_dim()) {
      throw shape_error("discriminator: input dim mismatch");
    }
    tr.x.assign(x.begin(), x.end());
    tr.pre1.resize(l1.out_dim());
    tr.a1.resize(l1.out_dim());
    tr.pre2.resize(l2.out_dim());
    tr.a2.resize(l2.out_dim());
    tr.logit.resize(1);
    l1.forward(x, tr.pre1);
    leaky_relu<T>(tr.pre1, std::span<T>(tr.a1));
    l2.forward(tr.a1, tr.pre2);
    leaky_relu<T>(tr.pre2, std::span<T>(tr.a2));
    l3.forward(tr.a2, tr.logit);
    tr.prob = static_cast<T>(
        1.0 / (1.0 + std::exp(-static_cast<double>(tr.logit[0]))));
    return tr.prob;
  }

  // d_logit is the scalar loss gradient at the pre-sigmoid logit; callers
  // differentiate their own log-prob terms, which sidesteps the probability
  // clamp used when evaluating losses.
  void backward(const Trace& tr, T d_logit, std::span<T> dx) {
    std::vector<T> dl{d_logit};
    std::vector<T> d_a2(tr.a2.size(), T(0));
    l3.backward(tr.a2, dl, std::span<T>(d_a2));
    leaky_relu_backward<T>(tr.pre2, std::span<T>(d_a2));
    std::vector<T> d_a1(tr.a1.size(), T(0));
    l2.backward(tr.a1, d_a2, std::span<T>(d_a1));
    leaky_relu_backward<T>(tr.pre1, std::span<T>(d_a1));
    l1.backward(tr.x, d_a1, dx);
  }
};

// ---------------------------------------------------------------------------

template <typename T>
struct Model {
  ModelDims dims;
  IdentityEncoderNet<T> identity;
  AttributeEncoderNet<T> attribute;
  FusionGeneratorNet<T> fusion;
  DiscriminatorNet<T> disc;

  Model() = default;
  explicit Model(const ModelDims& d)
      : dims(d), identity(d), attribute(d), fusion(d), disc(d) {
    d.validate();
  }

  void init(Rng& rng) {
    Rng r = rng.split("model-init");
    identity.l1.init_xavier(r);
    identity.l2.init_xavier(r);
    identity.l3.init_xavier(r);
    attribute.enc1.init_xavier(r);
    attribute.enc2.init_xavier(r);
    for (auto& lv : attribute.levels) lv.init_xavier(r);
    fusion.state_in.init_xavier(r);
    for (auto& b : fusion.blocks) {
      b.gate.init_xavier(r);
      b.id_proj.init_xavier(r);
      b.mix.init_xavier(r);
    }
    fusion.out.init_xavier(r);
    disc.l1.init_xavier(r);
    disc.l2.init_xavier(r);
    disc.l3.init_xavier(r);
  }

  // Named parameter blocks in a fixed order; the order defines the checkpoint
  // layout and the parameter hash.
  std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    auto add_dense = [&out](const std::string& name, Dense<T>& d) {
      out.emplace_back(name + "_w", &d.weight);
      out.emplace_back(name + "_b", &d.bias);
    };
    add_dense("id_l1", identity.l1);
    add_dense("id_l2", identity.l2);
    add_dense("id_l3", identity.l3);
    add_dense("at_enc1", attribute.enc1);
    add_dense("at_enc2", attribute.enc2);
    for (std::size_t k = 0; k < attribute.levels.size(); ++k) {
      add_dense("at_lvl" + std::to_string(k), attribute.levels[k]);
    }
    add_dense("fu_in", fusion.state_in);
    for (std::size_t k = 0; k < fusion.blocks.size(); ++k) {
      add_dense("fu_gate" + std::to_string(k), fusion.blocks[k].gate);
      add_dense("fu_idp" + std::to_string(k), fusion.blocks[k].id_proj);
      add_dense("fu_mix" + std::to_string(k), fusion.blocks[k].mix);
    }
    add_dense("fu_out", fusion.out);
    add_dense("di_l1", disc.l1);
    add_dense("di_l2", disc.l2);
    add_dense("di_l3", disc.l3);
    return out;
  }

  std::vector<Tensor<T>*> generator_params() {
    std::vector<Tensor<T>*> out;
    for (auto& [name, t] : named_params()) {
      if (name.rfind("di_", 0) != 0) out.push_back(t);
    }
    return out;
  }

  std::vector<Tensor<T>*> generator_grads() {
    std::vector<Tensor<T>*> out{
        &identity.l1.grad_weight, &identity.l1.grad_bias,
        &identity.l2.grad_weight, &identity.l2.grad_bias,
        &identity.l3.grad_weight, &identity.l3.grad_bias,
        &attribute.enc1.grad_weight, &attribute.enc1.grad_bias,
        &attribute.enc2.grad_weight, &attribute.enc2.grad_bias};
    for (auto& lv : attribute.levels) {
      out.push_back(&lv.grad_weight);
      out.push_back(&lv.grad_bias);
    }
    out.push_back(&fusion.state_in.grad_weight);
    out.push_back(&fusion.state_in.grad_bias);
    for (auto& b : fusion.blocks) {
      out.push_back(&b.gate.grad_weight);
      out.push_back(&b.gate.grad_bias);
      out.push_back(&b.id_proj.grad_weight);
      out.push_back(&b.id_proj.grad_bias);
      out.push_back(&b.mix.grad_weight);
      out.push_back(&b.mix.grad_bias);
    }
    out.push_back(&fusion.out.grad_weight);
    out.push_back(&fusion.out.grad_bias);
    return out;
  }

  std::vector<Tensor<T>*> discriminator_params() {
    return {&disc.l1.weight, &disc.l1.bias, &disc.l2.weight, &disc.l2.bias,
            &disc.l3.weight, &disc.l3.bias};
  }

  std::vector<Tensor<T>*> discriminator_grads() {
    return {&disc.l1.grad_weight, &disc.l1.grad_bias,
            &disc.l2.grad_weight, &disc.l2.grad_bias,
            &disc.l3.grad_weight, &disc.l3.grad_bias};
  }

  void zero_generator_grads() {
    for (auto* g : generator_grads()) g->fill(T(0));
  }
  void zero_discriminator_grads() {
    for (auto* g : discriminator_grads()) g->fill(T(0));
  }

  template <typename U>
  Model<U> cast() const {
    Model<U> out(dims);
    auto src = const_cast<Model<T>*>(this)->named_params();
    auto dst = out.named_params();
    for (std::size_t i = 0; i < src.size(); ++i) {
      *dst[i].second = src[i].second->template cast<U>();
    }
    return out;
  }
};

}  // namespace idveil
