// Dense layers, activations and the Adam optimizer. Gradients are
// hand-derived; layers accumulate parameter gradients and return input
// gradients so arbitrary compositions can be backpropagated.
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "idveil/rng.hpp"
#include "idveil/tensor.hpp"

namespace idveil {

inline constexpr double kLeakySlope = 0.2;

template <typename T>
void leaky_relu(std::span<const T> pre, std::span<T> out) {
  for (std::size_t i = 0; i < pre.size(); ++i) {
    out[i] = pre[i] >= T(0) ? pre[i] : static_cast<T>(kLeakySlope) * pre[i];
  }
}

// d (in/out) is the gradient at the activation output; rescales it to the
// gradient at the pre-activation.
template <typename T>
void leaky_relu_backward(std::span<const T> pre, std::span<T> d) {
  for (std::size_t i = 0; i < pre.size(); ++i) {
    if (pre[i] < T(0)) d[i] *= static_cast<T>(kLeakySlope);
  }
}

template <typename T>
void sigmoid(std::span<const T> pre, std::span<T> out) {
  for (std::size_t i = 0; i < pre.size(); ++i) {
    out[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(pre[i]))));
  }
}

// Given post-activation values y and the gradient at y, rescale to the
// gradient at the pre-activation: dz = dy * y * (1 - y).
template <typename T>
void sigmoid_backward(std::span<const T> y, std::span<T> d) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    d[i] *= y[i] * (T(1) - y[i]);
  }
}

template <typename T>
struct Dense {
  Tensor<T> weight;  // out x in
  Tensor<T> bias;    // out
  Tensor<T> grad_weight;
  Tensor<T> grad_bias;

  Dense() = default;
  Dense(std::size_t out_dim, std::size_t in_dim)
      : weight({out_dim, in_dim}),
        bias({out_dim}),
        grad_weight({out_dim, in_dim}),
        grad_bias({out_dim}) {}

  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t out_dim() const { return weight.dim(0); }

  void init_xavier(Rng& rng) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
    for (auto& v : weight.raw()) {
      v = static_cast<T>(rng.uniform(-limit, limit));
    }
    bias.fill(T(0));
  }

  void forward(std::span<const T> x, std::span<T> y) const {
    matvec(weight, x, y);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias.raw()[i];
  }

  // Accumulates parameter gradients for input x and output gradient dy.
  // When dx is non-empty, adds the input gradient into it.
  void backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx) {
    const std::size_t rows = out_dim(), cols = in_dim();
    for (std::size_t r = 0; r < rows; ++r) {
      const T g = dy[r];
      grad_bias[r] += g;
      T* gw = &grad_weight.raw()[r * cols];
      for (std::size_t c = 0; c < cols; ++c) gw[c] += g * x[c];
    }
    if (!dx.empty()) matvec_transposed_add(weight, dy, dx);
  }

  void zero_grad() {
    grad_weight.fill(T(0));
    grad_bias.fill(T(0));
  }
};

// Adam with bias correction. Parameters and their gradient tensors are
// registered once, in a fixed order, so updates are deterministic.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>*> params, std::vector<Tensor<T>*> grads,
       double lr, double beta1, double beta2, double eps = 1e-8)
      : params_(std::move(params)),
        grads_(std::move(grads)),
        lr_(lr),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    if (params_.size() != grads_.size()) {
      throw parameter_error("adam: parameter/gradient list size mismatch");
    }
    for (auto* p : params_) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i]->raw();
      const auto& g = grads_[i]->raw();
      auto& m = m_[i].raw();
      auto& v = v_[i].raw();
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * gj;
        const double vj =
            beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double update = lr_ * (mj / c1) / (std::sqrt(vj / c2) + eps_);
        p[j] = static_cast<T>(static_cast<double>(p[j]) - update);
      }
    }
  }

  std::uint64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor<T>*> params_;
  std::vector<Tensor<T>*> grads_;
  std::vector<Tensor<T>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
};

}  // namespace idveil
