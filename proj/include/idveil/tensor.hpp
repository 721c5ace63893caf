// Dense row-major tensor with the handful of operations the pipeline needs.
// float is the working precision; double instantiations are used by the
// gradient checks and the privacy audits.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "idveil/common.hpp"
#include "idveil/rng.hpp"

namespace idveil {

template <typename T = float>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), T(0)) {}

  Tensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) {
      throw shape_error("tensor: data length " + std::to_string(data_.size()) +
                        " does not match shape product " +
                        std::to_string(count(shape_)));
    }
  }

  static Tensor vector_of(std::vector<T> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data_).subspan(r * shape_[1], shape_[1]);
  }
  std::span<T> row(std::size_t r) {
    return std::span<T>(data_).subspan(r * shape_[1], shape_[1]);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(std::vector<std::size_t> shape) const {
    if (count(shape) != data_.size()) {
      throw shape_error("reshape: element count mismatch");
    }
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(static_cast<double>(v)); });
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t(1),
                           std::multiplies<>());
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

template <typename T>
void require_same_size(std::span<const T> a, std::span<const T> b,
                       const char* op) {
  if (a.size() != b.size()) {
    throw shape_error(std::string(op) + ": size mismatch " +
                      std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  }
}

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  require_same_size(a, b, "dot");
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
double l1_norm(std::span<const T> a) {
  double acc = 0;
  for (T v : a) acc += std::abs(static_cast<double>(v));
  return acc;
}

template <typename T>
double l2_norm(std::span<const T> a) {
  double acc = 0;
  for (T v : a) acc += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(acc);
}

template <typename T>
double l1_distance(std::span<const T> a, std::span<const T> b) {
  require_same_size(a, b, "l1_distance");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  }
  return acc;
}

template <typename T>
double squared_distance(std::span<const T> a, std::span<const T> b) {
  require_same_size(a, b, "squared_distance");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

// Cosine similarity in double, safe for zero vectors (returns 0).
template <typename T>
double cosine_similarity(std::span<const T> a, std::span<const T> b) {
  require_same_size(a, b, "cosine_similarity");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    aa += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    bb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// y = W x, W is (out x in).
template <typename T>
void matvec(const Tensor<T>& w, std::span<const T> x, std::span<T> y) {
  if (w.rank() != 2 || w.dim(1) != x.size() || w.dim(0) != y.size()) {
    throw shape_error("matvec: shape mismatch");
  }
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* wr = &w.raw()[r * cols];
    T acc = 0;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

// x += W^T y, the reverse-mode companion of matvec.
template <typename T>
void matvec_transposed_add(const Tensor<T>& w, std::span<const T> y,
                           std::span<T> x) {
  if (w.rank() != 2 || w.dim(1) != x.size() || w.dim(0) != y.size()) {
    throw shape_error("matvec_transposed_add: shape mismatch");
  }
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* wr = &w.raw()[r * cols];
    const T yr = y[r];
    for (std::size_t c = 0; c < cols; ++c) x[c] += wr[c] * yr;
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw shape_error("matmul: shape mismatch");
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const T aij = a.at(i, j);
      if (aij == T(0)) continue;
      for (std::size_t c = 0; c < m; ++c) out.at(i, c) += aij * b.at(j, c);
    }
  }
  return out;
}

template <typename T>
Tensor<T> random_uniform(std::vector<std::size_t> shape, Rng& rng, double lo,
                         double hi) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.raw()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// i.i.d. Laplace(0, scale) samples. Deterministic given the generator state.
template <typename T = float>
Tensor<T> sample_laplace(Rng& rng, double scale, std::size_t count) {
  if (!(scale > 0.0)) {
    throw parameter_error("sample_laplace: scale must be positive, got " +
                          std::to_string(scale));
  }
  if (count < 1) {
    throw parameter_error("sample_laplace: count must be >= 1");
  }
  Tensor<T> t({count});
  for (auto& v : t.raw()) v = static_cast<T>(rng.laplace(scale));
  return t;
}

}  // namespace idveil
