// Central-difference gradient oracle, used by tests to check hand-derived
// backpropagation. Always runs in double.
#pragma once

#include <functional>

#include "idveil/tensor.hpp"

namespace idveil {

inline Tensor<double> finite_diff_grad(
    const std::function<double(const Tensor<double>&)>& fn,
    const Tensor<double>& at, double step) {
  if (!(step > 0.0)) {
    throw parameter_error("finite_diff_grad: step must be positive");
  }
  Tensor<double> grad(at.shape());
  Tensor<double> probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = fn(probe);
    probe[i] = orig - step;
    const double down = fn(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace idveil
