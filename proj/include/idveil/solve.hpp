// Cholesky solve for small symmetric positive-definite systems (the ridge
// probes in the evaluation kit). Double precision throughout.
#pragma once

#include <cmath>
#include <vector>

#include "idveil/tensor.hpp"

namespace idveil {

// Solves A X = B for X, where A is n x n SPD and B is n x m. A is consumed.
inline Tensor<double> cholesky_solve(Tensor<double> a, const Tensor<double>& b) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw shape_error("cholesky_solve: matrix must be square");
  }
  const std::size_t n = a.dim(0);
  if (b.rank() != 2 || b.dim(0) != n) {
    throw shape_error("cholesky_solve: rhs row count mismatch");
  }
  const std::size_t m = b.dim(1);

  // In-place lower Cholesky factor.
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a.at(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= a.at(j, k) * a.at(j, k);
    if (!(diag > 0.0)) {
      throw parameter_error("cholesky_solve: matrix is not positive definite");
    }
    const double ljj = std::sqrt(diag);
    a.at(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= a.at(i, k) * a.at(j, k);
      a.at(i, j) = v / ljj;
    }
  }

  Tensor<double> x = b;
  // L y = B  (forward), then L^T x = y (backward), column by column.
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double v = x.at(i, c);
      for (std::size_t k = 0; k < i; ++k) v -= a.at(i, k) * x.at(k, c);
      x.at(i, c) = v / a.at(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double v = x.at(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) v -= a.at(k, ii) * x.at(k, c);
      x.at(ii, c) = v / a.at(ii, ii);
    }
  }
  return x;
}

}  // namespace idveil
