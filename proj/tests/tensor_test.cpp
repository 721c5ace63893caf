#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "idveil/finite_diff.hpp"
#include "idveil/solve.hpp"
#include "idveil/tensor.hpp"
#include "idveil/tensor_io.hpp"

namespace fs = std::filesystem;
using idveil::Rng;
using idveil::Tensor;

TEST(TensorTest, ShapeDataMismatchThrows) {
  EXPECT_THROW(Tensor<float>({2, 3}, {1.f, 2.f}), idveil::shape_error);
}

TEST(TensorTest, MatmulAssociativity) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.next_u64() % 6;
    const std::size_t k = 2 + rng.next_u64() % 6;
    const std::size_t m = 2 + rng.next_u64() % 6;
    const std::size_t p = 2 + rng.next_u64() % 6;
    auto a = idveil::random_uniform<double>({n, k}, rng, -1, 1);
    auto b = idveil::random_uniform<double>({k, m}, rng, -1, 1);
    auto c = idveil::random_uniform<double>({m, p}, rng, -1, 1);
    auto left = idveil::matmul(idveil::matmul(a, b), c);
    auto right = idveil::matmul(a, idveil::matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      const double scale = std::max({1.0, std::abs(left[i]), std::abs(right[i])});
      ASSERT_NEAR(left[i], right[i], 1e-5 * scale);
    }
  }
}

TEST(TensorTest, MatvecTransposedIsAdjoint) {
  // <Wx, y> == <x, W^T y> pins the two routines against each other.
  Rng rng(23);
  const auto w = idveil::random_uniform<double>({5, 7}, rng, -1, 1);
  const auto x = idveil::random_uniform<double>({7}, rng, -1, 1);
  const auto y = idveil::random_uniform<double>({5}, rng, -1, 1);
  std::vector<double> wx(5, 0);
  idveil::matvec(w, x.values(), std::span<double>(wx));
  std::vector<double> wty(7, 0);
  idveil::matvec_transposed_add(w, y.values(), std::span<double>(wty));
  const double lhs = idveil::dot(std::span<const double>(wx), y.values());
  const double rhs = idveil::dot(x.values(), std::span<const double>(wty));
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(TensorIoTest, RoundTripIsBitExact) {
  Rng rng(11);
  auto t = idveil::random_uniform<float>({3, 5, 2}, rng, -10, 10);
  const std::string bytes = idveil::tensor_to_bytes(t);
  auto back = idveil::tensor_from_bytes(bytes, "mem");
  ASSERT_EQ(back.shape(), t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    ASSERT_EQ(back[i], t[i]);
  }
  EXPECT_EQ(idveil::tensor_to_bytes(back), bytes);
}

TEST(TensorIoTest, FileRoundTrip) {
  const fs::path path = fs::temp_directory_path() / "idveil_tensor_test.idpt";
  Rng rng(4);
  auto t = idveil::random_uniform<float>({16}, rng, 0, 1);
  idveil::save_tensor(path, t);
  auto back = idveil::load_tensor(path);
  EXPECT_EQ(back.raw(), t.raw());
  fs::remove(path);
}

TEST(TensorIoTest, RejectsGarbage) {
  EXPECT_THROW(idveil::tensor_from_bytes("nope", "mem"), idveil::state_error);
  std::string bytes = idveil::tensor_to_bytes(Tensor<float>({2}, {1.f, 2.f}));
  bytes[0] = 'X';
  EXPECT_THROW(idveil::tensor_from_bytes(bytes, "mem"), idveil::state_error);
  std::string truncated = idveil::tensor_to_bytes(Tensor<float>({4}));
  truncated.pop_back();
  EXPECT_THROW(idveil::tensor_from_bytes(truncated, "mem"), idveil::state_error);
}

TEST(FiniteDiffTest, SumOfSquares) {
  auto fn = [](const Tensor<double>& t) {
    double acc = 0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
    return acc;
  };
  Tensor<double> at({2}, {1.0, 2.0});
  auto g = idveil::finite_diff_grad(fn, at, 1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-6);
  EXPECT_NEAR(g[1], 4.0, 1e-6);
}

TEST(FiniteDiffTest, ConstantFunctionHasZeroGradient) {
  auto fn = [](const Tensor<double>&) { return 3.5; };
  Tensor<double> at({4}, {1, 2, 3, 4});
  auto g = idveil::finite_diff_grad(fn, at, 1e-5);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g[i], 0.0);
}

TEST(CholeskyTest, SolvesSpdSystem) {
  Rng rng(31);
  const std::size_t n = 12;
  auto m = idveil::random_uniform<double>({n, n}, rng, -1, 1);
  Tensor<double> a({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < n; ++k) acc += m.at(k, i) * m.at(k, j);
      a.at(i, j) = acc + (i == j ? 0.5 : 0.0);
    }
  }
  auto x_true = idveil::random_uniform<double>({n, 2}, rng, -1, 1);
  auto b = idveil::matmul(a, x_true);
  auto x = idveil::cholesky_solve(a, b);
  for (std::size_t i = 0; i < x.size(); ++i) {
    ASSERT_NEAR(x[i], x_true[i], 1e-9);
  }
}

TEST(CholeskyTest, RejectsIndefiniteMatrix) {
  Tensor<double> a({2, 2}, {1.0, 2.0, 2.0, 1.0});
  Tensor<double> b({2, 1}, {1.0, 1.0});
  EXPECT_THROW(idveil::cholesky_solve(a, b), idveil::parameter_error);
}
