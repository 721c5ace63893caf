#include <gtest/gtest.h>

#include <cmath>

#include "idveil/privacy.hpp"

using idveil::PrivacyParams;
using idveil::Rng;
using idveil::Tensor;

TEST(PrivacyParamsTest, Validation) {
  EXPECT_THROW((PrivacyParams{0.0, 1.0}).validate(), idveil::parameter_error);
  EXPECT_THROW((PrivacyParams{-2.0, 1.0}).validate(), idveil::parameter_error);
  EXPECT_THROW((PrivacyParams{1.0, -0.5}).validate(), idveil::parameter_error);
  PrivacyParams ok{6.0, 3.0};
  ok.validate();
  EXPECT_DOUBLE_EQ(ok.noise_scale(), 0.5);
}

TEST(PrivacyParamsTest, ScaleStrictlyDecreasingInEpsilon) {
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.5, 1.1, 6.0, 100.0, 800.0}) {
    const double scale = PrivacyParams{eps, 4.0}.noise_scale();
    EXPECT_LT(scale, prev);
    prev = scale;
  }
}

TEST(SensitivityTest, IdenticalEmbeddingsGiveZero) {
  Tensor<float> e({4, 3});
  for (std::size_t r = 0; r < 4; ++r) {
    e.at(r, 0) = 0.5f;
    e.at(r, 1) = -0.25f;
    e.at(r, 2) = 1.f;
  }
  EXPECT_DOUBLE_EQ(idveil::compute_sensitivity(e).delta_f, 0.0);
}

TEST(SensitivityTest, HandComputedPair) {
  Tensor<float> e({2, 2}, {1.f, 0.f, 0.f, 1.f});
  const auto est = idveil::compute_sensitivity(e, "hash123");
  EXPECT_DOUBLE_EQ(est.delta_f, 2.0);
  EXPECT_EQ(est.corpus_hash, "hash123");
  EXPECT_EQ(est.method, idveil::SensitivityMethod::corpus_max);
}

TEST(SensitivityTest, MatchesNaiveDoubleLoopOnRandomSets) {
  Rng rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.next_u64() % 63;
    const std::size_t d = 1 + rng.next_u64() % 16;
    Tensor<float> e({n, d});
    for (auto& v : e.raw()) v = static_cast<float>(rng.uniform(-1, 1));
    // Deliberately independent: different loop order, double accumulation.
    double naive = 0;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        if (i == j) continue;
        double acc = 0;
        for (std::size_t c = 0; c < d; ++c) {
          acc += std::abs(static_cast<double>(e.at(i, c)) -
                          static_cast<double>(e.at(j, c)));
        }
        naive = std::max(naive, acc);
      }
    }
    EXPECT_DOUBLE_EQ(idveil::compute_sensitivity(e).delta_f, naive);
  }
}

TEST(SensitivityTest, RejectsFewerThanTwoEmbeddings) {
  Tensor<float> one({1, 4});
  EXPECT_THROW(idveil::compute_sensitivity(one), idveil::parameter_error);
}

TEST(SensitivityTest, UnitNormEmbeddingsRespectAnalyticCap) {
  Rng rng(11);
  const std::size_t d = 16;
  Tensor<float> e({64, d});
  for (std::size_t r = 0; r < 64; ++r) {
    double norm = 0;
    std::vector<double> v(d);
    for (auto& x : v) {
      x = rng.gaussian();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < d; ++c) {
      e.at(r, c) = static_cast<float>(v[c] / norm);
    }
  }
  const double cap = idveil::analytic_sensitivity_cap(d).delta_f;
  EXPECT_DOUBLE_EQ(cap, 2.0 * std::sqrt(16.0));
  EXPECT_LE(idveil::compute_sensitivity(e).delta_f, cap);
}

TEST(PerturbTest, ZeroSensitivityIsIdentityMap) {
  Rng rng(1);
  std::vector<float> id{0.5f, -0.5f, 0.25f};
  const auto out =
      idveil::perturb_identity<float>(id, PrivacyParams{6.0, 0.0}, rng);
  EXPECT_EQ(out, id);
}

TEST(PerturbTest, FixedSeedIsReproducible) {
  std::vector<float> id{0.5f, -0.5f, 0.25f, 0.1f};
  Rng a(42), b(42);
  const auto o1 = idveil::perturb_identity<float>(id, PrivacyParams{2.0, 1.0}, a);
  const auto o2 = idveil::perturb_identity<float>(id, PrivacyParams{2.0, 1.0}, b);
  EXPECT_EQ(o1, o2);
}

TEST(PerturbTest, NoiseVarianceMatchesLaplace) {
  const double eps = 2.0, df = 3.0;
  const double scale = df / eps;
  const std::size_t n = 100000;
  std::vector<double> base{0.25};
  Rng rng(7);
  double mean = 0, m2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto out =
        idveil::perturb_identity<double>(base, PrivacyParams{eps, df}, rng);
    const double noise = out[0] - base[0];
    mean += noise;
    m2 += noise * noise;
  }
  mean /= n;
  const double var = m2 / n - mean * mean;
  EXPECT_NEAR(var, 2.0 * scale * scale, 0.05 * 2.0 * scale * scale);
}

TEST(PerturbTest, RejectsBadEpsilon) {
  Rng rng(1);
  std::vector<float> id{0.1f};
  EXPECT_THROW(idveil::perturb_identity<float>(id, PrivacyParams{0.0, 1.0}, rng),
               idveil::parameter_error);
}

TEST(ComposeParallelTest, SpecCases) {
  std::vector<double> single{6.0};
  EXPECT_DOUBLE_EQ(idveil::compose_parallel(single), 6.0);
  std::vector<double> several{1.1, 6.0, 800.0};
  EXPECT_DOUBLE_EQ(idveil::compose_parallel(several), 800.0);

  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> list(1 + rng.next_u64() % 20);
    double brute = 0;
    for (auto& v : list) {
      v = rng.uniform(1e-3, 100.0);
      brute = std::max(brute, v);
    }
    EXPECT_DOUBLE_EQ(idveil::compose_parallel(list), brute);
  }

  std::vector<double> empty;
  EXPECT_THROW(idveil::compose_parallel(empty), idveil::parameter_error);
  std::vector<double> with_zero{1.0, 0.0};
  EXPECT_THROW(idveil::compose_parallel(with_zero), idveil::parameter_error);
}
