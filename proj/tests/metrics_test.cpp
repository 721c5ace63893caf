#include <gtest/gtest.h>

#include <cmath>

#include "idveil/metrics.hpp"

using idveil::CorpusManifest;
using idveil::Rng;

TEST(PsnrTest, IdenticalInputsReturnSentinel) {
  std::vector<float> a{0.2f, 0.8f, 0.5f, 0.1f};
  EXPECT_DOUBLE_EQ(idveil::psnr(a, a), idveil::kPsnrIdenticalSentinel);
}

TEST(PsnrTest, HandComputedCase) {
  // One coordinate off by 0.5 in a 4-vector: MSE = 0.0625 -> 12.0412 dB.
  std::vector<float> a{0.f, 0.f, 0.f, 0.f};
  std::vector<float> b{0.5f, 0.f, 0.f, 0.f};
  EXPECT_NEAR(idveil::psnr(a, b), 12.0412, 1e-4);
}

TEST(PsnrTest, SymmetricAndShapeChecked) {
  Rng rng(8);
  std::vector<float> a(16), b(16);
  for (std::size_t i = 0; i < 16; ++i) {
    a[i] = static_cast<float>(rng.uniform(0, 1));
    b[i] = static_cast<float>(rng.uniform(0, 1));
  }
  EXPECT_EQ(idveil::psnr(a, b), idveil::psnr(b, a));
  std::vector<float> c(9);
  EXPECT_THROW(idveil::psnr(a, c), idveil::shape_error);
}

TEST(SsimTest, IdenticalAndConstantInputsGiveOne) {
  Rng rng(3);
  std::vector<float> a(256);
  for (auto& v : a) v = static_cast<float>(rng.uniform(0, 1));
  EXPECT_DOUBLE_EQ(idveil::ssim(a, a), 1.0);

  std::vector<float> half(256, 0.5f);
  EXPECT_DOUBLE_EQ(idveil::ssim(half, half), 1.0);
}

TEST(SsimTest, SymmetricBoundedAndShapeChecked) {
  Rng rng(4);
  std::vector<float> a(256), b(256);
  for (std::size_t i = 0; i < 256; ++i) {
    a[i] = static_cast<float>(rng.uniform(0, 1));
    b[i] = static_cast<float>(rng.uniform(0, 1));
  }
  const double s1 = idveil::ssim(a, b);
  EXPECT_EQ(s1, idveil::ssim(b, a));
  EXPECT_GE(s1, -1.0);
  EXPECT_LE(s1, 1.0);
  std::vector<float> c(250);  // not a perfect square
  EXPECT_THROW(idveil::ssim(c, c), idveil::shape_error);
}

TEST(SsimTest, DegradesWithNoise) {
  Rng rng(5);
  std::vector<float> a(256), noisy(256);
  for (std::size_t i = 0; i < 256; ++i) {
    a[i] = static_cast<float>(0.5 + 0.4 * std::sin(i * 0.3));
    noisy[i] = static_cast<float>(
        std::clamp(a[i] + rng.uniform(-0.25, 0.25), 0.0, 1.0));
  }
  EXPECT_LT(idveil::ssim(a, noisy), 0.95);
}

TEST(SpearmanTest, MonotoneSequences) {
  std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> inc{2, 4, 9, 16, 30};
  std::vector<double> dec{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(idveil::spearman(x, inc), 1.0);
  EXPECT_DOUBLE_EQ(idveil::spearman(x, dec), -1.0);
}

TEST(SpearmanTest, TiesAndDegenerateInput) {
  std::vector<double> x{1, 2, 3, 4};
  std::vector<double> tied{1, 1, 2, 2};
  const double rho = idveil::spearman(x, tied);
  EXPECT_GT(rho, 0.8);
  std::vector<double> flat{3, 3, 3, 3};
  EXPECT_DOUBLE_EQ(idveil::spearman(x, flat), 0.0);
  std::vector<double> one{1};
  EXPECT_THROW(idveil::spearman(one, one), idveil::parameter_error);
}

namespace {

idveil::Corpus probe_corpus() {
  CorpusManifest m;
  m.seed = 31415;
  m.subjects = 40;
  m.images_per_subject = 6;
  m.pixel_dim = 64;
  m.train_subjects = 24;
  m.verifier_subjects = 8;
  m.test_subjects = 8;
  Rng rng(m.seed);
  return idveil::generate_corpus(m, rng);
}

}  // namespace

TEST(AttributeProbeTest, RecoversAttributeFactors) {
  const auto corpus = probe_corpus();
  const auto probe = idveil::AttributeProbe::fit(corpus);
  const auto idx = corpus.indices_of(idveil::Split::train);
  double err = 0, base = 0;
  for (auto i : idx) {
    const auto gt = corpus.factors(i);
    err += probe.squared_error(corpus.image(i),
                               std::span<const float>(gt.attribute));
    base += probe.baseline_error(std::span<const float>(gt.attribute));
  }
  const double r2 = 1.0 - err / base;
  EXPECT_GT(r2, 0.5) << "probe R^2 " << r2;
}

TEST(AttributeProbeTest, FidelityTrivialCases) {
  const auto corpus = probe_corpus();
  const auto probe = idveil::AttributeProbe::fit(corpus);
  const auto idx = corpus.indices_of(idveil::Split::test);
  const auto x = corpus.image(idx[0]);
  const auto gt = corpus.factors(idx[0]);

  EXPECT_DOUBLE_EQ(idveil::attribute_fidelity(x, x, gt, probe), 1.0);

  std::vector<float> constant(x.size(), 0.5f);
  EXPECT_LT(idveil::attribute_fidelity(x, constant, gt, probe), 0.25);

  idveil::GroundTruthFactors missing;  // no attribute factors at all
  EXPECT_THROW(idveil::attribute_fidelity(x, x, missing, probe),
               idveil::parameter_error);
}
