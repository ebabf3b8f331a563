#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gmix/problems/experiments.hpp"
#include "oracles.hpp"

using namespace gmix;

TEST(Haar, ConstantSignalHasOnlyScalingCoefficient) {
  const Index n = 64;
  const Vec x = haar_forward(Vec::Constant(n, 2.5), 6);
  EXPECT_NEAR(x(0), 2.5 * std::sqrt(64.0), 1e-12);
  EXPECT_LT(x.tail(n - 1).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Haar, SingleLevelStep) {
  Vec s(4);
  s << 1, 1, -1, -1;
  const Vec x = haar_forward(s, 1);
  EXPECT_NEAR(x(0), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(x(1), -std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(x(2), 0.0, 1e-15);
  EXPECT_NEAR(x(3), 0.0, 1e-15);
}

TEST(Haar, RoundtripAndParseval) {
  Rng rng(5);
  const HaarTransform w(1024, 10);
  for (int t = 0; t < 5; ++t) {
    const Vec s = standard_normal(rng, 1024);
    const Vec x = w.forward(s);
    EXPECT_LT((w.inverse(x) - s).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(x.norm(), s.norm(), 1e-12 * s.norm());
  }
}

TEST(Haar, MatrixIsOrthogonal) {
  const Mat w = HaarTransform(128, 7).matrix();
  EXPECT_LT((w * w.transpose() - Mat::Identity(128, 128)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Haar, RejectsBadLengths) {
  EXPECT_THROW(HaarTransform(100, 2), ShapeError);
  EXPECT_THROW(HaarTransform(64, 7), ShapeError);
  EXPECT_THROW(haar_forward(Vec::Zero(12), 1), ShapeError);
}

TEST(Besov, RatesPerLevel) {
  const Vec delta = besov_rates(1024, 10);
  for (Index i = 512; i < 1024; ++i) EXPECT_DOUBLE_EQ(delta(i), 32.0);
  EXPECT_NEAR(delta(0), 1.41421356, 1e-8);
  EXPECT_NEAR(delta(1), 1.41421356, 1e-8);
  EXPECT_NEAR(delta(2), 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(0.5 * delta(1000) * delta(1000), 512.0);
}

TEST(Blur, RowSumsAndSymmetry) {
  const BlurOperator g(1024);
  const Vec k = g.kernel();
  EXPECT_EQ(k.size(), 27);
  EXPECT_NEAR(k.sum(), 1.0, 1e-12);
  for (Index i = 0; i < 27; ++i) EXPECT_DOUBLE_EQ(k(i), k(26 - i));
  const Mat a = g.matrix();
  EXPECT_LT((a.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  const Vec c = g.apply(Vec::Constant(1024, 3.0));
  EXPECT_LT((c.array() - 3.0).abs().maxCoeff(), 1e-12);
}

TEST(Blur, AdjointConsistency) {
  const BlurOperator g(256);
  Rng rng(2);
  for (int t = 0; t < 5; ++t) {
    const Vec x = standard_normal(rng, 256), u = standard_normal(rng, 256);
    EXPECT_NEAR(g.apply(x).dot(u), x.dot(g.apply_t(u)), 1e-10);
  }
}

TEST(Deblurring, SparsityAndSizes) {
  const Experiment ex = build_deblurring(7);
  EXPECT_EQ(ex.model->m(), 1024);
  EXPECT_EQ(ex.model->d(), 1024);
  EXPECT_DOUBLE_EQ(ex.data.sigma_obs, 0.03);
  Index nnz = 0;
  for (Index i = 0; i < 1024; ++i) nnz += std::abs(ex.data.x_true(i)) > 1e-12;
  EXPECT_EQ(nnz, 60);
}

TEST(Deblurring, DeskScaleTruthIsSparse) {
  const Experiment ex = build_deblurring(7, DeblurSize{256, 8, 0.03});
  Index nnz = 0;
  for (Index i = 0; i < 256; ++i) nnz += std::abs(ex.data.x_true(i)) > 1e-12;
  EXPECT_GT(nnz, 0);
  EXPECT_LT(nnz, 60);
}

TEST(Deblurring, CompositionIdentityAndAdjoint) {
  const DeblurOperator op(1024, 10);
  const Vec s = step_signal(1024, deblur_truth_1024());
  const Vec x = op.haar().forward(s);
  EXPECT_LT((op.apply(x) - op.blur().apply(s)).cwiseAbs().maxCoeff(), 1e-12);
  Rng rng(3);
  for (int t = 0; t < 5; ++t) {
    const Vec a = standard_normal(rng, 1024), u = standard_normal(rng, 1024);
    EXPECT_NEAR(op.apply(a).dot(u), a.dot(op.apply_t(u)), 1e-10);
  }
}

TEST(Deblurring, DataRegeneratesBitExactly) {
  const Experiment a = build_deblurring(11), b = build_deblurring(11), c = build_deblurring(12);
  EXPECT_EQ(a.data.y, b.data.y);
  EXPECT_NE(a.data.y, c.data.y);
}

TEST(Storm, SizesAndNonnegativity) {
  const StormOperator op = StormOperator::standard(32, 4);
  EXPECT_EQ(op.m(), 1024);
  EXPECT_EQ(op.d(), 16384);
  const SpMat& a = op.matrix();
  Vec colmax = Vec::Zero(op.d());
  for (Index j = 0; j < a.outerSize(); ++j)
    for (SpMat::InnerIterator it(a, j); it; ++it) {
      EXPECT_GE(it.value(), 0.0);
      colmax(j) = std::max(colmax(j), it.value());
    }
  EXPECT_GT(colmax.minCoeff(), 0.0);
}

TEST(Storm, MatrixFreeMatchesSparseAndAdjoint) {
  const StormOperator op = StormOperator::standard(8, 4);
  Rng rng(4);
  for (int t = 0; t < 5; ++t) {
    const Vec x = standard_normal(rng, op.d()), u = standard_normal(rng, op.m());
    EXPECT_LT((op.apply(x) - op.matrix() * x).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(op.apply(x).dot(u), x.dot(op.apply_t(u)), 1e-10);
  }
}

TEST(Storm, ExperimentShape) {
  const Experiment ex = build_storm(3);
  EXPECT_EQ(ex.model->d(), 16384);
  EXPECT_EQ(ex.model->m(), 1024);
  Index mol = 0;
  for (Index i = 0; i < ex.data.x_true.size(); ++i) mol += ex.data.x_true(i) > 0.0;
  EXPECT_EQ(mol, 50);
  EXPECT_DOUBLE_EQ(ex.prior.rates()(0), 1.275);
  EXPECT_DOUBLE_EQ(ex.prior.mixing_rates()(0), 0.8128125);
  EXPECT_EQ(build_storm(3).data.y, ex.data.y);
}

TEST(Storm, LognormalIntensityMatchesModeAndSd) {
  const auto [mu, sig] = lognormal_from_mode_sd(3000.0, 1700.0);
  EXPECT_NEAR(std::exp(mu - sig * sig), 3000.0, 1e-6);
  std::lognormal_distribution<double> dist(mu, sig);
  Rng rng(99);
  const int n = 1000000;
  std::vector<double> xs(n);
  double s = 0, s2 = 0;
  for (auto& x : xs) {
    x = dist(rng);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(sd, 1700.0, 0.02 * 1700.0);
  // Mode by a Gaussian kernel density estimate on a grid.
  std::sort(xs.begin(), xs.end());
  const double bw = 1.06 * sd * std::pow(n, -0.2);
  double best = 0, arg = 0;
  for (double g = 1500; g <= 4500; g += 10) {
    const auto lo = std::lower_bound(xs.begin(), xs.end(), g - 5 * bw);
    const auto hi = std::upper_bound(xs.begin(), xs.end(), g + 5 * bw);
    double dens = 0;
    for (auto it = lo; it != hi; ++it) dens += std::exp(-0.5 * std::pow((*it - g) / bw, 2));
    if (dens > best) {
      best = dens;
      arg = g;
    }
  }
  EXPECT_NEAR(arg, 3000.0, 0.05 * 3000.0);
}
