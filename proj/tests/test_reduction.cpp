#include <gtest/gtest.h>

#include <cmath>

#include "gmix/ccs.hpp"
#include "gmix/reduction.hpp"
#include "oracles.hpp"

using namespace gmix;

TEST(EpsilonCurve, TailSumsOfSortedDiagnostic) {
  const Vec h = (Vec(5) << 0.1, 3.0, 0.0, 1.0, 0.5).finished();
  const Vec eps = epsilon_curve(h);
  const Vec expect = (Vec(5) << 2 * 1.6, 2 * 0.6, 2 * 0.1, 0.0, 0.0).finished();
  EXPECT_LT((eps - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(EpsilonCurve, NonIncreasingAndZeroAtFullRank) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const Index d = 1 + static_cast<Index>(rng() % 40);
    Vec h = oracle::random_positive(d, rng, 0.0, 5.0);
    if (t % 5 == 0) h.head(d / 2).setZero();
    const Vec eps = epsilon_curve(h);
    EXPECT_EQ(eps(d - 1), 0.0);
    for (Index r = 1; r < d; ++r) EXPECT_LE(eps(r), eps(r - 1));
    EXPECT_NEAR(eps(0), 2.0 * (h.sum() - h.maxCoeff()), 1e-12 * std::max(1.0, h.sum()));
  }
}

TEST(EpsilonCurve, RejectsInvalidEntries) {
  EXPECT_THROW(epsilon_curve((Vec(2) << 1.0, -1.0).finished()), ArgError);
  EXPECT_THROW(epsilon_curve((Vec(2) << 1.0, std::nan("")).finished()), ArgError);
}

TEST(Split, ThresholdAndCap) {
  Diagnostic diag;
  diag.h = (Vec(6) << 0.01, 4.0, 0.02, 2.0, 0.5, 0.0).finished();
  // eps = 2 * (2.53, 0.53, 0.03, 0.01, 0, 0)
  auto s = split_by_diagnostic(diag, 0.1, 6);
  EXPECT_EQ(s.split.rank(), 3);
  EXPECT_EQ(s.split.selected(), (std::vector<Index>{1, 3, 4}));
  s = split_by_diagnostic(diag, 0.1, 2);
  EXPECT_EQ(s.split.selected(), (std::vector<Index>{1, 3}));
  s = split_by_diagnostic(diag, 100.0, 6);
  EXPECT_EQ(s.split.selected(), (std::vector<Index>{1}));
  s = split_by_diagnostic(diag, 0.0, 6);
  EXPECT_EQ(s.split.rank(), 5);
  EXPECT_THROW(split_by_diagnostic(diag, 0.1, 0), ArgError);
}

TEST(Split, FixedRankAndTies) {
  Diagnostic diag;
  diag.h = (Vec(5) << 1.0, 2.0, 1.0, 2.0, 1.0).finished();
  const auto s = split_by_rank(diag, 3);
  EXPECT_EQ(s.split.selected(), (std::vector<Index>{0, 1, 3}));
  EXPECT_EQ(s.split.complement(), (std::vector<Index>{2, 4}));
  EXPECT_EQ(s.ranking, (std::vector<Index>{1, 3, 0, 2, 4}));
}

TEST(Split, DegenerateDiagnosticSelectsOneCoordinate) {
  Diagnostic diag;
  diag.h = Vec::Zero(4);
  const auto s = split_by_diagnostic(diag, 0.0, 4);
  EXPECT_TRUE(s.degenerate);
  EXPECT_EQ(s.split.rank(), 1);
}

TEST(DiagnosticW, MatchesFiniteDifferenceOfLikelihood) {
  Rng rng(2);
  const Mat a = oracle::random_matrix(4, 6, rng);
  const Mat noise = oracle::random_spd(4, rng);
  const Vec y = standard_normal(rng, 4);
  const LinearGaussianModel model(a, noise, y);
  const Vec lam = oracle::random_positive(6, rng);
  const WSpaceEvaluator ev(model, lam);
  const Mat w = exponential_sample(lam, 20, rng);
  const Diagnostic diag = estimate_diagnostic_w(ev, w);
  Vec ref = Vec::Zero(6);
  for (Index j = 0; j < 20; ++j) {
    const Vec wj = w.col(j);
    const Vec g = oracle::fd_gradient([&](const Vec& x) { return oracle::log_marginal_scale_mixture(a, noise, y, x); }, wj,
                                      1e-6 * wj);
    ref += g.cwiseProduct(g).cwiseQuotient(lam.cwiseProduct(lam));
  }
  ref /= 20.0;
  for (Index i = 0; i < 6; ++i) EXPECT_NEAR(diag.h(i), ref(i), 1e-5 * std::max(1e-3, ref(i)));
  EXPECT_EQ(diag.n_samples, 20);
  const Diagnostic par = estimate_diagnostic_w(ev, w, DiagnosticSource::Prior, 3);
  EXPECT_TRUE(par.h == diag.h);
}

TEST(DiagnosticW, InsensitiveCoordinateScoresZero) {
  Rng rng(3);
  Mat a = oracle::random_matrix(4, 5, rng);
  a.col(3).setZero();
  const LinearGaussianModel model(a, Mat::Identity(4, 4), standard_normal(rng, 4));
  const WSpaceEvaluator ev(model, Vec::Ones(5));
  const Diagnostic diag = estimate_diagnostic_w(ev, exponential_sample(Vec::Ones(5), 50, rng));
  EXPECT_EQ(diag.h(3), 0.0);
  EXPECT_GT(diag.h.minCoeff() + diag.h.maxCoeff(), 0.0);
}

TEST(DiagnosticX, MatchesDenseResidualGradient) {
  Rng rng(4);
  const Mat a = oracle::random_matrix(5, 4, rng);
  const Mat noise = oracle::random_spd(5, rng);
  const Vec y = standard_normal(rng, 5);
  const LinearGaussianModel model(a, noise, y);
  const LaplacePrior prior(oracle::random_positive(4, rng, 0.5, 2.0));
  const Mat x = oracle::random_matrix(4, 30, rng);
  const Diagnostic diag = estimate_diagnostic_x(model, prior, x);
  const Mat ninv = noise.inverse();
  Vec ref = Vec::Zero(4);
  for (Index j = 0; j < 30; ++j) {
    const Vec g = a.transpose() * ninv * (y - a * x.col(j));
    ref += g.cwiseProduct(g);
  }
  ref = ref.cwiseQuotient(prior.rates().cwiseAbs2()) / 30.0;
  EXPECT_LT((diag.h - ref).cwiseAbs().maxCoeff(), 1e-10 * ref.maxCoeff());
}

TEST(Hellinger, ExactApproximationGivesZero) {
  EXPECT_EQ(hellinger_from_log_ratios(Vec::Constant(7, 3.2)), 0.0);
  const Vec lr = (Vec(4) << 0.0, 1.0, -1.0, 0.5).finished();
  EXPECT_NEAR(hellinger_from_log_ratios(lr), hellinger_from_log_ratios((lr.array() + 10.0).matrix()), 1e-14);
  EXPECT_THROW(hellinger_from_log_ratios(Vec(0)), ArgError);
  EXPECT_THROW(hellinger_from_log_ratios((Vec(2) << 0.0, std::nan("")).finished()), NumericalError);
}

TEST(Hellinger, GaussianPairAgainstClosedForm) {
  // p = N(0, 1), q = N(0.3, 1): 1 - BC = 1 - exp(-mu^2 / 8). The estimator targets 2 (1 - BC) scaled
  // by the median normalization; with many samples it stays above the exact value.
  Rng rng(5);
  const double mu = 0.3;
  Mat s = standard_normal(rng, 200000).transpose();
  s.array() += mu;
  const double est = hellinger_bound_estimate([](const Vec& x) { return -0.5 * x(0) * x(0); },
                                              [&](const Vec& x) { return -0.5 * (x(0) - mu) * (x(0) - mu); }, s);
  const double exact = 1.0 - std::exp(-mu * mu / 8.0);
  EXPECT_GE(est, exact);
  EXPECT_LT(est, 50.0 * exact);
}

TEST(CcsSamplers, ShapesAndPositivity) {
  Rng rng(6);
  const Mat a = oracle::random_matrix(5, 8, rng);
  const auto model = LinearGaussianModel::isotropic(a, 0.3, standard_normal(rng, 5));
  const LaplacePrior prior = LaplacePrior::uniform(8, 1.5);
  const WSpaceEvaluator ev(model, prior.mixing_rates());
  ChainConfig cfg;
  cfg.mala.n_chains = 2;
  cfg.mala.n_samples = 200;
  cfg.mala.seed = 9;
  const CoordinateSplit split(8, {2, 5, 7});
  const CcsWResult rw = ccs_w_sampler(ev, split, cfg);
  ASSERT_EQ(rw.w.size(), 2u);
  EXPECT_EQ(rw.w[0].rows(), 8);
  EXPECT_EQ(rw.w[0].cols(), 200);
  EXPECT_EQ(rw.reduced.dim(), 3);
  for (const auto& w : rw.w) EXPECT_GT(w.minCoeff(), 0.0);
  for (Index j = 0; j < 200; ++j) EXPECT_DOUBLE_EQ(rw.w[1](5, j), std::exp(rw.reduced.chains[1](1, j)));
  const CcsXResult rx = ccs_x_sampler(model, prior, split, cfg);
  EXPECT_EQ(rx.x[0].rows(), 8);
  for (Index j = 0; j < 200; ++j) EXPECT_EQ(rx.x[0](7, j), rx.reduced.chains[0](2, j));
  const CcsWResult ref = reference_w_sampler(ev, cfg);
  EXPECT_EQ(ref.reduced.dim(), 8);
  for (const auto& w : ref.w) EXPECT_GT(w.minCoeff(), 0.0);
}

TEST(CcsSamplers, ComponentDrawsIndependentOfWorkers) {
  Rng rng(7);
  const Mat a = oracle::random_matrix(4, 6, rng);
  const auto model = LinearGaussianModel::isotropic(a, 0.3, standard_normal(rng, 4));
  const LinearRto rto(model);
  std::vector<Mat> w{exponential_sample(Vec::Ones(6), 30, rng), exponential_sample(Vec::Ones(6), 30, rng)};
  const auto x1 = sample_components(rto, w, 42, 1);
  const auto x3 = sample_components(rto, w, 42, 3);
  EXPECT_TRUE(x1[0] == x3[0]);
  EXPECT_TRUE(x1[1] == x3[1]);
}
