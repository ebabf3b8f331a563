#include <gtest/gtest.h>

#include <cmath>

#include "gmix/model.hpp"
#include "oracles.hpp"

using namespace gmix;

namespace {

LinearGaussianModel random_model(Index m, Index d, Rng& rng, bool dense_noise = true) {
  const Mat a = oracle::random_matrix(m, d, rng);
  const Mat noise = dense_noise ? oracle::random_spd(m, rng) : Mat(0.3 * Mat::Identity(m, m));
  const Vec y = standard_normal(rng, m);
  return LinearGaussianModel(a, noise, y);
}

}  // namespace

TEST(PosteriorComponent, ScalarCase) {
  const LinearGaussianModel model(Mat::Ones(1, 1), Mat::Ones(1, 1), Vec::Constant(1, 2.0));
  const auto pc = posterior_component(model, GaussianComponentSpec::scale_mixture(1), Vec::Ones(1));
  EXPECT_NEAR(pc.covariance()(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(pc.mean()(0), 1.0, 1e-14);
}

TEST(PosteriorComponent, NoDataReturnsPrior) {
  Rng rng(1);
  const LinearGaussianModel model(Mat::Zero(3, 4), Mat::Identity(3, 3), standard_normal(rng, 3));
  GaussianComponentSpec spec{[](const Vec& w) -> Vec { return w; },
                             [](const Vec& w) -> PriorCovariance { return DiagonalCovariance(w.cwiseAbs2()); }};
  const Vec w = oracle::random_positive(4, rng);
  const auto pc = posterior_component(model, spec, w);
  EXPECT_LT((pc.mean() - w).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((pc.covariance() - Mat(w.cwiseAbs2().asDiagonal())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PosteriorComponent, MatchesDenseInversionOracle) {
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    const auto model = random_model(3, 5, rng);
    const Mat cov_pr = oracle::random_spd(5, rng);
    const Vec mu_pr = standard_normal(rng, 5);
    const PosteriorComponent pc(model, DenseCovariance(cov_pr), mu_pr);
    const auto ref = oracle::gaussian_posterior(model.forward().dense(), model.noise_cov(), model.data(), mu_pr, cov_pr);
    EXPECT_LT((pc.mean() - ref.mean).norm(), 1e-10 * ref.mean.norm());
    EXPECT_LT((pc.covariance() - ref.cov).norm(), 1e-10 * ref.cov.norm());
  }
}

TEST(PosteriorComponent, NormalEquationsResidual) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto model = random_model(4, 6, rng);
    const Vec w = oracle::random_positive(6, rng, 1e-3, 10.0);
    const auto pc = posterior_component(model, GaussianComponentSpec::scale_mixture(6), w);
    const Vec res = pc.apply_precision(pc.mean()) - pc.normal_rhs();
    EXPECT_LE(res.norm(), 1e-8 * std::max(1.0, pc.normal_rhs().norm()));
  }
}

TEST(PosteriorComponent, Errors) {
  Rng rng(4);
  const auto model = random_model(3, 4, rng);
  Mat bad = Mat::Identity(4, 4);
  bad(0, 0) = -1.0;
  EXPECT_THROW(DenseCovariance{bad}, DomainError);
  EXPECT_THROW(DiagonalCovariance(-Vec::Ones(4)), DomainError);
  EXPECT_THROW(posterior_component(model, GaussianComponentSpec::scale_mixture(3), Vec::Ones(3)), ShapeError);
  EXPECT_THROW(LinearGaussianModel(Mat::Ones(2, 3), Mat::Identity(3, 3), Vec::Ones(2)), ShapeError);
  Mat nan = Mat::Ones(2, 2);
  nan(0, 0) = std::nan("");
  EXPECT_THROW(LinearGaussianModel(nan, Mat::Identity(2, 2), Vec::Ones(2)), DomainError);
  EXPECT_THROW(LinearGaussianModel(Mat::Ones(2, 2), -Mat::Identity(2, 2), Vec::Ones(2)), DomainError);
}

TEST(MarginalLikelihood, ScalarIdentity) {
  const double sigma = 0.7;
  const LinearGaussianModel model(Mat::Ones(1, 1), Mat::Constant(1, 1, sigma * sigma), Vec::Constant(1, 1.3));
  const auto spec = GaussianComponentSpec::scale_mixture(1);
  auto ref = [&](double w) { return -0.5 * std::log(sigma * sigma + w) - 0.5 * 1.69 / (sigma * sigma + w); };
  for (double w1 : {0.1, 1.0, 5.0})
    for (double w2 : {0.3, 2.0, 40.0}) {
      const double got = log_marginal_y_given_w(model, spec, Vec::Constant(1, w1)) -
                         log_marginal_y_given_w(model, spec, Vec::Constant(1, w2));
      EXPECT_NEAR(got, ref(w1) - ref(w2), 1e-10);
    }
}

TEST(MarginalLikelihood, ZeroForwardIsConstant) {
  Rng rng(5);
  const LinearGaussianModel model(Mat::Zero(2, 3), Mat::Identity(2, 2), standard_normal(rng, 2));
  const auto spec = GaussianComponentSpec::scale_mixture(3);
  const double base = log_marginal_y_given_w(model, spec, Vec::Ones(3));
  for (int t = 0; t < 5; ++t)
    EXPECT_NEAR(log_marginal_y_given_w(model, spec, oracle::random_positive(3, rng)), base, 1e-12);
}

TEST(MarginalLikelihood, MatchesMultivariateNormalDifferences) {
  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    std::uniform_int_distribution<Index> dim(1, 8);
    const Index m = dim(rng), d = dim(rng);
    const auto model = random_model(m, d, rng);
    const Mat a = model.forward().dense();
    const Mat b = oracle::random_matrix(d, d, rng);
    GaussianComponentSpec spec{[b](const Vec& w) -> Vec { return b * w; },
                               [](const Vec& w) -> PriorCovariance { return DiagonalCovariance(w); }};
    const Vec w1 = oracle::random_positive(d, rng, 0.05, 4.0), w2 = oracle::random_positive(d, rng, 0.05, 4.0);
    auto ref = [&](const Vec& w) {
      return oracle::mvn_logpdf(model.data(), a * (b * w), a * w.asDiagonal() * a.transpose() + model.noise_cov());
    };
    EXPECT_NEAR(log_marginal_y_given_w(model, spec, w1) - log_marginal_y_given_w(model, spec, w2), ref(w1) - ref(w2),
                1e-9);
  }
}

TEST(MarginalLikelihood, OrthogonalRotationInvariance) {
  Rng rng(7);
  const Index m = 5, d = 4;
  const Mat a = oracle::random_matrix(m, d, rng);
  const Vec y = standard_normal(rng, m);
  const Mat q = Eigen::HouseholderQR<Mat>(oracle::random_matrix(m, m, rng)).householderQ();
  const auto m1 = LinearGaussianModel::isotropic(a, 0.4, y);
  const auto m2 = LinearGaussianModel::isotropic(Mat(q * a), 0.4, Vec(q * y));
  const auto spec = GaussianComponentSpec::scale_mixture(d);
  const Vec w1 = oracle::random_positive(d, rng), w2 = oracle::random_positive(d, rng);
  const auto p1 = posterior_component(m1, spec, w1), p2 = posterior_component(m2, spec, w1);
  EXPECT_LT((p1.mean() - p2.mean()).norm(), 1e-9);
  EXPECT_LT((p1.covariance() - p2.covariance()).norm(), 1e-9);
  EXPECT_NEAR(log_marginal_y_given_w(m1, spec, w1) - log_marginal_y_given_w(m1, spec, w2),
              log_marginal_y_given_w(m2, spec, w1) - log_marginal_y_given_w(m2, spec, w2), 1e-9);
}

TEST(MixingPosteriorDensity, NoDataReducesToPrior) {
  Rng rng(8);
  const LinearGaussianModel model(Mat::Zero(2, 3), Mat::Identity(2, 2), standard_normal(rng, 2));
  const Vec lam = oracle::random_positive(3, rng);
  const auto mix = MixingDensity::exponential(lam);
  const auto spec = GaussianComponentSpec::scale_mixture(3);
  const Vec w1 = oracle::random_positive(3, rng), w2 = oracle::random_positive(3, rng);
  EXPECT_NEAR(log_mixing_posterior(model, spec, mix, w1) - log_mixing_posterior(model, spec, mix, w2),
              -lam.dot(w1 - w2), 1e-12);
  EXPECT_THROW(log_mixing_posterior(model, spec, mix, -Vec::Ones(3)), SupportError);
}

TEST(MixingPosteriorDensity, OneDimensionalLaplaceQuadrature) {
  // d = 1: integrating pi(x | w, y) pi(w | y) over w must reproduce pi(x | y) for the Laplace prior.
  const double a = 1.3, sigma = 0.6, y = 0.9, delta = 1.7;
  const auto model = LinearGaussianModel::isotropic(Mat::Constant(1, 1, a), sigma, Vec::Constant(1, y));
  const auto spec = GaussianComponentSpec::scale_mixture(1);
  const LaplacePrior prior(Vec::Constant(1, delta));
  const auto mix = prior.mixing();
  const double shift = log_mixing_posterior(model, spec, mix, Vec::Constant(1, 0.5));
  auto pw = [&](double w) { return std::exp(log_mixing_posterior(model, spec, mix, Vec::Constant(1, w)) - shift); };
  const double zw = oracle::integrate_half_line(pw);
  auto px_direct = [&](double x) { return std::exp(-0.5 * std::pow((a * x - y) / sigma, 2) - delta * std::abs(x)); };
  const double zx = oracle::integrate_line(px_direct);
  for (double x : {-0.5, 0.0, 0.3, 0.8, 1.5}) {
    auto integrand = [&](double w) {
      const auto pc = posterior_component(model, spec, Vec::Constant(1, w));
      const double v = pc.covariance()(0, 0), mu = pc.mean()(0);
      return pw(w) / zw * std::exp(-0.5 * (x - mu) * (x - mu) / v) / std::sqrt(2 * M_PI * v);
    };
    const double mixture = oracle::integrate_half_line(integrand);
    EXPECT_NEAR(mixture, px_direct(x) / zx, 1e-6 * px_direct(x) / zx);
  }
}

TEST(MixingDensity, Validation) {
  EXPECT_THROW(MixingDensity::exponential(Vec::Zero(2)), DomainError);
  EXPECT_THROW(MixingDensity::finite_weights(Vec::Constant(2, 0.4)), DomainError);
  EXPECT_THROW(MixingDensity::inverse_gamma(0.0, 1.0), DomainError);
  const auto ig = MixingDensity::inverse_gamma(2.0, 3.0);
  EXPECT_NEAR(ig.log_density(Vec::Constant(1, 1.5)), -3.0 * std::log(1.5) - 2.0, 1e-14);
  EXPECT_THROW(ig.log_density(Vec::Zero(1)), SupportError);
  const LaplacePrior p(Vec::Constant(3, 2.0));
  EXPECT_EQ(p.mixing_rates(), Vec::Constant(3, 2.0));
}

TEST(GmmWeights, SingleComponent) {
  Rng rng(9);
  const auto model = random_model(2, 2, rng);
  const Vec p = gmm_posterior_weights(model, {Vec::Zero(2)}, {Mat::Identity(2, 2)}, Vec::Ones(1));
  EXPECT_DOUBLE_EQ(p(0), 1.0);
}

TEST(GmmWeights, IdenticalComponentsKeepPriorWeights) {
  Rng rng(10);
  const auto model = random_model(3, 2, rng);
  Vec w(2);
  w << 0.3, 0.7;
  const Vec p = gmm_posterior_weights(model, {Vec::Ones(2), Vec::Ones(2)}, {Mat::Identity(2, 2), Mat::Identity(2, 2)}, w);
  EXPECT_NEAR(p(0), 0.3, 1e-14);
  EXPECT_NEAR(p(1), 0.7, 1e-14);
}

TEST(GmmWeights, OneDimensionalQuadrature) {
  const double a = 0.8, sigma = 0.5, y = 1.1;
  const auto model = LinearGaussianModel::isotropic(Mat::Constant(1, 1, a), sigma, Vec::Constant(1, y));
  const std::vector<Vec> means{Vec::Constant(1, -1.0), Vec::Constant(1, 2.0)};
  const std::vector<Mat> covs{Mat::Constant(1, 1, 0.5), Mat::Constant(1, 1, 2.0)};
  Vec pw(2);
  pw << 0.6, 0.4;
  const Vec p = gmm_posterior_weights(model, means, covs, pw);
  Vec mass(2);
  for (int i = 0; i < 2; ++i) {
    const double mu = means[i](0), v = covs[i](0, 0);
    mass(i) = pw(i) * oracle::integrate_line([&](double x) {
      return std::exp(-0.5 * std::pow((a * x - y) / sigma, 2) - 0.5 * (x - mu) * (x - mu) / v) / std::sqrt(2 * M_PI * v);
    });
  }
  mass /= mass.sum();
  EXPECT_NEAR(p(0), mass(0), 1e-8);
  EXPECT_NEAR(p(1), mass(1), 1e-8);
}

TEST(GmmWeights, SumToOneAndPermutationEquivariant) {
  Rng rng(11);
  const auto model = random_model(3, 3, rng);
  std::vector<Vec> means;
  std::vector<Mat> covs;
  for (int i = 0; i < 4; ++i) {
    means.push_back(3.0 * standard_normal(rng, 3));
    covs.push_back(oracle::random_spd(3, rng));
  }
  Vec w(4);
  w << 0.1, 0.2, 0.3, 0.4;
  const Vec p = gmm_posterior_weights(model, means, covs, w);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  const std::vector<int> perm{2, 0, 3, 1};
  std::vector<Vec> m2;
  std::vector<Mat> c2;
  Vec w2(4);
  for (int k = 0; k < 4; ++k) {
    m2.push_back(means[perm[k]]);
    c2.push_back(covs[perm[k]]);
    w2(k) = w(perm[k]);
  }
  const Vec p2 = gmm_posterior_weights(model, m2, c2, w2);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(p2(k), p(perm[k]), 1e-12);
}

TEST(GmmWeights, ExtremeLikelihoodsStayFinite) {
  const auto model = LinearGaussianModel::isotropic(Mat::Identity(1, 1), 1e-3, Vec::Constant(1, 0.0));
  const Vec p = gmm_posterior_weights(model, {Vec::Constant(1, 0.0), Vec::Constant(1, 50.0)},
                                      {Mat::Constant(1, 1, 1e-4), Mat::Constant(1, 1, 1e-4)}, Vec::Constant(2, 0.5));
  EXPECT_NEAR(p(0), 1.0, 1e-12);
  EXPECT_TRUE(p.allFinite());
}
