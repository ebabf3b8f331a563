#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gmix/errors.hpp"
#include "gmix/forward.hpp"
#include "gmix/linalg.hpp"

namespace gmix {

namespace detail {

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t hash_values(const double* v, Index n, std::uint64_t h) {
  return fnv1a(v, static_cast<std::size_t>(n) * sizeof(double), h);
}

}  // namespace detail

/// Linear forward model with additive Gaussian noise: y = A x + e, e ~ N(0, Sigma_obs).
///
/// The noise covariance is factorized once as Sigma_obs = R R^T (R lower triangular),
/// so the factor with Sigma_obs^{-1} = L1 L1^T is L1 = R^{-T}. Everything downstream
/// works with the whitened forward F = R^{-1} A and whitened data R^{-1} y.
class LinearGaussianModel {
 public:
  LinearGaussianModel(Mat forward, Mat noise_cov, Vec data) {
    init_common(forward.rows(), forward.cols(), noise_cov, data);
    if (!forward.allFinite()) throw DomainError("forward matrix contains non-finite entries");
    forward_ = WhitenedForward(forward);
    if (noise_sd_) {
      whitened_ = WhitenedForward(Mat(noise_sd_->cwiseInverse().asDiagonal() * forward));
    } else {
      whitened_ = WhitenedForward(Mat(noise_chol_.llt.matrixL().solve(forward)));
    }
    finish();
  }

  LinearGaussianModel(SpMat forward, Mat noise_cov, Vec data) {
    init_common(forward.rows(), forward.cols(), noise_cov, data);
    for (Index k = 0; k < forward.outerSize(); ++k)
      for (SpMat::InnerIterator it(forward, k); it; ++it)
        if (!std::isfinite(it.value())) throw DomainError("forward matrix contains non-finite entries");
    if (noise_sd_) {
      SpMat w = noise_sd_->cwiseInverse().asDiagonal() * forward;
      whitened_ = WhitenedForward(std::move(w));
    } else {
      whitened_ = WhitenedForward(Mat(noise_chol_.llt.matrixL().solve(Mat(forward))));
    }
    forward_ = WhitenedForward(std::move(forward));
    finish();
  }

  /// Convenience constructor for Sigma_obs = sigma^2 I.
  static LinearGaussianModel isotropic(Mat forward, double sigma, Vec data) {
    const Index m = forward.rows();
    return LinearGaussianModel(std::move(forward), Mat(Mat::Identity(m, m) * (sigma * sigma)), std::move(data));
  }
  static LinearGaussianModel isotropic(SpMat forward, double sigma, Vec data) {
    const Index m = forward.rows();
    return LinearGaussianModel(std::move(forward), Mat(Mat::Identity(m, m) * (sigma * sigma)), std::move(data));
  }

  Index m() const { return m_; }
  Index d() const { return d_; }
  const Vec& data() const { return data_; }
  const Mat& noise_cov() const { return noise_cov_; }

  /// Raw forward operator A.
  const WhitenedForward& forward() const { return forward_; }
  /// Whitened forward F = R^{-1} A.
  const WhitenedForward& whitened() const { return whitened_; }
  /// Whitened data R^{-1} y.
  const Vec& whitened_data() const { return whitened_data_; }
  /// A^T Sigma_obs^{-1} y.
  const Vec& b_hat() const { return b_hat_; }

  /// L1^T u = R^{-1} u for a data-space vector u.
  Vec whiten(const Vec& u) const {
    if (noise_sd_) return u.cwiseQuotient(*noise_sd_);
    return noise_chol_.llt.matrixL().solve(u);
  }

  /// Sigma_obs = sigma^2 I when the noise is isotropic.
  std::optional<double> isotropic_sigma() const { return isotropic_sigma_; }

  /// Content hash of (A, Sigma_obs, y); used to tag dropped additive constants.
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  void init_common(Index m, Index d, const Mat& noise_cov, const Vec& data) {
    if (m < 1 || d < 1) throw ShapeError("forward matrix must be at least 1x1");
    if (noise_cov.rows() != m || noise_cov.cols() != m) throw ShapeError("noise covariance must be m x m");
    if (data.size() != m) throw ShapeError("data length must equal the number of forward rows");
    if (!data.allFinite()) throw DomainError("data contains non-finite entries");
    if (!noise_cov.isApprox(noise_cov.transpose(), 1e-12)) throw DomainError("noise covariance is not symmetric");
    m_ = m;
    d_ = d;
    noise_cov_ = noise_cov;
    data_ = data;
    const bool diagonal = noise_cov.isDiagonal(0.0);
    if (diagonal) {
      Vec var = noise_cov.diagonal();
      if (!(var.array() > 0.0).all()) throw DomainError("noise covariance is not positive-definite");
      noise_sd_ = var.cwiseSqrt();
      if ((var.array() == var(0)).all()) isotropic_sigma_ = std::sqrt(var(0));
    } else {
      noise_chol_ = strict_cholesky(noise_cov, "noise covariance");
    }
  }

  void finish() {
    whitened_data_ = whiten(data_);
    b_hat_ = whitened_.apply_t(whitened_data_);
    std::uint64_t h = detail::hash_values(noise_cov_.data(), noise_cov_.size(), 1469598103934665603ULL);
    h = detail::hash_values(data_.data(), data_.size(), h);
    const Mat dense = forward_.dense();
    fingerprint_ = detail::hash_values(dense.data(), dense.size(), h);
  }

  Index m_ = 0;
  Index d_ = 0;
  WhitenedForward forward_;
  WhitenedForward whitened_;
  Mat noise_cov_;
  Vec data_;
  Vec whitened_data_;
  Vec b_hat_;
  std::optional<Vec> noise_sd_;
  Cholesky noise_chol_;
  std::optional<double> isotropic_sigma_;
  std::uint64_t fingerprint_ = 0;
};

// ---------------------------------------------------------------------------
// Prior component covariance Sigma_pr(w), accessed only through its factorization.

/// Sigma_pr = diag(variance). For scale mixtures variance = w.
class DiagonalCovariance {
 public:
  explicit DiagonalCovariance(Vec variance) : var_(std::move(variance)) {
    if (!(var_.array() > 0.0).all() || !var_.allFinite())
      throw DomainError("diagonal prior covariance must have strictly positive finite entries");
  }
  Index size() const { return var_.size(); }
  const Vec& variance() const { return var_; }
  Vec apply(const Vec& x) const { return var_.cwiseProduct(x); }
  Vec solve(const Vec& x) const { return x.cwiseQuotient(var_); }
  double log_det() const { return var_.array().log().sum(); }
  /// L2^T x with Sigma_pr^{-1} = L2 L2^T.
  Vec whiten(const Vec& x) const { return x.cwiseQuotient(var_.cwiseSqrt()); }
  /// L2 u.
  Vec whiten_t(const Vec& u) const { return u.cwiseQuotient(var_.cwiseSqrt()); }
  Vec precision_diag() const { return var_.cwiseInverse(); }
  Mat precision() const { return Mat(var_.cwiseInverse().asDiagonal()); }
  Mat dense() const { return Mat(var_.asDiagonal()); }

 private:
  Vec var_;
};

/// General SPD Sigma_pr held through its Cholesky factor Sigma_pr = L L^T.
class DenseCovariance {
 public:
  explicit DenseCovariance(Mat cov) : cov_(std::move(cov)), chol_(strict_cholesky(cov_, "prior covariance")) {}
  Index size() const { return cov_.rows(); }
  Vec apply(const Vec& x) const { return cov_ * x; }
  Vec solve(const Vec& x) const { return chol_.solve(x); }
  double log_det() const { return chol_.log_det(); }
  /// Sigma_pr^{-1} = L^{-T} L^{-1}, so L2 = L^{-T} and L2^T x = L^{-1} x.
  Vec whiten(const Vec& x) const { return chol_.llt.matrixL().solve(x); }
  Vec whiten_t(const Vec& u) const { return chol_.llt.matrixU().solve(u); }
  Vec precision_diag() const {
    Mat linv = chol_.llt.matrixL().solve(Mat::Identity(size(), size()));
    return linv.colwise().squaredNorm().transpose();
  }
  Mat precision() const { return chol_.inverse(); }
  Mat dense() const { return cov_; }

 private:
  Mat cov_;
  Cholesky chol_;
};

using PriorCovariance = std::variant<DiagonalCovariance, DenseCovariance>;

/// Component mean mu_pr(w) and covariance Sigma_pr(w) of a Gaussian mixture prior.
struct GaussianComponentSpec {
  std::function<Vec(const Vec&)> mean;
  std::function<PriorCovariance(const Vec&)> covariance;

  /// Gaussian scale mixture with mu_pr(w) = 0 and Sigma_pr(w) = diag(w), as for Laplace priors.
  static GaussianComponentSpec scale_mixture(Index d) {
    return {[d](const Vec&) -> Vec { return Vec::Zero(d); },
            [](const Vec& w) -> PriorCovariance { return DiagonalCovariance(w); }};
  }
};

// ---------------------------------------------------------------------------
// Mixing densities pi(w).

struct ExponentialMixing {
  Vec rates;
};
struct InverseGammaMixing {
  double shape;
  double rate;
};
struct FiniteWeightsMixing {
  Vec weights;
};

/// Prior density over the mixing variable. Log densities are unnormalized
/// except where noted; only differences in w are meaningful.
class MixingDensity {
 public:
  static MixingDensity exponential(Vec rates) {
    if (rates.size() == 0 || !(rates.array() > 0.0).all() || !rates.allFinite())
      throw DomainError("exponential mixing rates must be strictly positive");
    return MixingDensity(ExponentialMixing{std::move(rates)});
  }
  static MixingDensity inverse_gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0)) throw DomainError("inverse-gamma shape and rate must be positive");
    return MixingDensity(InverseGammaMixing{shape, rate});
  }
  static MixingDensity finite_weights(Vec weights) {
    if (weights.size() == 0 || (weights.array() < 0.0).any())
      throw DomainError("finite mixing weights must be non-negative");
    if (std::abs(weights.sum() - 1.0) > 1e-12) throw DomainError("finite mixing weights must sum to one");
    return MixingDensity(FiniteWeightsMixing{std::move(weights)});
  }

  const auto& variant() const { return v_; }

  /// Unnormalized log pi(w). FiniteWeights expects w = [component index].
  double log_density(const Vec& w) const {
    return std::visit(
        [&](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, ExponentialMixing>) {
            if (w.size() != m.rates.size()) throw ShapeError("mixing variable length does not match rates");
            if ((w.array() < 0.0).any() || !w.allFinite()) throw SupportError("exponential mixing requires w >= 0");
            return -m.rates.dot(w);
          } else if constexpr (std::is_same_v<T, InverseGammaMixing>) {
            if (!(w.array() > 0.0).all() || !w.allFinite()) throw SupportError("inverse-gamma mixing requires w > 0");
            return (-(m.shape + 1.0) * w.array().log() - m.rate / w.array()).sum();
          } else {
            if (w.size() != 1) throw SupportError("finite mixing expects a single component index");
            const double idx = w(0);
            if (idx != std::floor(idx) || idx < 0 || idx >= static_cast<double>(m.weights.size()))
              throw SupportError("component index outside 0..N-1");
            const double p = m.weights(static_cast<Index>(idx));
            return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
          }
        },
        v_);
  }

 private:
  template <typename T>
  explicit MixingDensity(T v) : v_(std::move(v)) {}
  std::variant<ExponentialMixing, InverseGammaMixing, FiniteWeightsMixing> v_;
};

/// Product-form Laplace prior pi(x) ∝ exp(-sum_i delta_i |x_i|).
class LaplacePrior {
 public:
  explicit LaplacePrior(Vec rates) : rates_(std::move(rates)) {
    if (rates_.size() == 0 || !(rates_.array() > 0.0).all() || !rates_.allFinite())
      throw DomainError("Laplace rates must be strictly positive");
  }
  static LaplacePrior uniform(Index d, double delta) { return LaplacePrior(Vec::Constant(d, delta)); }

  const Vec& rates() const { return rates_; }
  Index size() const { return rates_.size(); }
  /// Exponential mixing rates lambda_i = delta_i^2 / 2.
  Vec mixing_rates() const { return 0.5 * rates_.array().square().matrix(); }
  MixingDensity mixing() const { return MixingDensity::exponential(mixing_rates()); }
  double log_density(const Vec& x) const { return -rates_.cwiseProduct(x.cwiseAbs()).sum(); }

 private:
  Vec rates_;
};

// ---------------------------------------------------------------------------
// Conditional Gaussian pi(x | w, y) = N(mu(w, y), Sigma(w)).

/// Posterior component with precision Sigma(w)^{-1} = A^T Sigma_obs^{-1} A + Sigma_pr(w)^{-1}.
/// Holds a reference to the model; the model must outlive it.
class PosteriorComponent {
 public:
  PosteriorComponent(const LinearGaussianModel& model, PriorCovariance prior_cov, Vec prior_mean)
      : model_(&model), prior_cov_(std::move(prior_cov)), prior_mean_(std::move(prior_mean)) {
    const Index d = model.d();
    const Index pd = std::visit([](const auto& c) { return c.size(); }, prior_cov_);
    if (pd != d || prior_mean_.size() != d) throw ShapeError("prior component dimension does not match model");
    Mat prec = model.whitened().gram();
    prec += std::visit([](const auto& c) { return c.precision(); }, prior_cov_);
    prec_chol_ = robust_cholesky(prec, "posterior precision");
    rhs_ = model.b_hat() + prior_solve(prior_mean_);
    mean_ = prec_chol_.solve(rhs_);
  }

  const LinearGaussianModel& model() const { return *model_; }
  const PriorCovariance& prior_covariance() const { return prior_cov_; }
  const Vec& prior_mean() const { return prior_mean_; }
  const Vec& mean() const { return mean_; }

  /// Sigma(w)^{-1} x without densifying the precision.
  Vec apply_precision(const Vec& x) const {
    return model_->whitened().apply_t(model_->whitened().apply(x)) + prior_solve(x);
  }
  /// A^T Sigma_obs^{-1} y + Sigma_pr^{-1} mu_pr.
  const Vec& normal_rhs() const { return rhs_; }

  Mat precision() const {
    return model_->whitened().gram() + std::visit([](const auto& c) { return c.precision(); }, prior_cov_);
  }
  Mat covariance() const { return prec_chol_.inverse(); }
  /// log det Sigma(w) = -log det Sigma(w)^{-1}.
  double log_det_covariance() const { return -prec_chol_.log_det(); }
  double prior_log_det() const {
    return std::visit([](const auto& c) { return c.log_det(); }, prior_cov_);
  }
  Vec prior_solve(const Vec& x) const {
    return std::visit([&](const auto& c) { return c.solve(x); }, prior_cov_);
  }

 private:
  const LinearGaussianModel* model_;
  PriorCovariance prior_cov_;
  Vec prior_mean_;
  Cholesky prec_chol_;
  Vec rhs_;
  Vec mean_;
};

inline PosteriorComponent posterior_component(const LinearGaussianModel& model, const GaussianComponentSpec& spec,
                                              const Vec& w) {
  Vec mu = spec.mean(w);
  if (mu.size() != model.d()) throw ShapeError("component mean length does not match model dimension");
  return PosteriorComponent(model, spec.covariance(w), std::move(mu));
}

/// log pi(y | w) up to a w-independent additive constant:
///   1/2 log det Sigma(w) - 1/2 log det Sigma_pr(w) + 1/2 |mu(w,y)|^2_{Sigma(w)^{-1}} - 1/2 |mu_pr(w)|^2_{Sigma_pr(w)^{-1}}.
inline double log_marginal_y_given_w(const PosteriorComponent& pc) {
  const Vec& mu = pc.mean();
  const Vec& mu_pr = pc.prior_mean();
  const double quad_post = mu.dot(pc.normal_rhs());
  const double quad_prior = mu_pr.dot(pc.prior_solve(mu_pr));
  const double v = 0.5 * pc.log_det_covariance() - 0.5 * pc.prior_log_det() + 0.5 * quad_post - 0.5 * quad_prior;
  if (!std::isfinite(v)) throw NumericalError("log marginal likelihood is not finite");
  return v;
}

inline double log_marginal_y_given_w(const LinearGaussianModel& model, const GaussianComponentSpec& spec,
                                     const Vec& w) {
  return log_marginal_y_given_w(posterior_component(model, spec, w));
}

/// Unnormalized log pi(w | y) = log pi(y | w) + log pi(w).
inline double log_mixing_posterior(const LinearGaussianModel& model, const GaussianComponentSpec& spec,
                                   const MixingDensity& mixing, const Vec& w) {
  const double lp = mixing.log_density(w);  // support check first
  if (lp == -std::numeric_limits<double>::infinity()) return lp;
  return log_marginal_y_given_w(model, spec, w) + lp;
}

/// Posterior weights p(i | y) ∝ pi(y | i) p_i of a finite Gaussian mixture prior.
inline Vec gmm_posterior_weights(const LinearGaussianModel& model, const std::vector<Vec>& means,
                                 const std::vector<Mat>& covs, const Vec& weights) {
  const auto n = static_cast<Index>(means.size());
  if (n < 1 || static_cast<Index>(covs.size()) != n || weights.size() != n)
    throw ShapeError("mixture needs matching numbers of means, covariances and weights");
  (void)MixingDensity::finite_weights(weights);  // validates weights
  Vec logw(n);
  for (Index i = 0; i < n; ++i) {
    if (weights(i) == 0.0) {
      logw(i) = -std::numeric_limits<double>::infinity();
      continue;
    }
    PosteriorComponent pc(model, DenseCovariance(covs[static_cast<std::size_t>(i)]), means[static_cast<std::size_t>(i)]);
    logw(i) = log_marginal_y_given_w(pc) + std::log(weights(i));
  }
  const double lse = log_sum_exp(logw);
  if (!std::isfinite(lse)) throw NumericalError("all mixture posterior weights underflowed");
  Vec p = (logw.array() - lse).exp();
  const double s = p.sum();
  if (!(s > 0.0)) throw NumericalError("all mixture posterior weights underflowed");
  return p / s;
}

}  // namespace gmix
