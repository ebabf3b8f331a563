#pragma once

// Independent reference computations used by the unit and acceptance tests. They use
// explicit inverses, LU determinants and quadrature, not the library's factored paths.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "gmix/linalg.hpp"
#include "gmix/random.hpp"

namespace oracle {

using gmix::Index;
using gmix::Mat;
using gmix::Vec;

/// log N(y; mean, cov) via LU.
inline double mvn_logpdf(const Vec& y, const Vec& mean, const Mat& cov) {
  // Factor cov / scale so that huge variances neither overflow nor lose the quadratic form.
  const double scale = cov.cwiseAbs().maxCoeff();
  Eigen::FullPivLU<Mat> lu(cov / scale);
  const Vec r = y - mean;
  const double quad = r.dot(lu.solve(r)) / scale;
  const double logdet = lu.matrixLU().diagonal().cwiseAbs().array().log().sum() +
                        static_cast<double>(y.size()) * std::log(scale);
  return -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI);
}

/// Posterior moments of x | w, y with prior N(mu_pr, cov_pr) by explicit inversion.
struct Moments {
  Vec mean;
  Mat cov;
};

inline Moments gaussian_posterior(const Mat& a, const Mat& noise_cov, const Vec& y, const Vec& mu_pr, const Mat& cov_pr) {
  const Mat noise_inv = noise_cov.inverse();
  const Mat prior_inv = cov_pr.inverse();
  const Mat prec = a.transpose() * noise_inv * a + prior_inv;
  Moments m;
  m.cov = prec.inverse();
  m.cov = 0.5 * (m.cov + m.cov.transpose()).eval();
  m.mean = m.cov * (a.transpose() * noise_inv * y + prior_inv * mu_pr);
  return m;
}

/// log pi(y | w) for the scale mixture x | w ~ N(0, diag(w)): log N(y; 0, A diag(w) A^T + Sigma_obs).
inline double log_marginal_scale_mixture(const Mat& a, const Mat& noise_cov, const Vec& y, const Vec& w) {
  const Mat c = a * w.asDiagonal() * a.transpose() + noise_cov;
  return mvn_logpdf(y, Vec::Zero(y.size()), c);
}

/// Dense w-space log posterior mixing density with the same constant as the library's:
/// -lambda^T w - 1/2 log det S + 1/2 b^T W^{1/2} S^{-1} W^{1/2} b, S = I + W^{1/2} G W^{1/2}.
inline double dense_log_density_w(const Mat& gram, const Vec& b, const Vec& lam, const Vec& w) {
  const Index d = w.size();
  const Vec s = w.cwiseSqrt();
  const Mat sm = Mat::Identity(d, d) + s.asDiagonal() * gram * s.asDiagonal();
  Eigen::FullPivLU<Mat> lu(sm);
  const Vec sb = s.cwiseProduct(b);
  return -lam.dot(w) - 0.5 * std::log(lu.determinant()) + 0.5 * sb.dot(lu.solve(sb));
}

/// Gradient of the same density from K = G - G W^{1/2} S^{-1} W^{1/2} G and z = b - G W^{1/2} S^{-1} W^{1/2} b.
inline Vec dense_grad_log_density_w(const Mat& gram, const Vec& b, const Vec& lam, const Vec& w) {
  const Index d = w.size();
  const Mat ws = Mat(w.cwiseSqrt().asDiagonal());
  const Mat sinv = (Mat::Identity(d, d) + ws * gram * ws).inverse();
  const Mat k = gram - gram * ws * sinv * ws * gram;
  const Vec z = b - gram * ws * sinv * ws * b;
  return -lam - 0.5 * k.diagonal() + 0.5 * z.cwiseProduct(z);
}

/// Central finite-difference gradient.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, const Vec& h) {
  Vec g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp(i) += h(i);
    xm(i) -= h(i);
    g(i) = (f(xp) - f(xm)) / (2.0 * h(i));
  }
  return g;
}

/// Central finite-difference Jacobian of a vector field (columns = derivative directions).
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, const Vec& h) {
  Mat j(x.size(), x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp(i) += h(i);
    xm(i) -= h(i);
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h(i));
  }
  return j;
}

inline Mat random_matrix(Index r, Index c, gmix::Rng& rng) {
  Mat a(r, c);
  std::normal_distribution<double> n;
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) a(i, j) = n(rng);
  return a;
}

inline Mat random_spd(Index n, gmix::Rng& rng, double ridge = 0.5) {
  const Mat b = random_matrix(n, n, rng);
  return b * b.transpose() / static_cast<double>(n) + ridge * Mat::Identity(n, n);
}

inline Vec random_positive(Index n, gmix::Rng& rng, double lo = 0.2, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

// ---------------------------------------------------------------------------
// Quadrature.

/// Integral over (-inf, inf) of a function with a possible kink at 0.
inline double integrate_line(const std::function<double(double)>& f) {
  boost::math::quadrature::exp_sinh<double> es;
  const double right = es.integrate([&](double t) { return f(t); }, 0.0, std::numeric_limits<double>::infinity());
  const double left = es.integrate([&](double t) { return f(-t); }, 0.0, std::numeric_limits<double>::infinity());
  return left + right;
}

/// Integral over (0, inf).
inline double integrate_half_line(const std::function<double(double)>& f) {
  boost::math::quadrature::exp_sinh<double> es;
  return es.integrate([&](double t) { return f(t); }, 0.0, std::numeric_limits<double>::infinity());
}

/// Integral over a finite interval.
inline double integrate_interval(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-12);
}

/// Normalized first and second moments of an unnormalized 2D density given by its log.
/// `lines` integrates a 1D function over the domain of each coordinate.
struct Moments2 {
  double z = 0.0;
  Vec mean = Vec::Zero(2);
  Vec var = Vec::Zero(2);
  Vec m4 = Vec::Zero(2);  // central fourth moments
};

inline Moments2 moments_2d(const std::function<double(double, double)>& logp, double shift,
                           const std::function<double(const std::function<double(double)>&)>& line) {
  auto integral = [&](const std::function<double(double, double)>& g) {
    return line([&](double a) {
      return line([&](double b) {
        const double p = std::exp(logp(a, b) - shift);
        return p == 0.0 ? 0.0 : g(a, b) * p;
      });
    });
  };
  Moments2 m;
  m.z = integral([](double, double) { return 1.0; });
  m.mean(0) = integral([](double a, double) { return a; }) / m.z;
  m.mean(1) = integral([](double, double b) { return b; }) / m.z;
  const double m0 = m.mean(0), m1 = m.mean(1);
  m.var(0) = integral([&](double a, double) { return (a - m0) * (a - m0); }) / m.z;
  m.var(1) = integral([&](double, double b) { return (b - m1) * (b - m1); }) / m.z;
  m.m4(0) = integral([&](double a, double) { return std::pow(a - m0, 4); }) / m.z;
  m.m4(1) = integral([&](double, double b) { return std::pow(b - m1, 4); }) / m.z;
  return m;
}

/// Two-sided Kolmogorov-Smirnov distance between samples and a CDF.
inline double ks_distance(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const auto n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

/// CDF on a grid by cumulative trapezoid integration of an unnormalized density.
class GridCdf {
 public:
  GridCdf(const std::function<double(double)>& pdf, double lo, double hi, std::size_t n) : lo_(lo), hi_(hi) {
    xs_.resize(n + 1);
    cdf_.resize(n + 1);
    const double h = (hi - lo) / static_cast<double>(n);
    double prev = pdf(lo);
    cdf_[0] = 0.0;
    xs_[0] = lo;
    for (std::size_t i = 1; i <= n; ++i) {
      xs_[i] = lo + h * static_cast<double>(i);
      const double cur = pdf(xs_[i]);
      cdf_[i] = cdf_[i - 1] + 0.5 * h * (prev + cur);
      prev = cur;
    }
    for (auto& c : cdf_) c /= cdf_.back();
  }

  double operator()(double x) const {
    if (x <= lo_) return 0.0;
    if (x >= hi_) return 1.0;
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    const auto k = static_cast<std::size_t>(it - xs_.begin());
    const double t = (x - xs_[k - 1]) / (xs_[k] - xs_[k - 1]);
    return cdf_[k - 1] + t * (cdf_[k] - cdf_[k - 1]);
  }

 private:
  double lo_, hi_;
  std::vector<double> xs_, cdf_;
};

}  // namespace oracle
