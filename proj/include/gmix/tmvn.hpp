#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "gmix/errors.hpp"
#include "gmix/linalg.hpp"
#include "gmix/random.hpp"

namespace gmix {

namespace tn {

/// Scaled complementary error function exp(t^2) erfc(t).
inline double erfcx(double t) {
  if (t < 0.0) return 2.0 * std::exp(t * t) - erfcx(-t);
  if (t < 25.0) return std::exp(t * t) * boost::math::erfc(t);
  // Asymptotic series 1/(t sqrt(pi)) sum_k (-1)^k (2k-1)!! / (2t^2)^k.
  const double x2 = 2.0 * t * t;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k <= 8; ++k) {
    term *= -(2.0 * k - 1.0) / x2;
    sum += term;
  }
  return sum / (t * std::sqrt(std::numbers::pi));
}

/// log of the upper tail P(Z > x) for x >= 0.
inline double ln_phi_upper(double x) {
  return -0.5 * x * x - std::numbers::ln2 + std::log(erfcx(x / std::numbers::sqrt2));
}

/// log P(a < Z < b) for a standard normal Z, stable in both tails.
inline double ln_npr(double a, double b) {
  if (!(b > a)) return -std::numeric_limits<double>::infinity();
  if (a > 0.0) {
    const double pa = ln_phi_upper(a);
    const double pb = std::isinf(b) ? -std::numeric_limits<double>::infinity() : ln_phi_upper(b);
    return pa + std::log1p(-std::exp(pb - pa));
  }
  if (b < 0.0) {
    const double pa = std::isinf(a) ? -std::numeric_limits<double>::infinity() : ln_phi_upper(-a);
    const double pb = ln_phi_upper(-b);
    return pb + std::log1p(-std::exp(pa - pb));
  }
  const double pa = std::isinf(a) ? 0.0 : 0.5 * boost::math::erfc(-a / std::numbers::sqrt2);
  const double pb = std::isinf(b) ? 0.0 : 0.5 * boost::math::erfc(b / std::numbers::sqrt2);
  return std::log1p(-pa - pb);
}

inline double std_normal(Rng& rng) {
  std::normal_distribution<double> nd;
  return nd(rng);
}

/// Tail sampler for l > 0 via a Rayleigh proposal.
inline double ntail(double l, double u, Rng& rng) {
  const double c = 0.5 * l * l;
  const double f = std::isinf(u) ? -1.0 : std::expm1(c - 0.5 * u * u);
  for (;;) {
    const double x = c - std::log1p(open_uniform(rng) * f);
    const double v = open_uniform(rng);
    if (v * v * x <= c) return std::sqrt(2.0 * x);
  }
}

/// Central sampler for |l|, |u| bounded: plain rejection for wide intervals, inverse CDF otherwise.
inline double tn_central(double l, double u, Rng& rng) {
  if (std::abs(u - l) > 2.0) {
    for (;;) {
      const double x = std_normal(rng);
      if (x >= l && x <= u) return x;
    }
  }
  const double pl = 0.5 * boost::math::erfc(l / std::numbers::sqrt2);
  const double pu = std::isinf(u) ? 0.0 : 0.5 * boost::math::erfc(u / std::numbers::sqrt2);
  const double arg = 2.0 * (pl - (pl - pu) * open_uniform(rng));
  return std::numbers::sqrt2 * boost::math::erfc_inv(arg);
}

/// One draw of a standard normal truncated to [l, u].
inline double trandn(double l, double u, Rng& rng) {
  constexpr double a = 0.66;
  if (l > a) return ntail(l, u, rng);
  if (u < -a) return -ntail(-u, -l, rng);
  return tn_central(l, u, rng);
}

}  // namespace tn

struct TmvnOptions {
  Index max_dim = 500;
  double min_acceptance = 1e-12;
  Index max_rounds = 100000;
  Index newton_max_iter = 200;
  double newton_tol = 1e-10;
};

/// Exact sampler for N(mean, precision^{-1}) restricted to the positive orthant, using
/// minimax exponential tilting: a separation-of-variables proposal shifted by the
/// saddle point of psi(x, mu), followed by rejection against exp(psi*).
class TruncatedMvn {
 public:
  TruncatedMvn(const Vec& mean, const Mat& precision, const TmvnOptions& opt = {}) : opt_(opt) {
    const Index r = mean.size();
    if (r < 1) throw ArgError("truncated normal dimension must be at least 1");
    if (precision.rows() != r || precision.cols() != r) throw ShapeError("precision shape does not match mean");
    if (r > opt.max_dim)
      throw FeasibilityError("truncated normal dimension " + std::to_string(r) + " exceeds the limit of " +
                             std::to_string(opt.max_dim));
    const Cholesky pc = strict_cholesky(precision, "truncated normal precision");
    Mat sig = pc.inverse();
    sig = 0.5 * (sig + sig.transpose()).eval();
    mean_ = mean;
    // Y = X - mean lies in [-mean, +inf).
    Vec l = -mean;
    Vec u = Vec::Constant(r, std::numeric_limits<double>::infinity());
    cholperm(sig, l, u);
    d_ = lfull_.diagonal();
    l_ = l.cwiseQuotient(d_);
    u_ = u.cwiseQuotient(d_);
    ls_ = d_.asDiagonal().inverse() * lfull_;
    ls_.diagonal().setZero();
    solve_saddle();
  }

  Index dim() const { return mean_.size(); }
  double psi_star() const { return psistar_; }

  /// n draws as columns of an r x n matrix.
  Mat sample(Index n, Rng& rng) const {
    const Index r = dim();
    Mat out(r, n);
    Index got = 0;
    Index proposed = 0;
    double acc_sum = 0.0;
    Vec z(r);
    for (Index round = 0; got < n; ++round) {
      if (round >= opt_.max_rounds * std::max<Index>(n, 1))
        throw FeasibilityError("truncated normal sampler exceeded its proposal budget");
      const double logpr = propose(z, rng);
      ++proposed;
      acc_sum += std::exp(std::min(0.0, logpr - psistar_));
      if (proposed == 1000 && acc_sum / 1000.0 < opt_.min_acceptance)
        throw FeasibilityError("truncated normal acceptance probability below " + std::to_string(opt_.min_acceptance) +
                               "; use a smaller support or a Gaussian fallback");
      if (-std::log(open_uniform(rng)) > psistar_ - logpr) {
        Vec y = lfull_ * z;
        Vec x(r);
        for (Index k = 0; k < r; ++k) x(perm_[static_cast<std::size_t>(k)]) = y(k);
        x += mean_;
        // Round-off at the boundary cannot produce a non-positive draw of a positive quantity.
        for (Index k = 0; k < r; ++k)
          if (!(x(k) > 0.0)) x(k) = std::numeric_limits<double>::denorm_min();
        out.col(got++) = x;
      }
    }
    return out;
  }

 private:
  // Cholesky with the variable reordering that places the most constrained coordinate first.
  void cholperm(Mat sig, Vec& l, Vec& u) {
    const Index d = sig.rows();
    perm_.resize(static_cast<std::size_t>(d));
    for (Index i = 0; i < d; ++i) perm_[static_cast<std::size_t>(i)] = i;
    Mat lm = Mat::Zero(d, d);
    Vec z = Vec::Zero(d);
    const double eps = std::numeric_limits<double>::epsilon();
    for (Index j = 0; j < d; ++j) {
      Index best = j;
      double best_pr = std::numeric_limits<double>::infinity();
      for (Index i = j; i < d; ++i) {
        double s = sig(i, i) - lm.row(i).head(j).squaredNorm();
        s = std::sqrt(s < 0.0 ? eps : s);
        const double cz = lm.row(i).head(j).dot(z.head(j));
        const double pr = tn::ln_npr((l(i) - cz) / s, (u(i) - cz) / s);
        if (pr < best_pr) {
          best_pr = pr;
          best = i;
        }
      }
      if (best != j) {
        sig.row(j).swap(sig.row(best));
        sig.col(j).swap(sig.col(best));
        lm.row(j).swap(lm.row(best));
        std::swap(l(j), l(best));
        std::swap(u(j), u(best));
        std::swap(perm_[static_cast<std::size_t>(j)], perm_[static_cast<std::size_t>(best)]);
      }
      double s = sig(j, j) - lm.row(j).head(j).squaredNorm();
      if (s < -0.01) throw DomainError("truncated normal covariance is not positive semi-definite");
      if (s < 0.0) s = eps;
      lm(j, j) = std::sqrt(s);
      for (Index i = j + 1; i < d; ++i) lm(i, j) = (sig(i, j) - lm.row(i).head(j).dot(lm.row(j).head(j))) / lm(j, j);
      const double cz = lm.row(j).head(j).dot(z.head(j));
      const double tl = (l(j) - cz) / lm(j, j);
      const double tu = (u(j) - cz) / lm(j, j);
      const double w = tn::ln_npr(tl, tu);
      const double el = std::exp(-0.5 * tl * tl - w);
      const double eu = std::isinf(tu) ? 0.0 : std::exp(-0.5 * tu * tu - w);
      z(j) = (el - eu) / std::sqrt(2.0 * std::numbers::pi);
    }
    lfull_ = lm;
  }

  // Gradient of psi with respect to (x_{1..d-1}, mu_{1..d-1}) and its Jacobian.
  void gradpsi(const Vec& y, Vec& grad, Mat* jac) const {
    const Index d = dim();
    const Index k = d - 1;
    Vec x = Vec::Zero(d), mu = Vec::Zero(d);
    x.head(k) = y.head(k);
    mu.head(k) = y.tail(k);
    const Vec c = ls_ * x;
    Vec pl(d), pu(d), p(d), dp(d);
    for (Index i = 0; i < d; ++i) {
      const double lt = l_(i) - mu(i) - c(i);
      const double ut = u_(i) - mu(i) - c(i);
      const double w = tn::ln_npr(lt, ut);
      pl(i) = std::exp(-0.5 * lt * lt - w) / std::sqrt(2.0 * std::numbers::pi);
      pu(i) = std::isinf(ut) ? 0.0 : std::exp(-0.5 * ut * ut - w) / std::sqrt(2.0 * std::numbers::pi);
      p(i) = pl(i) - pu(i);
      const double ltf = std::isinf(lt) ? 0.0 : lt;
      const double utf = std::isinf(ut) ? 0.0 : ut;
      dp(i) = -p(i) * p(i) + ltf * pl(i) - utf * pu(i);
    }
    grad.resize(2 * k);
    grad.head(k) = -mu.head(k) + (ls_.transpose() * p).head(k);
    grad.tail(k) = (mu - x + p).head(k);
    if (!jac) return;
    const Mat dl = dp.asDiagonal() * ls_;
    Mat mx = -Mat::Identity(d, d) + dl;
    const Mat xx = ls_.transpose() * dl;
    Mat& j = *jac;
    j.resize(2 * k, 2 * k);
    j.topLeftCorner(k, k) = xx.topLeftCorner(k, k);
    j.topRightCorner(k, k) = mx.topLeftCorner(k, k).transpose();
    j.bottomLeftCorner(k, k) = mx.topLeftCorner(k, k);
    j.bottomRightCorner(k, k) = (Vec::Ones(k) + dp.head(k)).asDiagonal();
  }

  double psy(const Vec& x, const Vec& mu) const {
    const Vec c = ls_ * x;
    double s = 0.0;
    for (Index i = 0; i < dim(); ++i)
      s += tn::ln_npr(l_(i) - mu(i) - c(i), u_(i) - mu(i) - c(i)) + 0.5 * mu(i) * mu(i) - x(i) * mu(i);
    return s;
  }

  void solve_saddle() {
    const Index d = dim();
    const Index k = d - 1;
    x_ = Vec::Zero(d);
    mu_ = Vec::Zero(d);
    if (k > 0) {
      Vec y = Vec::Zero(2 * k);
      Vec g;
      Mat jac;
      gradpsi(y, g, &jac);
      double gn = g.norm();
      bool ok = gn <= opt_.newton_tol;
      for (Index it = 0; it < opt_.newton_max_iter && !ok; ++it) {
        const Vec step = jac.partialPivLu().solve(-g);
        if (!step.allFinite()) break;
        double t = 1.0;
        Vec yn, gnew;
        double nn = std::numeric_limits<double>::infinity();
        for (int h = 0; h < 40; ++h) {
          yn = y + t * step;
          gradpsi(yn, gnew, nullptr);
          nn = gnew.norm();
          if (std::isfinite(nn) && nn < gn) break;
          t *= 0.5;
        }
        if (!(nn < gn)) break;
        y = yn;
        gradpsi(y, g, &jac);
        gn = g.norm();
        ok = gn <= opt_.newton_tol * std::max(1.0, std::sqrt(static_cast<double>(2 * k)));
      }
      if (!ok && gn > 1e-7)
        throw FeasibilityError("minimax tilting saddle point not found (gradient norm " + std::to_string(gn) + ")");
      x_.head(k) = y.head(k);
      mu_.head(k) = y.tail(k);
    }
    psistar_ = psy(x_, mu_);
    if (!std::isfinite(psistar_)) throw FeasibilityError("minimax tilting bound is not finite");
  }

  // Tilted sequential proposal; returns its log likelihood ratio.
  double propose(Vec& z, Rng& rng) const {
    const Index d = dim();
    double p = 0.0;
    for (Index k = 0; k < d; ++k) {
      const double col = ls_.row(k).head(k).dot(z.head(k));
      const double tl = l_(k) - mu_(k) - col;
      const double tu = u_(k) - mu_(k) - col;
      z(k) = mu_(k) + tn::trandn(tl, tu, rng);
      p += tn::ln_npr(tl, tu) + 0.5 * mu_(k) * mu_(k) - mu_(k) * z(k);
    }
    return p;
  }

  TmvnOptions opt_;
  Vec mean_;
  Mat lfull_;
  Mat ls_;
  Vec d_;
  Vec l_, u_;
  std::vector<Index> perm_;
  Vec x_, mu_;
  double psistar_ = 0.0;
};

inline Mat truncated_mvn_sample(const Vec& mean, const Mat& precision, Index n, Rng& rng,
                                const TmvnOptions& opt = {}) {
  return TruncatedMvn(mean, precision, opt).sample(n, rng);
}

}  // namespace gmix
