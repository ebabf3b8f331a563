#pragma once

#include <cmath>
#include <string>

#include "gmix/linalg.hpp"
#include "gmix/model.hpp"
#include "gmix/random.hpp"

namespace gmix {

struct CglsOptions {
  double rel_tol = 1e-10;
  Index max_iter = 0;  // 0 means 10 * number of unknowns
};

struct CglsResult {
  Vec x;
  Index iterations = 0;
  double rel_residual = 0.0;
};

/// CGLS for min |A x - b| given A and A^T as callables. Stops when
/// |A^T r| <= rel_tol * |A^T b|; throws NumericalError after max_iter.
template <typename Apply, typename ApplyT>
CglsResult cgls(Apply&& apply, ApplyT&& apply_t, const Vec& b, Index n, const CglsOptions& opt = {}) {
  CglsResult out;
  out.x = Vec::Zero(n);
  Vec r = b;
  Vec s = apply_t(r);
  const double s0 = s.norm();
  if (s0 == 0.0) return out;
  Vec p = s;
  double gamma = s.squaredNorm();
  const Index max_iter = opt.max_iter > 0 ? opt.max_iter : 10 * n;
  for (Index k = 0; k < max_iter; ++k) {
    const Vec q = apply(p);
    const double qq = q.squaredNorm();
    if (!(qq > 0.0) || !std::isfinite(qq)) throw NumericalError("CGLS breakdown: non-positive curvature");
    const double alpha = gamma / qq;
    out.x.noalias() += alpha * p;
    r.noalias() -= alpha * q;
    s = apply_t(r);
    const double gamma_new = s.squaredNorm();
    out.iterations = k + 1;
    out.rel_residual = std::sqrt(gamma_new) / s0;
    if (out.rel_residual <= opt.rel_tol) return out;
    p = s + (gamma_new / gamma) * p;
    gamma = gamma_new;
  }
  throw NumericalError("CGLS did not converge in " + std::to_string(max_iter) +
                       " iterations (relative normal-equation residual " + std::to_string(out.rel_residual) + ")");
}

enum class RtoSolver { Cgls, Cholesky };

struct RtoOptions {
  RtoSolver solver = RtoSolver::Cgls;
  CglsOptions cgls;
};

/// Exact draw from N(mu(w,y), Sigma(w)) by randomize-then-optimize:
///   min_a | [F; L2^T] a - [y + zeta; L2^T mu_pr + gamma] |^2,
/// where F is the whitened forward map, Sigma_pr^{-1} = L2 L2^T and zeta, gamma ~ N(0, I).
/// CGLS runs on the column-scaled operator M D with D_jj = 1 / |M e_j|.
/// The Cholesky option solves the same least-squares problem through its normal equations.
class LinearRto {
 public:
  LinearRto(const LinearGaussianModel& model, RtoOptions opt = {}) : model_(&model), opt_(opt) {
    gdiag_ = model.whitened().gram_diag();
    if (opt_.solver == RtoSolver::Cholesky) gram_ = model.whitened().gram();
  }

  const RtoOptions& options() const { return opt_; }

  /// Draw x given prior covariance and mean of the component; returns CGLS iterations via `iters`.
  Vec sample(const PriorCovariance& prior_cov, const Vec& prior_mean, Rng& rng, Index* iters = nullptr) const {
    const auto& f = model_->whitened();
    const Index m = model_->m();
    const Index d = model_->d();
    if (prior_mean.size() != d) throw ShapeError("prior mean length does not match model dimension");
    const Vec zeta = standard_normal(rng, m);
    const Vec gamma = standard_normal(rng, d);
    const Vec top = model_->whitened_data() + zeta;
    const Vec bottom = std::visit([&](const auto& c) -> Vec { return c.whiten(prior_mean); }, prior_cov) + gamma;

    if (opt_.solver == RtoSolver::Cholesky) {
      Mat prec = gram_;
      prec += std::visit([](const auto& c) -> Mat { return c.precision(); }, prior_cov);
      const Cholesky ch = robust_cholesky(prec, "posterior precision");
      const Vec rhs = f.apply_t(top) + std::visit([&](const auto& c) -> Vec { return c.whiten_t(bottom); }, prior_cov);
      if (iters) *iters = 0;
      return ch.solve(rhs);
    }

    const Vec pdiag = std::visit([](const auto& c) -> Vec { return c.precision_diag(); }, prior_cov);
    Vec scale(d);
    for (Index j = 0; j < d; ++j) {
      const double nrm2 = gdiag_(j) + pdiag(j);
      scale(j) = nrm2 > 0.0 ? 1.0 / std::sqrt(nrm2) : 1.0;
    }
    auto apply = [&](const Vec& c) -> Vec {
      const Vec a = scale.cwiseProduct(c);
      Vec out(m + d);
      out.head(m) = f.apply(a);
      out.tail(d) = std::visit([&](const auto& pc) -> Vec { return pc.whiten(a); }, prior_cov);
      return out;
    };
    auto apply_t = [&](const Vec& r) -> Vec {
      Vec a = f.apply_t(r.head(m));
      a += std::visit([&](const auto& pc) -> Vec { return pc.whiten_t(r.tail(d)); }, prior_cov);
      return scale.cwiseProduct(a);
    };
    Vec rhs(m + d);
    rhs.head(m) = top;
    rhs.tail(d) = bottom;
    const CglsResult res = cgls(apply, apply_t, rhs, d, opt_.cgls);
    if (iters) *iters = res.iterations;
    return scale.cwiseProduct(res.x);
  }

  /// Laplace scale-mixture component: Sigma_pr(w) = diag(w), mu_pr = 0.
  Vec sample_scale_mixture(const Vec& w, Rng& rng, Index* iters = nullptr) const {
    return sample(PriorCovariance(DiagonalCovariance(w)), Vec::Zero(w.size()), rng, iters);
  }

 private:
  const LinearGaussianModel* model_;
  RtoOptions opt_;
  Vec gdiag_;
  Mat gram_;
};

}  // namespace gmix
