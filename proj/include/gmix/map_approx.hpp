#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Eigenvalues>

#include "gmix/lbfgsb.hpp"
#include "gmix/mixing_posterior.hpp"
#include "gmix/model.hpp"
#include "gmix/random.hpp"
#include "gmix/rto.hpp"
#include "gmix/split.hpp"
#include "gmix/tmvn.hpp"

namespace gmix {

struct MapOptions {
  LbfgsOptions lbfgs{.factr = 10.0};  // the support is sensitive to early stopping
  double abs_threshold = 1e-8;
  double rel_threshold = 1e-6;
};

/// Truncated-Gaussian surrogate of pi(w|y) around its non-negative mode.
struct MapApprox {
  Vec w_map;                     // exactly zero off the support
  CoordinateSplit split;         // I = support of w_map
  Mat precision;                 // -[Hessian]_{I,I}, made SPD if necessary
  bool jittered = false;
  bool diagonal_fallback = false;
  Index iterations = 0;
  double pg_norm = 0.0;
  std::string message;
};

/// Symmetrize and repair a precision that should be SPD: lift the spectrum to a floor of
/// 1e-10 * trace / r, and fall back to the (floored) diagonal if that still fails.
inline Mat repair_precision(Mat p, bool& jittered, bool& diagonal) {
  jittered = diagonal = false;
  p = 0.5 * (p + p.transpose()).eval();
  const Index r = p.rows();
  if (r == 0) return p;
  Eigen::LLT<Mat> llt(p);
  if (detail::factor_ok(llt)) return p;
  const double floor = 1e-10 * std::max(std::abs(p.trace()), 1e-300) / static_cast<double>(r);
  Eigen::SelfAdjointEigenSolver<Mat> es(p, Eigen::EigenvaluesOnly);
  if (es.info() == Eigen::Success) {
    const double lmin = es.eigenvalues().minCoeff();
    Mat q = p;
    q.diagonal().array() += floor - lmin;
    llt.compute(q);
    if (detail::factor_ok(llt)) {
      jittered = true;
      return q;
    }
  }
  diagonal = true;
  Vec dg = p.diagonal().cwiseMax(floor);
  return Mat(dg.asDiagonal());
}

/// Minimize -log pi(w|y) over w >= 0 from w = 0 with the support-restricted objective,
/// threshold the support and form the precision from the Hessian block on it.
inline MapApprox map_w_approx(const WSpaceEvaluator& ev, const MapOptions& opt = {}) {
  const Index d = ev.dim();
  Objective obj = [&](const Vec& w, Vec& g) -> double {
    MapObjective o = ev.sparse_map_objective(w);
    g = std::move(o.grad);
    return o.value;
  };
  const LbfgsResult res = lbfgs_minimize(obj, Vec::Zero(d), Vec::Zero(d), opt.lbfgs);
  MapApprox out;
  out.iterations = res.iterations;
  out.pg_norm = res.pg_norm;
  out.message = res.message;
  const double wmax = res.x.size() ? res.x.maxCoeff() : 0.0;
  const double thr = std::max(opt.abs_threshold, opt.rel_threshold * wmax);
  out.w_map = Vec::Zero(d);
  std::vector<Index> sel;
  for (Index i = 0; i < d; ++i)
    if (res.x(i) > thr) {
      sel.push_back(i);
      out.w_map(i) = res.x(i);
    }
  out.split = CoordinateSplit(d, sel);
  if (!sel.empty()) {
    const Mat h = ev.hessian_block(out.w_map, sel);
    out.precision = repair_precision(-h, out.jittered, out.diagonal_fallback);
  }
  return out;
}

/// n draws of w (d x n): w_I from the positive-orthant truncated Gaussian, w_J ~ Exp(lambda_J).
inline Mat map_w_sampler(const MapApprox& approx, const Vec& rates, Index n, Rng& rng, const TmvnOptions& topt = {}) {
  const auto& split = approx.split;
  if (rates.size() != split.dim()) throw ShapeError("rates length does not match the approximation");
  const Vec lam_j = split.take_complement(rates);
  Mat wi;
  if (split.rank() > 0) wi = truncated_mvn_sample(split.take_selected(approx.w_map), approx.precision, n, rng, topt);
  Mat out(split.dim(), n);
  for (Index j = 0; j < n; ++j) {
    const Vec a = split.rank() > 0 ? Vec(wi.col(j)) : Vec(0);
    out.col(j) = split.assemble(a, exponential_sample(lam_j, rng));
  }
  return out;
}

/// Gaussian surrogate N(x_map, Htilde^{-1}) for the Laplace posterior in x, with the prior
/// smoothed as delta_i sqrt(x_i^2 + gamma_i) and Htilde = Ahat + diag(z),
/// z_i = delta_i gamma_i / sqrt(x_map_i^2 + gamma_i).
struct MapXApprox {
  Vec x_map;
  Vec gamma;
  Vec z;
  Vec prior_mean;  // x_map + z^{-1} (Ahat x_map - b), so that the component mean equals x_map
  Index iterations = 0;
  double pg_norm = 0.0;
};

/// gamma <= 0 selects gamma_i = delta_i^2 / 4.
inline MapXApprox map_x_approx(const LinearGaussianModel& model, const LaplacePrior& prior, double gamma = -1.0,
                               const LbfgsOptions& lopt = {}) {
  const Index d = model.d();
  if (prior.size() != d) throw ShapeError("prior does not match model");
  const Vec& delta = prior.rates();
  MapXApprox out;
  out.gamma = gamma > 0.0 ? Vec::Constant(d, gamma) : Vec(0.25 * delta.array().square().matrix());
  const auto& f = model.whitened();
  const Vec& yt = model.whitened_data();
  Objective obj = [&](const Vec& x, Vec& g) -> double {
    const Vec res = f.apply(x) - yt;
    g = f.apply_t(res);
    double v = 0.5 * res.squaredNorm();
    for (Index i = 0; i < d; ++i) {
      const double s = std::sqrt(x(i) * x(i) + out.gamma(i));
      v += delta(i) * s;
      g(i) += delta(i) * x(i) / s;
    }
    return v;
  };
  const Vec lower = Vec::Constant(d, -std::numeric_limits<double>::infinity());
  const LbfgsResult res = lbfgs_minimize(obj, Vec::Zero(d), lower, lopt);
  out.x_map = res.x;
  out.iterations = res.iterations;
  out.pg_norm = res.pg_norm;
  out.z.resize(d);
  for (Index i = 0; i < d; ++i) out.z(i) = delta(i) * out.gamma(i) / std::sqrt(out.x_map(i) * out.x_map(i) + out.gamma(i));
  const Vec ax = f.apply_t(f.apply(out.x_map));
  out.prior_mean = out.x_map + (ax - model.b_hat()).cwiseQuotient(out.z);
  return out;
}

/// One draw from the MAP(X) Gaussian via linear RTO with Sigma_pr = diag(1/z).
inline Vec map_x_sample(const LinearRto& rto, const MapXApprox& approx, Rng& rng) {
  return rto.sample(PriorCovariance(DiagonalCovariance(approx.z.cwiseInverse())), approx.prior_mean, rng);
}

}  // namespace gmix
