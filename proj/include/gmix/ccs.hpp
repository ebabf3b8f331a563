#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "gmix/lbfgsb.hpp"
#include "gmix/mala.hpp"
#include "gmix/mixing_posterior.hpp"
#include "gmix/model.hpp"
#include "gmix/parallel.hpp"
#include "gmix/random.hpp"
#include "gmix/rto.hpp"
#include "gmix/split.hpp"

namespace gmix {

/// Where MALA chains start: the target's mode (found by L-BFGS) plus Gaussian jitter,
/// or an independent prior draw.
enum class InitPolicy { Mode, Prior };

struct ChainConfig {
  MalaConfig mala;
  InitPolicy init = InitPolicy::Mode;
  double init_jitter = 0.1;
};

/// Mode of a TargetDensity by unconstrained L-BFGS from `start`.
inline Vec target_mode(const TargetDensity& target, const Vec& start) {
  Objective obj = [&](const Vec& x, Vec& g) -> double {
    const double v = target.eval(x, g);
    if (!std::isfinite(v)) {
      g = Vec::Zero(x.size());
      return std::numeric_limits<double>::infinity();
    }
    g = -g;
    return -v;
  };
  LbfgsOptions opt;
  opt.max_iter = 5000;
  const Vec lower = Vec::Constant(start.size(), -std::numeric_limits<double>::infinity());
  try {
    return lbfgs_minimize(obj, start, lower, opt).x;
  } catch (const OptimError&) {
    return start;
  }
}

/// Chain initializer: mode + jitter * N(0, I), or the supplied prior draw.
inline std::function<Vec(Index, Rng&)> make_initializer(const TargetDensity& target, const ChainConfig& cfg,
                                                        const Vec& mode_start,
                                                        std::function<Vec(Rng&)> prior_draw) {
  if (cfg.init == InitPolicy::Prior) return [prior_draw](Index, Rng& rng) { return prior_draw(rng); };
  const Vec mode = target_mode(target, mode_start);
  const double jitter = cfg.init_jitter;
  return [mode, jitter](Index, Rng& rng) -> Vec { return mode + jitter * standard_normal(rng, mode.size()); };
}

/// Exact Gaussian component draws x ~ N(mu(w, y), Sigma(w)) for every column of every
/// chain in `w`. Each draw has its own stream so the result does not depend on `workers`.
inline std::vector<Mat> sample_components(const LinearRto& rto, const std::vector<Mat>& w, std::uint64_t seed,
                                          std::size_t workers = 1) {
  std::vector<Mat> out(w.size());
  for (std::size_t c = 0; c < w.size(); ++c) {
    const Index n = w[c].cols();
    out[c].resize(w[c].rows(), n);
    parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t j) {
      Rng rng = make_rng(seed, "component", c * static_cast<std::size_t>(n) + j);
      out[c].col(static_cast<Index>(j)) = rto.sample_scale_mixture(w[c].col(static_cast<Index>(j)), rng);
    });
  }
  return out;
}

/// x ~ prod_i (delta_i / 2) exp(-delta_i |x_i|).
inline Vec laplace_sample(const Vec& delta, Rng& rng) {
  Vec x = exponential_sample(delta, rng);
  std::bernoulli_distribution coin(0.5);
  for (Index i = 0; i < x.size(); ++i)
    if (coin(rng)) x(i) = -x(i);
  return x;
}

struct CcsWResult {
  CoordinateSplit split;
  ChainSet reduced;     // chains of v_I = log w_I
  std::vector<Mat> w;   // d x N per chain
};

/// CCS-approximated posterior mixing density: MALA on v_I under the reduced evaluator,
/// then w_I = exp(v_I) and fresh w_J ~ Exp(lambda_J) for every retained sample.
inline CcsWResult ccs_w_sampler(const WSpaceEvaluator& ev, const CoordinateSplit& split, const ChainConfig& cfg) {
  const ReducedVEvaluator red(ev, split);
  const TargetDensity target = make_target(red);
  const Vec lam_i = split.take_selected(ev.rates());
  const Vec lam_j = split.take_complement(ev.rates());
  const Vec prior_mean_v = -lam_i.array().log().matrix();
  auto init = make_initializer(target, cfg, prior_mean_v, [lam_i](Rng& rng) -> Vec {
    return exponential_sample(lam_i, rng).array().log().matrix();
  });
  CcsWResult out;
  out.split = split;
  out.reduced = mala_sample(target, cfg.mala, init);
  out.w.resize(static_cast<std::size_t>(out.reduced.n_chains()));
  for (Index c = 0; c < out.reduced.n_chains(); ++c) {
    const Mat& vi = out.reduced.chains[static_cast<std::size_t>(c)];
    Rng rng = make_rng(cfg.mala.seed, "ccs-w-complement", static_cast<std::uint64_t>(c));
    Mat w(ev.dim(), vi.cols());
    for (Index j = 0; j < vi.cols(); ++j) {
      const Vec wi = vi.col(j).array().exp().matrix();
      const Vec wj = exponential_sample(lam_j, rng);
      w.col(j) = split.assemble(wi, wj);
    }
    out.w[static_cast<std::size_t>(c)] = std::move(w);
  }
  return out;
}

/// Reference sampler for pi(w|y): MALA on the full v-space density.
inline CcsWResult reference_w_sampler(const WSpaceEvaluator& ev, const ChainConfig& cfg) {
  const VSpaceEvaluator vev(ev);
  const TargetDensity target = make_target(vev);
  const Vec lam = ev.rates();
  auto init = make_initializer(target, cfg, -lam.array().log().matrix(), [lam](Rng& rng) -> Vec {
    return exponential_sample(lam, rng).array().log().matrix();
  });
  CcsWResult out;
  out.split = CoordinateSplit::full(ev.dim());
  out.reduced = mala_sample(target, cfg.mala, init);
  for (const auto& v : out.reduced.chains) out.w.push_back(v.array().exp().matrix());
  return out;
}

/// log pi(x_I | y) with x_J = 0 and the Laplace prior restricted to I:
///   -1/2 |F_I x_I - y|^2 - sum_I delta_i |x_i|   (whitened F, y).
class ReducedXTarget {
 public:
  ReducedXTarget(const LinearGaussianModel& model, const LaplacePrior& prior, const CoordinateSplit& split) {
    if (split.dim() != model.d() || prior.size() != model.d()) throw ShapeError("split does not match model");
    const Mat fi = model.whitened().columns(split.selected());
    gram_ = fi.transpose() * fi;
    rhs_ = fi.transpose() * model.whitened_data();
    yy_ = model.whitened_data().squaredNorm();
    delta_ = split.take_selected(prior.rates());
  }

  Index dim() const { return delta_.size(); }
  const Vec& delta() const { return delta_; }

  double value_and_grad(const Vec& x, Vec& g) const {
    if (x.size() != dim()) throw ShapeError("reduced x has wrong length");
    const Vec gx = gram_ * x;
    g = rhs_ - gx;
    double v = -0.5 * x.dot(gx) + x.dot(rhs_) - 0.5 * yy_;
    for (Index i = 0; i < dim(); ++i) {
      v -= delta_(i) * std::abs(x(i));
      g(i) -= delta_(i) * ((x(i) > 0.0) - (x(i) < 0.0));
    }
    return v;
  }

  double log_density(const Vec& x) const {
    Vec g;
    return value_and_grad(x, g);
  }

 private:
  Mat gram_;
  Vec rhs_;
  double yy_ = 0.0;
  Vec delta_;
};

struct CcsXResult {
  CoordinateSplit split;
  ChainSet reduced;     // chains of x_I
  std::vector<Mat> x;   // d x N per chain, x_J drawn from the Laplace prior
};

/// CCS applied directly in x: MALA on x_I with x_J = 0 in the likelihood; the
/// complement follows its Laplace prior.
inline CcsXResult ccs_x_sampler(const LinearGaussianModel& model, const LaplacePrior& prior,
                                const CoordinateSplit& split, const ChainConfig& cfg) {
  const ReducedXTarget red(model, prior, split);
  const TargetDensity target = make_target(red);
  const Vec delta_i = red.delta();
  const Vec delta_j = split.take_complement(prior.rates());
  auto init = make_initializer(target, cfg, Vec::Zero(red.dim()),
                               [delta_i](Rng& rng) -> Vec { return laplace_sample(delta_i, rng); });
  CcsXResult out;
  out.split = split;
  out.reduced = mala_sample(target, cfg.mala, init);
  for (Index c = 0; c < out.reduced.n_chains(); ++c) {
    const Mat& xi = out.reduced.chains[static_cast<std::size_t>(c)];
    Rng rng = make_rng(cfg.mala.seed, "ccs-x-complement", static_cast<std::uint64_t>(c));
    Mat x(model.d(), xi.cols());
    for (Index j = 0; j < xi.cols(); ++j) x.col(j) = split.assemble(xi.col(j), laplace_sample(delta_j, rng));
    out.x.push_back(std::move(x));
  }
  return out;
}

/// Full-posterior log density log pi(x|y) up to a constant, with gradient (subgradient 0 at x_i = 0).
class LaplacePosteriorX {
 public:
  LaplacePosteriorX(const LinearGaussianModel& model, const LaplacePrior& prior)
      : red_(model, prior, CoordinateSplit::full(model.d())) {}
  Index dim() const { return red_.dim(); }
  double value_and_grad(const Vec& x, Vec& g) const { return red_.value_and_grad(x, g); }
  double log_density(const Vec& x) const { return red_.log_density(x); }

 private:
  ReducedXTarget red_;
};

}  // namespace gmix
