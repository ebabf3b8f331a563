#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gmix/errors.hpp"
#include "gmix/linalg.hpp"
#include "gmix/parallel.hpp"
#include "gmix/random.hpp"

namespace gmix {

/// Unnormalized log density on R^n with gradient. `eval` returns the log density and
/// writes the gradient; it may return -inf or NaN for points outside the support.
struct TargetDensity {
  Index dim = 0;
  std::function<double(const Vec&, Vec&)> eval;
};

/// Wrap an evaluator exposing value_and_grad(x, g). Support errors become -inf.
template <typename Evaluator>
TargetDensity make_target(const Evaluator& ev) {
  return {ev.dim(), [&ev](const Vec& x, Vec& g) -> double {
            try {
              return ev.value_and_grad(x, g);
            } catch (const SupportError&) {
              return -std::numeric_limits<double>::infinity();
            }
          }};
}

/// Samples of C chains, each stored as an n x N column-major matrix.
struct ChainSet {
  std::vector<Mat> chains;
  std::vector<std::uint64_t> seeds;
  std::vector<double> acceptance;
  std::vector<double> step_size;
  std::vector<std::vector<double>> step_trace;

  Index n_chains() const { return static_cast<Index>(chains.size()); }
  Index dim() const { return chains.empty() ? 0 : chains.front().rows(); }
  Index n_samples() const { return chains.empty() ? 0 : chains.front().cols(); }

  /// All chains side by side, n x (C N).
  Mat pooled() const {
    Mat out(dim(), n_chains() * n_samples());
    for (Index c = 0; c < n_chains(); ++c) out.middleCols(c * n_samples(), n_samples()) = chains[static_cast<std::size_t>(c)];
    return out;
  }
};

struct MalaConfig {
  Index n_chains = 5;
  Index n_samples = 1000;
  Index burn_in = -1;          // negative: burn_in_fraction * n_samples
  double burn_in_fraction = 0.2;
  double initial_step = 0.0;   // <= 0: heuristic search from 1
  double target_accept = 0.574;
  bool adapt = true;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  Index max_consecutive_failures = 1000;
};

namespace detail {

struct MalaState {
  Vec x;
  Vec grad;
  double logp = 0.0;
};

inline double mala_log_q(const Vec& to, const MalaState& from, double tau) {
  const Vec diff = to - from.x - (0.5 * tau * tau) * from.grad;
  return -diff.squaredNorm() / (2.0 * tau * tau);
}

inline bool finite_state(double logp, const Vec& g) { return std::isfinite(logp) && g.allFinite(); }

struct Proposal {
  MalaState state;
  bool finite = false;
  double log_alpha = -std::numeric_limits<double>::infinity();
};

inline Proposal mala_propose(const TargetDensity& target, const MalaState& cur, double tau, Rng& rng) {
  Proposal p;
  p.state.x = cur.x + (0.5 * tau * tau) * cur.grad + tau * standard_normal(rng, target.dim);
  p.state.logp = target.eval(p.state.x, p.state.grad);
  p.finite = finite_state(p.state.logp, p.state.grad);
  if (p.finite) {
    p.log_alpha = p.state.logp - cur.logp + mala_log_q(cur.x, p.state, tau) - mala_log_q(p.state.x, cur, tau);
    if (std::isnan(p.log_alpha)) p.finite = false;
  }
  return p;
}

/// Double or halve tau until the single-proposal acceptance probability crosses 1/2.
inline double initial_step_search(const TargetDensity& target, const MalaState& cur, Rng& rng) {
  double tau = 1.0;
  auto accept_prob = [&](double t) {
    const Proposal p = mala_propose(target, cur, t, rng);
    return p.finite ? std::exp(std::min(0.0, p.log_alpha)) : 0.0;
  };
  const bool up = accept_prob(tau) > 0.5;
  for (int k = 0; k < 60; ++k) {
    const double next = up ? 2.0 * tau : 0.5 * tau;
    const double a = accept_prob(next);
    if (up ? (a <= 0.5 || next > 1e3) : (a > 0.5)) return next;
    tau = next;
  }
  return tau;
}

}  // namespace detail

/// Metropolis-adjusted Langevin sampler. Step size tau is tuned by dual averaging on
/// log tau during burn-in, then frozen at the averaged value. `init(c, rng)` supplies
/// the start of chain c.
inline ChainSet mala_sample(const TargetDensity& target, const MalaConfig& cfg,
                            const std::function<Vec(Index, Rng&)>& init) {
  if (target.dim < 1) throw ArgError("MALA target dimension must be positive");
  if (cfg.n_chains < 1 || cfg.n_samples < 1) throw ArgError("MALA needs at least one chain and one sample");
  const Index burn = cfg.burn_in >= 0 ? cfg.burn_in
                                      : static_cast<Index>(std::llround(cfg.burn_in_fraction * cfg.n_samples));
  const auto nc = static_cast<std::size_t>(cfg.n_chains);
  ChainSet out;
  out.chains.resize(nc);
  out.seeds.resize(nc);
  out.acceptance.resize(nc);
  out.step_size.resize(nc);
  out.step_trace.resize(nc);

  parallel_for(nc, cfg.workers, [&](std::size_t c) {
    out.seeds[c] = derive_seed(cfg.seed, "mala-chain", c);
    Rng rng = make_rng(cfg.seed, "mala-chain", c);
    detail::MalaState cur;
    cur.x = init(static_cast<Index>(c), rng);
    if (cur.x.size() != target.dim) throw ShapeError("MALA initial point has wrong dimension");
    cur.logp = target.eval(cur.x, cur.grad);
    if (!detail::finite_state(cur.logp, cur.grad))
      throw InitError("MALA chain " + std::to_string(c) + ": non-finite log density or gradient at the initial point");

    double tau = cfg.initial_step > 0.0 ? cfg.initial_step : detail::initial_step_search(target, cur, rng);
    // Dual averaging state.
    const double mu = std::log(10.0 * tau);
    const double gamma = 0.05, t0 = 10.0, kappa = 0.75;
    double hbar = 0.0, log_tau_bar = 0.0;

    Mat samples(target.dim, cfg.n_samples);
    Index accepted = 0;
    Index failures = 0;
    auto& trace = out.step_trace[c];
    trace.reserve(static_cast<std::size_t>(burn));
    for (Index it = 0; it < burn + cfg.n_samples; ++it) {
      const detail::Proposal p = detail::mala_propose(target, cur, tau, rng);
      double alpha = 0.0;
      if (p.finite) {
        failures = 0;
        alpha = std::exp(std::min(0.0, p.log_alpha));
        if (std::log(open_uniform(rng)) < p.log_alpha) {
          cur = p.state;
          if (it >= burn) ++accepted;
        }
      } else if (++failures > cfg.max_consecutive_failures) {
        throw DivergenceError("MALA chain " + std::to_string(c) + ": more than " +
                              std::to_string(cfg.max_consecutive_failures) + " consecutive non-finite proposals");
      }
      if (it < burn) {
        if (cfg.adapt) {
          const double t = static_cast<double>(it + 1);
          hbar = (1.0 - 1.0 / (t + t0)) * hbar + (cfg.target_accept - alpha) / (t + t0);
          const double log_tau = mu - std::sqrt(t) / gamma * hbar;
          const double eta = std::pow(t, -kappa);
          log_tau_bar = eta * log_tau + (1.0 - eta) * log_tau_bar;
          tau = std::exp(log_tau);
          if (it + 1 == burn) tau = std::exp(log_tau_bar);
        }
        trace.push_back(tau);
      } else {
        samples.col(it - burn) = cur.x;
      }
    }
    out.chains[c] = std::move(samples);
    out.acceptance[c] = static_cast<double>(accepted) / static_cast<double>(cfg.n_samples);
    out.step_size[c] = tau;
  });
  return out;
}

}  // namespace gmix
