#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "gmix/errors.hpp"
#include "gmix/linalg.hpp"
#include "gmix/mixing_posterior.hpp"
#include "gmix/model.hpp"
#include "gmix/parallel.hpp"
#include "gmix/split.hpp"

namespace gmix {

enum class DiagnosticSource { Prior, MapApprox, Reference };

inline const char* to_string(DiagnosticSource s) {
  switch (s) {
    case DiagnosticSource::Prior:
      return "prior";
    case DiagnosticSource::MapApprox:
      return "map-approx";
    case DiagnosticSource::Reference:
      return "reference";
  }
  return "unknown";
}

/// Per-coordinate sensitivity scores h driving coordinate selection.
struct Diagnostic {
  Vec h;
  Index n_samples = 0;
  DiagnosticSource source = DiagnosticSource::Prior;
};

/// h_i = (1 / (N lambda_i^2)) sum_j (d/dw_i log pi(y|w^(j)))^2 over the columns of `samples`.
inline Diagnostic estimate_diagnostic_w(const WSpaceEvaluator& ev, const Mat& samples,
                                        DiagnosticSource source = DiagnosticSource::Prior, std::size_t workers = 1) {
  if (samples.cols() == 0) throw ArgError("diagnostic needs at least one sample");
  if (samples.rows() != ev.dim()) throw ShapeError("sample dimension does not match evaluator");
  const Index d = ev.dim();
  const auto n = static_cast<std::size_t>(samples.cols());
  Mat sq(d, samples.cols());
  parallel_for(n, workers, [&](std::size_t j) {
    const Vec g = ev.grad_log_likelihood(samples.col(static_cast<Index>(j)));
    sq.col(static_cast<Index>(j)) = g.cwiseProduct(g);
  });
  Diagnostic out;
  const Vec& lam = ev.rates();
  out.h = sq.rowwise().sum().cwiseQuotient(lam.cwiseProduct(lam)) / static_cast<double>(n);
  out.n_samples = samples.cols();
  out.source = source;
  return out;
}

/// x-space analogue: h_i = (1 / (N delta_i^2)) sum_j (A^T Sigma_obs^{-1} (y - A x^(j)))_i^2.
inline Diagnostic estimate_diagnostic_x(const LinearGaussianModel& model, const LaplacePrior& prior, const Mat& samples,
                                        DiagnosticSource source = DiagnosticSource::Prior) {
  if (samples.cols() == 0) throw ArgError("diagnostic needs at least one sample");
  if (samples.rows() != model.d() || prior.size() != model.d()) throw ShapeError("sample dimension does not match model");
  const auto& f = model.whitened();
  const Vec& yt = model.whitened_data();
  Vec acc = Vec::Zero(model.d());
  for (Index j = 0; j < samples.cols(); ++j) {
    const Vec g = f.apply_t(yt - f.apply(samples.col(j)));
    acc += g.cwiseProduct(g);
  }
  const Vec& delta = prior.rates();
  Diagnostic out;
  out.h = acc.cwiseQuotient(delta.cwiseProduct(delta)) / static_cast<double>(samples.cols());
  out.n_samples = samples.cols();
  out.source = source;
  return out;
}

struct SplitResult {
  CoordinateSplit split;
  Vec epsilon;                 // epsilon(r) for r = 1..d at index r-1
  std::vector<Index> ranking;  // coordinates by decreasing h, ties to the lower index
  bool degenerate = false;     // h == 0: I = {argmax} by convention
};

namespace detail {

inline std::vector<Index> rank_by_h(const Vec& h) {
  std::vector<Index> order(static_cast<std::size_t>(h.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return h(a) > h(b); });
  return order;
}

inline void check_h(const Vec& h) {
  for (Index i = 0; i < h.size(); ++i)
    if (!(h(i) >= 0.0) || !std::isfinite(h(i))) throw ArgError("diagnostic entries must be finite and non-negative");
}

}  // namespace detail

/// epsilon(r) = 2 sum of the d - r smallest h_i, for r = 1..d.
inline Vec epsilon_curve(const Vec& h) {
  detail::check_h(h);
  const auto order = detail::rank_by_h(h);
  const Index d = h.size();
  Vec eps = Vec::Zero(d);
  double tail = 0.0;
  for (Index r = d - 1; r >= 1; --r) {
    tail += h(order[static_cast<std::size_t>(r)]);
    eps(r - 1) = 2.0 * tail;
  }
  return eps;
}

/// Select the r largest h_i with r = min(r(tau), r_max), r(tau) the smallest r with epsilon(r) <= tau.
inline SplitResult split_by_diagnostic(const Diagnostic& diag, double tau, Index r_max) {
  const Vec& h = diag.h;
  if (r_max < 1) throw ArgError("r_max must be at least 1");
  if (h.size() < 1) throw ArgError("empty diagnostic");
  SplitResult out;
  out.epsilon = epsilon_curve(h);
  out.ranking = detail::rank_by_h(h);
  const Index d = h.size();
  Index r = d;
  for (Index k = 1; k <= d; ++k)
    if (out.epsilon(k - 1) <= tau) {
      r = k;
      break;
    }
  r = std::min(r, r_max);
  if (h.maxCoeff() == 0.0) {
    out.degenerate = true;
    r = 1;
  }
  std::vector<Index> sel(out.ranking.begin(), out.ranking.begin() + r);
  out.split = CoordinateSplit(d, std::move(sel));
  return out;
}

/// Fixed-rank variant: the r largest h_i.
inline SplitResult split_by_rank(const Diagnostic& diag, Index r) {
  return split_by_diagnostic(diag, -1.0, r);
}

/// (2/N) sum_i (exp(l_i / 2) - 1)^2 with l_i = log-ratio minus its sample median.
inline double hellinger_from_log_ratios(const Vec& log_ratio) {
  const Index n = log_ratio.size();
  if (n == 0) throw ArgError("Hellinger estimate needs at least one sample");
  std::string bad;
  for (Index i = 0; i < n; ++i)
    if (!std::isfinite(log_ratio(i))) {
      if (!bad.empty()) bad += ", ";
      bad += std::to_string(i);
      if (bad.size() > 200) break;
    }
  if (!bad.empty()) throw NumericalError("non-finite density ratio at samples " + bad);
  std::vector<double> v(log_ratio.data(), log_ratio.data() + n);
  std::sort(v.begin(), v.end());
  const double med = n % 2 ? v[static_cast<std::size_t>(n / 2)]
                           : 0.5 * (v[static_cast<std::size_t>(n / 2 - 1)] + v[static_cast<std::size_t>(n / 2)]);
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double t = std::expm1(0.5 * (log_ratio(i) - med));
    acc += t * t;
  }
  return 2.0 * acc / static_cast<double>(n);
}

/// Sample-based Hellinger bound between an exact and an approximate unnormalized density,
/// using samples (columns) drawn from the approximation.
inline double hellinger_bound_estimate(const std::function<double(const Vec&)>& exact_logpdf,
                                       const std::function<double(const Vec&)>& approx_logpdf,
                                       const Mat& approx_samples) {
  Vec lr(approx_samples.cols());
  for (Index i = 0; i < approx_samples.cols(); ++i) {
    const Vec x = approx_samples.col(i);
    lr(i) = exact_logpdf(x) - approx_logpdf(x);
  }
  return hellinger_from_log_ratios(lr);
}

}  // namespace gmix
