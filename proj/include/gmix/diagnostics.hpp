#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "gmix/linalg.hpp"
#include "gmix/mala.hpp"

namespace gmix {

struct EssResult {
  double ess = 0.0;
  bool degenerate = false;  // zero-variance series
};

/// Autocorrelation rho_0..rho_{N-1} via zero-padded FFT.
inline std::vector<double> autocorrelation(const Vec& x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::size_t m = 1;
  while (m < 2 * n) m <<= 1;
  const double mean = x.mean();
  std::vector<double> buf(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) buf[i] = x(static_cast<Index>(i)) - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, buf);
  for (auto& c : spec) c = std::complex<double>(std::norm(c), 0.0);
  std::vector<double> acov;
  fft.inv(acov, spec);
  std::vector<double> rho(n);
  const double c0 = acov[0];
  for (std::size_t k = 0; k < n; ++k) rho[k] = c0 > 0.0 ? acov[k] / c0 : 0.0;
  return rho;
}

/// Effective sample size with Geyer's initial positive sequence and the
/// initial monotone correction: tau = -1 + 2 sum_m Gamma_m, Gamma_m = rho_{2m} + rho_{2m+1}.
inline EssResult ess(const Vec& x) {
  const Index n = x.size();
  if (n < 10) throw ArgError("ESS needs at least 10 samples");
  EssResult out;
  const double mean = x.mean();
  if ((x.array() - mean).abs().maxCoeff() == 0.0) {
    out.ess = static_cast<double>(n);
    out.degenerate = true;
    return out;
  }
  const auto rho = autocorrelation(x);
  double sum = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < rho.size(); ++m) {
    double g = rho[2 * m] + rho[2 * m + 1];
    if (g <= 0.0) break;
    g = std::min(g, prev);
    prev = g;
    sum += g;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(static_cast<double>(n)));
  out.ess = static_cast<double>(n) / tau;
  return out;
}

/// Per-coordinate normalized ESS averaged over chains: entry i is mean_c ESS_c,i / N.
inline Vec ness(const std::vector<Mat>& chains) {
  if (chains.empty()) throw ArgError("no chains");
  const Index n = chains.front().rows();
  const Index len = chains.front().cols();
  Vec out = Vec::Zero(n);
  for (const auto& ch : chains) {
    if (ch.rows() != n || ch.cols() != len) throw ShapeError("chains differ in shape");
    for (Index i = 0; i < n; ++i) out(i) += ess(ch.row(i).transpose()).ess / static_cast<double>(len);
  }
  return out / static_cast<double>(chains.size());
}

/// Split-chain potential scale reduction per coordinate.
inline Vec epsr(const std::vector<Mat>& chains) {
  if (chains.size() < 2) throw ArgError("EPSR needs at least two chains");
  const Index n = chains.front().rows();
  const Index half = chains.front().cols() / 2;
  if (half < 2) throw ArgError("EPSR needs at least four samples per chain");
  const auto m = static_cast<double>(2 * chains.size());
  const auto len = static_cast<double>(half);
  Vec out(n);
  for (Index i = 0; i < n; ++i) {
    std::vector<double> means, vars;
    for (const auto& ch : chains) {
      const Index total = ch.cols();
      for (int part = 0; part < 2; ++part) {
        const Index start = part == 0 ? 0 : total - half;
        const Vec seg = ch.row(i).segment(start, half).transpose();
        const double mu = seg.mean();
        means.push_back(mu);
        vars.push_back((seg.array() - mu).square().sum() / (len - 1.0));
      }
    }
    double grand = 0.0;
    for (double v : means) grand += v;
    grand /= m;
    double b = 0.0, w = 0.0;
    for (std::size_t k = 0; k < means.size(); ++k) {
      b += (means[k] - grand) * (means[k] - grand);
      w += vars[k];
    }
    b = b * len / (m - 1.0);
    w /= m;
    if (w == 0.0) {
      out(i) = b == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
      continue;
    }
    const double var_plus = (len - 1.0) / len * w + b / len;
    out(i) = std::sqrt(var_plus / w);
  }
  return out;
}

/// Linear-interpolation quantile of sorted data (the "type 7" definition).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ArgError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

struct Interval {
  Vec lo;
  Vec hi;
};

/// Equal-tailed credible interval per coordinate of samples (n x N).
inline Interval credible_interval(const Mat& samples, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ArgError("credible level must lie in (0, 1)");
  if (samples.cols() < 1) throw ArgError("no samples");
  Interval out{Vec(samples.rows()), Vec(samples.rows())};
  std::vector<double> row(static_cast<std::size_t>(samples.cols()));
  for (Index i = 0; i < samples.rows(); ++i) {
    for (Index j = 0; j < samples.cols(); ++j) row[static_cast<std::size_t>(j)] = samples(i, j);
    std::sort(row.begin(), row.end());
    out.lo(i) = quantile_sorted(row, 0.5 * (1.0 - level));
    out.hi(i) = quantile_sorted(row, 1.0 - 0.5 * (1.0 - level));
  }
  return out;
}

}  // namespace gmix
