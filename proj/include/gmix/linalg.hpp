#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gmix/errors.hpp"

namespace gmix {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

/// Cholesky factor together with the diagonal shift that made it succeed.
struct Cholesky {
  Eigen::LLT<Mat> llt;
  double jitter = 0.0;

  Index size() const { return llt.rows(); }

  double log_det() const {
    const auto& l = llt.matrixLLT();
    double s = 0.0;
    for (Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
    return 2.0 * s;
  }

  template <typename Rhs>
  auto solve(const Rhs& b) const {
    return llt.solve(b);
  }

  Mat inverse() const { return llt.solve(Mat::Identity(size(), size())); }
};

namespace detail {

inline bool factor_ok(const Eigen::LLT<Mat>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const auto& l = llt.matrixLLT();
  for (Index i = 0; i < l.rows(); ++i) {
    const double v = l(i, i);
    if (!(v > 0.0) || !std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace detail

/// Cholesky with the escalating-jitter policy: retry with jitter 1e-12*trace/n,
/// multiplied by ten each time up to 1e-6*trace/n, then give up.
inline Cholesky robust_cholesky(const Mat& a, const char* what = "matrix") {
  if (a.rows() != a.cols()) throw ShapeError(std::string(what) + ": Cholesky of non-square matrix");
  Cholesky out;
  if (a.rows() == 0) {
    out.llt.compute(a);
    return out;
  }
  out.llt.compute(a);
  if (detail::factor_ok(out.llt)) return out;

  const double n = static_cast<double>(a.rows());
  double scale = std::abs(a.trace()) / n;
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
  for (double rel = 1e-12; rel <= 1e-6 * (1.0 + 1e-9); rel *= 10.0) {
    Mat shifted = a;
    shifted.diagonal().array() += rel * scale;
    out.llt.compute(shifted);
    if (detail::factor_ok(out.llt)) {
      out.jitter = rel * scale;
      return out;
    }
  }
  throw NumericalError(std::string(what) + ": Cholesky factorization failed after jitter escalation");
}

/// Strict Cholesky (no jitter); throws DomainError when the matrix is not SPD.
inline Cholesky strict_cholesky(const Mat& a, const char* what = "matrix") {
  if (a.rows() != a.cols()) throw ShapeError(std::string(what) + ": Cholesky of non-square matrix");
  Cholesky out;
  out.llt.compute(a);
  if (a.rows() > 0 && !detail::factor_ok(out.llt))
    throw DomainError(std::string(what) + " is not symmetric positive-definite");
  return out;
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

/// Gather entries of `v` at the given indices.
inline Vec gather(const Vec& v, std::span<const Index> idx) {
  Vec out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Index>(k)) = v(idx[k]);
  return out;
}

/// Submatrix M[rows, cols].
inline Mat gather(const Mat& m, std::span<const Index> rows, std::span<const Index> cols) {
  Mat out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i)
      out(static_cast<Index>(i), static_cast<Index>(j)) = m(rows[i], cols[j]);
  return out;
}

inline Mat gather_cols(const Mat& m, std::span<const Index> cols) {
  Mat out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = m.col(cols[j]);
  return out;
}

inline double log_sum_exp(const Vec& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace gmix
