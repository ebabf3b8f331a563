#pragma once

#include <span>
#include <variant>

#include "gmix/linalg.hpp"

namespace gmix {

/// Noise-whitened forward map F = R^{-1} A, where Sigma_obs = R R^T.
/// With this F, A^T Sigma_obs^{-1} A = F^T F and A^T Sigma_obs^{-1} y = F^T (R^{-1} y).
/// Dense and sparse storage are both supported; STORM-sized problems stay sparse.
class WhitenedForward {
 public:
  WhitenedForward() = default;
  explicit WhitenedForward(Mat dense) : op_(std::move(dense)) {}
  explicit WhitenedForward(SpMat sparse) : op_(std::move(sparse)) { std::get<SpMat>(op_).makeCompressed(); }

  Index rows() const {
    return std::visit([](const auto& m) { return static_cast<Index>(m.rows()); }, op_);
  }
  Index cols() const {
    return std::visit([](const auto& m) { return static_cast<Index>(m.cols()); }, op_);
  }
  bool is_sparse() const { return std::holds_alternative<SpMat>(op_); }

  Vec apply(const Vec& x) const {
    return std::visit([&](const auto& m) -> Vec { return m * x; }, op_);
  }
  Vec apply_t(const Vec& u) const {
    return std::visit([&](const auto& m) -> Vec { return m.transpose() * u; }, op_);
  }

  Mat dense() const {
    if (const auto* d = std::get_if<Mat>(&op_)) return *d;
    return Mat(std::get<SpMat>(op_));
  }
  const Mat* dense_ptr() const { return std::get_if<Mat>(&op_); }
  const SpMat* sparse_ptr() const { return std::get_if<SpMat>(&op_); }

  /// F^T F as a dense d x d matrix.
  Mat gram() const {
    if (const auto* d = std::get_if<Mat>(&op_)) {
      Mat g = Mat::Zero(d->cols(), d->cols());
      g.selfadjointView<Eigen::Lower>().rankUpdate(d->transpose());
      return g.selfadjointView<Eigen::Lower>();
    }
    const auto& s = std::get<SpMat>(op_);
    SpMat g = (s.transpose() * s).pruned();
    return Mat(g);
  }

  /// diag(F^T F), i.e. squared column norms.
  Vec gram_diag() const {
    if (const auto* d = std::get_if<Mat>(&op_)) return d->colwise().squaredNorm().transpose();
    const auto& s = std::get<SpMat>(op_);
    Vec out(s.cols());
    for (Index j = 0; j < s.cols(); ++j) {
      double acc = 0.0;
      for (SpMat::InnerIterator it(s, j); it; ++it) acc += it.value() * it.value();
      out(j) = acc;
    }
    return out;
  }

  /// Dense copy of the selected columns F[:, cols].
  Mat columns(std::span<const Index> cols) const {
    Mat out(rows(), static_cast<Index>(cols.size()));
    if (const auto* d = std::get_if<Mat>(&op_)) {
      for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = d->col(cols[j]);
      return out;
    }
    const auto& s = std::get<SpMat>(op_);
    out.setZero();
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (SpMat::InnerIterator it(s, cols[j]); it; ++it) out(it.row(), static_cast<Index>(j)) = it.value();
    return out;
  }

  /// (F^T F)[:, cols] computed without forming the full Gram matrix.
  Mat gram_columns(std::span<const Index> cols) const {
    const Mat fc = columns(cols);
    return std::visit([&](const auto& m) -> Mat { return m.transpose() * fc; }, op_);
  }

  /// F diag(scale) F^T, an m x m matrix.
  Mat weighted_outer(const Vec& scale) const {
    if (const auto* d = std::get_if<Mat>(&op_)) {
      Mat fs = (*d) * scale.cwiseSqrt().asDiagonal();
      Mat out = Mat::Zero(d->rows(), d->rows());
      out.selfadjointView<Eigen::Lower>().rankUpdate(fs);
      return out.selfadjointView<Eigen::Lower>();
    }
    const auto& s = std::get<SpMat>(op_);
    SpMat fs = s * scale.asDiagonal();
    SpMat out = fs * s.transpose();
    return Mat(out);
  }

 private:
  std::variant<Mat, SpMat> op_;
};

}  // namespace gmix
