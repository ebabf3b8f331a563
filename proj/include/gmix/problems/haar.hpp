#pragma once

#include <cmath>
#include <numbers>

#include "gmix/linalg.hpp"

namespace gmix {

/// Orthonormal multilevel Haar transform on R^n, n = 2^J, with `levels` <= J.
/// Coefficient layout: [approximation (n / 2^levels), detail bands coarsest ... finest].
class HaarTransform {
 public:
  HaarTransform(Index n, int levels) : n_(n), levels_(levels) {
    if (n < 2 || (n & (n - 1)) != 0) throw ShapeError("Haar transform length must be a power of two");
    int j = 0;
    while ((Index{1} << j) < n) ++j;
    if (levels < 1 || levels > j) throw ShapeError("Haar levels must lie in [1, log2(n)]");
  }

  Index size() const { return n_; }
  int levels() const { return levels_; }

  Vec forward(const Vec& s) const {
    if (s.size() != n_) throw ShapeError("Haar input has wrong length");
    Vec cur = s;
    Vec out(n_);
    Index len = n_;
    const double r = 1.0 / std::numbers::sqrt2;
    for (int l = 0; l < levels_; ++l) {
      const Index half = len / 2;
      Vec approx(half);
      for (Index k = 0; k < half; ++k) {
        approx(k) = r * (cur(2 * k) + cur(2 * k + 1));
        out(half + k) = r * (cur(2 * k) - cur(2 * k + 1));
      }
      cur = std::move(approx);
      len = half;
    }
    out.head(len) = cur;
    return out;
  }

  Vec inverse(const Vec& x) const {
    if (x.size() != n_) throw ShapeError("Haar input has wrong length");
    Index len = n_ >> levels_;
    Vec cur = x.head(len);
    const double r = 1.0 / std::numbers::sqrt2;
    for (int l = 0; l < levels_; ++l) {
      Vec next(2 * len);
      for (Index k = 0; k < len; ++k) {
        next(2 * k) = r * (cur(k) + x(len + k));
        next(2 * k + 1) = r * (cur(k) - x(len + k));
      }
      cur = std::move(next);
      len *= 2;
    }
    return cur;
  }

  /// Dense analysis matrix W (x = W s).
  Mat matrix() const {
    Mat w(n_, n_);
    for (Index j = 0; j < n_; ++j) w.col(j) = forward(Vec::Unit(n_, j));
    return w;
  }

  /// Level label of every coefficient: the approximation block and the coarsest detail
  /// band get 1, the finest band gets `levels`.
  Eigen::VectorXi level_labels() const {
    Eigen::VectorXi lab(n_);
    Index len = n_ >> levels_;
    lab.head(len).setConstant(1);
    Index start = len;
    for (int l = 1; l <= levels_; ++l) {
      lab.segment(start, len).setConstant(l);
      start += len;
      len *= 2;
    }
    return lab;
  }

 private:
  Index n_;
  int levels_;
};

inline Vec haar_forward(const Vec& s, int levels) { return HaarTransform(s.size(), levels).forward(s); }
inline Vec haar_inverse(const Vec& x, int levels) { return HaarTransform(x.size(), levels).inverse(x); }

/// Besov-type rates delta_i = 2^{l(i)/2} on the Haar coefficient layout.
inline Vec besov_rates(Index n, int levels) {
  const auto lab = HaarTransform(n, levels).level_labels();
  Vec delta(n);
  for (Index i = 0; i < n; ++i) delta(i) = std::pow(2.0, 0.5 * lab(i));
  return delta;
}

}  // namespace gmix
