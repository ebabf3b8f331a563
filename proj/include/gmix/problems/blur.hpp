#pragma once

#include <cmath>

#include "gmix/linalg.hpp"

namespace gmix {

/// Periodic convolution with a sampled Gaussian kernel normalized to unit sum.
class BlurOperator {
 public:
  BlurOperator(Index n, int width = 27, double sd = 3.0) : n_(n) {
    if (width < 1 || width % 2 == 0) throw ArgError("blur kernel width must be odd and positive");
    if (!(sd > 0.0)) throw ArgError("blur standard deviation must be positive");
    if (width > n) throw ShapeError("blur kernel wider than the signal");
    half_ = width / 2;
    kernel_.resize(width);
    for (int j = -half_; j <= half_; ++j) kernel_(j + half_) = std::exp(-0.5 * j * j / (sd * sd));
    kernel_ /= kernel_.sum();
  }

  Index size() const { return n_; }
  const Vec& kernel() const { return kernel_; }

  Vec apply(const Vec& s) const {
    if (s.size() != n_) throw ShapeError("blur input has wrong length");
    Vec out = Vec::Zero(n_);
    for (Index i = 0; i < n_; ++i)
      for (int j = -half_; j <= half_; ++j) out(i) += kernel_(j + half_) * s(wrap(i - j));
    return out;
  }

  Vec apply_t(const Vec& u) const {
    if (u.size() != n_) throw ShapeError("blur input has wrong length");
    Vec out = Vec::Zero(n_);
    for (Index i = 0; i < n_; ++i)
      for (int j = -half_; j <= half_; ++j) out(wrap(i - j)) += kernel_(j + half_) * u(i);
    return out;
  }

  Mat matrix() const {
    Mat g = Mat::Zero(n_, n_);
    for (Index i = 0; i < n_; ++i)
      for (int j = -half_; j <= half_; ++j) g(i, wrap(i - j)) += kernel_(j + half_);
    return g;
  }

 private:
  Index wrap(Index k) const { return ((k % n_) + n_) % n_; }

  Index n_;
  int half_ = 0;
  Vec kernel_;
};

}  // namespace gmix
