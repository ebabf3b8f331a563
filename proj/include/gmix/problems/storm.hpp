#pragma once

#include <cmath>
#include <vector>

#include "gmix/linalg.hpp"

namespace gmix {

/// Super-resolution forward map: a Gaussian point-spread function on the fine grid
/// (zero boundary), followed by summation over k x k blocks onto the coarse grid.
/// Both grids use column-major pixel indices, idx = row + col * side.
class StormOperator {
 public:
  StormOperator(Index coarse_side, int oversampling, double psf_sd, double truncation = 4.0)
      : s_(coarse_side), k_(oversampling), psf_sd_(psf_sd) {
    if (coarse_side < 1 || oversampling < 1) throw ArgError("grid sizes must be positive");
    if (!(psf_sd > 0.0)) throw ArgError("PSF standard deviation must be positive");
    radius_ = static_cast<int>(std::ceil(truncation * psf_sd));
    const int w = 2 * radius_ + 1;
    psf_ = Mat(w, w);
    for (int a = -radius_; a <= radius_; ++a)
      for (int b = -radius_; b <= radius_; ++b)
        psf_(a + radius_, b + radius_) = std::exp(-0.5 * (a * a + b * b) / (psf_sd * psf_sd));
    psf_ /= psf_.sum();
    build();
  }

  /// Default kernel width: 0.25 * k fine pixels (1 fine pixel at k = 4).
  static StormOperator standard(Index coarse_side, int oversampling) {
    return StormOperator(coarse_side, oversampling, 0.25 * oversampling);
  }

  Index coarse_side() const { return s_; }
  Index fine_side() const { return s_ * k_; }
  int oversampling() const { return k_; }
  double psf_sd() const { return psf_sd_; }
  Index m() const { return s_ * s_; }
  Index d() const { return fine_side() * fine_side(); }
  const SpMat& matrix() const { return a_; }

  Vec apply(const Vec& x) const {
    if (x.size() != d()) throw ShapeError("fine image has wrong size");
    Vec out = Vec::Zero(m());
    const Index nf = fine_side();
    for (Index qc = 0; qc < nf; ++qc)
      for (Index qr = 0; qr < nf; ++qr) {
        const double v = x(qr + qc * nf);
        if (v == 0.0) continue;
        for_each_target(qr, qc, [&](Index p, double wgt) { out(p) += wgt * v; });
      }
    return out;
  }

  Vec apply_t(const Vec& u) const {
    if (u.size() != m()) throw ShapeError("coarse image has wrong size");
    Vec out = Vec::Zero(d());
    const Index nf = fine_side();
    for (Index qc = 0; qc < nf; ++qc)
      for (Index qr = 0; qr < nf; ++qr) {
        double acc = 0.0;
        for_each_target(qr, qc, [&](Index p, double wgt) { acc += wgt * u(p); });
        out(qr + qc * nf) = acc;
      }
    return out;
  }

 private:
  // Visit the coarse pixels receiving light from fine pixel (qr, qc) with their weights.
  template <typename F>
  void for_each_target(Index qr, Index qc, F&& f) const {
    const Index nf = fine_side();
    // Accumulate PSF mass per coarse pixel touched by the truncated kernel.
    const Index r0 = std::max<Index>(0, qr - radius_) / k_, r1 = std::min<Index>(nf - 1, qr + radius_) / k_;
    const Index c0 = std::max<Index>(0, qc - radius_) / k_, c1 = std::min<Index>(nf - 1, qc + radius_) / k_;
    for (Index pc = c0; pc <= c1; ++pc)
      for (Index pr = r0; pr <= r1; ++pr) {
        double wgt = 0.0;
        for (Index uc = pc * k_; uc < (pc + 1) * k_; ++uc) {
          const Index dc = uc - qc;
          if (dc < -radius_ || dc > radius_) continue;
          for (Index ur = pr * k_; ur < (pr + 1) * k_; ++ur) {
            const Index dr = ur - qr;
            if (dr < -radius_ || dr > radius_) continue;
            wgt += psf_(dr + radius_, dc + radius_);
          }
        }
        if (wgt > 0.0) f(pr + pc * s_, wgt);
      }
  }

  void build() {
    const Index nf = fine_side();
    std::vector<Eigen::Triplet<double>> trips;
    for (Index qc = 0; qc < nf; ++qc)
      for (Index qr = 0; qr < nf; ++qr)
        for_each_target(qr, qc, [&](Index p, double w) { trips.emplace_back(p, qr + qc * nf, w); });
    a_ = SpMat(m(), d());
    a_.setFromTriplets(trips.begin(), trips.end());
    a_.makeCompressed();
  }

  Index s_;
  int k_;
  double psf_sd_;
  int radius_ = 0;
  Mat psf_;
  SpMat a_;
};

}  // namespace gmix
