#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "gmix/linalg.hpp"
#include "gmix/model.hpp"
#include "gmix/split.hpp"

namespace gmix {

/// Identifies the additive constant an evaluator drops. Differences of log densities
/// are comparable only between evaluators with equal tokens.
struct ConstantToken {
  std::uint64_t fingerprint = 0;
  std::string parameterization;

  bool operator==(const ConstantToken&) const = default;
};

/// Negative log posterior mixing density and its gradient.
struct MapObjective {
  double value = 0.0;
  Vec grad;
};

namespace detail {

/// Quantities of the w-space density restricted to the support `idx`.
/// With S = I + L_w^{1/2} A_II L_w^{1/2} = L L^T and Y = L^{-1} L_w^{1/2}:
///   xt = Y A_{I,:}             (r x d)
///   s  = Y b_I
///   diag_sinv = diag(S^{-1}),  sinv_u = S^{-1} L_w^{1/2} b_I
struct SupportTerms {
  std::vector<Index> idx;
  Vec sq;
  double log_det_s = 0.0;
  double quad = 0.0;
  Mat xt;
  Vec s;
  Vec diag_sinv;
  Vec sinv_u;
};

inline void check_w(const Vec& w, Index d) {
  if (w.size() != d) throw ShapeError("mixing vector has wrong length");
  for (Index i = 0; i < d; ++i)
    if (!(w(i) >= 0.0) || !std::isfinite(w(i)))
      throw SupportError("mixing vector must be finite and non-negative (coordinate " + std::to_string(i) + ")");
}

inline constexpr double kVClamp = 45.0;

inline Vec exp_v(const Vec& v) {
  for (Index i = 0; i < v.size(); ++i)
    if (!(std::abs(v(i)) <= kVClamp))
      throw SupportError("log mixing coordinate " + std::to_string(i) + " = " + std::to_string(v(i)) +
                         " outside [-45, 45]; reduce the step size or check the initialization");
  return v.array().exp().matrix();
}

}  // namespace detail

/// Log posterior mixing density of the product-form Laplace prior in w-space,
///   log pi(w|y) = -lambda^T w - 1/2 log det S + 1/2 b^T L^{1/2} S^{-1} L^{1/2} b,
/// with S = I + L^{1/2} Ahat L^{1/2}, L = diag(w). The form stays valid at w_i = 0.
/// Derivatives use K = (Ahat^{-1} + L)^{-1} = Ahat - Ahat L^{1/2} S^{-1} L^{1/2} Ahat and
/// z = K Ahat^{-1} b = b - Ahat L^{1/2} S^{-1} L^{1/2} b, neither of which needs Ahat^{-1}.
class WSpaceEvaluator {
 public:
  static constexpr Index kDenseGramLimit = 4096;

  WSpaceEvaluator(const LinearGaussianModel& model, Vec rates) : model_(&model), rates_(std::move(rates)) {
    const Index d = model.d();
    if (rates_.size() != d) throw ShapeError("rates length does not match model dimension");
    for (Index i = 0; i < d; ++i)
      if (!(rates_(i) > 0.0) || !std::isfinite(rates_(i))) throw DomainError("exponential rates must be positive");
    b_ = model.b_hat();
    if (d <= kDenseGramLimit) {
      gram_ = std::make_shared<const Mat>(model.whitened().gram());
      gdiag_ = gram_->diagonal();
    } else {
      gdiag_ = model.whitened().gram_diag();
    }
    data_space_ = model.m() < d;
    if (!data_space_ && !gram_) throw ArgError("dense Gram matrix required but dimension exceeds the cache limit");
    std::uint64_t h = model.fingerprint();
    h = detail::hash_values(rates_.data(), rates_.size(), h);
    fingerprint_ = h;
  }

  const LinearGaussianModel& model() const { return *model_; }
  const Vec& rates() const { return rates_; }
  Index dim() const { return rates_.size(); }
  const Vec& b_hat() const { return b_; }
  const Vec& gram_diag() const { return gdiag_; }
  bool has_dense_gram() const { return static_cast<bool>(gram_); }
  bool uses_data_space() const { return data_space_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

  const Mat& gram() const {
    if (!gram_) throw ArgError("dense Gram matrix not cached for this dimension");
    return *gram_;
  }

  /// Ahat[:, cols].
  Mat gram_columns(const std::vector<Index>& cols) const {
    if (gram_) return gather_cols(*gram_, cols);
    return model_->whitened().gram_columns(cols);
  }

  ConstantToken constant_token() const { return {fingerprint_, "w"}; }

  double log_density(const Vec& w) const {
    detail::check_w(w, dim());
    if (data_space_) return data_space(w, false).value;
    const auto t = support_terms(w, all_indices(), false);
    return -rates_.dot(w) - 0.5 * t.log_det_s + 0.5 * t.quad;
  }

  Vec grad_log_density(const Vec& w) const {
    Vec g;
    value_and_grad(w, g);
    return g;
  }

  double value_and_grad(const Vec& w, Vec& grad) const {
    detail::check_w(w, dim());
    if (data_space_) {
      auto r = data_space(w, true);
      grad = std::move(r.grad);
      return r.value;
    }
    const auto t = support_terms(w, all_indices(), true);
    grad = gradient_from_terms(w, t);
    return -rates_.dot(w) - 0.5 * t.log_det_s + 0.5 * t.quad;
  }

  /// Gradient of log pi(y|w), i.e. the full gradient without the prior term -lambda.
  Vec grad_log_likelihood(const Vec& w) const { return grad_log_density(w) + rates_; }

  /// Full d x d Hessian: 1/2 K.^2 - diag(z) K diag(z).
  Mat hessian(const Vec& w) const {
    detail::check_w(w, dim());
    Mat k;
    Vec z;
    if (data_space_) {
      data_space_kernel(w, k, z);
    } else {
      const auto t = support_terms(w, all_indices(), true);
      k = *gram_;
      k.noalias() -= t.xt.transpose() * t.xt;
      z = b_ - t.xt.transpose() * t.s;
    }
    return hessian_from_kernel(k, z);
  }

  /// Negative log density and gradient using only min(r, m)-sized dense algebra, r = |support(w)|.
  MapObjective sparse_map_objective(const Vec& w) const {
    detail::check_w(w, dim());
    auto idx = support_of(w);
    if (static_cast<Index>(idx.size()) > model_->m()) {
      // A support larger than the data dimension is cheaper in the m x m data-space form.
      auto r = data_space(w, true);
      return {-r.value, -r.grad};
    }
    const auto t = support_terms(w, std::move(idx), true);
    MapObjective out;
    out.value = rates_.dot(w) + 0.5 * t.log_det_s - 0.5 * t.quad;
    out.grad = -gradient_from_terms(w, t);
    return out;
  }

  /// Block [Hessian]_{P,P} computed through the support of w.
  Mat hessian_block(const Vec& w, const std::vector<Index>& p) const {
    detail::check_w(w, dim());
    const auto t = support_terms(w, support_of(w), true);
    Mat k = gram_block(p, p);
    if (t.idx.size() > 0) {
      Mat xp(t.xt.rows(), static_cast<Index>(p.size()));
      for (std::size_t j = 0; j < p.size(); ++j) xp.col(static_cast<Index>(j)) = t.xt.col(p[j]);
      k.noalias() -= xp.transpose() * xp;
    }
    Vec z = b_ - (t.idx.empty() ? Vec::Zero(dim()) : Vec(t.xt.transpose() * t.s));
    const Vec zp = gather(z, p);
    return hessian_from_kernel(k, zp);
  }

  /// Ahat[P, Q].
  Mat gram_block(const std::vector<Index>& p, const std::vector<Index>& q) const {
    if (gram_) return gather(*gram_, p, q);
    const Mat cols = model_->whitened().gram_columns(q);
    Mat out(static_cast<Index>(p.size()), static_cast<Index>(q.size()));
    for (std::size_t i = 0; i < p.size(); ++i) out.row(static_cast<Index>(i)) = cols.row(p[i]);
    return out;
  }

  static std::vector<Index> support_of(const Vec& w) {
    std::vector<Index> idx;
    for (Index i = 0; i < w.size(); ++i)
      if (w(i) > 0.0) idx.push_back(i);
    return idx;
  }

  /// Support-restricted terms. Coordinates outside idx must have w = 0.
  detail::SupportTerms support_terms(const Vec& w, std::vector<Index> idx, bool with_grad) const {
    detail::SupportTerms t;
    t.idx = std::move(idx);
    const auto r = static_cast<Index>(t.idx.size());
    if (r == 0) return t;
    t.sq = gather(w, t.idx).cwiseSqrt();
    const Mat g = gram_columns(t.idx);  // d x r
    Mat sm(r, r);
    for (Index j = 0; j < r; ++j)
      for (Index i = 0; i < r; ++i) sm(i, j) = t.sq(i) * g(t.idx[static_cast<std::size_t>(i)], j) * t.sq(j);
    sm.diagonal().array() += 1.0;
    const Cholesky ch = robust_cholesky(sm, "I + W^1/2 Ahat W^1/2");
    t.log_det_s = ch.log_det();
    const Vec u = t.sq.cwiseProduct(gather(b_, t.idx));
    const auto l = ch.llt.matrixL();
    t.s = l.solve(u);
    t.quad = t.s.squaredNorm();
    if (!with_grad) return t;
    Mat linv = Mat::Identity(r, r);
    l.solveInPlace(linv);
    t.diag_sinv = linv.colwise().squaredNorm().transpose();
    t.sinv_u = linv.transpose() * t.s;
    const Mat y = linv * t.sq.asDiagonal();
    t.xt.noalias() = y * g.transpose();
    return t;
  }

 private:
  struct DataSpaceResult {
    double value = 0.0;
    Vec grad;
  };

  std::vector<Index> all_indices() const {
    std::vector<Index> idx(static_cast<std::size_t>(dim()));
    for (Index i = 0; i < dim(); ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
  }

  // Combines the direct form diag(K) = diag(Ahat) - |X_i|^2 with the equivalent
  // (1 - S^{-1}_ii) / w_i, which avoids cancellation when w_i * Ahat_ii is large.
  Vec gradient_from_terms(const Vec& w, const detail::SupportTerms& t) const {
    const Index d = dim();
    Vec diag_k = gdiag_;
    Vec z = b_;
    if (!t.idx.empty()) {
      diag_k -= t.xt.colwise().squaredNorm().transpose();
      z.noalias() -= t.xt.transpose() * t.s;
      for (std::size_t k = 0; k < t.idx.size(); ++k) {
        const Index i = t.idx[k];
        const auto kk = static_cast<Index>(k);
        if (w(i) * gdiag_(i) > 1.0) {
          diag_k(i) = (1.0 - t.diag_sinv(kk)) / w(i);
          z(i) = t.sinv_u(kk) / t.sq(kk);
        }
      }
    }
    Vec g(d);
    for (Index i = 0; i < d; ++i) g(i) = -rates_(i) - 0.5 * diag_k(i) + 0.5 * z(i) * z(i);
    return g;
  }

  static Mat hessian_from_kernel(const Mat& k, const Vec& z) {
    Mat h = 0.5 * k.cwiseProduct(k);
    h.noalias() -= z.asDiagonal() * k * z.asDiagonal();
    return 0.5 * (h + h.transpose());
  }

  // Data-space form for m < d: T = I_m + F W F^T,
  //   log det S = log det T,  b^T L^{1/2} S^{-1} L^{1/2} b = |y|^2 - y^T T^{-1} y,
  //   K = F^T T^{-1} F,  z = F^T T^{-1} y  (y whitened).
  DataSpaceResult data_space(const Vec& w, bool with_grad) const {
    const auto& f = model_->whitened();
    const Vec& yt = model_->whitened_data();
    Mat tm = f.weighted_outer(w);
    tm.diagonal().array() += 1.0;
    const Cholesky ch = robust_cholesky(tm, "I + F W F^T");
    const Vec tiy = ch.solve(yt);
    DataSpaceResult out;
    out.value = -rates_.dot(w) - 0.5 * ch.log_det() + 0.5 * (yt.squaredNorm() - yt.dot(tiy));
    if (!with_grad) return out;
    const Vec z = f.apply_t(tiy);
    Vec diag_k(dim());
    if (const Mat* fd = f.dense_ptr()) {
      Mat x = *fd;
      ch.llt.matrixL().solveInPlace(x);
      diag_k = x.colwise().squaredNorm().transpose();
    } else {
      const SpMat& fs = *f.sparse_ptr();
      const Mat tinv = ch.inverse();
      for (Index j = 0; j < fs.cols(); ++j) {
        double acc = 0.0;
        for (SpMat::InnerIterator a(fs, j); a; ++a)
          for (SpMat::InnerIterator b(fs, j); b; ++b) acc += a.value() * tinv(a.row(), b.row()) * b.value();
        diag_k(j) = acc;
      }
    }
    out.grad = -rates_ - 0.5 * diag_k + 0.5 * z.cwiseProduct(z);
    return out;
  }

  void data_space_kernel(const Vec& w, Mat& k, Vec& z) const {
    const auto& f = model_->whitened();
    Mat tm = f.weighted_outer(w);
    tm.diagonal().array() += 1.0;
    const Cholesky ch = robust_cholesky(tm, "I + F W F^T");
    Mat x = f.dense();
    ch.llt.matrixL().solveInPlace(x);
    k = x.transpose() * x;
    z = f.apply_t(ch.solve(model_->whitened_data()));
  }

  const LinearGaussianModel* model_;
  Vec rates_;
  Vec b_;
  Vec gdiag_;
  std::shared_ptr<const Mat> gram_;
  bool data_space_ = false;
  std::uint64_t fingerprint_ = 0;
};

/// Density of v = log w including the Jacobian:
///   log pi(v|y) = -sum lambda_i e^{v_i} - 1/2 log det[Ahat + L^{-1}] + 1/2 b^T [Ahat + L^{-1}]^{-1} b + 1/2 sum v_i,
/// which equals log pi_w(e^v) + sum v_i exactly.
class VSpaceEvaluator {
 public:
  explicit VSpaceEvaluator(const WSpaceEvaluator& inner) : inner_(&inner) {}

  const WSpaceEvaluator& inner() const { return *inner_; }
  Index dim() const { return inner_->dim(); }
  ConstantToken constant_token() const { return {inner_->fingerprint(), "v"}; }

  double log_density(const Vec& v) const {
    const Vec w = detail::exp_v(v);
    return inner_->log_density(w) + v.sum();
  }

  Vec grad_log_density(const Vec& v) const {
    Vec g;
    value_and_grad(v, g);
    return g;
  }

  double value_and_grad(const Vec& v, Vec& grad) const {
    const Vec w = detail::exp_v(v);
    if (inner_->uses_data_space()) {
      Vec gw;
      const double val = inner_->value_and_grad(w, gw);
      grad = w.cwiseProduct(gw).array() + 1.0;
      return val + v.sum();
    }
    std::vector<Index> all(static_cast<std::size_t>(dim()));
    for (Index i = 0; i < dim(); ++i) all[static_cast<std::size_t>(i)] = i;
    const auto t = inner_->support_terms(w, std::move(all), true);
    const Vec& lam = inner_->rates();
    grad.resize(dim());
    for (Index i = 0; i < dim(); ++i)
      grad(i) = -lam(i) * w(i) + 0.5 + 0.5 * t.diag_sinv(i) + 0.5 * t.sinv_u(i) * t.sinv_u(i);
    return -lam.dot(w) - 0.5 * t.log_det_s + 0.5 * t.quad + v.sum();
  }

 private:
  const WSpaceEvaluator* inner_;
};

/// CCS-reduced v-space density with v_J fixed at -log lambda_J (w_J at its prior mean).
/// With B = Ahat_II, C = Ahat_IJ, D = Ahat_JJ + diag(lambda_J), E = B - C D^{-1} C^T and
/// g = b_I - C D^{-1} b_J, the density up to a constant is
///   -sum lambda_I e^{v_I} - 1/2 log det Z + 1/2 h^T Z^{-1} h + sum v_I,
/// where Z = I + W_I^{1/2} E W_I^{1/2} and h = W_I^{1/2} g.
class ReducedVEvaluator {
 public:
  ReducedVEvaluator(const WSpaceEvaluator& ev, CoordinateSplit split) : split_(std::move(split)) {
    if (split_.dim() != ev.dim()) throw ShapeError("split dimension does not match evaluator");
    if (split_.rank() < 1) throw ArgError("reduced evaluator needs at least one selected coordinate");
    const auto& ii = split_.selected();
    const auto& jj = split_.complement();
    const auto& model = ev.model();
    const Vec& lam = ev.rates();
    rates_i_ = split_.take_selected(lam);
    const Vec lam_j = split_.take_complement(lam);
    fixed_vj_ = -lam_j.array().log().matrix();
    const Index r = split_.rank();
    const auto nj = static_cast<Index>(jj.size());

    if (nj == 0) {
      e_ = ev.gram_block(ii, ii);
      g_ = split_.take_selected(ev.b_hat());
      log_det_d_ = 0.0;
      bdb_ = 0.0;
    } else if (model.m() < nj) {
      // Push-through form: P = I_m + F_J diag(1/lambda_J) F_J^T,
      // E = F_I^T P^{-1} F_I, g = F_I^T P^{-1} y, b_J^T D^{-1} b_J = |y|^2 - y^T P^{-1} y.
      const auto& f = model.whitened();
      Vec scale = Vec::Zero(ev.dim());
      for (std::size_t k = 0; k < jj.size(); ++k) scale(jj[k]) = 1.0 / lam_j(static_cast<Index>(k));
      Mat p = f.weighted_outer(scale);
      p.diagonal().array() += 1.0;
      const Cholesky ch = robust_cholesky(p, "I + F_J diag(1/lambda_J) F_J^T");
      const Vec& yt = model.whitened_data();
      Mat fi = f.columns(ii);
      ch.llt.matrixL().solveInPlace(fi);
      Vec ly = yt;
      ch.llt.matrixL().solveInPlace(ly);
      e_ = fi.transpose() * fi;
      g_ = fi.transpose() * ly;
      log_det_d_ = lam_j.array().log().sum() + ch.log_det();
      bdb_ = yt.squaredNorm() - ly.squaredNorm();
    } else {
      const Mat b = ev.gram_block(ii, ii);
      const Mat c = ev.gram_block(ii, jj);
      Mat dm = ev.gram_block(jj, jj);
      dm.diagonal() += lam_j;
      const Cholesky ch = robust_cholesky(dm, "Ahat_JJ + diag(lambda_J)");
      dinv_ct_ = ch.solve(c.transpose());
      const Vec bj = split_.take_complement(ev.b_hat());
      const Vec dinv_bj = ch.solve(bj);
      e_ = b - c * dinv_ct_;
      e_ = 0.5 * (e_ + e_.transpose()).eval();
      g_ = split_.take_selected(ev.b_hat()) - c * dinv_bj;
      log_det_d_ = ch.log_det();
      bdb_ = bj.dot(dinv_bj);
    }
    (void)r;
    std::uint64_t h = ev.fingerprint();
    std::vector<double> sel(ii.begin(), ii.end());
    h = detail::hash_values(sel.data(), static_cast<Index>(sel.size()), h);
    token_ = {h, "reduced-v"};
  }

  const CoordinateSplit& split() const { return split_; }
  Index dim() const { return split_.rank(); }
  const Vec& fixed_vj() const { return fixed_vj_; }
  const Mat& schur() const { return e_; }
  const Mat& dinv_ct() const { return dinv_ct_; }
  double log_det_d() const { return log_det_d_; }
  ConstantToken constant_token() const { return token_; }

  /// Full v-space density at (v_I, fixed v_J) minus the reduced density; independent of v_I.
  double offset_to_full() const {
    const Index nj = fixed_vj_.size();
    return -static_cast<double>(nj) - 0.5 * log_det_d_ + 0.5 * bdb_ + 0.5 * fixed_vj_.sum();
  }

  double log_density(const Vec& v_i) const {
    Vec g;
    return eval(v_i, g, false);
  }

  Vec grad_log_density(const Vec& v_i) const {
    Vec g;
    eval(v_i, g, true);
    return g;
  }

  double value_and_grad(const Vec& v_i, Vec& grad) const { return eval(v_i, grad, true); }

 private:
  double eval(const Vec& v_i, Vec& grad, bool with_grad) const {
    const Index r = dim();
    if (v_i.size() != r) throw ShapeError("reduced coordinate vector has wrong length");
    const Vec w = detail::exp_v(v_i);
    const Vec sq = w.cwiseSqrt();
    Mat z = sq.asDiagonal() * e_ * sq.asDiagonal();
    z.diagonal().array() += 1.0;
    const Cholesky ch = robust_cholesky(z, "reduced I + W^1/2 E W^1/2");
    const auto l = ch.llt.matrixL();
    const Vec h = sq.cwiseProduct(g_);
    const Vec s = l.solve(h);
    const double val = -rates_i_.dot(w) - 0.5 * ch.log_det() + 0.5 * s.squaredNorm() + v_i.sum();
    if (!with_grad) return val;
    Mat linv = Mat::Identity(r, r);
    l.solveInPlace(linv);
    const Vec dz = linv.colwise().squaredNorm().transpose();
    const Vec zh = linv.transpose() * s;
    grad.resize(r);
    for (Index i = 0; i < r; ++i) grad(i) = -rates_i_(i) * w(i) + 0.5 + 0.5 * dz(i) + 0.5 * zh(i) * zh(i);
    return val;
  }

  CoordinateSplit split_;
  Vec rates_i_;
  Vec fixed_vj_;
  Mat e_;
  Mat dinv_ct_;
  Vec g_;
  double log_det_d_ = 0.0;
  double bdb_ = 0.0;
  ConstantToken token_;
};

}  // namespace gmix
