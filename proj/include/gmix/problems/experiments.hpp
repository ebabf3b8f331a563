#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "gmix/model.hpp"
#include "gmix/problems/blur.hpp"
#include "gmix/problems/haar.hpp"
#include "gmix/problems/storm.hpp"
#include "gmix/random.hpp"

namespace gmix {

struct ExperimentData {
  std::string name;
  Vec s_true;  // signal-domain truth (deblurring only)
  Vec x_true;  // parameter-domain truth
  Vec y;
  double sigma_obs = 0.0;
  Vec delta;
  std::uint64_t seed = 0;
};

/// A built problem. The model is heap-allocated so evaluators may keep references
/// to it while the Experiment itself is moved around.
struct Experiment {
  std::unique_ptr<LinearGaussianModel> model;
  LaplacePrior prior{Vec::Ones(1)};
  ExperimentData data;
};

struct StepTable {
  std::vector<Index> positions;
  std::vector<double> heights;
};

/// Piecewise-constant truth for n = 1024: a few steps and narrow pulses whose Haar
/// coefficients number exactly 60 at 10 levels.
inline StepTable deblur_truth_1024() {
  return {{51, 52, 152, 487, 490, 562, 564, 685, 686, 793, 871, 994},
          {-1.1, 1.1, -1.5, -0.9, 0.9, 0.3, -0.3, -0.3, 0.3, 0.8, 0.5, 1.1}};
}

/// Smaller analogue for n = 256.
inline StepTable deblur_truth_256() {
  return {{13, 14, 38, 122, 124, 140, 171, 172, 198, 243},
          {-1.1, 1.1, -1.5, -0.9, 0.9, 0.3, -0.3, 0.3, 0.8, 1.1}};
}

inline Vec step_signal(Index n, const StepTable& t) {
  Vec s = Vec::Zero(n);
  for (std::size_t k = 0; k < t.positions.size(); ++k) s.tail(n - t.positions[k]).array() += t.heights[k];
  return s;
}

struct DeblurSize {
  Index n = 1024;
  int levels = 10;
  double sigma_obs = 0.03;
};

/// Matrix-free A = G W^T acting on Haar coefficients.
class DeblurOperator {
 public:
  DeblurOperator(Index n, int levels) : haar_(n, levels), blur_(n) {}
  Vec apply(const Vec& x) const { return blur_.apply(haar_.inverse(x)); }
  Vec apply_t(const Vec& u) const { return haar_.forward(blur_.apply_t(u)); }
  Mat matrix() const { return blur_.matrix() * haar_.matrix().transpose(); }
  const HaarTransform& haar() const { return haar_; }
  const BlurOperator& blur() const { return blur_; }

 private:
  HaarTransform haar_;
  BlurOperator blur_;
};

/// 1D deblurring in the Haar coefficient domain: y = G s_true + e, A = G W^T,
/// Besov rates delta_i = 2^{l(i)/2}.
inline Experiment build_deblurring(std::uint64_t seed, const DeblurSize& size = {}) {
  const DeblurOperator op(size.n, size.levels);
  const StepTable table = size.n == 1024 ? deblur_truth_1024() : size.n == 256 ? deblur_truth_256() : StepTable{};
  if (table.positions.empty()) throw ArgError("no ground-truth table for n = " + std::to_string(size.n));
  Experiment ex;
  ex.data.name = "deblur1d";
  ex.data.seed = seed;
  ex.data.sigma_obs = size.sigma_obs;
  ex.data.s_true = step_signal(size.n, table);
  ex.data.x_true = op.haar().forward(ex.data.s_true);
  Rng rng = make_rng(seed, "deblur-noise");
  ex.data.y = op.blur().apply(ex.data.s_true) + size.sigma_obs * standard_normal(rng, size.n);
  ex.data.delta = besov_rates(size.n, size.levels);
  ex.prior = LaplacePrior(ex.data.delta);
  ex.model = std::make_unique<LinearGaussianModel>(LinearGaussianModel::isotropic(op.matrix(), size.sigma_obs, ex.data.y));
  return ex;
}

/// Log-normal parameters (mu, sigma) with the given mode and standard deviation.
/// With t = sigma^2: mode = exp(mu - t) and sd^2 = (e^t - 1) e^{2 mu + t}, so
/// (e^t - 1) e^{3t} = (sd / mode)^2 and mu = log(mode) + t.
inline std::pair<double, double> lognormal_from_mode_sd(double mode, double sd) {
  if (!(mode > 0.0) || !(sd > 0.0)) throw ArgError("mode and standard deviation must be positive");
  const double target = (sd / mode) * (sd / mode);
  auto f = [target](double t) { return std::expm1(t) * std::exp(3.0 * t) - target; };
  double hi = 1.0;
  while (f(hi) < 0.0) hi *= 2.0;
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(f, 0.0, hi, boost::math::tools::eps_tolerance<double>(52), iters);
  const double t = 0.5 * (r.first + r.second);
  return {std::log(mode) + t, std::sqrt(t)};
}

struct StormSize {
  Index coarse_side = 32;
  int oversampling = 4;
  Index molecules = 50;
  double sigma_obs = 30.0;
  double delta = 1.275;
  double intensity_mode = 3000.0;
  double intensity_sd = 1700.0;
};

/// 2D super-resolution: molecules at distinct uniform fine-grid pixels with log-normal
/// intensities, y = A x_true + e.
inline Experiment build_storm(std::uint64_t seed, const StormSize& size = {}) {
  const StormOperator op = StormOperator::standard(size.coarse_side, size.oversampling);
  const Index d = op.d();
  if (size.molecules > d) throw ArgError("more molecules than fine pixels");
  Experiment ex;
  ex.data.name = "storm2d";
  ex.data.seed = seed;
  ex.data.sigma_obs = size.sigma_obs;
  Rng rng = make_rng(seed, "storm-truth");
  const auto [mu, sig] = lognormal_from_mode_sd(size.intensity_mode, size.intensity_sd);
  std::uniform_int_distribution<Index> pix(0, d - 1);
  std::lognormal_distribution<double> inten(mu, sig);
  std::set<Index> used;
  ex.data.x_true = Vec::Zero(d);
  while (static_cast<Index>(used.size()) < size.molecules) {
    const Index p = pix(rng);
    if (!used.insert(p).second) continue;
    ex.data.x_true(p) = inten(rng);
  }
  Rng noise = make_rng(seed, "storm-noise");
  ex.data.y = op.apply(ex.data.x_true) + size.sigma_obs * standard_normal(noise, op.m());
  ex.data.delta = Vec::Constant(d, size.delta);
  ex.prior = LaplacePrior(ex.data.delta);
  ex.model = std::make_unique<LinearGaussianModel>(LinearGaussianModel::isotropic(op.matrix(), size.sigma_obs, ex.data.y));
  return ex;
}

/// Two-dimensional toy problem with a closed-form check by quadrature.
inline Experiment build_toy() {
  Experiment ex;
  Mat a(2, 2);
  a << 1.0, 0.5, 0.2, 1.0;
  ex.data.name = "toy";
  ex.data.sigma_obs = 0.5;
  ex.data.y = Vec(2);
  ex.data.y << 1.5, -0.3;
  ex.data.delta = Vec(2);
  ex.data.delta << 1.0, 2.0;
  ex.prior = LaplacePrior(ex.data.delta);
  ex.model = std::make_unique<LinearGaussianModel>(LinearGaussianModel::isotropic(a, 0.5, ex.data.y));
  return ex;
}

}  // namespace gmix
