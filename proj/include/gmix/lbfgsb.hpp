#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>

#include "gmix/errors.hpp"
#include "gmix/linalg.hpp"

namespace gmix {

struct LbfgsOptions {
  Index memory = 10;
  Index max_iter = 15000;
  double pgtol = 1e-5;         // infinity norm of the projected gradient
  double factr = 1e7;          // stop when relative reduction <= factr * machine epsilon
  Index max_backtracks = 60;
  double armijo = 1e-4;
  double wolfe = 0.9;         // curvature constant of the weak Wolfe condition
  double active_eps = 1e-3;   // relative width of the band treated as active at a bound
};

struct LbfgsResult {
  Vec x;
  double f = 0.0;
  Vec grad;
  Index iterations = 0;
  Index evaluations = 0;
  double pg_norm = 0.0;
  std::string message;
};

/// Objective returning f(x) and writing its gradient.
using Objective = std::function<double(const Vec&, Vec&)>;

namespace detail {

inline Vec project(const Vec& x, const Vec& lower) { return x.cwiseMax(lower); }

inline double projected_gradient_norm(const Vec& x, const Vec& g, const Vec& lower) {
  return (project(x - g, lower) - x).cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Limited-memory BFGS with lower bounds (entries may be -inf). Variables within eps of
/// their bound with a gradient pushing outward form the active set, eps = min(eps_max,
/// |x - P(x - g)|_inf). Active variables move straight to the bound; the two-loop recursion
/// acts on the free ones, followed by a projected backtracking line search.
inline LbfgsResult lbfgs_minimize(const Objective& fun, Vec x0, const Vec& lower, const LbfgsOptions& opt = {}) {
  const Index n = x0.size();
  if (lower.size() != n) throw ShapeError("bound vector length does not match the start point");
  LbfgsResult res;
  Vec x = detail::project(x0, lower);
  Vec g;
  double f = fun(x, g);
  res.evaluations = 1;
  if (!std::isfinite(f) || !g.allFinite()) throw OptimError("objective is not finite at the start point");
  std::deque<Vec> ss, ys;
  const double eps = std::numeric_limits<double>::epsilon();

  for (Index it = 0; it < opt.max_iter; ++it) {
    res.pg_norm = n > 0 ? detail::projected_gradient_norm(x, g, lower) : 0.0;
    if (res.pg_norm <= opt.pgtol) {
      res.message = "projected gradient below tolerance";
      break;
    }
    const double near = std::min(res.pg_norm, opt.active_eps * (1.0 + x.cwiseAbs().maxCoeff()));
    std::vector<char> free(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) free[static_cast<std::size_t>(i)] = !(x(i) - lower(i) <= near && g(i) > 0.0);
    auto mask = [&](Vec v) {
      for (Index i = 0; i < n; ++i)
        if (!free[static_cast<std::size_t>(i)]) v(i) = 0.0;
      return v;
    };

    // Two-loop recursion on the free subspace.
    Vec q = mask(g);
    const auto m = ss.size();
    std::vector<double> alpha(m), rho(m);
    for (std::size_t k = m; k-- > 0;) {
      const Vec sk = mask(ss[k]);
      const Vec yk = mask(ys[k]);
      const double sy = sk.dot(yk);
      rho[k] = sy > eps * yk.squaredNorm() && sy > 0.0 ? 1.0 / sy : 0.0;
      alpha[k] = rho[k] * sk.dot(q);
      q -= alpha[k] * yk;
    }
    double gamma = 1.0;
    if (m > 0) {
      const Vec sk = mask(ss.back());
      const Vec yk = mask(ys.back());
      const double yy = yk.squaredNorm();
      if (yy > 0.0 && sk.dot(yk) > 0.0) gamma = sk.dot(yk) / yy;
    }
    Vec dir = gamma * q;
    for (std::size_t k = 0; k < m; ++k) {
      const Vec sk = mask(ss[k]);
      const Vec yk = mask(ys[k]);
      const double beta = rho[k] * yk.dot(dir);
      dir += (alpha[k] - beta) * sk;
    }
    dir = -mask(dir);
    for (Index i = 0; i < n; ++i)
      if (!free[static_cast<std::size_t>(i)]) dir(i) = lower(i) - x(i);
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      ss.clear();
      ys.clear();
      dir = -g;
      slope = g.dot(dir);
      if (!(slope < 0.0)) {
        res.message = "no descent direction";
        break;
      }
    }
    double t = 1.0;
    if (ss.empty()) t = std::min(1.0, 1.0 / std::max(dir.cwiseAbs().maxCoeff(), eps));

    // Weak Wolfe search by bisection and doubling; the curvature test is skipped once a bound is hit.
    Vec xn, gn, xa, ga;
    double fn = std::numeric_limits<double>::infinity(), fa = fn;
    bool accepted = false;
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (Index bt = 0; bt < opt.max_backtracks; ++bt) {
      const Vec step = x + t * dir;
      xn = detail::project(step, lower);
      fn = fun(xn, gn);
      ++res.evaluations;
      if (!(std::isfinite(fn) && gn.allFinite() && fn <= f + opt.armijo * g.dot(xn - x))) {
        hi = t;
      } else {
        accepted = true;
        xa = xn;
        ga = gn;
        fa = fn;
        const bool clipped = (xn - step).cwiseAbs().maxCoeff() > 0.0;
        if (clipped || gn.dot(dir) >= opt.wolfe * slope) break;
        lo = t;
      }
      if (accepted && hi < std::numeric_limits<double>::infinity() && hi - lo <= 1e-3 * hi) break;
      t = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * t;
    }
    if (accepted) {
      xn = std::move(xa);
      gn = std::move(ga);
      fn = fa;
    }
    res.iterations = it + 1;
    if (!accepted) {
      if (!ss.empty()) {
        ss.clear();
        ys.clear();
        continue;
      }
      res.message = "line search failed";
      break;
    }
    const Vec s = xn - x;
    const Vec y = gn - g;
    const double rel = (f - fn) / std::max({std::abs(f), std::abs(fn), 1.0});
    x = std::move(xn);
    g = std::move(gn);
    const double f_old = f;
    f = fn;
    if (s.dot(y) > eps * y.squaredNorm()) {
      ss.push_back(s);
      ys.push_back(y);
      if (static_cast<Index>(ss.size()) > opt.memory) {
        ss.pop_front();
        ys.pop_front();
      }
    }
    if (rel <= opt.factr * eps && f_old >= f) {
      res.pg_norm = n > 0 ? detail::projected_gradient_norm(x, g, lower) : 0.0;
      res.message = "relative reduction below tolerance";
      break;
    }
    if (it + 1 == opt.max_iter) {
      res.x = x;
      throw OptimError("optimizer reached " + std::to_string(opt.max_iter) + " iterations (f = " + std::to_string(f) +
                       ", projected gradient = " + std::to_string(res.pg_norm) + ")");
    }
  }
  res.x = std::move(x);
  res.f = f;
  res.grad = std::move(g);
  return res;
}

}  // namespace gmix
