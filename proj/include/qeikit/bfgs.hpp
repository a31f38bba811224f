/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#ifndef QEIKIT_BFGS_HPP
#define QEIKIT_BFGS_HPP

#include <cmath>
#include <functional>
#include <utility>

#include "qeikit/core.hpp"

namespace qeikit {

struct BoxBfgsOptions {
  int max_iters = 200;
  //! Stop once the relative objective improvement per step drops below this.
  double stop_factr = 2.2e-7;
  //! Stop once the projected gradient infinity norm drops below this.
  double grad_tol = 1e-8;
  double armijo_c = 1e-4;
  int max_backtracks = 40;
};

struct BoxBfgsResult {
  Vector x;
  double value = 0.0;
  int n_iters = 0;
  //! True when a stopping rule fired, false on the max_iters budget.
  bool converged = false;
};

//! Objective callback: fills grad (same size as x) and returns f(x).
using BoxObjective = std::function<double(const Vector&, Vector&)>;

//! Minimizes f over the box [lo, hi] by BFGS with gradient projection.
//!
//! Search directions are deflected to the inverse-Hessian estimate, zeroed on
//! the active bound set, and explored with a backtracking Armijo line search
//! on the projected step. Non-finite objective values reject the trial point,
//! so callers may signal infeasible regions with +infinity.
inline BoxBfgsResult minimize_box(const BoxObjective& fg, Vector x0,
                                  const Vector& lo, const Vector& hi,
                                  const BoxBfgsOptions& opts = {}) {
  const int n = static_cast<int>(x0.size());
  if (lo.size() != n || hi.size() != n)
    throw ContractError("minimize_box: bound dimension mismatch");
  for (int i = 0; i < n; ++i) {
    if (!(lo[i] <= hi[i])) throw ContractError("minimize_box: empty box");
  }

  auto clamp = [&](Vector v) {
    for (int i = 0; i < n; ++i) v[i] = std::min(std::max(v[i], lo[i]), hi[i]);
    return v;
  };
  // Active-set test needs a resolution wider than the clamp roundoff.
  auto at_lower = [&](const Vector& x, int i) {
    return x[i] <= lo[i] + 1e-14 * (1.0 + std::abs(lo[i]));
  };
  auto at_upper = [&](const Vector& x, int i) {
    return x[i] >= hi[i] - 1e-14 * (1.0 + std::abs(hi[i]));
  };

  BoxBfgsResult res;
  res.x = clamp(std::move(x0));
  Vector g(n);
  res.value = fg(res.x, g);
  if (!std::isfinite(res.value)) return res;

  Matrix h_inv = Matrix::Identity(n, n);
  Vector g_new(n);
  for (res.n_iters = 0; res.n_iters < opts.max_iters; ++res.n_iters) {
    double pg_norm = 0.0;
    for (int i = 0; i < n; ++i) {
      const bool blocked = (at_lower(res.x, i) && g[i] > 0.0) ||
                           (at_upper(res.x, i) && g[i] < 0.0);
      if (!blocked) pg_norm = std::max(pg_norm, std::abs(g[i]));
    }
    if (pg_norm <= opts.grad_tol) {
      res.converged = true;
      break;
    }

    Vector dir = -(h_inv * g);
    for (int i = 0; i < n; ++i) {
      if ((at_lower(res.x, i) && dir[i] < 0.0) ||
          (at_upper(res.x, i) && dir[i] > 0.0))
        dir[i] = 0.0;
    }
    if (dir.dot(g) >= 0.0) {
      // Deflected direction lost descent; restart from steepest descent.
      h_inv.setIdentity();
      dir = -g;
      for (int i = 0; i < n; ++i) {
        if ((at_lower(res.x, i) && dir[i] < 0.0) ||
            (at_upper(res.x, i) && dir[i] > 0.0))
          dir[i] = 0.0;
      }
    }

    double step = 1.0;
    bool accepted = false;
    Vector x_new;
    double f_new = 0.0;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      x_new = clamp(res.x + step * dir);
      Vector delta = x_new - res.x;
      if (delta.lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) &&
          f_new <= res.value + opts.armijo_c * g.dot(delta)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No measurable descent along the projected direction.
      res.converged = true;
      break;
    }

    Vector s = x_new - res.x;
    Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      Vector hy = h_inv * y;
      h_inv -= rho * (s * hy.transpose() + hy * s.transpose());
      h_inv += (rho * rho * y.dot(hy) + rho) * (s * s.transpose());
    }

    const double drop = res.value - f_new;
    const bool stalled =
        drop <= opts.stop_factr * (std::abs(res.value) + std::abs(f_new) + 1e-12);
    res.x = std::move(x_new);
    res.value = f_new;
    g = g_new;
    if (stalled) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace qeikit

#endif  // QEIKIT_BFGS_HPP
