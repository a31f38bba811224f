/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#ifndef QEIKIT_TESTS_SUPPORT_HPP
#define QEIKIT_TESTS_SUPPORT_HPP

#include <functional>
#include <random>

#include "qeikit/core.hpp"

namespace qeikit::testsupport {

inline Matrix random_spd(int p, std::mt19937_64& rng, double diag_boost = 0.5) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = n(rng);
  Matrix s = a * a.transpose() / p;
  s.diagonal().array() += diag_boost;
  return s;
}

inline Matrix equicorrelated(int p, double rho, double var = 1.0) {
  Matrix s = Matrix::Constant(p, p, rho * var);
  s.diagonal().setConstant(var);
  return s;
}

inline Vector random_vector(int p, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(p);
  for (int i = 0; i < p; ++i) v[i] = u(rng);
  return v;
}

//! Central finite difference of a scalar function along coordinate i.
inline double fd_partial(const std::function<double(const Vector&)>& f,
                         const Vector& x, int i, double h) {
  Vector xp = x, xm = x;
  xp[i] += h;
  xm[i] -= h;
  return (f(xp) - f(xm)) / (2.0 * h);
}

//! Central finite difference along a symmetric matrix direction
//! H = E^{rs} + E^{sr} (or E^{rr} when r == s).
inline double fd_matrix_dir(const std::function<double(const Matrix&)>& f,
                            const Matrix& s, int r, int c, double h) {
  Matrix hp = s, hm = s;
  hp(r, c) += h;
  hm(r, c) -= h;
  if (r != c) {
    hp(c, r) += h;
    hm(c, r) -= h;
  }
  return (f(hp) - f(hm)) / (2.0 * h);
}

}  // namespace qeikit::testsupport

#endif  // QEIKIT_TESTS_SUPPORT_HPP
