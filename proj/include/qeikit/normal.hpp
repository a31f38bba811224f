/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#ifndef QEIKIT_NORMAL_HPP
#define QEIKIT_NORMAL_HPP

#include <cmath>

namespace qeikit {

//! Standard normal density.
inline double norm_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

//! Standard normal CDF, accurate over the full double range via erfc.
inline double norm_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

//! Centered univariate normal density with variance s2.
inline double norm_pdf_var(double x, double s2) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi / std::sqrt(s2) * std::exp(-0.5 * x * x / s2);
}

//! Standard normal quantile. Rational initial guess plus two Halley
//! refinements against erfc; absolute error ~1e-15 on (0,1).
double norm_quantile(double p);

//! E[U | U <= b] for U ~ N(0,1): the ratio -pdf(b)/cdf(b), computed stably in
//! the deep lower tail.
double truncated_upper_mean(double b);

//! P(X <= h, Y <= k) for standard bivariate normal with correlation r.
//! Deterministic quadrature, absolute accuracy ~5e-16, symmetric in (h,k).
double bvn_cdf(double h, double k, double r);

//! Centered bivariate normal density at (x1,x2) with covariance
//! [[s11,s12],[s12,s22]].
double bvn_pdf(double x1, double x2, double s11, double s12, double s22);

}  // namespace qeikit

#endif  // QEIKIT_NORMAL_HPP
