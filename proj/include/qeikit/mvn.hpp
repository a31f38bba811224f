/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#ifndef QEIKIT_MVN_HPP
#define QEIKIT_MVN_HPP

#include <vector>

#include "qeikit/core.hpp"

namespace qeikit::mvn {

struct CdfResult {
  double value = 0.0;
  double error_estimate = 0.0;  // ~3-sigma half width; 0 for closed forms
  long long n_evals = 0;
};

//! P(X <= x) for X ~ N(0, sigma). Dimensions 0..2 use closed forms
//! (error_estimate 0); higher dimensions use a reordered-Cholesky
//! transformation integrated with randomly scrambled Sobol points.
//! Bit-identical output for identical inputs and seed. Records one call at
//! dimension dim(x) on ctx.counter.
CdfResult mvn_cdf(const Vector& x, const SpdMatrix& sigma,
                  const CdfContext& ctx = {});

//! Gradient of x -> P(X <= x). Component i is the marginal density at x_i
//! times the CDF of the conditional law of the remaining coordinates, so the
//! call costs dim(x) CDF evaluations of dimension dim(x)-1.
Vector mvn_cdf_grad(const Vector& x, const SpdMatrix& sigma,
                    const CdfContext& ctx = {});

//! Hessian of x -> P(X <= x). Off-diagonal (i,j) entries pair the bivariate
//! marginal density with a (dim-2)-dimensional conditional CDF; diagonal
//! entries follow from the identity
//!   d2F/dx_i^2 = -(x_i dF/dx_i + sum_{j != i} sigma_ij d2F/dx_i dx_j)/sigma_ii,
//! which costs no additional CDF calls beyond the gradient.
Matrix mvn_cdf_hessian(const Vector& x, const SpdMatrix& sigma,
                       const CdfContext& ctx = {});
//! Same, reusing a precomputed gradient for the diagonal identity.
Matrix mvn_cdf_hessian(const Vector& x, const SpdMatrix& sigma,
                       const Vector& grad, const CdfContext& ctx = {});

//! Conditional law of the remaining coordinates after pinning the listed
//! ones: pinned values u shift the mean by weights * u, and `reduced` is the
//! Schur complement.
struct ConditionalSlice {
  std::vector<int> indices;  // pinned coordinates, ascending
  Matrix weights;            // (p-m) x m regression weights
  SpdMatrix reduced;         // (p-m) x (p-m) conditional covariance
};

//! Pin one or two coordinates of N(0, sigma).
ConditionalSlice condition_out(const SpdMatrix& sigma,
                               const std::vector<int>& indices);

}  // namespace qeikit::mvn

#endif  // QEIKIT_MVN_HPP
