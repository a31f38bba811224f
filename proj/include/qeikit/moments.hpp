/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#ifndef QEIKIT_MOMENTS_HPP
#define QEIKIT_MOMENTS_HPP

#include "qeikit/core.hpp"

//! First and second moments of one coordinate of a Gaussian vector restricted
//! to the negative orthant, E[Z_k^a 1{Z <= 0}], with exact gradients in the
//! mean and covariance, a two-evaluation tilted-difference surrogate, and a
//! Monte Carlo reference.
namespace qeikit::moments {

//! E[exp(t.Z) 1{Z <= 0}] for Z ~ N(m, Sigma).
double mgf(const Vector& t, const GaussianView& g, const CdfContext& ctx = {});

//! E[Z_k 1{Z <= 0}]. One CDF call at dimension p plus p calls at p-1.
double moment1(int k, const GaussianView& g, const CdfContext& ctx = {});

//! E[Z_k^2 1{Z <= 0}]. Adds the CDF Hessian on top of the moment1 cost.
double moment2(int k, const GaussianView& g, const CdfContext& ctx = {});

//! Central-difference surrogate for moment1 built from two CDF values of the
//! exponentially tilted vector. Bias is O(eps^2); exactly two CDF calls, both
//! at dimension p.
double moment1_tangent(int k, const GaussianView& g, double eps = 1e-4,
                       const CdfContext& ctx = {});

//! d moment1 / d mean.
Vector moment1_grad_mean(int k, const GaussianView& g,
                         const CdfContext& ctx = {});

//! d moment1 / d covariance as a symmetric matrix D: perturbing the
//! covariance along a symmetric direction H changes moment1 at rate
//! sum_{rs} D_rs H_rs.
Matrix moment1_grad_cov(int k, const GaussianView& g,
                        const CdfContext& ctx = {});

//! The tangent surrogate together with its exact derivatives (which are
//! O(eps^2) approximations of the moment1 gradients). d_cov follows the same
//! symmetric convention as moment1_grad_cov.
struct TangentGradient {
  double value;
  Vector d_mean;
  Matrix d_cov;
};
TangentGradient moment1_tangent_grad(int k, const GaussianView& g,
                                     double eps = 1e-4,
                                     const CdfContext& ctx = {});

//! Plain Monte Carlo estimate of E[Z_k^alpha 1{Z <= 0}], the reference
//! oracle for everything above. Deterministic for a fixed seed.
struct McEstimate {
  double value;
  double std_error;
};
McEstimate moment_mc(int k, int alpha, const GaussianView& g,
                     long long n_draws, std::uint64_t seed);

}  // namespace qeikit::moments

#endif  // QEIKIT_MOMENTS_HPP
