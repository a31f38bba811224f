/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#ifndef QEIKIT_GP_HPP
#define QEIKIT_GP_HPP

#include <cstdint>
#include <vector>

#include "qeikit/core.hpp"

namespace qeikit::gp {

//! Observations on the unit cube. noise_vars holds per-point Gaussian
//! observation noise variances; all zero means exact function evaluations.
struct Design {
  Matrix points;      // n x d, rows inside [0,1]^d
  Vector values;      // n
  Vector noise_vars;  // n, entrywise >= 0
};

//! Throws ContractError unless n >= 1, dimensions agree, every point lies in
//! the unit cube and every noise variance is nonnegative.
void validate_design(const Design& design);

//! Matern 3/2 tensor-product covariance
//!   k(a,b) = variance * prod_j (1 + u_j) exp(-u_j),  u_j = sqrt(3)|a_j - b_j| / l_j.
//! Once differentiable in each coordinate; the derivative vanishes at a_j = b_j.
struct Kernel {
  double variance = 1.0;
  Vector lengthscales;
};

double kernel_value(const Kernel& k, const Eigen::Ref<const Vector>& a,
                    const Eigen::Ref<const Vector>& b);

//! Partial derivative of kernel_value in a_j.
double kernel_diff1(const Kernel& k, const Eigen::Ref<const Vector>& a,
                    const Eigen::Ref<const Vector>& b, int j);

//! Fitted regression model with a cached factorization. Immutable after
//! construction; posterior and sampling calls are safe to run concurrently,
//! while update/fit build new models.
struct GpModel {
  Design design;
  Kernel kernel;
  double trend = 0.0;  // constant mean, profiled by generalized least squares
  Matrix chol;         // lower Cholesky factor of K + diag(noise_vars) + jitter
  Vector alpha;        // (K + diag(noise_vars) + jitter I)^{-1} (values - trend)
};

//! Posterior law of the latent values at a batch, with spatial derivatives.
//! mean_jac[i] is the gradient of the posterior mean at batch point i.
//! cov_jac[i](u, j) differentiates cov(i, u) in coordinate j of batch point i
//! through the first slot only; the diagonal entry u = i therefore carries
//! half of the variance derivative.
struct PosteriorBatch {
  Matrix batch_points;  // q x d
  Vector mean;          // q
  SpdMatrix cov;        // q x q
  std::vector<Vector> mean_jac;  // q entries of size d
  std::vector<Matrix> cov_jac;   // q entries of size q x d
};

//! Factorizes the Gram matrix for fixed hyperparameters (no fitting).
//! The constant trend is re-profiled by generalized least squares.
//! Throws NumericalError when the jittered Gram matrix is not positive
//! definite, ContractError on malformed inputs.
GpModel make_model(const Design& design, const Kernel& kernel);

//! Multistart maximum-likelihood fit of the kernel hyperparameters with the
//! constant trend profiled out. Deterministic for a fixed seed.
GpModel fit(const Design& design, int n_restarts = 5, std::uint64_t seed = 0);

PosteriorBatch posterior(const GpModel& model, const Matrix& batch);

//! Joint conditional law of the latent values at the n design points followed
//! by the q batch points, given the noisy observations. Intended for models
//! with at least one positive noise variance; with all-zero noise the leading
//! block is numerically degenerate.
GaussianView posterior_noisy_joint(const GpModel& model, const Matrix& batch);

//! Appends observations and refactorizes under the unchanged kernel
//! hyperparameters (refitting is a separate fit call). A point duplicating a
//! noiseless design point is dropped when its value agrees and rejected with
//! ContractError when it conflicts.
GpModel update(const GpModel& model, const Matrix& new_points,
               const Vector& new_values, const Vector& new_noise);

//! Exact draws from the joint posterior at the given points, one draw per
//! row. Deterministic for a fixed seed.
Matrix sample_conditional(const GpModel& model, const Matrix& points,
                          int n_draws, std::uint64_t seed);

}  // namespace qeikit::gp

#endif  // QEIKIT_GP_HPP
