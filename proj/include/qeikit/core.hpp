/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#ifndef QEIKIT_CORE_HPP
#define QEIKIT_CORE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace qeikit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

//! Violated precondition or malformed input (CLI exit code 2).
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

//! Numerical breakdown at runtime (CLI exit code 3).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

//! Covariance not positive definite even after the one-shot jitter.
struct DegenerateCovariance : NumericalError {
  using NumericalError::NumericalError;
};

//! Tallies of Gaussian-CDF invocations keyed by the dimension of each call.
//! One counter instance belongs to one evaluation context; never shared
//! across threads.
class CallCounter {
 public:
  void record(int dim) { ++counts_[dim]; }
  long long count(int dim) const {
    auto it = counts_.find(dim);
    return it == counts_.end() ? 0 : it->second;
  }
  long long total() const {
    long long t = 0;
    for (const auto& [d, c] : counts_) t += c;
    return t;
  }
  void reset() { counts_.clear(); }
  const std::map<int, long long>& by_dimension() const { return counts_; }

 private:
  std::map<int, long long> counts_;
};

//! Symmetric positive definite matrix with a cached Cholesky factor.
//! Construction symmetrizes the input (required symmetric to 1e-12 relative),
//! then factorizes; if the factorization fails, 1e-10 * mean(diag) is added to
//! the diagonal once before failing with DegenerateCovariance.
class SpdMatrix {
 public:
  explicit SpdMatrix(Matrix m);

  int dim() const { return static_cast<int>(mat_.rows()); }
  const Matrix& mat() const { return mat_; }
  //! Lower-triangular factor L with L L^T = mat() (after any jitter).
  const Matrix& chol() const { return chol_; }
  double jitter() const { return jitter_; }

  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;
  double log_det() const;

 private:
  Matrix mat_;
  Matrix chol_;
  double jitter_ = 0.0;
};

//! Mean vector plus SPD covariance of a Gaussian vector.
struct GaussianView {
  Vector mean;
  SpdMatrix cov;

  GaussianView(Vector m, SpdMatrix c) : mean(std::move(m)), cov(std::move(c)) {
    if (mean.size() != cov.dim())
      throw ContractError("GaussianView: mean/cov dimension mismatch");
  }
  int dim() const { return static_cast<int>(mean.size()); }
};

//! Shared knobs for every CDF evaluation: requested absolute accuracy, the
//! randomization seed (results are bit-identical for a fixed seed), and an
//! optional per-dimension call tally.
struct CdfContext {
  double abs_tol = 1e-7;
  std::uint64_t seed = 0;
  CallCounter* counter = nullptr;
};

//! Canonical shortest-round-trip double formatting used by all writers so
//! that serialized artifacts are byte-stable across runs.
std::string format_double(double v);

}  // namespace qeikit

#endif  // QEIKIT_CORE_HPP
