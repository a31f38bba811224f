/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#include "qeikit/gp.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "qeikit/bfgs.hpp"

namespace qeikit::gp {
namespace {

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kGramJitterRel = 1e-8;   // times the kernel variance
constexpr double kCoincidenceTol = 1e-9;  // design/batch overlap threshold
constexpr double kLogTwoPi = 1.8378770664093453;

void validate_kernel(const Kernel& k, int d) {
  if (!(k.variance > 0.0)) throw ContractError("gp: kernel variance must be positive");
  if (k.lengthscales.size() != d)
    throw ContractError("gp: lengthscale count does not match the dimension");
  for (int j = 0; j < d; ++j)
    if (!(k.lengthscales[j] > 0.0))
      throw ContractError("gp: lengthscales must be positive");
}

void validate_batch(const Matrix& batch, int d, const char* what) {
  if (batch.rows() < 1 || batch.cols() != d)
    throw ContractError(std::string(what) + ": point matrix must be non-empty with d columns");
  for (int i = 0; i < batch.rows(); ++i)
    for (int j = 0; j < d; ++j)
      if (!(batch(i, j) >= -1e-12 && batch(i, j) <= 1.0 + 1e-12))
        throw ContractError(std::string(what) + ": points must lie in the unit cube");
}

//! Gram matrix of the design points plus observation noise and jitter.
Matrix gram(const Kernel& k, const Matrix& x, const Vector& noise) {
  const int n = static_cast<int>(x.rows());
  Matrix g(n, n);
  for (int u = 0; u < n; ++u) {
    g(u, u) = k.variance + noise[u] + kGramJitterRel * k.variance;
    for (int v = u + 1; v < n; ++v) {
      const double kuv = kernel_value(k, x.row(u), x.row(v));
      g(u, v) = kuv;
      g(v, u) = kuv;
    }
  }
  return g;
}

struct Factorized {
  Matrix chol;   // lower factor of the jittered Gram matrix
  double trend;  // generalized least squares estimate of the constant mean
  Vector alpha;
  double nll;  // negative profiled log marginal likelihood
};

bool factorize(const Design& design, const Kernel& kernel, Factorized* out) {
  const int n = static_cast<int>(design.points.rows());
  Matrix g = gram(kernel, design.points, design.noise_vars);
  Eigen::LLT<Matrix> llt(g);
  if (llt.info() != Eigen::Success) return false;
  out->chol = llt.matrixL();

  const Vector ones = Vector::Ones(n);
  const Vector g_inv_y = llt.solve(design.values);
  const Vector g_inv_1 = llt.solve(ones);
  const double denom = ones.dot(g_inv_1);
  if (!(denom > 0.0)) return false;
  out->trend = ones.dot(g_inv_y) / denom;
  const Vector resid = design.values - out->trend * ones;
  out->alpha = g_inv_y - out->trend * g_inv_1;

  double log_det = 0.0;
  for (int i = 0; i < n; ++i) log_det += 2.0 * std::log(out->chol(i, i));
  out->nll = 0.5 * (log_det + resid.dot(out->alpha) + n * kLogTwoPi);
  return std::isfinite(out->nll);
}

//! Kriging weights G^{-1} c for a matrix of right-hand sides.
Matrix gram_solve(const GpModel& model, Matrix rhs) {
  model.chol.triangularView<Eigen::Lower>().solveInPlace(rhs);
  model.chol.transpose().triangularView<Eigen::Upper>().solveInPlace(rhs);
  return rhs;
}

//! Cross-covariance between one point and a set of rows.
Vector cross_cov(const Kernel& k, const Eigen::Ref<const Vector>& z, const Matrix& rows) {
  Vector c(rows.rows());
  for (int u = 0; u < rows.rows(); ++u) c[u] = kernel_value(k, z, rows.row(u));
  return c;
}

//! Row u, column j: derivative of k(z, rows_u) in z_j.
Matrix cross_cov_diff1(const Kernel& k, const Eigen::Ref<const Vector>& z, const Matrix& rows) {
  Matrix dc(rows.rows(), z.size());
  for (int u = 0; u < rows.rows(); ++u)
    for (int j = 0; j < z.size(); ++j) dc(u, j) = kernel_diff1(k, z, rows.row(u), j);
  return dc;
}

}  // namespace

void validate_design(const Design& design) {
  const int n = static_cast<int>(design.points.rows());
  const int d = static_cast<int>(design.points.cols());
  if (n < 1 || d < 1) throw ContractError("gp: design needs at least one point and one dimension");
  if (design.values.size() != n || design.noise_vars.size() != n)
    throw ContractError("gp: design values/noise_vars length must equal the point count");
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j)
      if (!(design.points(i, j) >= 0.0 && design.points(i, j) <= 1.0))
        throw ContractError("gp: design points must lie in the unit cube");
    if (!(design.noise_vars[i] >= 0.0))
      throw ContractError("gp: noise variances must be nonnegative");
    if (!std::isfinite(design.values[i]))
      throw ContractError("gp: design values must be finite");
  }
}

double kernel_value(const Kernel& k, const Eigen::Ref<const Vector>& a,
                    const Eigen::Ref<const Vector>& b) {
  double prod = k.variance;
  for (int j = 0; j < a.size(); ++j) {
    const double u = kSqrt3 * std::abs(a[j] - b[j]) / k.lengthscales[j];
    prod *= (1.0 + u) * std::exp(-u);
  }
  return prod;
}

double kernel_diff1(const Kernel& k, const Eigen::Ref<const Vector>& a,
                    const Eigen::Ref<const Vector>& b, int j) {
  // d/dh (1+u)exp(-u) with u = sqrt(3)|h|/l collapses to -(3h/l^2) exp(-u).
  double prod = k.variance;
  for (int l = 0; l < a.size(); ++l) {
    const double u = kSqrt3 * std::abs(a[l] - b[l]) / k.lengthscales[l];
    if (l == j) {
      const double lj = k.lengthscales[j];
      prod *= -(3.0 * (a[j] - b[j]) / (lj * lj)) * std::exp(-u);
    } else {
      prod *= (1.0 + u) * std::exp(-u);
    }
  }
  return prod;
}

GpModel make_model(const Design& design, const Kernel& kernel) {
  validate_design(design);
  validate_kernel(kernel, static_cast<int>(design.points.cols()));
  Factorized fac;
  if (!factorize(design, kernel, &fac))
    throw NumericalError(
        "gp: Gram matrix is not positive definite after jitter (n=" +
        std::to_string(design.points.rows()) +
        ", variance=" + format_double(kernel.variance) + ")");
  GpModel model;
  model.design = design;
  model.kernel = kernel;
  model.trend = fac.trend;
  model.chol = std::move(fac.chol);
  model.alpha = std::move(fac.alpha);
  return model;
}

GpModel fit(const Design& design, int n_restarts, std::uint64_t seed) {
  validate_design(design);
  if (n_restarts < 1) throw ContractError("gp: fit needs at least one restart");
  const int n = static_cast<int>(design.points.rows());
  const int d = static_cast<int>(design.points.cols());

  // Coordinatewise absolute distances are fixed across the search.
  std::vector<Matrix> absdiff(d, Matrix(n, n));
  for (int j = 0; j < d; ++j)
    for (int u = 0; u < n; ++u)
      for (int v = 0; v < n; ++v)
        absdiff[j](u, v) = std::abs(design.points(u, j) - design.points(v, j));

  const double y_mean = design.values.mean();
  double y_var = 0.0;
  for (int i = 0; i < n; ++i) y_var += (design.values[i] - y_mean) * (design.values[i] - y_mean);
  y_var = std::max(y_var / std::max(n - 1, 1), 1e-12);

  // Log-parameterized (lengthscales..., variance); unit-cube coordinate
  // ranges make the lengthscale bounds absolute.
  Vector lo(d + 1), hi(d + 1);
  for (int j = 0; j < d; ++j) {
    lo[j] = std::log(1e-3);
    hi[j] = std::log(1e3);
  }
  lo[d] = std::log(1e-3 * y_var);
  hi[d] = std::log(1e3 * y_var);

  auto kernel_at = [&](const Vector& theta) {
    Kernel k;
    k.lengthscales = theta.head(d).array().exp().matrix();
    k.variance = std::exp(theta[d]);
    return k;
  };

  const double inf = std::numeric_limits<double>::infinity();
  auto nll_grad = [&](const Vector& theta, Vector& grad) -> double {
    const Kernel k = kernel_at(theta);
    Matrix corr = Matrix::Ones(n, n);  // unit-variance kernel part
    for (int j = 0; j < d; ++j) {
      const double a = kSqrt3 / k.lengthscales[j];
      corr.array() *= (1.0 + a * absdiff[j].array()) * (-a * absdiff[j].array()).exp();
    }
    Matrix kmat = k.variance * corr;
    Matrix g = kmat;
    g.diagonal() += design.noise_vars;
    g.diagonal().array() += kGramJitterRel * k.variance;
    Eigen::LLT<Matrix> llt(g);
    if (llt.info() != Eigen::Success) return inf;

    const Vector ones = Vector::Ones(n);
    const Vector g_inv_y = llt.solve(design.values);
    const Vector g_inv_1 = llt.solve(ones);
    const double denom = ones.dot(g_inv_1);
    if (!(denom > 0.0)) return inf;
    const double mu = ones.dot(g_inv_y) / denom;
    const Vector alpha = g_inv_y - mu * g_inv_1;
    const Vector resid = design.values - mu * ones;

    double log_det = 0.0;
    const Matrix l_fac = llt.matrixL();
    for (int i = 0; i < n; ++i) log_det += 2.0 * std::log(l_fac(i, i));
    const double nll = 0.5 * (log_det + resid.dot(alpha) + n * kLogTwoPi);
    if (!std::isfinite(nll)) return inf;

    // Profiled-trend gradient: the derivative through mu vanishes at the
    // generalized least squares optimum, so only dG/dtheta terms remain.
    const Matrix g_inv = llt.solve(Matrix::Identity(n, n));
    for (int j = 0; j < d; ++j) {
      const double a = kSqrt3 / k.lengthscales[j];
      // dK/dlog l_j = K .* u^2/(1+u), elementwise in u = a|h_j|.
      const Matrix dg =
          (kmat.array() * (a * absdiff[j].array()).square() /
           (1.0 + a * absdiff[j].array()))
              .matrix();
      grad[j] = 0.5 * ((g_inv.array() * dg.array()).sum() - alpha.dot(dg * alpha));
    }
    Matrix dg_var = kmat;
    dg_var.diagonal().array() += kGramJitterRel * k.variance;
    grad[d] = 0.5 * ((g_inv.array() * dg_var.array()).sum() - alpha.dot(dg_var * alpha));
    return nll;
  };

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vector> starts;
  Vector center(d + 1);
  for (int j = 0; j < d; ++j) center[j] = std::log(0.5);
  center[d] = std::log(y_var);
  starts.push_back(center);
  for (int r = 1; r < n_restarts; ++r) {
    Vector s(d + 1);
    // Middle half of the log box keeps the random starts away from the
    // degenerate corners.
    for (int j = 0; j <= d; ++j)
      s[j] = lo[j] + (0.25 + 0.5 * unit(rng)) * (hi[j] - lo[j]);
    starts.push_back(s);
  }

  double best = inf;
  Vector best_theta;
  for (const Vector& s : starts) {
    BoxBfgsResult r = minimize_box(nll_grad, s, lo, hi);
    if (r.value < best) {
      best = r.value;
      best_theta = r.x;
    }
  }
  if (!std::isfinite(best))
    throw NumericalError("gp: likelihood evaluation failed at every start");
  return make_model(design, kernel_at(best_theta));
}

PosteriorBatch posterior(const GpModel& model, const Matrix& batch) {
  const int d = static_cast<int>(model.design.points.cols());
  validate_batch(batch, d, "gp posterior");
  const int n = static_cast<int>(model.design.points.rows());
  const int q = static_cast<int>(batch.rows());

  Matrix cross(n, q);  // k(x_u, b_i)
  for (int i = 0; i < q; ++i)
    cross.col(i) = cross_cov(model.kernel, batch.row(i), model.design.points);
  const Matrix weights = gram_solve(model, cross);  // G^{-1} c, n x q

  Vector mean = Vector::Constant(q, model.trend);
  mean.noalias() += cross.transpose() * model.alpha;

  Matrix prior(q, q);
  for (int i = 0; i < q; ++i) {
    prior(i, i) = model.kernel.variance;
    for (int u = i + 1; u < q; ++u) {
      const double kiu = kernel_value(model.kernel, batch.row(i), batch.row(u));
      prior(i, u) = kiu;
      prior(u, i) = kiu;
    }
  }
  Matrix cov_mat = prior - cross.transpose() * weights;
  cov_mat = 0.5 * (cov_mat + cov_mat.transpose()).eval();

  PosteriorBatch out{batch, std::move(mean), SpdMatrix(std::move(cov_mat)), {}, {}};
  out.mean_jac.reserve(q);
  out.cov_jac.reserve(q);
  for (int i = 0; i < q; ++i) {
    // Differentiation happens a nudge away from any coincident design point,
    // where the posterior standard deviation has a kink.
    Vector z = batch.row(i).transpose();
    for (int u = 0; u < n; ++u) {
      if ((z - model.design.points.row(u).transpose()).lpNorm<Eigen::Infinity>() <
          kCoincidenceTol) {
        for (int j = 0; j < d; ++j)
          z[j] += (z[j] + kCoincidenceTol <= 1.0) ? kCoincidenceTol : -kCoincidenceTol;
        break;
      }
    }
    const Matrix dc = cross_cov_diff1(model.kernel, z, model.design.points);  // n x d
    out.mean_jac.push_back(dc.transpose() * model.alpha);
    Matrix dkb = cross_cov_diff1(model.kernel, z, batch);  // q x d
    dkb.noalias() -= weights.transpose() * dc;
    out.cov_jac.push_back(std::move(dkb));
  }
  return out;
}

GaussianView posterior_noisy_joint(const GpModel& model, const Matrix& batch) {
  const int d = static_cast<int>(model.design.points.cols());
  validate_batch(batch, d, "gp noisy joint");
  const int n = static_cast<int>(model.design.points.rows());
  const int q = static_cast<int>(batch.rows());
  const int m = n + q;

  Matrix all(m, d);
  all.topRows(n) = model.design.points;
  all.bottomRows(q) = batch;

  Matrix prior(m, m);
  for (int u = 0; u < m; ++u) {
    prior(u, u) = model.kernel.variance;
    for (int v = u + 1; v < m; ++v) {
      const double kuv = kernel_value(model.kernel, all.row(u), all.row(v));
      prior(u, v) = kuv;
      prior(v, u) = kuv;
    }
  }

  // Covariance between latent values and the noisy observations equals the
  // latent-latent block, while the observation Gram adds the noise.
  const Matrix cross = prior.leftCols(n);  // m x n
  Vector mean = Vector::Constant(m, model.trend);
  mean.noalias() += cross * model.alpha;
  Matrix cov = prior - cross * gram_solve(model, cross.transpose());
  cov = 0.5 * (cov + cov.transpose()).eval();
  return GaussianView(std::move(mean), SpdMatrix(std::move(cov)));
}

GpModel update(const GpModel& model, const Matrix& new_points,
               const Vector& new_values, const Vector& new_noise) {
  const int d = static_cast<int>(model.design.points.cols());
  if (new_points.rows() == 0) return model;
  validate_batch(new_points, d, "gp update");
  if (new_values.size() != new_points.rows() || new_noise.size() != new_points.rows())
    throw ContractError("gp update: values/noise length must match the new points");

  Design ext = model.design;
  for (int i = 0; i < new_points.rows(); ++i) {
    const Vector p = new_points.row(i).transpose();
    bool skip = false;
    for (int u = 0; u < ext.points.rows(); ++u) {
      const bool same_site =
          (p - ext.points.row(u).transpose()).lpNorm<Eigen::Infinity>() < 1e-12;
      if (!same_site || ext.noise_vars[u] > 0.0 || new_noise[i] > 0.0) continue;
      if (std::abs(new_values[i] - ext.values[u]) >
          1e-8 * (1.0 + std::abs(ext.values[u])))
        throw ContractError("gp update: conflicting value at a duplicated noiseless point");
      skip = true;  // exact repeat carries no information
      break;
    }
    if (skip) continue;
    ext.points.conservativeResize(ext.points.rows() + 1, d);
    ext.points.row(ext.points.rows() - 1) = p.transpose();
    ext.values.conservativeResize(ext.values.size() + 1);
    ext.values[ext.values.size() - 1] = new_values[i];
    ext.noise_vars.conservativeResize(ext.noise_vars.size() + 1);
    ext.noise_vars[ext.noise_vars.size() - 1] = new_noise[i];
  }
  return make_model(ext, model.kernel);
}

Matrix sample_conditional(const GpModel& model, const Matrix& points,
                          int n_draws, std::uint64_t seed) {
  if (n_draws < 1) throw ContractError("gp: n_draws must be positive");
  const PosteriorBatch pb = posterior(model, points);
  const int q = static_cast<int>(points.rows());

  // Eigenvalue square root tolerates the exactly-interpolated directions
  // whose tiny eigenvalues round off to either sign.
  Eigen::SelfAdjointEigenSolver<Matrix> es(pb.cov.mat());
  if (es.info() != Eigen::Success)
    throw NumericalError("gp: covariance eigendecomposition failed in sampling");
  const Matrix half =
      es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix draws(n_draws, q);
  Vector noise(q);
  for (int r = 0; r < n_draws; ++r) {
    for (int i = 0; i < q; ++i) noise[i] = gauss(rng);
    draws.row(r) = (pb.mean + half * noise).transpose();
  }
  return draws;
}

}  // namespace qeikit::gp
