/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#include "qeikit/moments.hpp"

#include <cmath>
#include <random>

#include "qeikit/mvn.hpp"
#include "qeikit/normal.hpp"

namespace qeikit::moments {

namespace {

void check_coord(int k, const GaussianView& g, const char* who) {
  if (g.dim() < 1) throw ContractError(std::string(who) + ": empty vector");
  if (k < 0 || k >= g.dim())
    throw ContractError(std::string(who) + ": coordinate out of range");
}

}  // namespace

double mgf(const Vector& t, const GaussianView& g, const CdfContext& ctx) {
  if (t.size() != g.dim()) throw ContractError("mgf: dimension mismatch");
  const Matrix& s = g.cov.mat();
  double a = t.dot(g.mean) + 0.5 * t.dot(s * t);
  Vector arg = -g.mean - s * t;
  return std::exp(a) * mvn::mvn_cdf(arg, g.cov, ctx).value;
}

double moment1(int k, const GaussianView& g, const CdfContext& ctx) {
  check_coord(k, g, "moment1");
  Vector x = -g.mean;
  double v = mvn::mvn_cdf(x, g.cov, ctx).value;
  Vector grad = mvn::mvn_cdf_grad(x, g.cov, ctx);
  return g.mean[k] * v - g.cov.mat().col(k).dot(grad);
}

double moment2(int k, const GaussianView& g, const CdfContext& ctx) {
  check_coord(k, g, "moment2");
  const Matrix& s = g.cov.mat();
  Vector x = -g.mean;
  double v = mvn::mvn_cdf(x, g.cov, ctx).value;
  Vector grad = mvn::mvn_cdf_grad(x, g.cov, ctx);
  Matrix hess = mvn::mvn_cdf_hessian(x, g.cov, grad, ctx);
  double mk = g.mean[k];
  double m1 = mk * v - s.col(k).dot(grad);
  return (s(k, k) - mk * mk) * v + 2.0 * mk * m1 +
         s.col(k).dot(hess * s.col(k));
}

double moment1_tangent(int k, const GaussianView& g, double eps,
                       const CdfContext& ctx) {
  check_coord(k, g, "moment1_tangent");
  if (!(eps > 0.0)) throw ContractError("moment1_tangent: eps must be > 0");
  const Matrix& s = g.cov.mat();
  Vector xp = -g.mean - eps * s.col(k);
  Vector xm = -g.mean + eps * s.col(k);
  double wp = std::exp(eps * g.mean[k]);
  double wm = std::exp(-eps * g.mean[k]);
  double fp = mvn::mvn_cdf(xp, g.cov, ctx).value;
  double fm = mvn::mvn_cdf(xm, g.cov, ctx).value;
  return (wp * fp - wm * fm) / (2.0 * eps);
}

Vector moment1_grad_mean(int k, const GaussianView& g, const CdfContext& ctx) {
  check_coord(k, g, "moment1_grad_mean");
  Vector x = -g.mean;
  double v = mvn::mvn_cdf(x, g.cov, ctx).value;
  Vector grad = mvn::mvn_cdf_grad(x, g.cov, ctx);
  Matrix hess = mvn::mvn_cdf_hessian(x, g.cov, grad, ctx);
  Vector out = -g.mean[k] * grad + hess * g.cov.mat().col(k);
  out[k] += v;
  return out;
}

Matrix moment1_grad_cov(int k, const GaussianView& g, const CdfContext& ctx) {
  check_coord(k, g, "moment1_grad_cov");
  const int p = g.dim();
  const Matrix& s = g.cov.mat();
  Vector x = -g.mean;
  Vector grad = mvn::mvn_cdf_grad(x, g.cov, ctx);
  Matrix hess = mvn::mvn_cdf_hessian(x, g.cov, grad, ctx);

  // Assemble the unsymmetrized adjoint K; <sym(K), H> is the derivative
  // along the symmetric covariance perturbation H.
  Matrix kk = 0.5 * g.mean[k] * hess;
  kk.col(k) -= grad;

  // Variation of the CDF gradient factorization through each conditioned
  // coordinate i: marginal density factor, conditional argument shift, and
  // conditional covariance (Schur complement) movement.
  for (int i = 0; i < p; ++i) {
    double gamma = -s(i, k);
    double sii = s(i, i);
    double mi = g.mean[i];
    double dens = norm_pdf_var(x[i], sii);
    mvn::ConditionalSlice slice = mvn::condition_out(g.cov, {i});
    Vector arg(p - 1);
    for (int a = 0; a < p - 1; ++a) {
      int r = a < i ? a : a + 1;
      arg[a] = x[r] - slice.weights(a, 0) * x[i];
    }
    double cval = mvn::mvn_cdf(arg, slice.reduced, ctx).value;
    kk(i, i) += gamma * dens * (mi * mi - sii) / (2.0 * sii * sii) * cval;
    if (p == 1) continue;
    Vector cgrad = mvn::mvn_cdf_grad(arg, slice.reduced, ctx);
    Matrix chess = mvn::mvn_cdf_hessian(arg, slice.reduced, cgrad, ctx);
    Vector w = slice.weights.col(0);
    for (int a = 0; a < p - 1; ++a) {
      int r = a < i ? a : a + 1;
      kk(r, i) += gamma * dens * (mi / sii) * cgrad[a];
      kk(r, i) -= gamma * dens * (chess.row(a).dot(w));
      for (int bcol = 0; bcol < p - 1; ++bcol) {
        int ss = bcol < i ? bcol : bcol + 1;
        kk(r, ss) += 0.5 * gamma * dens * chess(a, bcol);
      }
    }
    Vector sig_col(p - 1);
    for (int a = 0; a < p - 1; ++a) {
      int r = a < i ? a : a + 1;
      sig_col[a] = s(r, i);
    }
    kk(i, i) -= gamma * dens * (mi / (sii * sii)) * cgrad.dot(sig_col);
    kk(i, i) += 0.5 * gamma * dens * w.dot(chess * w);
  }
  return 0.5 * (kk + kk.transpose());
}

TangentGradient moment1_tangent_grad(int k, const GaussianView& g, double eps,
                                     const CdfContext& ctx) {
  check_coord(k, g, "moment1_tangent_grad");
  if (!(eps > 0.0))
    throw ContractError("moment1_tangent_grad: eps must be > 0");
  const int p = g.dim();
  const Matrix& s = g.cov.mat();
  Vector xp = -g.mean - eps * s.col(k);
  Vector xm = -g.mean + eps * s.col(k);
  double wp = std::exp(eps * g.mean[k]);
  double wm = std::exp(-eps * g.mean[k]);

  double fp = mvn::mvn_cdf(xp, g.cov, ctx).value;
  double fm = mvn::mvn_cdf(xm, g.cov, ctx).value;
  Vector gp = mvn::mvn_cdf_grad(xp, g.cov, ctx);
  Vector gm = mvn::mvn_cdf_grad(xm, g.cov, ctx);
  Matrix hp = mvn::mvn_cdf_hessian(xp, g.cov, gp, ctx);
  Matrix hm = mvn::mvn_cdf_hessian(xm, g.cov, gm, ctx);

  TangentGradient out{0.0, Vector(p), Matrix(p, p)};
  out.value = (wp * fp - wm * fm) / (2.0 * eps);
  out.d_mean = -(wp * gp - wm * gm) / (2.0 * eps);
  out.d_mean[k] += 0.5 * (wp * fp + wm * fm);
  Vector gbar = 0.5 * (wp * gp + wm * gm);
  out.d_cov = (wp * hp - wm * hm) / (4.0 * eps);
  out.d_cov.col(k) -= 0.5 * gbar;
  out.d_cov.row(k) -= 0.5 * gbar.transpose();
  return out;
}

McEstimate moment_mc(int k, int alpha, const GaussianView& g,
                     long long n_draws, std::uint64_t seed) {
  check_coord(k, g, "moment_mc");
  if (alpha < 0) throw ContractError("moment_mc: alpha must be >= 0");
  if (n_draws < 2) throw ContractError("moment_mc: need at least two draws");
  const int p = g.dim();
  const Matrix& chol = g.cov.chol();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector xi(p), z(p);
  double sum = 0.0, sum2 = 0.0;
  for (long long t = 0; t < n_draws; ++t) {
    for (int i = 0; i < p; ++i) xi[i] = gauss(rng);
    z = g.mean + chol * xi;
    bool inside = (z.array() <= 0.0).all();
    if (!inside) continue;
    double v = 1.0;
    for (int a = 0; a < alpha; ++a) v *= z[k];
    sum += v;
    sum2 += v * v;
  }
  double mean = sum / static_cast<double>(n_draws);
  double var =
      (sum2 / static_cast<double>(n_draws) - mean * mean) /
      static_cast<double>(n_draws - 1);
  return {mean, std::sqrt(std::max(0.0, var))};
}

}  // namespace qeikit::moments
