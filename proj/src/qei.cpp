/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#include "qeikit/qei.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "qeikit/mvn.hpp"
#include "qeikit/normal.hpp"

namespace qeikit::qei {

namespace {

constexpr double kDedupTol = 1e-8;
constexpr int kNoisyLatentCap = 24;  // noisy closed form: nq moments at n+q-1

bool model_has_noise(const gp::GpModel& model) {
  return model.design.noise_vars.size() > 0 &&
         model.design.noise_vars.maxCoeff() > 0.0;
}

struct ReducedBatch {
  Matrix points;
  std::vector<int> map;  // original row -> reduced row
};

//! Collapse batch rows closer than kDedupTol (relative to coordinate size);
//! the first row of each group is kept.
ReducedBatch dedup_rows(const Matrix& batch) {
  const int q = static_cast<int>(batch.rows());
  ReducedBatch out;
  out.map.assign(q, -1);
  std::vector<int> reps;
  for (int i = 0; i < q; ++i) {
    for (std::size_t r = 0; r < reps.size(); ++r) {
      double scale = 1.0 + std::max(batch.row(i).cwiseAbs().maxCoeff(),
                                    batch.row(reps[r]).cwiseAbs().maxCoeff());
      double gap = (batch.row(i) - batch.row(reps[r])).cwiseAbs().maxCoeff();
      if (gap <= kDedupTol * scale) {
        out.map[i] = static_cast<int>(r);
        break;
      }
    }
    if (out.map[i] < 0) {
      out.map[i] = static_cast<int>(reps.size());
      reps.push_back(i);
    }
  }
  out.points.resize(static_cast<int>(reps.size()), batch.cols());
  for (std::size_t r = 0; r < reps.size(); ++r)
    out.points.row(static_cast<int>(r)) = batch.row(reps[r]);
  return out;
}

//! Conditional CDF data of one system pinned at coordinate i, in that
//! system's reduced coordinate order (coordinate i removed, others kept
//! ascending). cgrad/chess stay empty unless requested or when dim is 1.
struct Pinned {
  double cval = 0.0;
  Vector cgrad;
  Matrix chess;
};

Pinned pin_conditional(const GaussianView& g, int i, bool with_grad,
                       bool with_hess, const CdfContext& ctx) {
  const int p = g.dim();
  Vector x = -g.mean;
  mvn::ConditionalSlice slice = mvn::condition_out(g.cov, {i});
  Vector arg(p - 1);
  for (int a = 0; a < p - 1; ++a) {
    int r = a < i ? a : a + 1;
    arg[a] = x[r] - slice.weights(a, 0) * x[i];
  }
  Pinned out;
  out.cval = mvn::mvn_cdf(arg, slice.reduced, ctx).value;
  if (p == 1) return out;
  if (with_grad) out.cgrad = mvn::mvn_cdf_grad(arg, slice.reduced, ctx);
  if (with_hess)
    out.chess = mvn::mvn_cdf_hessian(arg, slice.reduced, out.cgrad, ctx);
  return out;
}

inline int reduced_pos(int u, int pin) { return u < pin ? u : u - 1; }

//! The conditional problem of system a pinned at b coincides with system b
//! pinned at a: on the pinned slice the two difference vectors agree up to a
//! coordinate relabel (a's threshold row maps to b's) and a constant shift
//! that moves variables and limits together. Values are equal and
//! derivatives permute.
Pinned relabel(const Pinned& in, int a, int b, int q) {
  Pinned out;
  out.cval = in.cval;
  if (in.cgrad.size() > 0) {
    out.cgrad.resize(q - 1);
    for (int u = 0; u < q; ++u) {
      if (u == a) continue;
      int su = (u == b) ? a : u;
      out.cgrad[reduced_pos(u, a)] = in.cgrad[reduced_pos(su, b)];
    }
  }
  if (in.chess.size() > 0) {
    out.chess.resize(q - 1, q - 1);
    for (int u = 0; u < q; ++u) {
      if (u == a) continue;
      int su = (u == b) ? a : u;
      for (int v = 0; v < q; ++v) {
        if (v == a) continue;
        int sv = (v == b) ? a : v;
        out.chess(reduced_pos(u, a), reduced_pos(v, a)) =
            in.chess(reduced_pos(su, b), reduced_pos(sv, b));
      }
    }
  }
  return out;
}

//! CDF Hessian at x = -mean assembled from the pinned conditionals at no
//! extra CDF cost: off-diagonal (i,j) is the marginal density at coordinate i
//! times component j of the conditional gradient (averaged with the (j,i)
//! estimate), diagonals follow from the same identity mvn_cdf_hessian uses.
Matrix free_hessian(const GaussianView& g, const Vector& grad,
                    const std::vector<Pinned>& pins) {
  const int p = g.dim();
  const Matrix& s = g.cov.mat();
  Vector x = -g.mean;
  Matrix h = Matrix::Zero(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      double dij = norm_pdf_var(x[i], s(i, i)) * pins[i].cgrad[reduced_pos(j, i)];
      double dji = norm_pdf_var(x[j], s(j, j)) * pins[j].cgrad[reduced_pos(i, j)];
      h(i, j) = h(j, i) = 0.5 * (dij + dji);
    }
  }
  for (int i = 0; i < p; ++i) {
    double acc = x[i] * grad[i];
    for (int j = 0; j < p; ++j)
      if (j != i) acc += s(i, j) * h(i, j);
    h(i, i) = -acc / s(i, i);
  }
  return h;
}

//! d moment1 / d covariance with the CDF pieces supplied by the caller;
//! the algebra matches moments::moment1_grad_cov term by term.
Matrix adjoint_cov(const GaussianView& g, int t, const Vector& grad,
                   const Matrix& hess, const std::vector<Pinned>& pins) {
  const int p = g.dim();
  const Matrix& s = g.cov.mat();
  Vector x = -g.mean;
  Matrix kk = 0.5 * g.mean[t] * hess;
  kk.col(t) -= grad;
  for (int i = 0; i < p; ++i) {
    double gamma = -s(i, t);
    double sii = s(i, i);
    double mi = g.mean[i];
    double dens = norm_pdf_var(x[i], sii);
    kk(i, i) +=
        gamma * dens * (mi * mi - sii) / (2.0 * sii * sii) * pins[i].cval;
    if (p == 1) continue;
    mvn::ConditionalSlice slice = mvn::condition_out(g.cov, {i});
    Vector w = slice.weights.col(0);
    const Vector& cgrad = pins[i].cgrad;
    const Matrix& chess = pins[i].chess;
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

//! Second moment of the tilted surrogate: central second difference of the
//! restricted moment generating function, three CDF calls, O(eps^2) bias.
double moment2_tangent(int t, const GaussianView& g, double eps,
                       const CdfContext& ctx) {
  Vector tv = Vector::Zero(g.dim());
  tv[t] = eps;
  double mid = mvn::mvn_cdf(-g.mean, g.cov, ctx).value;
  double up = moments::mgf(tv, g, ctx);
  double dn = moments::mgf(-tv, g, ctx);
  return (up - 2.0 * mid + dn) / (eps * eps);
}

struct NoiselessSetup {
  gp::PosteriorBatch post;
  std::vector<ZSystem> systems;
};

NoiselessSetup noiseless_setup(const gp::GpModel& model, const Matrix& batch) {
  NoiselessSetup su{gp::posterior(model, batch), {}};
  BestObserved best = best_observed(model.design);
  const int q = static_cast<int>(batch.rows());
  su.systems.reserve(q);
  for (int k = 0; k < q; ++k)
    su.systems.push_back(build_z_noiseless(su.post, best, k));
  return su;
}

//! Sum of target moments over the noiseless systems with every pinned
//! conditional computed once per unordered system pair.
double noiseless_moment_sum(const std::vector<ZSystem>& sys, int alpha,
                            const CdfContext& ctx) {
  const int q = static_cast<int>(sys.size());
  std::vector<double> phi(q);
  for (int k = 0; k < q; ++k)
    phi[k] = mvn::mvn_cdf(-sys[k].view.mean, sys[k].view.cov, ctx).value;
  std::vector<std::vector<Pinned>> cache(q, std::vector<Pinned>(q));
  for (int a = 0; a < q; ++a)
    for (int b = a; b < q; ++b)
      cache[a][b] = pin_conditional(sys[a].view, b, alpha == 2, false, ctx);
  double acc = 0.0;
  for (int k = 0; k < q; ++k) {
    const GaussianView& g = sys[k].view;
    const Matrix& s = g.cov.mat();
    const int t = sys[k].target;
    Vector x = -g.mean;
    std::vector<Pinned> pins(q);
    for (int i = 0; i < q; ++i)
      pins[i] = (k <= i) ? cache[k][i] : relabel(cache[i][k], i, k, q);
    Vector grad(q);
    for (int i = 0; i < q; ++i)
      grad[i] = norm_pdf_var(x[i], s(i, i)) * pins[i].cval;
    double m1 = g.mean[t] * phi[k] - s.col(t).dot(grad);
    if (alpha == 1) {
      acc += m1;
      continue;
    }
    Matrix h = free_hessian(g, grad, pins);
    acc += (s(t, t) - g.mean[t] * g.mean[t]) * phi[k] + 2.0 * g.mean[t] * m1 +
           s.col(t).dot(h * s.col(t));
  }
  return acc;
}

//! Chain rule from per-system moment derivatives to batch coordinates. S and
//! W accumulate the mean and covariance adjoints pulled back through each
//! system's difference map; the posterior jacobians carry first-slot
//! derivatives, the factor 2 covering both symmetric appearances.
Matrix chain_to_batch(const gp::PosteriorBatch& post, const Vector& s_mean,
                      const Matrix& w_cov) {
  const int q = static_cast<int>(post.mean.size());
  const int d = static_cast<int>(post.batch_points.cols());
  Matrix out(q, d);
  for (int i = 0; i < q; ++i)
    out.row(i) = -(s_mean[i] * post.mean_jac[i].transpose() +
                   2.0 * (w_cov.row(i) * post.cov_jac[i]));
  return out;
}

Matrix grad_analytic(const NoiselessSetup& su, const CdfContext& ctx) {
  const int q = static_cast<int>(su.systems.size());
  std::vector<double> phi(q);
  std::vector<Vector> gfresh(q);
  for (int k = 0; k < q; ++k) {
    const GaussianView& g = su.systems[k].view;
    phi[k] = mvn::mvn_cdf(-g.mean, g.cov, ctx).value;
    gfresh[k] = mvn::mvn_cdf_grad(-g.mean, g.cov, ctx);
  }
  std::vector<std::vector<Pinned>> cache(q, std::vector<Pinned>(q));
  for (int a = 0; a < q; ++a)
    for (int b = a; b < q; ++b)
      cache[a][b] = pin_conditional(su.systems[a].view, b, true, true, ctx);
  Vector s_mean = Vector::Zero(q);
  Matrix w_cov = Matrix::Zero(q, q);
  for (int k = 0; k < q; ++k) {
    const GaussianView& g = su.systems[k].view;
    const int t = su.systems[k].target;
    std::vector<Pinned> pins(q);
    for (int i = 0; i < q; ++i)
      pins[i] = (k <= i) ? cache[k][i] : relabel(cache[i][k], i, k, q);
    Matrix h = free_hessian(g, gfresh[k], pins);
    Vector dm = -g.mean[t] * gfresh[k] + h * g.cov.mat().col(t);
    dm[t] += phi[k];
    Matrix dc = adjoint_cov(g, t, gfresh[k], h, pins);
    const Matrix& a = su.systems[k].transform;
    s_mean += a.transpose() * dm;
    w_cov += a.transpose() * dc * a;
  }
  return chain_to_batch(su.post, s_mean, w_cov);
}

Matrix grad_tangent(const NoiselessSetup& su, double eps,
                    const CdfContext& ctx) {
  const int q = static_cast<int>(su.systems.size());
  Vector s_mean = Vector::Zero(q);
  Matrix w_cov = Matrix::Zero(q, q);
  for (int k = 0; k < q; ++k) {
    moments::TangentGradient tg = moments::moment1_tangent_grad(
        su.systems[k].target, su.systems[k].view, eps, ctx);
    const Matrix& a = su.systems[k].transform;
    s_mean += a.transpose() * tg.d_mean;
    w_cov += a.transpose() * tg.d_cov * a;
  }
  return chain_to_batch(su.post, s_mean, w_cov);
}

//! Tilted forward difference of E[Y(x_j) 1{improvement event}] with the
//! event frozen: the unshifted CDF is shared across the d coordinates of
//! each point, giving d+1 full-dimension calls per point.
Matrix grad_proxy(const NoiselessSetup& su, double eps, const CdfContext& ctx) {
  const int q = static_cast<int>(su.systems.size());
  const int d = static_cast<int>(su.post.batch_points.cols());
  Matrix out(q, d);
  for (int j = 0; j < q; ++j) {
    const GaussianView& g = su.systems[j].view;
    Vector x = -g.mean;
    double shared = mvn::mvn_cdf(x, g.cov, ctx).value;
    for (int l = 0; l < d; ++l) {
      Vector c = su.systems[j].transform * su.post.cov_jac[j].col(l);
      double shifted = mvn::mvn_cdf(x - eps * c, g.cov, ctx).value;
      out(j, l) =
          -(std::exp(eps * su.post.mean_jac[j][l]) * shifted - shared) / eps;
    }
  }
  return out;
}

}  // namespace

BestObserved best_observed(const gp::Design& design) {
  if (design.values.size() < 1)
    throw ContractError("best_observed: empty design");
  BestObserved best{design.values[0], 0};
  for (int i = 1; i < design.values.size(); ++i) {
    if (design.values[i] < best.value) {
      best.value = design.values[i];
      best.index = i;
    }
  }
  return best;
}

ZSystem build_z_noiseless(const gp::PosteriorBatch& post,
                          const BestObserved& best, int k) {
  const int q = static_cast<int>(post.mean.size());
  if (k < 0 || k >= q)
    throw ContractError("build_z_noiseless: batch index out of range");
  Matrix a = -Matrix::Identity(q, q);
  a.col(k) = Vector::Ones(q);
  Vector m = a * post.mean;
  m[k] -= best.value;
  Matrix s = a * post.cov.mat() * a.transpose();
  return ZSystem{a, GaussianView(m, SpdMatrix(s)), k};
}

ZSystem build_z_noisy(const GaussianView& joint, int n_design, int ell,
                      int k) {
  const int p_all = joint.dim();
  const int q = p_all - n_design;
  if (n_design < 1 || q < 1)
    throw ContractError("build_z_noisy: need at least one design and one batch point");
  if (ell < 0 || ell >= n_design)
    throw ContractError("build_z_noisy: design index out of range");
  if (k < 0 || k >= q)
    throw ContractError("build_z_noisy: batch index out of range");
  const int m_dim = n_design + q - 1;
  Matrix a = Matrix::Zero(m_dim, p_all);
  for (int j = 0; j < m_dim; ++j) {
    int lhs, rhs;
    if (j < ell) {
      lhs = ell;
      rhs = j;
    } else if (j < n_design - 1) {
      lhs = ell;
      rhs = j + 1;
    } else if (j == n_design + k - 1) {
      lhs = n_design + k;
      rhs = ell;
    } else {
      lhs = n_design + k;
      rhs = j + 1;
    }
    a(j, lhs) += 1.0;
    a(j, rhs) -= 1.0;
  }
  Vector m = a * joint.mean;
  Matrix s = a * joint.cov.mat() * a.transpose();
  return ZSystem{a, GaussianView(m, SpdMatrix(s)), n_design + k - 1};
}

double qei(const gp::GpModel& model, const Matrix& batch, int alpha,
           QeiMode mode, const CdfContext& ctx, double tangent_eps) {
  if (alpha != 1 && alpha != 2)
    throw ContractError("qei: closed form requires alpha in {1,2}");
  if (batch.rows() < 1 || batch.cols() < 1)
    throw ContractError("qei: batch must be a nonempty q x d matrix");
  if (mode == QeiMode::tangent && !(tangent_eps > 0.0))
    throw ContractError("qei: tangent_eps must be > 0");
  ReducedBatch red = dedup_rows(batch);
  double acc = 0.0;
  if (model_has_noise(model)) {
    const int n = static_cast<int>(model.design.points.rows());
    const int q = static_cast<int>(red.points.rows());
    if (n + q > kNoisyLatentCap)
      throw ContractError(
          "qei: noisy closed form needs n + q <= 24 (nq moments of dimension "
          "n+q-1)");
    GaussianView joint = gp::posterior_noisy_joint(model, red.points);
    for (int ell = 0; ell < n; ++ell) {
      for (int k = 0; k < q; ++k) {
        ZSystem sys = build_z_noisy(joint, n, ell, k);
        if (mode == QeiMode::analytic) {
          acc += (alpha == 1) ? moments::moment1(sys.target, sys.view, ctx)
                              : moments::moment2(sys.target, sys.view, ctx);
        } else {
          acc += (alpha == 1)
                     ? moments::moment1_tangent(sys.target, sys.view,
                                                tangent_eps, ctx)
                     : moment2_tangent(sys.target, sys.view, tangent_eps, ctx);
        }
      }
    }
  } else {
    NoiselessSetup su = noiseless_setup(model, red.points);
    if (mode == QeiMode::analytic) {
      acc = noiseless_moment_sum(su.systems, alpha, ctx);
    } else {
      for (const ZSystem& sys : su.systems) {
        acc += (alpha == 1)
                   ? moments::moment1_tangent(sys.target, sys.view,
                                              tangent_eps, ctx)
                   : moment2_tangent(sys.target, sys.view, tangent_eps, ctx);
      }
    }
  }
  double ei = (alpha % 2 == 1) ? -acc : acc;
  return std::max(0.0, ei);
}

Matrix qei_grad(const gp::GpModel& model, const Matrix& batch,
                const GradMode& mode, const CdfContext& ctx) {
  if (batch.rows() < 1 || batch.cols() < 1)
    throw ContractError("qei_grad: batch must be a nonempty q x d matrix");
  if (model_has_noise(model))
    throw ContractError("qei_grad: requires a noise-free model");
  if (mode.scheme != GradScheme::analytic && !(mode.epsilon > 0.0))
    throw ContractError("qei_grad: epsilon must be > 0");
  ReducedBatch red = dedup_rows(batch);
  NoiselessSetup su = noiseless_setup(model, red.points);
  Matrix reduced;
  switch (mode.scheme) {
    case GradScheme::analytic:
      reduced = grad_analytic(su, ctx);
      break;
    case GradScheme::tangent:
      reduced = grad_tangent(su, mode.epsilon, ctx);
      break;
    case GradScheme::proxy:
      reduced = grad_proxy(su, mode.epsilon, ctx);
      break;
  }
  Matrix out(batch.rows(), batch.cols());
  for (int i = 0; i < batch.rows(); ++i) out.row(i) = reduced.row(red.map[i]);
  return out;
}

moments::McEstimate qei_mc(const gp::GpModel& model, const Matrix& batch,
                           int alpha, long long n_sims, std::uint64_t seed) {
  if (alpha < 1) throw ContractError("qei_mc: alpha must be >= 1");
  if (n_sims < 1000) throw ContractError("qei_mc: need at least 1000 draws");
  if (batch.rows() < 1 || batch.cols() < 1)
    throw ContractError("qei_mc: batch must be a nonempty q x d matrix");
  double sum = 0.0, sum2 = 0.0;
  if (model_has_noise(model)) {
    GaussianView joint = gp::posterior_noisy_joint(model, batch);
    const int n = static_cast<int>(model.design.points.rows());
    const int p_all = joint.dim();
    Eigen::SelfAdjointEigenSolver<Matrix> es(joint.cov.mat());
    Matrix half = es.eigenvectors() *
                  es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector xi(p_all), z(p_all);
    for (long long t = 0; t < n_sims; ++t) {
      for (int i = 0; i < p_all; ++i) xi[i] = gauss(rng);
      z = joint.mean + half * xi;
      double imp = z.head(n).minCoeff() - z.tail(p_all - n).minCoeff();
      if (imp <= 0.0) continue;
      double v = 1.0;
      for (int a = 0; a < alpha; ++a) v *= imp;
      sum += v;
      sum2 += v * v;
    }
  } else {
    const double best = best_observed(model.design).value;
    const long long chunk_cap = 1 << 20;
    long long done = 0;
    int chunk_idx = 0;
    while (done < n_sims) {
      int chunk = static_cast<int>(std::min(chunk_cap, n_sims - done));
      std::uint64_t chunk_seed =
          seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(chunk_idx);
      Matrix draws = gp::sample_conditional(model, batch, chunk, chunk_seed);
      for (int r = 0; r < chunk; ++r) {
        double imp = best - draws.row(r).minCoeff();
        if (imp <= 0.0) continue;
        double v = 1.0;
        for (int a = 0; a < alpha; ++a) v *= imp;
        sum += v;
        sum2 += v * v;
      }
      done += chunk;
      ++chunk_idx;
    }
  }
  double mean = sum / static_cast<double>(n_sims);
  double var = (sum2 / static_cast<double>(n_sims) - mean * mean) /
               static_cast<double>(n_sims - 1);
  return {mean, std::sqrt(std::max(0.0, var))};
}

std::string counter_report(const CallCounter& counter) {
  std::string out = "{\"calls\":{";
  bool first = true;
  for (const auto& [dim, n] : counter.by_dimension()) {
    if (!first) out += ",";
    first = false;
    out += "\"" + std::to_string(dim) + "\":" + std::to_string(n);
  }
  out += "},\"total\":" + std::to_string(counter.total()) + "}";
  return out;
}

}  // namespace qeikit::qei
