/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "doctest.h"
#include "qeikit/mvn.hpp"
#include "qeikit/normal.hpp"
#include "qeikit/qei.hpp"
#include "support.hpp"

using namespace qeikit;


namespace {

gp::Kernel make_kernel(double variance, std::initializer_list<double> ls) {
  gp::Kernel k;
  k.variance = variance;
  k.lengthscales = Vector(static_cast<int>(ls.size()));
  int j = 0;
  for (double l : ls) k.lengthscales[j++] = l;
  return k;
}

gp::Kernel random_kernel(int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uv(0.6, 1.6), ul(0.25, 0.55);
  gp::Kernel k;
  k.variance = uv(rng);
  k.lengthscales = Vector(d);
  for (int j = 0; j < d; ++j) k.lengthscales[j] = ul(rng);
  return k;
}

//! Points with pairwise sup-distance >= gap, keeping the Gram factorization
//! comfortably away from the jitter floor.
Matrix sep_points(int n, int d, std::mt19937_64& rng, double gap = 0.1,
                  double lo = 0.08, double hi = 0.92) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix x(n, d);
  int have = 0;
  long tries = 0;
  while (have < n) {
    if (++tries % 200 == 0) gap *= 0.5;  // dense configs: relax instead of spin
    Vector cand(d);
    for (int j = 0; j < d; ++j) cand[j] = u(rng);
    bool ok = true;
    for (int i = 0; i < have && ok; ++i)
      ok = (x.row(i).transpose() - cand).cwiseAbs().maxCoeff() >= gap;
    if (ok) x.row(have++) = cand.transpose();
  }
  return x;
}

gp::GpModel random_model(int n, int d, std::mt19937_64& rng) {
  gp::Design dn;
  dn.points = sep_points(n, d, rng);
  dn.values = Vector(n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < n; ++i) dn.values[i] = gauss(rng);
  dn.noise_vars = Vector::Zero(n);
  return gp::make_model(dn, random_kernel(d, rng));
}

//! Batch rows scattered around the best design point, clipped to the cube
//! and pairwise separated; keeps the criterion away from the flat far-field.
Matrix batch_near_best(const gp::GpModel& model, int q, std::mt19937_64& rng,
                       double spread = 0.2) {
  const int d = static_cast<int>(model.design.points.cols());
  Vector center = model.design.points.row(qei::best_observed(model.design).index);
  std::uniform_real_distribution<double> u(-spread, spread);
  Matrix b(q, d);
  int have = 0;
  long tries = 0;
  double min_sep = 0.04;
  while (have < q) {
    if (++tries % 200 == 0) min_sep *= 0.5;
    Vector cand(d);
    for (int j = 0; j < d; ++j)
      cand[j] = std::min(0.95, std::max(0.05, center[j] + u(rng)));
    bool ok = true;
    for (int i = 0; i < have && ok; ++i)
      ok = (b.row(i).transpose() - cand).cwiseAbs().maxCoeff() >= min_sep;
    if (ok) b.row(have++) = cand.transpose();
  }
  return b;
}

//! Single-point expected improvement, alpha = 1: s (u Phi(u) + phi(u)).
double ei1(double threshold, double mean, double sd) {
  if (!(sd > 0.0)) return std::max(0.0, threshold - mean);
  double u = (threshold - mean) / sd;
  return sd * (u * norm_cdf(u) + norm_pdf(u));
}

//! Single-point expected improvement, alpha = 2:
//! s^2 ((1 + u^2) Phi(u) + u phi(u)).
double ei2(double threshold, double mean, double sd) {
  double u = (threshold - mean) / sd;
  return sd * sd * ((1.0 + u * u) * norm_cdf(u) + u * norm_pdf(u));
}

Matrix fd_batch_grad(const gp::GpModel& model, const Matrix& batch,
                     const CdfContext& ctx, double h) {
  Matrix out(batch.rows(), batch.cols());
  for (int i = 0; i < batch.rows(); ++i) {
    for (int j = 0; j < batch.cols(); ++j) {
      Matrix bp = batch, bm = batch;
      bp(i, j) += h;
      bm(i, j) -= h;
      out(i, j) = (qei::qei(model, bp, 1, qei::QeiMode::analytic, ctx) -
                   qei::qei(model, bm, 1, qei::QeiMode::analytic, ctx)) /
                  (2.0 * h);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("single point criterion and gradient match the univariate closed form") {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  CdfContext ctx;
  int grad_checked = 0;
  for (int it = 0; it < 100; ++it) {
    const int d = 1 + (it % 2);
    gp::GpModel model = random_model(5 + (it % 3), d, rng);
    Matrix x(1, d);
    for (int j = 0; j < d; ++j) x(0, j) = u(rng);
    gp::PosteriorBatch post = gp::posterior(model, x);
    double threshold = qei::best_observed(model.design).value;
    double sd = std::sqrt(post.cov.mat()(0, 0));
    double want1 = ei1(threshold, post.mean[0], sd);
    double got1 = qei::qei(model, x, 1, qei::QeiMode::analytic, ctx);
    CHECK(std::abs(got1 - want1) <= 1e-10 * (1.0 + std::abs(want1)));

    double want2 = ei2(threshold, post.mean[0], sd);
    double got2 = qei::qei(model, x, 2, qei::QeiMode::analytic, ctx);
    CHECK(std::abs(got2 - want2) <= 1e-10 * (1.0 + std::abs(want2)));

    double tan1 = qei::qei(model, x, 1, qei::QeiMode::tangent, ctx);
    CHECK(std::abs(tan1 - want1) <= 1e-6 * (1.0 + std::abs(want1)));
    double tan2 = qei::qei(model, x, 2, qei::QeiMode::tangent, ctx);
    CHECK(std::abs(tan2 - want2) <= 1e-6 * (1.0 + std::abs(want2)));

    if (grad_checked < 8 && want1 > 1e-6) {
      Matrix fd = fd_batch_grad(model, x, ctx, 1e-6);
      Matrix ga = qei::qei_grad(model, x, {qei::GradScheme::analytic, 0.0}, ctx);
      Matrix gt = qei::qei_grad(model, x, {qei::GradScheme::tangent, 1e-4}, ctx);
      double scale = 1.0 + fd.cwiseAbs().maxCoeff();
      CHECK((ga - fd).cwiseAbs().maxCoeff() <= 1e-6 * scale);
      CHECK((gt - fd).cwiseAbs().maxCoeff() <= 1e-6 * scale);
      ++grad_checked;
    }
  }
  CHECK(grad_checked >= 5);
}

TEST_CASE("batch criterion matches the Monte Carlo oracle") {
  std::mt19937_64 rng(202);
  CdfContext ctx;
  ctx.abs_tol = 1e-6;
  int compared = 0;
  for (int it = 0; it < 3; ++it) {
    const int d = 1 + (it % 2);
    gp::GpModel model = random_model(5, d, rng);
    for (int q : {2, 3}) {
      Matrix batch = batch_near_best(model, q, rng);
      for (int alpha : {1, 2}) {
        double v = qei::qei(model, batch, alpha, qei::QeiMode::analytic, ctx);
        moments::McEstimate mc = qei::qei_mc(model, batch, alpha, 200000, 77 + it);
        CHECK(std::abs(v - mc.value) <= 4.0 * mc.std_error + 1e-5);
        ++compared;
      }
      double va = qei::qei(model, batch, 1, qei::QeiMode::analytic, ctx);
      double vt = qei::qei(model, batch, 1, qei::QeiMode::tangent, ctx);
      CHECK(std::abs(va - vt) <= 1e-5 * (1.0 + std::abs(va)));
    }
  }
  CHECK(compared == 12);
}

TEST_CASE("improvement event probabilities match simulation") {
  std::mt19937_64 rng(303);
  CdfContext ctx;
  ctx.abs_tol = 1e-6;

  gp::GpModel model = random_model(6, 2, rng);
  Matrix batch = batch_near_best(model, 2, rng);
  gp::PosteriorBatch post = gp::posterior(model, batch);
  qei::BestObserved best = qei::best_observed(model.design);
  const int n_draws = 200000;
  Matrix draws = gp::sample_conditional(model, batch, n_draws, 9001);
  for (int k = 0; k < 2; ++k) {
    qei::ZSystem sys = qei::build_z_noiseless(post, best, k);
    double p = mvn::mvn_cdf(-sys.view.mean, sys.view.cov, ctx).value;
    long hits = 0;
    for (int r = 0; r < n_draws; ++r) {
      bool inside = draws(r, k) <= best.value;
      for (int j = 0; j < 2 && inside; ++j)
        if (j != k) inside = draws(r, k) <= draws(r, j);
      hits += inside ? 1 : 0;
    }
    double freq = static_cast<double>(hits) / n_draws;
    double se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / n_draws);
    CHECK(std::abs(p - freq) <= 4.0 * se + 1e-4);
  }

  // Noisy systems against draws of the joint latent vector.
  gp::Design noisy;
  noisy.points = sep_points(2, 1, rng, 0.3);
  noisy.values = Vector(2);
  noisy.values << 0.4, -0.3;
  noisy.noise_vars = Vector(2);
  noisy.noise_vars << 0.3, 0.2;
  gp::GpModel nmodel = gp::make_model(noisy, make_kernel(1.0, {0.4}));
  Matrix nbatch = sep_points(2, 1, rng, 0.2);
  GaussianView joint = gp::posterior_noisy_joint(nmodel, nbatch);
  Eigen::SelfAdjointEigenSolver<Matrix> es(joint.cov.mat());
  Matrix half = es.eigenvectors() *
                es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::mt19937_64 jrng(12345);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix jdraws(n_draws, 4);
  Vector xi(4);
  for (int r = 0; r < n_draws; ++r) {
    for (int i = 0; i < 4; ++i) xi[i] = gauss(jrng);
    jdraws.row(r) = (joint.mean + half * xi).transpose();
  }
  for (int ell = 0; ell < 2; ++ell) {
    for (int k = 0; k < 2; ++k) {
      qei::ZSystem sys = qei::build_z_noisy(joint, 2, ell, k);
      double p = mvn::mvn_cdf(-sys.view.mean, sys.view.cov, ctx).value;
      long hits = 0;
      for (int r = 0; r < n_draws; ++r) {
        double dmin = std::min(jdraws(r, 0), jdraws(r, 1));
        double bmin = std::min(jdraws(r, 2), jdraws(r, 3));
        bool inside = jdraws(r, ell) == dmin && jdraws(r, 2 + k) == bmin &&
                      bmin <= dmin;
        hits += inside ? 1 : 0;
      }
      double freq = static_cast<double>(hits) / n_draws;
      double se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / n_draws);
      CHECK(std::abs(p - freq) <= 4.0 * se + 1e-4);
    }
  }
}

TEST_CASE("noisy criterion at vanishing noise matches the noiseless one") {
  std::mt19937_64 rng(404);
  CdfContext ctx;
  ctx.abs_tol = 1e-8;
  for (int it = 0; it < 3; ++it) {
    gp::Design dn;
    dn.points = sep_points(4, 2, rng);
    dn.values = Vector(4);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 4; ++i) dn.values[i] = gauss(rng);
    gp::Kernel kern = random_kernel(2, rng);

    gp::Design quiet = dn;
    quiet.noise_vars = Vector::Zero(4);
    gp::Design tiny = dn;
    tiny.noise_vars = Vector::Constant(4, 1e-10);
    gp::GpModel exact = gp::make_model(quiet, kern);
    gp::GpModel fuzzed = gp::make_model(tiny, kern);

    Matrix batch = batch_near_best(exact, 2, rng);
    for (int alpha : {1, 2}) {
      double v0 = qei::qei(exact, batch, alpha, qei::QeiMode::analytic, ctx);
      double v1 = qei::qei(fuzzed, batch, alpha, qei::QeiMode::analytic, ctx);
      CHECK(std::abs(v0 - v1) <= 1e-6);
    }
    double t1 = qei::qei(fuzzed, batch, 1, qei::QeiMode::tangent, ctx);
    double a1 = qei::qei(fuzzed, batch, 1, qei::QeiMode::analytic, ctx);
    CHECK(std::abs(t1 - a1) <= 1e-5 * (1.0 + std::abs(a1)));
  }
}

TEST_CASE("batch permutation leaves criterion and gradient unchanged") {
  std::mt19937_64 rng(505);
  CdfContext ctx;
  ctx.abs_tol = 1e-6;
  for (int it = 0; it < 5; ++it) {
    gp::GpModel model = random_model(6, 2, rng);
    Matrix batch = batch_near_best(model, 3, rng);
    std::vector<int> perm{2, 0, 1};
    Matrix shuffled(3, 2);
    for (int i = 0; i < 3; ++i) shuffled.row(i) = batch.row(perm[i]);

    for (int alpha : {1, 2}) {
      double v = qei::qei(model, batch, alpha, qei::QeiMode::analytic, ctx);
      double vp = qei::qei(model, shuffled, alpha, qei::QeiMode::analytic, ctx);
      CHECK(std::abs(v - vp) <= 1e-9 * (1.0 + std::abs(v)));
    }
    Matrix g = qei::qei_grad(model, batch, {qei::GradScheme::analytic, 0.0}, ctx);
    Matrix gs = qei::qei_grad(model, shuffled, {qei::GradScheme::analytic, 0.0}, ctx);
    for (int i = 0; i < 3; ++i)
      CHECK((gs.row(i) - g.row(perm[i])).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("appending a batch point never decreases the criterion") {
  std::mt19937_64 rng(606);
  CdfContext exact_ctx;  // dimensions stay <= 2: closed forms throughout
  for (int it = 0; it < 10; ++it) {
    gp::GpModel model = random_model(6, 2, rng);
    Matrix b2 = batch_near_best(model, 2, rng);
    double v1 = qei::qei(model, b2.topRows(1), 1, qei::QeiMode::analytic, exact_ctx);
    double v2 = qei::qei(model, b2, 1, qei::QeiMode::analytic, exact_ctx);
    CHECK(v2 >= v1 - 1e-12);
  }
  CdfContext tight_ctx;
  tight_ctx.abs_tol = 1e-7;
  for (int it = 0; it < 3; ++it) {
    gp::GpModel model = random_model(6, 2, rng);
    Matrix b3 = batch_near_best(model, 3, rng);
    double v2 = qei::qei(model, b3.topRows(2), 1, qei::QeiMode::analytic, tight_ctx);
    double v3 = qei::qei(model, b3, 1, qei::QeiMode::analytic, tight_ctx);
    CHECK(v3 >= v2 - 1e-8);
  }
}

TEST_CASE("pinned conditional ratios are symmetric across system pairs") {
  std::mt19937_64 rng(707);
  CdfContext ctx;
  for (int it = 0; it < 20; ++it) {
    const int q = 2 + (it % 2);
    gp::GpModel model = random_model(6, 2, rng);
    Matrix batch = batch_near_best(model, q, rng);
    gp::PosteriorBatch post = gp::posterior(model, batch);
    qei::BestObserved best = qei::best_observed(model.design);
    std::vector<qei::ZSystem> sys;
    std::vector<Vector> grads;
    for (int k = 0; k < q; ++k) {
      sys.push_back(qei::build_z_noiseless(post, best, k));
      grads.push_back(
          mvn::mvn_cdf_grad(-sys[k].view.mean, sys[k].view.cov, ctx));
    }
    for (int k = 0; k < q; ++k) {
      for (int i = k + 1; i < q; ++i) {
        const Matrix& sk = sys[k].view.cov.mat();
        const Matrix& si = sys[i].view.cov.mat();
        double dens_ki = norm_pdf_var(-sys[k].view.mean[i], sk(i, i));
        double dens_ik = norm_pdf_var(-sys[i].view.mean[k], si(k, k));
        double r1 = grads[k][i] / dens_ki;
        double r2 = grads[i][k] / dens_ik;
        CHECK(std::abs(r1 - r2) <= 1e-8);
        CHECK(r1 >= -1e-12);
        CHECK(r1 <= 1.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("tangent criterion converges at second order") {
  std::mt19937_64 rng(808);
  CdfContext ctx;  // q = 2 stays in closed-form dimensions
  int in_window = 0, evaluated = 0;
  for (int it = 0; it < 10; ++it) {
    gp::GpModel model = random_model(6, 2, rng);
    Matrix batch = batch_near_best(model, 2, rng);
    double ana = qei::qei(model, batch, 1, qei::QeiMode::analytic, ctx);
    double e1 =
        std::abs(qei::qei(model, batch, 1, qei::QeiMode::tangent, ctx, 1e-2) - ana);
    double e2 =
        std::abs(qei::qei(model, batch, 1, qei::QeiMode::tangent, ctx, 5e-3) - ana);
    if (e2 < 1e-14) continue;
    ++evaluated;
    double ratio = e1 / e2;
    if (ratio > 3.0 && ratio < 5.0) ++in_window;
  }
  CHECK(evaluated >= 8);
  CHECK(in_window >= evaluated - 2);

  gp::GpModel model = random_model(6, 1, rng);
  Matrix batch = batch_near_best(model, 2, rng);
  double ana2 = qei::qei(model, batch, 2, qei::QeiMode::analytic, ctx);
  double tan2 = qei::qei(model, batch, 2, qei::QeiMode::tangent, ctx, 1e-3);
  CHECK(std::abs(tan2 - ana2) <= 1e-4 * (1.0 + std::abs(ana2)));
}

TEST_CASE("cdf call tallies follow the cost table") {
  std::mt19937_64 rng(909);
  gp::GpModel model2 = random_model(5, 2, rng);
  gp::GpModel model3 = random_model(5, 3, rng);
  using Tally = std::map<int, long long>;

  auto tally_value = [&](const gp::GpModel& m, int q, int alpha,
                         qei::QeiMode mode) {
    std::mt19937_64 local(40 + q + alpha);
    Matrix batch = batch_near_best(m, q, local);
    CallCounter counter;
    CdfContext ctx;
    ctx.abs_tol = 1e-3;
    ctx.counter = &counter;
    qei::qei(m, batch, alpha, mode, ctx);
    return counter.by_dimension();
  };
  auto tally_grad = [&](const gp::GpModel& m, int q, qei::GradScheme scheme) {
    std::mt19937_64 local(60 + q + static_cast<int>(scheme));
    Matrix batch = batch_near_best(m, q, local);
    CallCounter counter;
    CdfContext ctx;
    ctx.abs_tol = 1e-3;
    ctx.counter = &counter;
    qei::qei_grad(m, batch, {scheme, 1e-4}, ctx);
    return counter.by_dimension();
  };

  CHECK(tally_value(model2, 2, 1, qei::QeiMode::analytic) ==
        Tally{{2, 2}, {1, 3}});
  CHECK(tally_value(model2, 3, 1, qei::QeiMode::analytic) ==
        Tally{{3, 3}, {2, 6}});
  CHECK(tally_value(model2, 3, 2, qei::QeiMode::analytic) ==
        Tally{{3, 3}, {2, 6}, {1, 12}});
  CHECK(tally_value(model2, 3, 1, qei::QeiMode::tangent) == Tally{{3, 6}});
  CHECK(tally_value(model2, 3, 2, qei::QeiMode::tangent) == Tally{{3, 9}});

  CHECK(tally_grad(model2, 2, qei::GradScheme::analytic) ==
        Tally{{2, 2}, {1, 7}, {0, 3}});
  CHECK(tally_grad(model2, 4, qei::GradScheme::analytic) ==
        Tally{{4, 4}, {3, 26}, {2, 30}, {1, 30}});
  CHECK(tally_grad(model2, 3, qei::GradScheme::tangent) ==
        Tally{{3, 6}, {2, 18}, {1, 18}});
  CHECK(tally_grad(model2, 3, qei::GradScheme::proxy) == Tally{{3, 9}});
  CHECK(tally_grad(model3, 2, qei::GradScheme::proxy) == Tally{{2, 8}});

  CallCounter counter;
  counter.record(3);
  counter.record(3);
  counter.record(1);
  CHECK(qei::counter_report(counter) ==
        std::string("{\"calls\":{\"1\":1,\"3\":2},\"total\":3}"));
}

TEST_CASE("duplicate batch rows collapse to the reduced evaluation") {
  std::mt19937_64 rng(1010);
  gp::GpModel model = random_model(6, 2, rng);
  Matrix base = batch_near_best(model, 2, rng);
  Matrix dup(3, 2);
  dup.row(0) = base.row(0);
  dup.row(1) = base.row(1);
  dup.row(2) = base.row(0);
  dup(2, 0) += 5e-9;
  CdfContext ctx;

  CHECK(qei::qei(model, dup, 1, qei::QeiMode::analytic, ctx) ==
        qei::qei(model, base, 1, qei::QeiMode::analytic, ctx));
  Matrix gd = qei::qei_grad(model, dup, {qei::GradScheme::analytic, 0.0}, ctx);
  Matrix gb = qei::qei_grad(model, base, {qei::GradScheme::analytic, 0.0}, ctx);
  CHECK((gd.topRows(2) - gb).cwiseAbs().maxCoeff() == 0.0);
  CHECK((gd.row(2) - gd.row(0)).cwiseAbs().maxCoeff() == 0.0);

  Matrix all_same(4, 2);
  for (int i = 0; i < 4; ++i) all_same.row(i) = base.row(0);
  CHECK(qei::qei(model, all_same, 1, qei::QeiMode::analytic, ctx) ==
        qei::qei(model, base.topRows(1), 1, qei::QeiMode::analytic, ctx));
}

TEST_CASE("distant batches have vanishing criterion and gradient") {
  gp::Design dn;
  dn.points = Matrix(4, 2);
  dn.points << 0.05, 0.05, 0.18, 0.08, 0.07, 0.19, 0.16, 0.17;
  dn.values = Vector(4);
  dn.values << 2.6, 2.8, 2.9, 3.0;
  dn.noise_vars = Vector::Zero(4);
  gp::GpModel model = gp::make_model(dn, make_kernel(1e-3, {0.05, 0.05}));

  Matrix far(2, 2);
  far << 0.8, 0.8, 0.9, 0.6;
  CdfContext ctx;
  CHECK(qei::qei(model, far, 1, qei::QeiMode::analytic, ctx) <= 1e-8);
  Matrix g = qei::qei_grad(model, far, {qei::GradScheme::analytic, 0.0}, ctx);
  CHECK(g.cwiseAbs().maxCoeff() <= 1e-8);

  // Interpolated point with value above the threshold: the posterior sd sits
  // at the jitter floor and the improvement probability underflows.
  Matrix at_worst = dn.points.row(3);
  CHECK(qei::qei(model, at_worst, 1, qei::QeiMode::analytic, ctx) <= 1e-9);
}

TEST_CASE("monte carlo on deterministic batches is exact") {
  gp::Design dn;
  dn.points = Matrix(3, 1);
  dn.points << 0.2, 0.5, 0.8;
  dn.values = Vector(3);
  dn.values << 2.6, 2.9, 3.1;
  dn.noise_vars = Vector::Zero(3);
  gp::GpModel model = gp::make_model(dn, make_kernel(0.5, {0.2}));

  Matrix batch(2, 1);
  batch << 0.5, 0.8;  // values sit far above the threshold 2.6
  for (int alpha : {1, 2, 3}) {
    moments::McEstimate mc = qei::qei_mc(model, batch, alpha, 2000, 5);
    CHECK(mc.value == 0.0);
    CHECK(mc.std_error == 0.0);
  }

  std::mt19937_64 rng(1111);
  gp::GpModel live = random_model(5, 2, rng);
  Matrix lively = batch_near_best(live, 2, rng);
  moments::McEstimate a = qei::qei_mc(live, lively, 3, 100000, 1);
  moments::McEstimate b = qei::qei_mc(live, lively, 3, 100000, 2);
  CHECK(std::abs(a.value - b.value) <= 4.0 * (a.std_error + b.std_error));
}

TEST_CASE("gradients match finite differences") {
  std::mt19937_64 rng(1212);
  for (int it = 0; it < 5; ++it) {
    gp::GpModel model = random_model(6, 2, rng);
    Matrix batch = batch_near_best(model, 2, rng);
    CdfContext ctx;
    Matrix fd = fd_batch_grad(model, batch, ctx, 1e-5);
    double scale = 1.0 + fd.cwiseAbs().maxCoeff();
    Matrix ga = qei::qei_grad(model, batch, {qei::GradScheme::analytic, 0.0}, ctx);
    Matrix gt = qei::qei_grad(model, batch, {qei::GradScheme::tangent, 1e-4}, ctx);
    CHECK((ga - fd).cwiseAbs().maxCoeff() <= 1e-5 * scale);
    CHECK((gt - fd).cwiseAbs().maxCoeff() <= 1e-5 * scale);
  }
  for (int it = 0; it < 2; ++it) {
    gp::GpModel model = random_model(7, 3, rng);
    Matrix batch = batch_near_best(model, 3, rng);
    CdfContext ctx;
    ctx.abs_tol = 1e-6;
    Matrix fd = fd_batch_grad(model, batch, ctx, 1e-5);
    double scale = 1.0 + fd.cwiseAbs().maxCoeff();
    Matrix ga = qei::qei_grad(model, batch, {qei::GradScheme::analytic, 0.0}, ctx);
    Matrix gt = qei::qei_grad(model, batch, {qei::GradScheme::tangent, 1e-4}, ctx);
    CHECK((ga - fd).cwiseAbs().maxCoeff() <= 1e-5 * scale);
    CHECK((gt - fd).cwiseAbs().maxCoeff() <= 1e-5 * scale);
  }

  gp::GpModel model = random_model(6, 2, rng);
  Matrix batch = batch_near_best(model, 2, rng);
  CdfContext ctx;
  Matrix ga = qei::qei_grad(model, batch, {qei::GradScheme::analytic, 0.0}, ctx);
  Matrix gp_ = qei::qei_grad(model, batch, {qei::GradScheme::proxy, 1e-4}, ctx);
  double rel = (gp_ - ga).norm() / (ga.norm() + 1e-12);
  CHECK(rel <= 0.25);
}

TEST_CASE("second moment assembly matches the direct moment path") {
  std::mt19937_64 rng(1313);
  CdfContext ctx;
  for (int q : {2, 3}) {
    gp::GpModel model = random_model(5, 1, rng);
    Matrix batch = batch_near_best(model, q, rng);
    gp::PosteriorBatch post = gp::posterior(model, batch);
    qei::BestObserved best = qei::best_observed(model.design);
    double direct = 0.0;
    for (int k = 0; k < q; ++k) {
      qei::ZSystem sys = qei::build_z_noiseless(post, best, k);
      direct += moments::moment2(sys.target, sys.view, ctx);
    }
    double shared = qei::qei(model, batch, 2, qei::QeiMode::analytic, ctx);
    CHECK(std::abs(shared - direct) <= 5e-6 * (1.0 + std::abs(direct)));
  }
}

TEST_CASE("z system structure matches the difference pattern") {
  std::mt19937_64 rng(1414);
  gp::GpModel model = random_model(5, 2, rng);
  Matrix batch = batch_near_best(model, 2, rng);
  gp::PosteriorBatch post = gp::posterior(model, batch);
  qei::BestObserved best = qei::best_observed(model.design);

  qei::ZSystem z0 = qei::build_z_noiseless(post, best, 0);
  CHECK(z0.target == 0);
  Matrix want0(2, 2);
  want0 << 1.0, 0.0, 1.0, -1.0;
  CHECK((z0.transform - want0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(z0.view.mean[0] ==
        doctest::Approx(post.mean[0] - best.value).epsilon(1e-14));
  CHECK(z0.view.mean[1] ==
        doctest::Approx(post.mean[0] - post.mean[1]).epsilon(1e-14));
  const Matrix& s = post.cov.mat();
  CHECK(z0.view.cov.mat()(0, 0) == doctest::Approx(s(0, 0)).epsilon(1e-12));
  CHECK(z0.view.cov.mat()(0, 1) ==
        doctest::Approx(s(0, 0) - s(0, 1)).epsilon(1e-12));
  CHECK(z0.view.cov.mat()(1, 1) ==
        doctest::Approx(s(0, 0) + s(1, 1) - 2.0 * s(0, 1)).epsilon(1e-12));

  // Noisy four-case rows for n = 2, ell = 1, k = 0 over (Y0, Y1, Y2, Y3).
  gp::Design noisy;
  noisy.points = sep_points(2, 1, rng, 0.3);
  noisy.values = Vector(2);
  noisy.values << 0.1, -0.2;
  noisy.noise_vars = Vector::Constant(2, 0.1);
  gp::GpModel nmodel = gp::make_model(noisy, make_kernel(1.0, {0.4}));
  Matrix nbatch = sep_points(2, 1, rng, 0.25);
  GaussianView joint = gp::posterior_noisy_joint(nmodel, nbatch);

  qei::ZSystem zn = qei::build_z_noisy(joint, 2, 1, 0);
  CHECK(zn.target == 1);
  Matrix want(3, 4);
  want << -1.0, 1.0, 0.0, 0.0,  // Y1 - Y0
      0.0, -1.0, 1.0, 0.0,      // Y2 - Y1 (threshold row)
      0.0, 0.0, 1.0, -1.0;      // Y2 - Y3
  CHECK((zn.transform - want).cwiseAbs().maxCoeff() == 0.0);

  // n = 1 reduces to the noiseless structure with the latent value as
  // threshold.
  gp::Design single;
  single.points = Matrix::Constant(1, 1, 0.5);
  single.values = Vector::Constant(1, 0.3);
  single.noise_vars = Vector::Constant(1, 0.05);
  gp::GpModel smodel = gp::make_model(single, make_kernel(1.0, {0.4}));
  GaussianView sjoint = gp::posterior_noisy_joint(smodel, nbatch);
  qei::ZSystem s0 = qei::build_z_noisy(sjoint, 1, 0, 0);
  Matrix swant(2, 3);
  swant << -1.0, 1.0, 0.0,  // Y1 - Y0 (threshold row)
      0.0, 1.0, -1.0;       // Y1 - Y2
  CHECK((s0.transform - swant).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s0.target == 0);

  gp::Design tied;
  tied.points = Matrix(3, 1);
  tied.points << 0.1, 0.5, 0.9;
  tied.values = Vector(3);
  tied.values << 1.0, 0.3, 0.3;
  tied.noise_vars = Vector::Zero(3);
  qei::BestObserved tie = qei::best_observed(tied);
  CHECK(tie.value == 0.3);
  CHECK(tie.index == 1);
}

TEST_CASE("contract violations are rejected") {
  std::mt19937_64 rng(1515);
  gp::GpModel model = random_model(5, 2, rng);
  Matrix batch = batch_near_best(model, 2, rng);
  CdfContext ctx;

  CHECK_THROWS_AS(qei::qei(model, batch, 0, qei::QeiMode::analytic, ctx),
                  ContractError);
  CHECK_THROWS_AS(qei::qei(model, batch, 3, qei::QeiMode::analytic, ctx),
                  ContractError);
  CHECK_THROWS_AS(qei::qei(model, batch, 1, qei::QeiMode::tangent, ctx, -1.0),
                  ContractError);
  CHECK_THROWS_AS(qei::qei(model, Matrix(0, 2), 1, qei::QeiMode::analytic, ctx),
                  ContractError);
  CHECK_THROWS_AS(qei::qei_mc(model, batch, 0, 10000, 1), ContractError);
  CHECK_THROWS_AS(qei::qei_mc(model, batch, 1, 999, 1), ContractError);
  CHECK_THROWS_AS(
      qei::qei_grad(model, batch, {qei::GradScheme::tangent, 0.0}, ctx),
      ContractError);

  gp::PosteriorBatch post = gp::posterior(model, batch);
  qei::BestObserved best = qei::best_observed(model.design);
  CHECK_THROWS_AS(qei::build_z_noiseless(post, best, -1), ContractError);
  CHECK_THROWS_AS(qei::build_z_noiseless(post, best, 2), ContractError);

  // Noisy models reject gradients and cap the closed-form latent dimension.
  gp::Design big;
  big.points = Matrix(23, 1);
  for (int i = 0; i < 23; ++i) big.points(i, 0) = (i + 0.5) / 23.0;
  big.values = Vector(23);
  for (int i = 0; i < 23; ++i) big.values[i] = std::sin(6.0 * big.points(i, 0));
  big.noise_vars = Vector::Constant(23, 1e-4);
  gp::GpModel bmodel = gp::make_model(big, make_kernel(1.0, {0.3}));
  Matrix bbatch(2, 1);
  bbatch << 0.31, 0.77;
  CHECK_THROWS_AS(qei::qei(bmodel, bbatch, 1, qei::QeiMode::analytic, ctx),
                  ContractError);
  CHECK_THROWS_AS(qei::qei_grad(bmodel, bbatch, {qei::GradScheme::analytic, 0.0}, ctx),
                  ContractError);

  GaussianView joint = gp::posterior_noisy_joint(bmodel, bbatch.topRows(1));
  CHECK_THROWS_AS(qei::build_z_noisy(joint, 23, 23, 0), ContractError);
  CHECK_THROWS_AS(qei::build_z_noisy(joint, 23, 0, 1), ContractError);
}
