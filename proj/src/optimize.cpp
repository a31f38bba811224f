/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#include "qeikit/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <utility>

#include "qeikit/bfgs.hpp"
#include "qeikit/normal.hpp"

namespace qeikit::optimize {

namespace {

constexpr std::uint64_t kSeedStride = 0x9e3779b97f4a7c15ULL;

Vector flatten(const Matrix& batch) {
  Vector out(batch.size());
  int at = 0;
  for (int i = 0; i < batch.rows(); ++i)
    for (int j = 0; j < batch.cols(); ++j) out[at++] = batch(i, j);
  return out;
}

Matrix unflatten(const Vector& v, int q, int d) {
  Matrix out(q, d);
  int at = 0;
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < d; ++j) out(i, j) = v[at++];
  return out;
}

bool has_noise(const gp::GpModel& model) {
  return model.design.noise_vars.size() > 0 &&
         model.design.noise_vars.maxCoeff() > 0.0;
}

struct PointPick {
  Vector x;
  double ei = 0.0;
};

//! Multistart BFGS on the single-point criterion with its closed-form
//! gradient. Counter-free: every quantity is a univariate normal expression.
PointPick maximize_point(const gp::GpModel& model, int n_starts, int max_iters,
                         std::uint64_t seed) {
  const int d = static_cast<int>(model.design.points.cols());
  const double threshold = qei::best_observed(model.design).value;

  BoxObjective fg = [&](const Vector& x, Vector& g) {
    gp::PosteriorBatch post = gp::posterior(model, x.transpose());
    const double s2 = std::max(post.cov.mat()(0, 0), 1e-24);
    const double s = std::sqrt(s2);
    const double u = (threshold - post.mean[0]) / s;
    const double cdf = norm_cdf(u);
    const double pdf = norm_pdf(u);
    // Half of the variance derivative sits on the diagonal jacobian entry.
    Vector ds = post.cov_jac[0].row(0).transpose() / s;
    g = cdf * post.mean_jac[0] - pdf * ds;
    return -(s * (u * cdf + pdf));
  };

  const Vector lo = Vector::Zero(d), hi = Vector::Ones(d);
  BoxBfgsOptions opts;
  opts.max_iters = max_iters;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.02, 0.98);

  PointPick best;
  best.ei = -1.0;
  for (int s = 0; s < std::max(1, n_starts); ++s) {
    Vector x0(d);
    for (int j = 0; j < d; ++j) x0[j] = unit(rng);
    BoxBfgsResult res = minimize_box(fg, std::move(x0), lo, hi, opts);
    if (-res.value > best.ei) {
      best.ei = -res.value;
      best.x = res.x;
    }
  }
  return best;
}

double lie_value(const gp::GpModel& model, const Vector& x,
                 const LiePolicy& lie, std::mt19937_64& rng) {
  switch (lie.kind) {
    case LiePolicy::Kind::fixed:
      return lie.value;
    case LiePolicy::Kind::quantile: {
      if (!(lie.level > 0.0 && lie.level < 1.0))
        throw ContractError("constant_liar: quantile level outside (0,1)");
      gp::PosteriorBatch post = gp::posterior(model, x.transpose());
      return post.mean[0] +
             norm_quantile(lie.level) * std::sqrt(post.cov.mat()(0, 0));
    }
    case LiePolicy::Kind::random_conditional: {
      gp::PosteriorBatch post = gp::posterior(model, x.transpose());
      std::normal_distribution<double> gauss(0.0, 1.0);
      return post.mean[0] + std::sqrt(post.cov.mat()(0, 0)) * gauss(rng);
    }
  }
  throw ContractError("constant_liar: unknown lie policy");
}

//! Greedy liar loop. first, when given, replaces the initial maximization
//! (it depends only on the base model, so callers building several liar
//! batches share it).
Matrix cl_batch(const gp::GpModel& model, int q, const LiePolicy& lie,
                const OptimizerConfig& cfg, std::uint64_t seed,
                const Vector* first) {
  const int d = static_cast<int>(model.design.points.cols());
  Matrix batch(q, d);
  gp::GpModel work = model;
  std::mt19937_64 rng(seed);
  for (int j = 0; j < q; ++j) {
    Vector xj;
    if (j == 0 && first != nullptr) {
      xj = *first;
    } else {
      xj = maximize_point(work, cfg.inner_starts, cfg.inner_max_iters,
                          seed + kSeedStride * static_cast<std::uint64_t>(j + 1))
               .x;
    }
    batch.row(j) = xj.transpose();
    if (j + 1 == q) break;
    // A selection landing exactly on a pseudo-observation would make the
    // noiseless update reject the conflicting value; nudge it off.
    for (int r = 0; r < work.design.points.rows(); ++r) {
      if ((work.design.points.row(r).transpose() - xj)
              .cwiseAbs()
              .maxCoeff() < 1e-9) {
        std::uniform_real_distribution<double> jit(-1e-6, 1e-6);
        for (int c = 0; c < d; ++c)
          xj[c] = std::min(1.0, std::max(0.0, xj[c] + jit(rng)));
        break;
      }
    }
    const double lv = lie_value(work, xj, lie, rng);
    work = gp::update(work, xj.transpose(), Vector::Constant(1, lv),
                      Vector::Zero(1));
  }
  return batch;
}

double tangent_value(const gp::GpModel& model, const Matrix& batch,
                     const OptimizerConfig& cfg, double tol) {
  CdfContext ctx;
  ctx.abs_tol = tol;
  ctx.counter = cfg.counter;
  return qei::qei(model, batch, cfg.alpha, qei::QeiMode::tangent, ctx);
}

void validate_config(const OptimizerConfig& cfg) {
  if (cfg.n_starts < 1) throw ContractError("optimizer: n_starts must be >= 1");
  if (!(cfg.stop_factr > 0.0))
    throw ContractError("optimizer: stop_factr must be positive");
  if (cfg.max_iters < 1 || cfg.inner_starts < 1 || cfg.inner_max_iters < 1)
    throw ContractError("optimizer: iteration budgets must be >= 1");
  if (!(cfg.search_tol > 0.0) || !(cfg.report_tol > 0.0))
    throw ContractError("optimizer: CDF tolerances must be positive");
}

}  // namespace

MaximizeResult maximize_qei(const gp::GpModel& model, int q,
                            const OptimizerConfig& cfg) {
  validate_config(cfg);
  if (q < 1) throw ContractError("maximize_qei: q must be >= 1");
  if (has_noise(model))
    throw ContractError("maximize_qei requires a noise-free model");
  const int d = static_cast<int>(model.design.points.cols());

  std::vector<Matrix> starts = generate_starts(model, q, cfg.n_starts,
                                               cfg.seed, cfg);

  CdfContext search_ctx;
  search_ctx.abs_tol = cfg.search_tol;
  search_ctx.counter = cfg.counter;
  const qei::QeiMode value_mode =
      cfg.grad_mode.scheme == qei::GradScheme::analytic
          ? qei::QeiMode::analytic
          : qei::QeiMode::tangent;
  const double value_eps = cfg.grad_mode.scheme == qei::GradScheme::tangent
                               ? cfg.grad_mode.epsilon
                               : 1e-4;

  BoxBfgsOptions opts;
  opts.max_iters = cfg.max_iters;
  opts.stop_factr = cfg.stop_factr;
  opts.grad_tol = cfg.grad_tol;
  const Vector lo = Vector::Zero(q * d), hi = Vector::Ones(q * d);

  MaximizeResult out;
  out.diagnostics.n_starts = static_cast<int>(starts.size());
  bool any_improved = false;
  std::vector<Matrix> candidates;  // local optima first, then the starts
  for (const Matrix& start : starts) {
    double f0 = 0.0;
    bool seen0 = false;
    BoxObjective fg = [&](const Vector& x, Vector& g) {
      Matrix batch = unflatten(x, q, d);
      const double val = qei::qei(model, batch, cfg.alpha, value_mode,
                                  search_ctx, value_eps);
      g = -flatten(qei::qei_grad(model, batch, cfg.grad_mode, search_ctx));
      if (!seen0) {
        f0 = -val;
        seen0 = true;
      }
      return -val;
    };
    BoxBfgsResult res = minimize_box(fg, flatten(start), lo, hi, opts);
    if (res.converged) ++out.diagnostics.n_converged;
    if (res.value < f0) any_improved = true;
    candidates.push_back(unflatten(res.x, q, d));
  }
  out.diagnostics.line_search_warning = !any_improved;
  for (const Matrix& start : starts) candidates.push_back(start);

  // One arbitration pass keeps values from all gradient schemes comparable.
  double best_val = -1.0;
  int best_at = 0;
  double best_start = -1.0;
  const int n_local = static_cast<int>(starts.size());
  for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
    const double v = tangent_value(model, candidates[i], cfg, cfg.report_tol);
    if (v > best_val) {
      best_val = v;
      best_at = i;
    }
    if (i >= n_local) best_start = std::max(best_start, v);
  }
  out.batch = candidates[best_at];
  out.value = best_val;
  out.diagnostics.best_start_value = best_start;
  return out;
}

Matrix constant_liar(const gp::GpModel& model, int q, const LiePolicy& lie,
                     const OptimizerConfig& cfg) {
  validate_config(cfg);
  if (q < 1) throw ContractError("constant_liar: q must be >= 1");
  return cl_batch(model, q, lie, cfg, cfg.seed, nullptr);
}

ClMixResult cl_mix(const gp::GpModel& model, int q,
                   const OptimizerConfig& cfg) {
  validate_config(cfg);
  if (q < 1) throw ContractError("cl_mix: q must be >= 1");
  const double hi = model.design.values.maxCoeff();
  const double lo = model.design.values.minCoeff();
  const std::vector<LiePolicy> policies = {
      LiePolicy::fixed_value(hi),   LiePolicy::fixed_value(lo),
      LiePolicy::quantile(0.025),   LiePolicy::quantile(0.10),
      LiePolicy::quantile(0.50),    LiePolicy::quantile(0.90),
      LiePolicy::quantile(0.975)};

  // Every policy starts from the same first point: the initial single-point
  // maximization sees no lie yet.
  const Vector first =
      maximize_point(model, cfg.inner_starts, cfg.inner_max_iters,
                     cfg.seed + kSeedStride)
          .x;

  ClMixResult out;
  for (std::size_t p = 0; p < policies.size(); ++p) {
    Matrix cand = cl_batch(model, q, policies[p], cfg,
                           cfg.seed + kSeedStride * (p + 2), &first);
    out.candidates.push_back(cand);
    out.candidate_values.push_back(
        tangent_value(model, cand, cfg, cfg.report_tol));
  }
  int best = 0;
  for (int i = 1; i < static_cast<int>(out.candidates.size()); ++i)
    if (out.candidate_values[i] > out.candidate_values[best]) best = i;
  out.batch = out.candidates[best];
  out.value = out.candidate_values[best];
  return out;
}

std::vector<Matrix> generate_starts(const gp::GpModel& model, int q,
                                    int n_starts, std::uint64_t seed,
                                    const OptimizerConfig& cfg) {
  if (q < 1 || n_starts < 1)
    throw ContractError("generate_starts: q and n_starts must be >= 1");
  const Vector first =
      maximize_point(model, cfg.inner_starts, cfg.inner_max_iters,
                     seed + kSeedStride)
          .x;
  std::vector<Matrix> starts;
  starts.reserve(n_starts);
  for (int s = 0; s < n_starts; ++s) {
    starts.push_back(cl_batch(model, q, LiePolicy::random_conditional(), cfg,
                              seed + kSeedStride * (s + 2), &first));
  }
  // Coinciding starts (q = 1 is fully deterministic) get jittered apart.
  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  std::uniform_real_distribution<double> jit(-1e-3, 1e-3);
  for (std::size_t i = 1; i < starts.size(); ++i) {
    bool clash = false;
    for (std::size_t j = 0; j < i && !clash; ++j)
      clash = (starts[i] - starts[j]).cwiseAbs().maxCoeff() <= 1e-12;
    if (!clash) continue;
    for (int r = 0; r < starts[i].rows(); ++r)
      for (int c = 0; c < starts[i].cols(); ++c)
        starts[i](r, c) =
            std::min(1.0, std::max(0.0, starts[i](r, c) + jit(rng)));
  }
  return starts;
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::qei_analytic: return "qei-analytic";
    case Strategy::qei_tangent: return "qei-tangent";
    case Strategy::qei_proxy: return "qei-proxy";
    case Strategy::cl_mix: return "cl-mix";
  }
  throw ContractError("strategy_name: unknown strategy");
}

Strategy parse_strategy(const std::string& name) {
  if (name == "qei-analytic") return Strategy::qei_analytic;
  if (name == "qei-tangent") return Strategy::qei_tangent;
  if (name == "qei-proxy") return Strategy::qei_proxy;
  if (name == "cl-mix") return Strategy::cl_mix;
  throw ContractError("parse_strategy: unknown strategy '" + name + "'");
}

RunHistory run_strategy(const Problem& problem, Strategy strategy, int q,
                        int n_iterations, const gp::Design& init_design,
                        std::uint64_t seed, const OptimizerConfig& cfg) {
  validate_config(cfg);
  if (!problem.objective)
    throw ContractError("run_strategy: objective is not set");
  if (problem.dim != init_design.points.cols())
    throw ContractError("run_strategy: problem/design dimension mismatch");
  if (q < 1 || n_iterations < 1)
    throw ContractError("run_strategy: q and n_iterations must be >= 1");
  gp::validate_design(init_design);

  CallCounter local_counter;
  OptimizerConfig run_cfg = cfg;
  if (run_cfg.counter == nullptr) run_cfg.counter = &local_counter;
  switch (strategy) {
    case Strategy::qei_analytic:
      run_cfg.grad_mode.scheme = qei::GradScheme::analytic;
      break;
    case Strategy::qei_tangent:
      run_cfg.grad_mode.scheme = qei::GradScheme::tangent;
      break;
    case Strategy::qei_proxy:
      run_cfg.grad_mode.scheme = qei::GradScheme::proxy;
      break;
    case Strategy::cl_mix:
      break;
  }

  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };

  RunHistory history;
  history.strategy = strategy_name(strategy);
  history.q = q;
  history.initial_best = qei::best_observed(init_design).value;

  gp::Design design = init_design;
  gp::GpModel model = gp::fit(design, run_cfg.fit_restarts, seed);
  for (int it = 0; it < n_iterations; ++it) {
    const std::uint64_t it_seed =
        seed + kSeedStride * static_cast<std::uint64_t>(it + 1);
    OptimizerConfig it_cfg = run_cfg;
    it_cfg.seed = it_seed;

    const auto t0 = clock::now();
    Matrix batch;
    double value = 0.0;
    if (strategy == Strategy::cl_mix) {
      ClMixResult sel = cl_mix(model, q, it_cfg);
      batch = sel.batch;
      value = sel.value;
    } else {
      MaximizeResult sel = maximize_qei(model, q, it_cfg);
      batch = sel.batch;
      value = sel.value;
    }
    const auto t1 = clock::now();

    Vector obs(q);
    bool failed = false;
    for (int i = 0; i < q && !failed; ++i) {
      try {
        obs[i] = problem.objective(batch.row(i).transpose());
      } catch (const std::exception&) {
        failed = true;
      }
      if (!failed && !std::isfinite(obs[i])) failed = true;
    }
    if (failed) {
      history.aborted = true;
      break;
    }
    const auto t2 = clock::now();

    const int n_old = static_cast<int>(design.points.rows());
    Matrix grown(n_old + q, design.points.cols());
    grown.topRows(n_old) = design.points;
    grown.bottomRows(q) = batch;
    Vector values(n_old + q), noise(n_old + q);
    values.head(n_old) = design.values;
    values.tail(q) = obs;
    noise.head(n_old) = design.noise_vars;
    noise.tail(q).setZero();
    design.points = std::move(grown);
    design.values = std::move(values);
    design.noise_vars = std::move(noise);
    model = gp::fit(design, run_cfg.fit_restarts, it_seed + 7);
    const auto t3 = clock::now();

    IterationRecord rec;
    rec.iteration = it;
    rec.batch = batch;
    rec.qei_value = value;
    rec.observations = obs;
    rec.trend = model.trend;
    rec.kernel_variance = model.kernel.variance;
    rec.lengthscales = model.kernel.lengthscales;
    rec.cdf_calls = run_cfg.counter->total();
    rec.select_seconds = seconds(t0, t1);
    rec.eval_seconds = seconds(t1, t2);
    rec.fit_seconds = seconds(t2, t3);
    rec.seed = it_seed;
    rec.best_observed = qei::best_observed(design).value;
    history.iterations.push_back(std::move(rec));
  }
  history.final_design = std::move(design);
  return history;
}

}  // namespace qeikit::optimize
