/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#include "qeikit/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "qeikit/bfgs.hpp"
#include "qeikit/io.hpp"
#include "qeikit/qei.hpp"

namespace qeikit::bench {

namespace {

constexpr int kBoreholeDim = 8;
constexpr double kBoreholeLo[kBoreholeDim] = {0.05, 100.0,  63070.0, 990.0,
                                              63.1, 700.0,  1120.0,  1500.0};
constexpr double kBoreholeHi[kBoreholeDim] = {0.15,   50000.0, 115600.0, 1110.0,
                                              116.0,  820.0,   1680.0,   15000.0};

void check_unit_cube(const Eigen::Ref<const Vector>& x, int dim,
                     const char* who) {
  if (x.size() != dim)
    throw ContractError(std::string(who) + ": expected dimension " +
                        std::to_string(dim));
  if (x.minCoeff() < -1e-9 || x.maxCoeff() > 1.0 + 1e-9)
    throw ContractError(std::string(who) + ": point outside the unit cube");
}

}  // namespace

Vector borehole_to_physical(const Eigen::Ref<const Vector>& x) {
  check_unit_cube(x, kBoreholeDim, "borehole_to_physical");
  Vector z(kBoreholeDim);
  for (int j = 0; j < kBoreholeDim; ++j)
    z[j] = kBoreholeLo[j] + x[j] * (kBoreholeHi[j] - kBoreholeLo[j]);
  return z;
}

Vector borehole_to_unit(const Eigen::Ref<const Vector>& z) {
  if (z.size() != kBoreholeDim)
    throw ContractError("borehole_to_unit: expected dimension 8");
  Vector x(kBoreholeDim);
  for (int j = 0; j < kBoreholeDim; ++j)
    x[j] = (z[j] - kBoreholeLo[j]) / (kBoreholeHi[j] - kBoreholeLo[j]);
  return x;
}

double borehole(const Eigen::Ref<const Vector>& x) {
  Vector z = borehole_to_physical(x);
  const double rw = z[0], r = z[1], tu = z[2], hu = z[3];
  const double tl = z[4], hl = z[5], ell = z[6], kw = z[7];
  const double log_ratio = std::log(r / rw);
  const double frac = 2.0 * ell * tu / (log_ratio * rw * rw * kw);
  return 2.0 * std::numbers::pi * tu * (hu - hl) /
         (log_ratio * (1.0 + frac + tu / tl));
}

Problem borehole_problem() {
  Problem p;
  p.name = "borehole";
  p.dim = kBoreholeDim;
  p.bounds = Matrix(kBoreholeDim, 2);
  for (int j = 0; j < kBoreholeDim; ++j) {
    p.bounds(j, 0) = kBoreholeLo[j];
    p.bounds(j, 1) = kBoreholeHi[j];
  }
  p.objective = [](const Eigen::Ref<const Vector>& x) { return borehole(x); };
  p.has_optimum = true;
  p.optimum_point = Vector(kBoreholeDim);
  p.optimum_point << 0, 1, 0, 0, 0, 1, 1, 0;
  p.optimum_value = borehole(p.optimum_point);
  return p;
}

std::pair<Vector, double> locate_box_minimum(const Problem& problem) {
  if (!problem.objective)
    throw ContractError("locate_box_minimum: objective is not set");
  if (problem.dim < 1 || problem.dim > 20)
    throw ContractError("locate_box_minimum: dimension must be in [1, 20]");

  Vector best_x = Vector::Zero(problem.dim);
  double best_v = problem.objective(best_x);
  for (std::uint64_t mask = 1; mask < (1ULL << problem.dim); ++mask) {
    Vector v(problem.dim);
    for (int j = 0; j < problem.dim; ++j)
      v[j] = (mask >> j) & 1ULL ? 1.0 : 0.0;
    const double f = problem.objective(v);
    if (f < best_v) {
      best_v = f;
      best_x = v;
    }
  }

  const double h = 1e-7;
  BoxObjective fg = [&](const Vector& x, Vector& g) {
    g.resize(problem.dim);
    for (int j = 0; j < problem.dim; ++j) {
      Vector xp = x, xm = x;
      xp[j] = std::min(1.0, x[j] + h);
      xm[j] = std::max(0.0, x[j] - h);
      g[j] = (problem.objective(xp) - problem.objective(xm)) / (xp[j] - xm[j]);
    }
    return problem.objective(x);
  };
  BoxBfgsOptions opts;
  opts.max_iters = 200;
  BoxBfgsResult res = minimize_box(fg, best_x, Vector::Zero(problem.dim),
                                   Vector::Ones(problem.dim), opts);
  if (res.value < best_v) return {res.x, res.value};
  return {best_x, best_v};
}

double min_pairwise_distance(const Matrix& points) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points.rows(); ++i)
    for (int j = i + 1; j < points.rows(); ++j)
      best = std::min(best, (points.row(i) - points.row(j)).norm());
  return best;
}

Matrix lhs_design(int n, int d, std::uint64_t seed, int n_improve) {
  if (n < 2 || d < 1)
    throw ContractError("lhs_design: need n >= 2 and d >= 1");
  if (n_improve < 0) throw ContractError("lhs_design: n_improve must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix pts(n, d);
  std::vector<int> perm(n);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n; ++i) pts(i, j) = (perm[i] + unit(rng)) / n;
  }

  // Maximin improvement: swap two entries within a column (preserves the
  // stratification) and keep the swap only when the minimum pairwise
  // distance strictly grows.
  double current = min_pairwise_distance(pts);
  std::uniform_int_distribution<int> pick_col(0, d - 1), pick_row(0, n - 1);
  for (int it = 0; it < n_improve; ++it) {
    const int j = pick_col(rng);
    const int a = pick_row(rng), b = pick_row(rng);
    if (a == b) continue;
    std::swap(pts(a, j), pts(b, j));
    const double trial = min_pairwise_distance(pts);
    if (trial > current) {
      current = trial;
    } else {
      std::swap(pts(a, j), pts(b, j));
    }
  }
  return pts;
}

std::vector<TimingRow> timing_bench(const gp::GpModel& model,
                                    const std::vector<int>& q_list,
                                    const std::vector<std::string>& modes,
                                    int n_batches, std::uint64_t seed,
                                    double cdf_tol) {
  if (q_list.empty() || modes.empty())
    throw ContractError("timing_bench: empty q list or mode list");
  if (n_batches < 1) throw ContractError("timing_bench: n_batches must be >= 1");
  for (const std::string& m : modes) {
    if (m != "analytic" && m != "tangent" && m != "proxy")
      throw ContractError("timing_bench: unknown mode '" + m + "'");
  }
  const int d = static_cast<int>(model.design.points.cols());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  using clock = std::chrono::steady_clock;

  std::vector<TimingRow> rows;
  for (int q : q_list) {
    std::vector<Matrix> batches;
    for (int b = 0; b < n_batches; ++b) {
      Matrix batch(q, d);
      for (int i = 0; i < q; ++i)
        for (int j = 0; j < d; ++j) batch(i, j) = unit(rng);
      batches.push_back(std::move(batch));
    }

    auto time_op = [&](const std::string& op, const std::string& mode) {
      TimingRow row;
      row.q = q;
      row.op = op;
      row.mode = mode;
      qei::GradMode gm;
      gm.scheme = mode == "analytic"  ? qei::GradScheme::analytic
                  : mode == "tangent" ? qei::GradScheme::tangent
                                      : qei::GradScheme::proxy;
      const qei::QeiMode vm = mode == "analytic" ? qei::QeiMode::analytic
                                                 : qei::QeiMode::tangent;
      CallCounter counter;
      CdfContext ctx;
      ctx.abs_tol = cdf_tol;
      ctx.counter = &counter;
      if (op == "qei")
        qei::qei(model, batches[0], 1, vm, ctx);
      else
        qei::qei_grad(model, batches[0], gm, ctx);
      row.calls = counter.by_dimension();

      CdfContext timed;
      timed.abs_tol = cdf_tol;
      const auto t0 = clock::now();
      for (const Matrix& batch : batches) {
        if (op == "qei")
          qei::qei(model, batch, 1, vm, timed);
        else
          qei::qei_grad(model, batch, gm, timed);
      }
      const auto t1 = clock::now();
      row.mean_seconds =
          std::chrono::duration<double>(t1 - t0).count() / n_batches;
      rows.push_back(std::move(row));
    };

    for (const std::string& mode : modes) {
      if (mode != "proxy") time_op("qei", mode);
    }
    for (const std::string& mode : modes) time_op("qei-grad", mode);
  }
  return rows;
}

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::string& out_dir) {
  if (!spec.problem.objective)
    throw ContractError("run_experiment: objective is not set");
  if (!spec.problem.has_optimum)
    throw ContractError("run_experiment: regret needs a known optimum");
  if (spec.n0 < spec.problem.dim + 2)
    throw ContractError("run_experiment: n0 must be at least dim + 2");
  if (spec.strategies.empty() || spec.n_seeds < 1)
    throw ContractError("run_experiment: need strategies and n_seeds >= 1");
  std::filesystem::create_directories(out_dir);

  optimize::Problem op;
  op.dim = spec.problem.dim;
  op.objective = spec.problem.objective;

  ExperimentResult result;
  // regrets[s][k] holds n_iterations + 1 values, starting at the initial best.
  std::vector<std::vector<std::vector<double>>> regrets(spec.strategies.size());
  std::vector<optimize::RunHistory> histories;
  std::vector<std::pair<std::size_t, int>> run_keys;  // (strategy idx, seed)

  for (std::size_t s = 0; s < spec.strategies.size(); ++s) {
    const optimize::Strategy strategy = spec.strategies[s];
    for (int k = 0; k < spec.n_seeds; ++k) {
      const std::uint64_t run_seed = spec.seed + static_cast<std::uint64_t>(k);
      try {
        gp::Design init;
        init.points = lhs_design(spec.n0, spec.problem.dim,
                                 run_seed * 2654435761ULL + 1,
                                 spec.lhs_improve);
        init.values = Vector(spec.n0);
        for (int i = 0; i < spec.n0; ++i)
          init.values[i] = spec.problem.objective(init.points.row(i).transpose());
        init.noise_vars = Vector::Zero(spec.n0);

        optimize::RunHistory history =
            optimize::run_strategy(op, strategy, spec.q, spec.n_iterations,
                                   init, run_seed, spec.cfg);
        const std::string file = out_dir + "/history-" +
                                 optimize::strategy_name(strategy) + "-seed" +
                                 std::to_string(k) + ".jsonl";
        io::write_history_jsonl(file, history);
        result.history_files.push_back(file);

        std::vector<double> reg;
        reg.push_back(history.initial_best - spec.problem.optimum_value);
        for (const optimize::IterationRecord& rec : history.iterations)
          reg.push_back(rec.best_observed - spec.problem.optimum_value);
        regrets[s].push_back(std::move(reg));
        histories.push_back(std::move(history));
        run_keys.emplace_back(s, k);
      } catch (const std::exception& e) {
        result.failures.push_back(optimize::strategy_name(strategy) +
                                  " seed " + std::to_string(k) + ": " +
                                  e.what());
      }
    }
  }

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };

  {
    std::ofstream out(out_dir + "/regret.csv");
    out << "iteration";
    for (const optimize::Strategy s : spec.strategies)
      out << "," << optimize::strategy_name(s);
    out << "\n";
    for (int it = 0; it <= spec.n_iterations; ++it) {
      out << it;
      for (std::size_t s = 0; s < spec.strategies.size(); ++s) {
        std::vector<double> col;
        for (const std::vector<double>& reg : regrets[s])
          if (it < static_cast<int>(reg.size())) col.push_back(reg[it]);
        out << ",";
        if (!col.empty()) out << format_double(median(col));
      }
      out << "\n";
    }
  }

  for (const double cost : spec.eval_time_models) {
    std::ostringstream name;
    name << out_dir << "/walltime-" << format_double(cost) << "s.csv";
    std::ofstream out(name.str());
    out << "strategy,seed,iteration,wall_seconds,regret\n";
    for (std::size_t r = 0; r < histories.size(); ++r) {
      const auto [s, k] = run_keys[r];
      double wall = 0.0;
      for (const optimize::IterationRecord& rec : histories[r].iterations) {
        wall += rec.select_seconds + cost;  // the batch evaluates in parallel
        out << optimize::strategy_name(spec.strategies[s]) << "," << k << ","
            << rec.iteration << "," << format_double(wall) << ","
            << format_double(rec.best_observed - spec.problem.optimum_value)
            << "\n";
      }
    }
  }

  if (!result.failures.empty()) {
    std::ofstream out(out_dir + "/failures.txt");
    for (const std::string& f : result.failures) out << f << "\n";
  }
  return result;
}

}  // namespace qeikit::bench
