/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#ifndef QEIKIT_OPTIMIZE_HPP
#define QEIKIT_OPTIMIZE_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qeikit/gp.hpp"
#include "qeikit/qei.hpp"

namespace qeikit::optimize {

//! Knobs for batch selection. The gradient mode drives the BFGS search; the
//! line search evaluates the analytic criterion in analytic mode and the
//! tangent criterion otherwise. Final arbitration among starts and local
//! optima always re-evaluates the tangent criterion at report_tol, so values
//! from different gradient modes are comparable.
struct OptimizerConfig {
  int n_starts = 10;
  qei::GradMode grad_mode;
  int alpha = 1;
  //! Relative-improvement stopping constant for each BFGS run.
  double stop_factr = 2.2e-7;
  //! Projected-gradient infinity-norm stopping threshold.
  double grad_tol = 1e-8;
  int max_iters = 200;
  std::uint64_t seed = 0;
  //! CDF tolerance inside the line search, and for the reported value.
  double search_tol = 1e-6;
  double report_tol = 1e-7;
  //! Multistart budget of the single-point selections used by the liar
  //! heuristics. These always use exact single-point gradients.
  int inner_starts = 6;
  int inner_max_iters = 80;
  //! Hyperparameter refit restarts inside run_strategy.
  int fit_restarts = 5;
  //! Optional tally of CDF calls made on behalf of this configuration.
  CallCounter* counter = nullptr;
};

//! Pseudo-observation rule for the liar heuristics.
struct LiePolicy {
  enum class Kind { fixed, quantile, random_conditional };
  Kind kind = Kind::fixed;
  double value = 0.0;  // fixed lie level
  double level = 0.5;  // conditional quantile, in (0,1)

  static LiePolicy fixed_value(double v) {
    LiePolicy p;
    p.kind = Kind::fixed;
    p.value = v;
    return p;
  }
  static LiePolicy quantile(double level) {
    LiePolicy p;
    p.kind = Kind::quantile;
    p.level = level;
    return p;
  }
  static LiePolicy random_conditional() {
    LiePolicy p;
    p.kind = Kind::random_conditional;
    return p;
  }
};

struct MaximizeDiagnostics {
  int n_starts = 0;
  int n_converged = 0;
  //! Set when no start produced a measurable line-search improvement; the
  //! best start is returned in that case.
  bool line_search_warning = false;
  //! Tangent criterion of the best starting batch at report_tol.
  double best_start_value = 0.0;
};

struct MaximizeResult {
  Matrix batch;  // q x d, inside the unit box
  double value = 0.0;
  MaximizeDiagnostics diagnostics;
};

//! Multistart projected-BFGS maximization of the batch criterion over
//! [0,1]^{q d}. Starting batches come from the liar heuristic with random
//! conditional lies. Deterministic for a fixed config. Requires a noise-free
//! model (the gradient schemes do).
MaximizeResult maximize_qei(const gp::GpModel& model, int q,
                            const OptimizerConfig& cfg = {});

//! Greedy batch construction: repeatedly maximizes the single-point criterion
//! and injects the lie value as a noiseless pseudo-observation. The inner
//! maximizer is the same multistart BFGS with exact single-point gradients
//! regardless of cfg.grad_mode. Deterministic for fixed/quantile policies
//! under a fixed seed.
Matrix constant_liar(const gp::GpModel& model, int q, const LiePolicy& lie,
                     const OptimizerConfig& cfg = {});

struct ClMixResult {
  Matrix batch;
  double value = 0.0;
  //! All candidate batches and their criterion values, in policy order:
  //! max observation, min observation, then conditional quantiles
  //! 2.5, 10, 50, 90, 97.5 percent.
  std::vector<Matrix> candidates;
  std::vector<double> candidate_values;
};

//! Evaluates the batch criterion on the seven liar candidates and returns the
//! argmax. Values use the tangent criterion at cfg.report_tol.
ClMixResult cl_mix(const gp::GpModel& model, int q,
                   const OptimizerConfig& cfg = {});

//! Liar batches with random conditional lies, one per start with its own
//! seed stream. Coinciding starts (the q = 1 degenerate case) are separated
//! by a uniform jitter of 1e-3 per coordinate, clipped to the box.
std::vector<Matrix> generate_starts(const gp::GpModel& model, int q,
                                    int n_starts, std::uint64_t seed,
                                    const OptimizerConfig& cfg = {});

enum class Strategy { qei_analytic, qei_tangent, qei_proxy, cl_mix };

std::string strategy_name(Strategy s);
//! Accepts the names produced by strategy_name ("qei-analytic", ...).
Strategy parse_strategy(const std::string& name);

//! Objective to minimize over the unit cube.
struct Problem {
  int dim = 0;
  std::function<double(const Eigen::Ref<const Vector>&)> objective;
};

struct IterationRecord {
  int iteration = 0;
  Matrix batch;        // q x d
  double qei_value = 0.0;
  Vector observations;  // q
  double trend = 0.0;
  double kernel_variance = 0.0;
  Vector lengthscales;
  long long cdf_calls = 0;  // cumulative over the run
  double select_seconds = 0.0;
  double eval_seconds = 0.0;
  double fit_seconds = 0.0;
  std::uint64_t seed = 0;  // selection seed of this iteration
  double best_observed = 0.0;
};

struct RunHistory {
  std::string strategy;
  int q = 0;
  double initial_best = 0.0;
  //! Set when an objective evaluation threw; iterations holds the completed
  //! prefix.
  bool aborted = false;
  std::vector<IterationRecord> iterations;
  gp::Design final_design;
};

//! Batch-sequential loop: select a batch, evaluate the objective on it,
//! append the observations and refit the hyperparameters, n_iterations
//! times. Identical inputs reproduce the history except for the timing
//! fields.
RunHistory run_strategy(const Problem& problem, Strategy strategy, int q,
                        int n_iterations, const gp::Design& init_design,
                        std::uint64_t seed, const OptimizerConfig& cfg = {});

}  // namespace qeikit::optimize

#endif  // QEIKIT_OPTIMIZE_HPP
