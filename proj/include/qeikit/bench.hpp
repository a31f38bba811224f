/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#ifndef QEIKIT_BENCH_HPP
#define QEIKIT_BENCH_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "qeikit/gp.hpp"
#include "qeikit/optimize.hpp"

namespace qeikit::bench {

//! Test objective on the unit cube, with the affine map to its physical box
//! and the known global minimum when available.
struct Problem {
  std::string name;
  int dim = 0;
  Matrix bounds;  // dim x 2: physical lower / upper per coordinate
  std::function<double(const Eigen::Ref<const Vector>&)> objective;
  bool has_optimum = false;
  Vector optimum_point;  // unit-cube coordinates
  double optimum_value = 0.0;
};

//! Water flow rate through a borehole, eight inputs on [0,1] rescaled to the
//! physical ranges internally. Strictly positive on the domain.
double borehole(const Eigen::Ref<const Vector>& x);

//! Affine unit-cube to physical-box map of the borehole inputs, and its
//! inverse. Round trips to machine precision.
Vector borehole_to_physical(const Eigen::Ref<const Vector>& x);
Vector borehole_to_unit(const Eigen::Ref<const Vector>& z);

Problem borehole_problem();

//! Vertex enumeration followed by projected-BFGS refinement with central
//! finite differences. Verifies pinned optima; exhaustive in 2^dim, so the
//! dimension is capped at 20.
std::pair<Vector, double> locate_box_minimum(const Problem& problem);

//! Latin hypercube on [0,1]^d (one point per axis stratum per column),
//! improved by accept-only-improving maximin swap iterations. Deterministic
//! per seed.
Matrix lhs_design(int n, int d, std::uint64_t seed, int n_improve = 100);

double min_pairwise_distance(const Matrix& points);

struct TimingRow {
  int q = 0;
  std::string op;    // "qei" or "qei-grad"
  std::string mode;  // "analytic", "tangent" or "proxy"
  double mean_seconds = 0.0;
  std::map<int, long long> calls;  // CDF tally of one evaluation
};

//! Times criterion and gradient evaluations over n_batches uniform batches
//! shared across modes. The value op runs in analytic and tangent modes, the
//! gradient op in all requested modes ("proxy" has no value form). Tallies
//! are measured once per row; they do not depend on the batch.
std::vector<TimingRow> timing_bench(const gp::GpModel& model,
                                    const std::vector<int>& q_list,
                                    const std::vector<std::string>& modes,
                                    int n_batches, std::uint64_t seed,
                                    double cdf_tol = 1e-3);

struct ExperimentSpec {
  Problem problem;
  int q = 4;
  int n_iterations = 20;
  int n_seeds = 5;
  std::vector<optimize::Strategy> strategies;
  int n0 = 80;  // initial design size, at least dim + 2
  //! Assumed objective wall cost in seconds; one batch evaluates in parallel,
  //! so each scenario charges this once per iteration.
  std::vector<double> eval_time_models = {0.0, 120.0, 3600.0};
  optimize::OptimizerConfig cfg;
  std::uint64_t seed = 0;
  int lhs_improve = 200;
};

struct ExperimentResult {
  std::vector<std::string> history_files;
  //! "strategy seed k: message" for runs that threw; the others continue.
  std::vector<std::string> failures;
};

//! Runs every (strategy, seed) pair, writing per-run histories
//! (history-<strategy>-seed<k>.jsonl), a median regret table (regret.csv,
//! iteration x strategy) and one synthetic wall-clock regret series per cost
//! scenario (walltime-<seconds>s.csv). Requires a known optimum for regret.
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::string& out_dir);

}  // namespace qeikit::bench

#endif  // QEIKIT_BENCH_HPP
