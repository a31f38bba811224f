/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "qeikit/bench.hpp"
#include "qeikit/core.hpp"
#include "qeikit/gp.hpp"
#include "qeikit/io.hpp"
#include "qeikit/mvn.hpp"
#include "qeikit/optimize.hpp"
#include "qeikit/qei.hpp"

namespace py = pybind11;
using namespace qeikit;

namespace {

qei::QeiMode parse_mode(const std::string& name) {
  if (name == "analytic") return qei::QeiMode::analytic;
  if (name == "tangent") return qei::QeiMode::tangent;
  throw ContractError("mode must be 'analytic' or 'tangent', got '" + name +
                      "'");
}

qei::GradScheme parse_scheme(const std::string& name) {
  if (name == "analytic") return qei::GradScheme::analytic;
  if (name == "tangent") return qei::GradScheme::tangent;
  if (name == "proxy") return qei::GradScheme::proxy;
  throw ContractError("scheme must be 'analytic', 'tangent' or 'proxy', got '" +
                      name + "'");
}

std::string scheme_name(qei::GradScheme s) {
  switch (s) {
    case qei::GradScheme::analytic: return "analytic";
    case qei::GradScheme::tangent: return "tangent";
    case qei::GradScheme::proxy: return "proxy";
  }
  return "analytic";
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Batch expected-improvement toolkit: Gaussian-process regression, "
      "closed-form multipoint expected improvement with three gradient "
      "schemes, batch maximizers and benchmark utilities. Matrices are "
      "numpy arrays; batches are q x d with rows in the unit cube.";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError",
                                         PyExc_ArithmeticError);

  // ---- observations and models ------------------------------------------
  py::class_<gp::Design>(m, "Design",
                         "Observations on the unit cube. noise_vars holds "
                         "per-point observation noise variances; omitted "
                         "means noise-free.")
      .def(py::init([](Matrix points, Vector values,
                       std::optional<Vector> noise_vars) {
             Vector nv = noise_vars ? std::move(*noise_vars)
                                    : Vector(Vector::Zero(values.size()));
             gp::Design d{std::move(points), std::move(values), std::move(nv)};
             gp::validate_design(d);
             return d;
           }),
           py::arg("points"), py::arg("values"),
           py::arg("noise_vars") = py::none())
      .def_readwrite("points", &gp::Design::points)
      .def_readwrite("values", &gp::Design::values)
      .def_readwrite("noise_vars", &gp::Design::noise_vars)
      .def("__len__",
           [](const gp::Design& d) { return d.points.rows(); });

  py::class_<gp::Kernel>(m, "Kernel",
                         "Matern 3/2 tensor-product covariance with a signal "
                         "variance and one lengthscale per coordinate.")
      .def(py::init([](double variance, Vector lengthscales) {
             return gp::Kernel{variance, std::move(lengthscales)};
           }),
           py::arg("variance"), py::arg("lengthscales"))
      .def_readwrite("variance", &gp::Kernel::variance)
      .def_readwrite("lengthscales", &gp::Kernel::lengthscales);

  py::class_<gp::GpModel>(m, "GpModel",
                          "Fitted model with a cached factorization. "
                          "Immutable; update() and fit() build new models.")
      .def_readonly("design", &gp::GpModel::design)
      .def_readonly("kernel", &gp::GpModel::kernel)
      .def_readonly("trend", &gp::GpModel::trend);

  py::class_<gp::PosteriorBatch>(
      m, "PosteriorBatch",
      "Posterior law of the latent values at a batch. mean_jac[i] is the "
      "gradient of the posterior mean at batch point i; cov_jac[i][u, j] "
      "differentiates cov[i, u] in coordinate j of point i through the "
      "first slot only.")
      .def_readonly("batch_points", &gp::PosteriorBatch::batch_points)
      .def_readonly("mean", &gp::PosteriorBatch::mean)
      .def_property_readonly(
          "cov", [](const gp::PosteriorBatch& p) { return p.cov.mat(); })
      .def_readonly("mean_jac", &gp::PosteriorBatch::mean_jac)
      .def_readonly("cov_jac", &gp::PosteriorBatch::cov_jac);

  m.def("make_model", &gp::make_model, py::arg("design"), py::arg("kernel"),
        "Factorize the Gram matrix for fixed hyperparameters; the constant "
        "trend is profiled by generalized least squares.");
  m.def("fit", &gp::fit, py::arg("design"), py::arg("n_restarts") = 5,
        py::arg("seed") = 0,
        "Multistart maximum-likelihood fit of the kernel hyperparameters. "
        "Deterministic for a fixed seed.");
  m.def("posterior", &gp::posterior, py::arg("model"), py::arg("batch"));
  m.def(
      "update",
      [](const gp::GpModel& model, const Matrix& new_points,
         const Vector& new_values, std::optional<Vector> new_noise) {
        Vector nv = new_noise ? std::move(*new_noise)
                              : Vector(Vector::Zero(new_values.size()));
        return gp::update(model, new_points, new_values, nv);
      },
      py::arg("model"), py::arg("new_points"), py::arg("new_values"),
      py::arg("new_noise") = py::none(),
      "Append observations and refactorize under unchanged hyperparameters.");
  m.def("sample_conditional", &gp::sample_conditional, py::arg("model"),
        py::arg("points"), py::arg("n_draws"), py::arg("seed"),
        "Exact joint posterior draws, one per row. Deterministic per seed.");

  // ---- Gaussian orthant probabilities ------------------------------------
  py::class_<mvn::CdfResult>(m, "CdfResult")
      .def_readonly("value", &mvn::CdfResult::value)
      .def_readonly("error_estimate", &mvn::CdfResult::error_estimate)
      .def_readonly("n_evals", &mvn::CdfResult::n_evals);

  m.def(
      "mvn_cdf",
      [](const Vector& x, const Matrix& sigma, double tol,
         std::uint64_t seed) {
        CdfContext ctx{tol, seed, nullptr};
        return mvn::mvn_cdf(x, SpdMatrix(sigma), ctx);
      },
      py::arg("x"), py::arg("sigma"), py::arg("tol") = 1e-7,
      py::arg("seed") = 0,
      "P(X <= x) for X ~ N(0, sigma). Low dimensions use closed forms; "
      "higher dimensions a deterministic quasi-Monte Carlo rule with the "
      "requested absolute accuracy.");

  // ---- the batch criterion ------------------------------------------------
  py::class_<qei::BestObserved>(m, "BestObserved")
      .def_readonly("value", &qei::BestObserved::value)
      .def_readonly("index", &qei::BestObserved::index);
  m.def("best_observed", &qei::best_observed, py::arg("design"));

  py::class_<moments::McEstimate>(m, "McEstimate")
      .def_readonly("value", &moments::McEstimate::value)
      .def_readonly("std_error", &moments::McEstimate::std_error);

  m.def(
      "qei",
      [](const gp::GpModel& model, const Matrix& batch, int alpha,
         const std::string& mode, double tol, std::uint64_t seed,
         double tangent_eps) {
        CdfContext ctx{tol, seed, nullptr};
        return qei::qei(model, batch, alpha, parse_mode(mode), ctx,
                        tangent_eps);
      },
      py::arg("model"), py::arg("batch"), py::arg("alpha") = 1,
      py::arg("mode") = "analytic", py::arg("tol") = 1e-7,
      py::arg("seed") = 0, py::arg("tangent_eps") = 1e-4,
      "Expected improvement of the batch minimum to the power alpha, in "
      "closed form ('analytic') or through the tilted-difference surrogate "
      "('tangent', O(tangent_eps^2) bias).");
  m.def(
      "qei_grad",
      [](const gp::GpModel& model, const Matrix& batch,
         const std::string& scheme, double epsilon, double tol,
         std::uint64_t seed) {
        qei::GradMode gm{parse_scheme(scheme), epsilon};
        CdfContext ctx{tol, seed, nullptr};
        return qei::qei_grad(model, batch, gm, ctx);
      },
      py::arg("model"), py::arg("batch"), py::arg("scheme") = "analytic",
      py::arg("epsilon") = 1e-4, py::arg("tol") = 1e-7, py::arg("seed") = 0,
      "Gradient of the alpha = 1 criterion, q x d. Schemes: 'analytic' "
      "(exact), 'tangent' (exact derivative of the surrogate), 'proxy' "
      "(freezes the improvement event; cheap but biased).");
  m.def("qei_mc", &qei::qei_mc, py::arg("model"), py::arg("batch"),
        py::arg("alpha"), py::arg("n_sims"), py::arg("seed"),
        "Monte Carlo reference from joint posterior draws. Deterministic "
        "per seed.");

  // ---- batch selection -----------------------------------------------------
  py::class_<optimize::OptimizerConfig>(
      m, "OptimizerConfig",
      "Knobs for batch selection. scheme/epsilon drive the BFGS gradient; "
      "final arbitration always re-evaluates the tangent criterion at "
      "report_tol.")
      .def(py::init<>())
      .def_property(
          "scheme",
          [](const optimize::OptimizerConfig& c) {
            return scheme_name(c.grad_mode.scheme);
          },
          [](optimize::OptimizerConfig& c, const std::string& name) {
            c.grad_mode.scheme = parse_scheme(name);
          })
      .def_property(
          "epsilon",
          [](const optimize::OptimizerConfig& c) {
            return c.grad_mode.epsilon;
          },
          [](optimize::OptimizerConfig& c, double eps) {
            c.grad_mode.epsilon = eps;
          })
      .def_readwrite("n_starts", &optimize::OptimizerConfig::n_starts)
      .def_readwrite("alpha", &optimize::OptimizerConfig::alpha)
      .def_readwrite("stop_factr", &optimize::OptimizerConfig::stop_factr)
      .def_readwrite("grad_tol", &optimize::OptimizerConfig::grad_tol)
      .def_readwrite("max_iters", &optimize::OptimizerConfig::max_iters)
      .def_readwrite("seed", &optimize::OptimizerConfig::seed)
      .def_readwrite("search_tol", &optimize::OptimizerConfig::search_tol)
      .def_readwrite("report_tol", &optimize::OptimizerConfig::report_tol)
      .def_readwrite("inner_starts", &optimize::OptimizerConfig::inner_starts)
      .def_readwrite("inner_max_iters",
                     &optimize::OptimizerConfig::inner_max_iters)
      .def_readwrite("fit_restarts", &optimize::OptimizerConfig::fit_restarts);

  py::class_<optimize::LiePolicy>(
      m, "LiePolicy", "Pseudo-observation rule for the liar heuristics.")
      .def_static("fixed_value", &optimize::LiePolicy::fixed_value,
                  py::arg("value"))
      .def_static("quantile", &optimize::LiePolicy::quantile, py::arg("level"))
      .def_static("random_conditional", &optimize::LiePolicy::random_conditional);

  py::class_<optimize::MaximizeDiagnostics>(m, "MaximizeDiagnostics")
      .def_readonly("n_starts", &optimize::MaximizeDiagnostics::n_starts)
      .def_readonly("n_converged",
                    &optimize::MaximizeDiagnostics::n_converged)
      .def_readonly("line_search_warning",
                    &optimize::MaximizeDiagnostics::line_search_warning)
      .def_readonly("best_start_value",
                    &optimize::MaximizeDiagnostics::best_start_value);

  py::class_<optimize::MaximizeResult>(m, "MaximizeResult")
      .def_readonly("batch", &optimize::MaximizeResult::batch)
      .def_readonly("value", &optimize::MaximizeResult::value)
      .def_readonly("diagnostics", &optimize::MaximizeResult::diagnostics);

  py::class_<optimize::ClMixResult>(m, "ClMixResult")
      .def_readonly("batch", &optimize::ClMixResult::batch)
      .def_readonly("value", &optimize::ClMixResult::value)
      .def_readonly("candidates", &optimize::ClMixResult::candidates)
      .def_readonly("candidate_values",
                    &optimize::ClMixResult::candidate_values);

  m.def("maximize_qei", &optimize::maximize_qei, py::arg("model"),
        py::arg("q"), py::arg("cfg") = optimize::OptimizerConfig{},
        "Multistart projected-BFGS maximization of the batch criterion over "
        "the unit box. Deterministic for a fixed config.");
  m.def("constant_liar", &optimize::constant_liar, py::arg("model"),
        py::arg("q"), py::arg("lie"),
        py::arg("cfg") = optimize::OptimizerConfig{},
        "Greedy batch construction with pseudo-observations from the lie "
        "policy.");
  m.def("cl_mix", &optimize::cl_mix, py::arg("model"), py::arg("q"),
        py::arg("cfg") = optimize::OptimizerConfig{},
        "Best of the seven liar candidate batches under the batch criterion.");

  // ---- batch-sequential runs ----------------------------------------------
  py::class_<optimize::IterationRecord>(m, "IterationRecord")
      .def_readonly("iteration", &optimize::IterationRecord::iteration)
      .def_readonly("batch", &optimize::IterationRecord::batch)
      .def_readonly("qei_value", &optimize::IterationRecord::qei_value)
      .def_readonly("observations", &optimize::IterationRecord::observations)
      .def_readonly("trend", &optimize::IterationRecord::trend)
      .def_readonly("kernel_variance",
                    &optimize::IterationRecord::kernel_variance)
      .def_readonly("lengthscales", &optimize::IterationRecord::lengthscales)
      .def_readonly("cdf_calls", &optimize::IterationRecord::cdf_calls)
      .def_readonly("select_seconds",
                    &optimize::IterationRecord::select_seconds)
      .def_readonly("eval_seconds", &optimize::IterationRecord::eval_seconds)
      .def_readonly("fit_seconds", &optimize::IterationRecord::fit_seconds)
      .def_readonly("seed", &optimize::IterationRecord::seed)
      .def_readonly("best_observed",
                    &optimize::IterationRecord::best_observed);

  py::class_<optimize::RunHistory>(m, "RunHistory")
      .def_readonly("strategy", &optimize::RunHistory::strategy)
      .def_readonly("q", &optimize::RunHistory::q)
      .def_readonly("initial_best", &optimize::RunHistory::initial_best)
      .def_readonly("aborted", &optimize::RunHistory::aborted)
      .def_readonly("iterations", &optimize::RunHistory::iterations)
      .def_readonly("final_design", &optimize::RunHistory::final_design);

  m.def(
      "run_strategy",
      [](std::function<double(const Eigen::Ref<const Vector>&)> objective,
         int dim, const std::string& strategy, int q, int n_iterations,
         const gp::Design& init_design, std::uint64_t seed,
         const optimize::OptimizerConfig& cfg) {
        optimize::Problem problem{dim, std::move(objective)};
        return optimize::run_strategy(problem,
                                      optimize::parse_strategy(strategy), q,
                                      n_iterations, init_design, seed, cfg);
      },
      py::arg("objective"), py::arg("dim"), py::arg("strategy"), py::arg("q"),
      py::arg("n_iterations"), py::arg("init_design"), py::arg("seed") = 0,
      py::arg("cfg") = optimize::OptimizerConfig{},
      "Batch-sequential minimization loop. strategy is one of "
      "'qei-analytic', 'qei-tangent', 'qei-proxy', 'cl-mix'. The objective "
      "receives unit-cube points as numpy vectors.");

  // ---- benchmark utilities --------------------------------------------------
  py::class_<bench::Problem>(m, "Problem")
      .def_readonly("name", &bench::Problem::name)
      .def_readonly("dim", &bench::Problem::dim)
      .def_readonly("bounds", &bench::Problem::bounds)
      .def_readonly("has_optimum", &bench::Problem::has_optimum)
      .def_readonly("optimum_point", &bench::Problem::optimum_point)
      .def_readonly("optimum_value", &bench::Problem::optimum_value)
      .def("objective",
           [](const bench::Problem& p, const Vector& x) {
             return p.objective(x);
           },
           py::arg("x"));

  m.def("borehole", &bench::borehole, py::arg("x"),
        "Water flow rate through a borehole, eight unit-cube inputs.");
  m.def("borehole_to_physical", &bench::borehole_to_physical, py::arg("x"));
  m.def("borehole_to_unit", &bench::borehole_to_unit, py::arg("z"));
  m.def("borehole_problem", &bench::borehole_problem);
  m.def("lhs_design", &bench::lhs_design, py::arg("n"), py::arg("d"),
        py::arg("seed"), py::arg("n_improve") = 100,
        "Maximin-improved Latin hypercube on the unit cube. Deterministic "
        "per seed.");
  m.def("min_pairwise_distance", &bench::min_pairwise_distance,
        py::arg("points"));

  // ---- file formats shared with the command line ----------------------------
  m.def("read_design_csv", &io::read_design_csv, py::arg("path"));
  m.def("write_design_csv", &io::write_design_csv, py::arg("path"),
        py::arg("design"));
  m.def("read_batch_csv", &io::read_batch_csv, py::arg("path"));
  m.def("write_batch_csv", &io::write_batch_csv, py::arg("path"),
        py::arg("batch"));
  m.def("read_model_json", &io::read_model_json, py::arg("path"));
  m.def("write_model_json", &io::write_model_json, py::arg("path"),
        py::arg("model"),
        "Snapshot the model; loading refactorizes from the stored design "
        "and hyperparameters.");
  m.def("read_history_jsonl", &io::read_history_jsonl, py::arg("path"));
  m.def("write_history_jsonl", &io::write_history_jsonl, py::arg("path"),
        py::arg("history"));
}
