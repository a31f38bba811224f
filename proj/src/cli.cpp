/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#include "qeikit/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qeikit/bench.hpp"
#include "qeikit/io.hpp"
#include "qeikit/moments.hpp"
#include "qeikit/mvn.hpp"
#include "qeikit/optimize.hpp"
#include "qeikit/qei.hpp"

namespace qeikit::cli {

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open for reading: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::exception& e) {
    throw ContractError(path + ": " + e.what());
  }
}

Vector vector_of(const json& j, const std::string& what) {
  if (!j.is_array()) throw ContractError(what + ": expected an array");
  Vector out(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    out[static_cast<int>(i)] = j.at(i).get<double>();
  return out;
}

Matrix matrix_of(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty())
    throw ContractError(what + ": expected a nonempty array of rows");
  Matrix out(static_cast<int>(j.size()), static_cast<int>(j.at(0).size()));
  for (int i = 0; i < out.rows(); ++i) {
    Vector row = vector_of(j.at(i), what);
    if (row.size() != out.cols()) throw ContractError(what + ": ragged rows");
    out.row(i) = row.transpose();
  }
  return out;
}

json matrix_json(const Matrix& m) {
  json out = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

json tally_json(const CallCounter& counter) {
  json out = json::object();
  for (const auto& [dim, count] : counter.by_dimension())
    out[std::to_string(dim)] = count;
  return out;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw ContractError("cannot open for writing: " + out_path);
  out << text;
}

void emit_json(const json& j, const std::string& out_path) {
  emit(j.dump(2) + "\n", out_path);
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stoi(cell));
    } catch (const std::exception&) {
      throw ContractError("not an integer: '" + cell + "'");
    }
  }
  if (out.empty()) throw ContractError("empty integer list");
  return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ContractError("not a number: '" + cell + "'");
    }
  }
  if (out.empty()) throw ContractError("empty number list");
  return out;
}

qei::GradScheme parse_scheme(const std::string& mode) {
  if (mode == "analytic") return qei::GradScheme::analytic;
  if (mode == "tangent") return qei::GradScheme::tangent;
  if (mode == "proxy") return qei::GradScheme::proxy;
  throw ContractError("unknown mode '" + mode + "'");
}

qei::QeiMode parse_value_mode(const std::string& mode) {
  if (mode == "analytic") return qei::QeiMode::analytic;
  if (mode == "tangent") return qei::QeiMode::tangent;
  throw ContractError("unknown value mode '" + mode +
                      "' (expected analytic or tangent)");
}

std::string batch_csv_text(const Matrix& m) {
  std::ostringstream out;
  for (int j = 0; j < m.cols(); ++j) {
    out << "x_" << (j + 1);
    out << (j + 1 < m.cols() ? ',' : '\n');
  }
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      out << format_double(m(i, j));
      out << (j + 1 < m.cols() ? ',' : '\n');
    }
  }
  return out.str();
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"multipoint expected-improvement toolkit"};
  app.require_subcommand(1);

  std::string model_path, batch_path, input_path, out_path;
  std::string mode = "analytic", format = "json";
  int q = 2, alpha = 1, iters = 20, n0 = 80, starts = 10, batches = 10;
  int n = 10, d = 2, improve = 100;
  double eps = 1e-4, tol = 1e-7;
  std::uint64_t seed = 0;
  std::string strategy = "qei-tangent", problem_name = "borehole";
  std::string q_csv = "2,4,8", modes_csv = "all", eval_times = "0,120,3600";

  auto* sc_mvn = app.add_subcommand("mvn-cdf", "Gaussian orthant probability");
  sc_mvn->add_option("--input", input_path, "JSON file {\"x\":[], \"cov\":[[]]}")
      ->required();
  sc_mvn->add_option("--tol", tol, "absolute accuracy");
  sc_mvn->add_option("--seed", seed, "randomization seed");
  sc_mvn->add_option("--out", out_path, "output file (default stdout)");
  sc_mvn->callback([&] {
    json in = read_json_file(input_path);
    Vector x = vector_of(in.at("x"), input_path + ": x");
    SpdMatrix cov(matrix_of(in.at("cov"), input_path + ": cov"));
    CallCounter counter;
    CdfContext ctx{tol, seed, &counter};
    mvn::CdfResult res = mvn::mvn_cdf(x, cov, ctx);
    emit_json({{"value", res.value},
               {"error_estimate", res.error_estimate},
               {"n_evals", res.n_evals},
               {"calls", tally_json(counter)}},
              out_path);
  });

  auto* sc_mom = app.add_subcommand("moments", "truncated Gaussian moments");
  sc_mom->add_option("--input", input_path,
                     "JSON file {\"k\":int, \"mean\":[], \"cov\":[[]]}")
      ->required();
  sc_mom->add_option("--alpha", alpha, "moment order, 1 or 2");
  sc_mom->add_option("--mode", mode, "analytic|tangent (tangent: alpha=1)");
  sc_mom->add_option("--eps", eps, "tangent step");
  sc_mom->add_option("--tol", tol, "CDF absolute accuracy");
  sc_mom->add_option("--seed", seed, "randomization seed");
  sc_mom->add_option("--out", out_path, "output file (default stdout)");
  sc_mom->callback([&] {
    json in = read_json_file(input_path);
    const int k = in.at("k").get<int>();
    GaussianView g(vector_of(in.at("mean"), input_path + ": mean"),
                   SpdMatrix(matrix_of(in.at("cov"), input_path + ": cov")));
    CallCounter counter;
    CdfContext ctx{tol, seed, &counter};
    double value = 0.0;
    if (alpha == 1) {
      value = mode == "tangent" ? moments::moment1_tangent(k, g, eps, ctx)
                                : moments::moment1(k, g, ctx);
    } else if (alpha == 2) {
      if (mode == "tangent")
        throw ContractError("moments: tangent mode covers alpha=1 only");
      value = moments::moment2(k, g, ctx);
    } else {
      throw ContractError("moments: alpha must be 1 or 2");
    }
    emit_json({{"value", value}, {"calls", tally_json(counter)}}, out_path);
  });

  auto* sc_eval = app.add_subcommand("qei-eval", "batch criterion value");
  sc_eval->add_option("--model", model_path, "model snapshot JSON")->required();
  sc_eval->add_option("--batch", batch_path, "batch CSV")->required();
  sc_eval->add_option("--mode", mode, "analytic|tangent");
  sc_eval->add_option("--alpha", alpha, "improvement exponent, 1 or 2");
  sc_eval->add_option("--eps", eps, "tangent step");
  sc_eval->add_option("--tol", tol, "CDF absolute accuracy");
  sc_eval->add_option("--seed", seed, "randomization seed");
  sc_eval->add_option("--out", out_path, "output file (default stdout)");
  sc_eval->callback([&] {
    gp::GpModel model = io::read_model_json(model_path);
    Matrix batch = io::read_batch_csv(batch_path);
    CallCounter counter;
    CdfContext ctx{tol, seed, &counter};
    const double value =
        qei::qei(model, batch, alpha, parse_value_mode(mode), ctx, eps);
    emit_json({{"value", value},
               {"calls", tally_json(counter)},
               {"total_calls", counter.total()},
               {"error_bound", tol * static_cast<double>(counter.total())}},
              out_path);
  });

  auto* sc_grad = app.add_subcommand("qei-grad", "batch criterion gradient");
  sc_grad->add_option("--model", model_path, "model snapshot JSON")->required();
  sc_grad->add_option("--batch", batch_path, "batch CSV")->required();
  sc_grad->add_option("--mode", mode, "analytic|tangent|proxy");
  sc_grad->add_option("--eps", eps, "tangent/proxy step");
  sc_grad->add_option("--tol", tol, "CDF absolute accuracy");
  sc_grad->add_option("--seed", seed, "randomization seed");
  sc_grad->add_option("--out", out_path, "output file (default stdout)");
  sc_grad->callback([&] {
    gp::GpModel model = io::read_model_json(model_path);
    Matrix batch = io::read_batch_csv(batch_path);
    CallCounter counter;
    CdfContext ctx{tol, seed, &counter};
    qei::GradMode gm;
    gm.scheme = parse_scheme(mode);
    gm.epsilon = eps;
    Matrix grad = qei::qei_grad(model, batch, gm, ctx);
    emit_json({{"gradient", matrix_json(grad)},
               {"calls", tally_json(counter)},
               {"total_calls", counter.total()}},
              out_path);
  });

  auto* sc_max = app.add_subcommand("maximize", "multistart batch selection");
  sc_max->add_option("--model", model_path, "model snapshot JSON")->required();
  sc_max->add_option("--q", q, "batch size")->required();
  sc_max->add_option("--mode", mode, "analytic|tangent|proxy");
  sc_max->add_option("--eps", eps, "tangent/proxy step");
  sc_max->add_option("--seed", seed, "multistart seed");
  sc_max->add_option("--tol", tol, "line-search CDF accuracy");
  sc_max->add_option("--starts", starts, "number of starts");
  sc_max->add_option("--out", out_path, "output file (default stdout)");
  sc_max->callback([&] {
    gp::GpModel model = io::read_model_json(model_path);
    optimize::OptimizerConfig cfg;
    cfg.n_starts = starts;
    cfg.grad_mode.scheme = parse_scheme(mode);
    cfg.grad_mode.epsilon = eps;
    cfg.seed = seed;
    cfg.search_tol = tol;
    cfg.report_tol = tol / 10.0;
    optimize::MaximizeResult res = optimize::maximize_qei(model, q, cfg);
    emit_json({{"batch", matrix_json(res.batch)},
               {"value", res.value},
               {"n_starts", res.diagnostics.n_starts},
               {"n_converged", res.diagnostics.n_converged},
               {"line_search_warning", res.diagnostics.line_search_warning},
               {"best_start_value", res.diagnostics.best_start_value}},
              out_path);
  });

  auto* sc_run = app.add_subcommand("run", "batch-sequential campaign");
  sc_run->add_option("--problem", problem_name, "objective (borehole)");
  sc_run->add_option("--q", q, "batch size");
  sc_run->add_option("--iters", iters, "number of iterations");
  sc_run->add_option("--strategy", strategy,
                     "qei-analytic|qei-tangent|qei-proxy|cl-mix");
  sc_run->add_option("--seed", seed, "campaign seed");
  sc_run->add_option("--n0", n0, "initial design size");
  sc_run->add_option("--starts", starts, "multistart budget");
  sc_run->add_option("--eval-times", eval_times,
                     "synthetic objective costs in seconds, comma separated");
  sc_run->add_option("--out", out_path, "results directory")->required();
  sc_run->callback([&] {
    if (problem_name != "borehole")
      throw ContractError("unknown problem '" + problem_name + "'");
    bench::ExperimentSpec spec;
    spec.problem = bench::borehole_problem();
    spec.q = q;
    spec.n_iterations = iters;
    spec.n_seeds = 1;
    spec.strategies = {optimize::parse_strategy(strategy)};
    spec.n0 = n0;
    spec.eval_time_models = parse_double_list(eval_times);
    spec.cfg.n_starts = starts;
    spec.seed = seed;
    bench::ExperimentResult res = bench::run_experiment(spec, out_path);
    json files = json::array();
    for (const std::string& f : res.history_files) files.push_back(f);
    json fails = json::array();
    for (const std::string& f : res.failures) fails.push_back(f);
    emit_json({{"history_files", files}, {"failures", fails}}, "");
  });

  auto* sc_timing = app.add_subcommand("bench-timing", "evaluation cost table");
  sc_timing->add_option("--q", q_csv, "batch sizes, comma separated");
  sc_timing->add_option("--modes", modes_csv,
                        "all or a comma list of analytic,tangent,proxy");
  sc_timing->add_option("--batches", batches, "batches per row");
  sc_timing->add_option("--n0", n0, "model design size");
  double timing_tol = 1e-3;
  sc_timing->add_option("--tol", timing_tol, "CDF absolute accuracy");
  sc_timing->add_option("--seed", seed, "batch seed");
  sc_timing->add_option("--format", format, "csv|json");
  sc_timing->add_option("--out", out_path, "output file (default stdout)");
  sc_timing->callback([&] {
    if (format != "csv" && format != "json")
      throw ContractError("unknown format '" + format + "'");
    std::vector<std::string> modes;
    if (modes_csv == "all") {
      modes = {"analytic", "tangent", "proxy"};
    } else {
      std::stringstream ss(modes_csv);
      std::string cell;
      while (std::getline(ss, cell, ',')) modes.push_back(cell);
    }
    const int dim = 8;
    gp::Design design;
    design.points = bench::lhs_design(std::max(n0, dim + 2), dim,
                                      seed * 2654435761ULL + 1, 100);
    design.values = Vector(design.points.rows());
    for (int i = 0; i < design.points.rows(); ++i)
      design.values[i] = bench::borehole(design.points.row(i).transpose());
    design.noise_vars = Vector::Zero(design.points.rows());
    gp::GpModel model = gp::fit(design, 2, seed);
    std::vector<bench::TimingRow> rows = bench::timing_bench(
        model, parse_int_list(q_csv), modes, batches, seed, timing_tol);

    if (format == "json") {
      json out = json::array();
      for (const bench::TimingRow& r : rows) {
        json calls = json::object();
        for (const auto& [dd, c] : r.calls) calls[std::to_string(dd)] = c;
        out.push_back({{"q", r.q},
                       {"op", r.op},
                       {"mode", r.mode},
                       {"mean_seconds", r.mean_seconds},
                       {"calls", calls}});
      }
      emit_json(out, out_path);
    } else if (format == "csv") {
      std::ostringstream out;
      out << "q,op,mode,mean_seconds,total_calls,calls\n";
      for (const bench::TimingRow& r : rows) {
        long long total = 0;
        std::ostringstream tally;
        bool first = true;
        for (const auto& [dd, c] : r.calls) {
          total += c;
          tally << (first ? "" : ";") << dd << ":" << c;
          first = false;
        }
        out << r.q << "," << r.op << "," << r.mode << ","
            << format_double(r.mean_seconds) << "," << total << ","
            << tally.str() << "\n";
      }
      emit(out.str(), out_path);
    } else {
      throw ContractError("unknown format '" + format + "'");
    }
  });

  auto* sc_lhs = app.add_subcommand("lhs", "Latin hypercube design");
  sc_lhs->add_option("--n", n, "number of points")->required();
  sc_lhs->add_option("--d", d, "dimension")->required();
  sc_lhs->add_option("--seed", seed, "design seed");
  sc_lhs->add_option("--improve", improve, "maximin swap iterations");
  sc_lhs->add_option("--out", out_path, "output file (default stdout)");
  sc_lhs->callback([&] {
    emit(batch_csv_text(bench::lhs_design(n, d, seed, improve)), out_path);
  });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\nSee 'qeikit --help'.\n";
    return 64;
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace qeikit::cli
