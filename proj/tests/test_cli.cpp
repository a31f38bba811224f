/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "qeikit/cli.hpp"
#include "qeikit/io.hpp"
#include "qeikit/moments.hpp"
#include "qeikit/mvn.hpp"
#include "qeikit/qei.hpp"

namespace {

using namespace qeikit;
using nlohmann::json;

int run_cli(std::initializer_list<std::string> args) {
  std::vector<std::string> full{"qeikit"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const std::string& a : full) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

//! Scratch directory for one test, removed on destruction.
struct TempDir {
  std::filesystem::path dir;
  explicit TempDir(const std::string& stem) {
    dir = std::filesystem::temp_directory_path() /
          ("qeikit-cli-" + stem + "-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
  }
  std::string operator/(const std::string& name) const {
    return (dir / name).string();
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return json::parse(in);
}

//! Noise-free two-dimensional test model shared across subcommand tests.
gp::GpModel test_model() {
  gp::Design design;
  design.points = Matrix(6, 2);
  design.points << 0.1, 0.2, 0.35, 0.7, 0.5, 0.15, 0.65, 0.9, 0.8, 0.4,
      0.95, 0.65;
  design.values = Vector(6);
  for (int i = 0; i < 6; ++i)
    design.values[i] = std::sin(6.0 * design.points(i, 0)) +
                       std::cos(4.0 * design.points(i, 1));
  design.noise_vars = Vector::Zero(6);
  gp::Kernel kernel;
  kernel.variance = 1.2;
  kernel.lengthscales = Vector(2);
  kernel.lengthscales << 0.4, 0.5;
  return gp::make_model(design, kernel);
}

}  // namespace

TEST_CASE("usage errors exit with 64") {
  CHECK(run_cli({}) == 64);
  CHECK(run_cli({"no-such-command"}) == 64);
  CHECK(run_cli({"mvn-cdf"}) == 64);          // missing required --input
  CHECK(run_cli({"lhs", "--n", "5"}) == 64);  // missing required --d
  CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("mvn-cdf matches the library") {
  TempDir tmp("mvn");
  write_text(tmp / "in.json",
             "{\"x\": [0.3, -0.2], \"cov\": [[1.0, 0.4], [0.4, 1.5]]}");
  CHECK(run_cli({"mvn-cdf", "--input", tmp / "in.json", "--tol", "1e-7",
                 "--out", tmp / "out.json"}) == 0);
  json out = read_json(tmp / "out.json");

  Vector x(2);
  x << 0.3, -0.2;
  Matrix cov(2, 2);
  cov << 1.0, 0.4, 0.4, 1.5;
  mvn::CdfResult want = mvn::mvn_cdf(x, SpdMatrix(cov), {});
  CHECK(out.at("value").get<double>() == want.value);
  CHECK(out.at("calls").at("2").get<long long>() == 1);

  write_text(tmp / "broken.json", "{\"x\": [0.3,");
  CHECK(run_cli({"mvn-cdf", "--input", tmp / "broken.json"}) == 2);
  CHECK(run_cli({"mvn-cdf", "--input", tmp / "missing.json"}) == 2);
}

TEST_CASE("moments subcommand matches the library") {
  TempDir tmp("moments");
  write_text(tmp / "in.json",
             "{\"k\": 1, \"mean\": [0.2, -0.1, 0.05],"
             " \"cov\": [[1.0, 0.3, 0.1], [0.3, 0.8, 0.2],"
             " [0.1, 0.2, 1.1]]}");
  CHECK(run_cli({"moments", "--input", tmp / "in.json", "--alpha", "1",
                 "--tol", "1e-6", "--seed", "3", "--out",
                 tmp / "out.json"}) == 0);
  json out = read_json(tmp / "out.json");

  Vector mean(3);
  mean << 0.2, -0.1, 0.05;
  Matrix cov(3, 3);
  cov << 1.0, 0.3, 0.1, 0.3, 0.8, 0.2, 0.1, 0.2, 1.1;
  CdfContext ctx;
  ctx.abs_tol = 1e-6;
  ctx.seed = 3;
  const double want = moments::moment1(1, GaussianView(mean, SpdMatrix(cov)), ctx);
  CHECK(out.at("value").get<double>() == want);

  CHECK(run_cli({"moments", "--input", tmp / "in.json", "--alpha", "3"}) == 2);
  CHECK(run_cli({"moments", "--input", tmp / "in.json", "--alpha", "2",
                 "--mode", "tangent"}) == 2);
}

TEST_CASE("qei-eval and qei-grad agree with the library") {
  TempDir tmp("qei");
  gp::GpModel model = test_model();
  io::write_model_json(tmp / "model.json", model);
  Matrix batch(2, 2);
  batch << 0.25, 0.45, 0.7, 0.3;
  io::write_batch_csv(tmp / "batch.csv", batch);

  CHECK(run_cli({"qei-eval", "--model", tmp / "model.json", "--batch",
                 tmp / "batch.csv", "--mode", "analytic", "--alpha", "1",
                 "--out", tmp / "eval.json"}) == 0);
  json eval = read_json(tmp / "eval.json");
  const double want = qei::qei(model, batch, 1, qei::QeiMode::analytic, {});
  CHECK(eval.at("value").get<double>() == want);
  CHECK(eval.at("total_calls").get<long long>() == 5);
  // The error bound scales the CDF tolerance by the number of calls.
  CHECK(eval.at("error_bound").get<double>() ==
        doctest::Approx(5.0 * 1e-7).epsilon(1e-12));

  CHECK(run_cli({"qei-grad", "--model", tmp / "model.json", "--batch",
                 tmp / "batch.csv", "--mode", "analytic", "--out",
                 tmp / "grad.json"}) == 0);
  json grad_out = read_json(tmp / "grad.json");
  qei::GradMode gm;
  gm.scheme = qei::GradScheme::analytic;
  Matrix want_grad = qei::qei_grad(model, batch, gm, {});
  REQUIRE(grad_out.at("gradient").size() == 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(grad_out.at("gradient").at(i).at(j).get<double>() ==
            want_grad(i, j));

  CHECK(run_cli({"qei-eval", "--model", tmp / "model.json", "--batch",
                 tmp / "batch.csv", "--mode", "fancy"}) == 2);
  CHECK(run_cli({"qei-eval", "--model", tmp / "missing.json", "--batch",
                 tmp / "batch.csv"}) == 2);
}

TEST_CASE("maximize returns a batch inside the box") {
  TempDir tmp("maximize");
  io::write_model_json(tmp / "model.json", test_model());
  CHECK(run_cli({"maximize", "--model", tmp / "model.json", "--q", "2",
                 "--mode", "tangent", "--starts", "2", "--tol", "1e-4",
                 "--seed", "7", "--out", tmp / "out.json"}) == 0);
  json out = read_json(tmp / "out.json");
  REQUIRE(out.at("batch").size() == 2);
  for (const json& row : out.at("batch")) {
    REQUIRE(row.size() == 2);
    for (const json& cell : row) {
      CHECK(cell.get<double>() >= 0.0);
      CHECK(cell.get<double>() <= 1.0);
    }
  }
  CHECK(out.at("value").get<double>() > 0.0);
  CHECK(out.at("n_starts").get<int>() == 2);
}

TEST_CASE("lhs writes a loadable batch") {
  TempDir tmp("lhs");
  CHECK(run_cli({"lhs", "--n", "6", "--d", "3", "--seed", "11", "--improve",
                 "20", "--out", tmp / "design.csv"}) == 0);
  Matrix pts = io::read_batch_csv(tmp / "design.csv");
  CHECK(pts.rows() == 6);
  CHECK(pts.cols() == 3);
  CHECK(pts.minCoeff() >= 0.0);
  CHECK(pts.maxCoeff() <= 1.0);
}

TEST_CASE("bench-timing emits the csv table") {
  TempDir tmp("timing");
  CHECK(run_cli({"bench-timing", "--q", "2", "--modes", "proxy", "--batches",
                 "1", "--n0", "20", "--seed", "4", "--format", "csv", "--out",
                 tmp / "rows.csv"}) == 0);
  std::ifstream in(tmp / "rows.csv");
  std::string header, row, extra;
  REQUIRE(std::getline(in, header));
  CHECK(header == "q,op,mode,mean_seconds,total_calls,calls");
  REQUIRE(std::getline(in, row));
  CHECK(row.find("2,qei-grad,proxy,") == 0);
  CHECK(row.find("2:18") != std::string::npos);  // q (d + 1) bivariate calls
  CHECK_FALSE(std::getline(in, extra));

  CHECK(run_cli({"bench-timing", "--format", "yaml"}) == 2);
}

TEST_CASE("run writes a results directory") {
  TempDir tmp("run");
  const std::string out_dir = tmp / "results";
  CHECK(run_cli({"run", "--problem", "borehole", "--q", "2", "--iters", "1",
                 "--strategy", "cl-mix", "--seed", "2", "--n0", "10",
                 "--starts", "2", "--out", out_dir}) == 0);
  CHECK(std::filesystem::exists(out_dir + "/history-cl-mix-seed0.jsonl"));
  CHECK(std::filesystem::exists(out_dir + "/regret.csv"));
  CHECK(std::filesystem::exists(out_dir + "/walltime-120s.csv"));
  optimize::RunHistory history =
      io::read_history_jsonl(out_dir + "/history-cl-mix-seed0.jsonl");
  CHECK(history.q == 2);
  CHECK(history.iterations.size() == 1);

  CHECK(run_cli({"run", "--problem", "rastrigin", "--out", out_dir}) == 2);
}
