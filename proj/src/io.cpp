/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#include "qeikit/io.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "json.hpp"

namespace qeikit::io {

namespace {

using nlohmann::json;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open for reading: " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot open for writing: " + path);
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, const std::string& path,
                  int line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(cell, &used);
    while (used < cell.size() && std::isspace(cell[used] & 0xff)) ++used;
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ContractError(path + ":" + std::to_string(line_no) +
                        ": not a number: '" + cell + "'");
  }
}

//! Reads a CSV body of fixed width after its header has been validated.
Matrix read_rows(std::ifstream& in, int width, const std::string& path) {
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != width)
      throw ContractError(path + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(width) + " columns, got " +
                          std::to_string(cells.size()));
    std::vector<double> row(width);
    for (int j = 0; j < width; ++j)
      row[j] = parse_cell(cells[j], path, line_no);
    rows.push_back(std::move(row));
  }
  Matrix out(static_cast<int>(rows.size()), width);
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < width; ++j) out(i, j) = rows[i][j];
  return out;
}

//! Validates a header of the form x_1,..,x_d[,extra...]; returns d.
int parse_point_header(const std::vector<std::string>& cells,
                       const std::vector<std::string>& trailing,
                       const std::string& path) {
  const int d = static_cast<int>(cells.size() - trailing.size());
  if (d < 1)
    throw ContractError(path + ": header has no coordinate columns");
  for (int j = 0; j < d; ++j) {
    if (cells[j] != "x_" + std::to_string(j + 1))
      throw ContractError(path + ": expected column x_" +
                          std::to_string(j + 1) + ", got '" + cells[j] + "'");
  }
  for (std::size_t j = 0; j < trailing.size(); ++j) {
    if (cells[d + j] != trailing[j])
      throw ContractError(path + ": expected column " + trailing[j] +
                          ", got '" + cells[d + j] + "'");
  }
  return d;
}

std::string header_line(std::ifstream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw ContractError(path + ": empty file");
  return line;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
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

Vector vector_from(const json& j, const std::string& what) {
  if (!j.is_array()) throw ContractError(what + ": expected an array");
  Vector out(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ContractError(what + ": expected numbers");
    out[static_cast<int>(i)] = j[i].get<double>();
  }
  return out;
}

Matrix matrix_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty())
    throw ContractError(what + ": expected a nonempty array of rows");
  const int cols = static_cast<int>(j[0].size());
  Matrix out(static_cast<int>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    Vector row = vector_from(j[i], what);
    if (row.size() != cols)
      throw ContractError(what + ": ragged rows");
    out.row(static_cast<int>(i)) = row.transpose();
  }
  return out;
}

json parse_json(const std::string& text, const std::string& path) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ContractError(path + ": " + e.what());
  }
}

const json& field(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end())
    throw ContractError(path + ": missing field '" + key + "'");
  return *it;
}

}  // namespace

gp::Design read_design_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  const int d = parse_point_header(split_csv_line(header_line(in, path)),
                                   {"value", "noise_var"}, path);
  Matrix rows = read_rows(in, d + 2, path);
  gp::Design design;
  design.points = rows.leftCols(d);
  design.values = rows.col(d);
  design.noise_vars = rows.col(d + 1);
  gp::validate_design(design);
  return design;
}

void write_design_csv(const std::string& path, const gp::Design& design) {
  gp::validate_design(design);
  std::ofstream out = open_out(path);
  const int d = static_cast<int>(design.points.cols());
  for (int j = 0; j < d; ++j) out << "x_" << (j + 1) << ",";
  out << "value,noise_var\n";
  for (int i = 0; i < design.points.rows(); ++i) {
    for (int j = 0; j < d; ++j) out << format_double(design.points(i, j)) << ",";
    out << format_double(design.values[i]) << ","
        << format_double(design.noise_vars[i]) << "\n";
  }
}

Matrix read_batch_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  const int d =
      parse_point_header(split_csv_line(header_line(in, path)), {}, path);
  Matrix batch = read_rows(in, d, path);
  if (batch.rows() == 0) throw ContractError(path + ": no batch rows");
  return batch;
}

void write_batch_csv(const std::string& path, const Matrix& batch) {
  if (batch.rows() == 0 || batch.cols() == 0)
    throw ContractError("write_batch_csv: empty batch");
  std::ofstream out = open_out(path);
  for (int j = 0; j < batch.cols(); ++j) {
    out << "x_" << (j + 1);
    out << (j + 1 < batch.cols() ? ',' : '\n');
  }
  for (int i = 0; i < batch.rows(); ++i) {
    for (int j = 0; j < batch.cols(); ++j) {
      out << format_double(batch(i, j));
      out << (j + 1 < batch.cols() ? ',' : '\n');
    }
  }
}

gp::GpModel read_model_json(const std::string& path) {
  std::ifstream in = open_in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  json j = parse_json(buf.str(), path);
  if (field(j, "schema", path) != "qeikit-model-v1")
    throw ContractError(path + ": unsupported schema");

  const json& jk = field(j, "kernel", path);
  gp::Kernel kernel;
  kernel.variance = field(jk, "variance", path).get<double>();
  kernel.lengthscales =
      vector_from(field(jk, "lengthscales", path), path + ": lengthscales");

  const json& jd = field(j, "design", path);
  gp::Design design;
  design.points = matrix_from(field(jd, "points", path), path + ": points");
  design.values = vector_from(field(jd, "values", path), path + ": values");
  design.noise_vars =
      vector_from(field(jd, "noise_vars", path), path + ": noise_vars");
  return gp::make_model(design, kernel);
}

void write_model_json(const std::string& path, const gp::GpModel& model) {
  json j;
  j["schema"] = "qeikit-model-v1";
  j["kernel"] = {{"variance", model.kernel.variance},
                 {"lengthscales", vector_json(model.kernel.lengthscales)}};
  j["trend"] = model.trend;
  j["design"] = {{"points", matrix_json(model.design.points)},
                 {"values", vector_json(model.design.values)},
                 {"noise_vars", vector_json(model.design.noise_vars)}};
  open_out(path) << j.dump(2) << "\n";
}

optimize::RunHistory read_history_jsonl(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ContractError(path + ": empty file");
  json head = parse_json(line, path);
  if (field(head, "schema", path) != "qeikit-history-v1")
    throw ContractError(path + ": unsupported schema");

  optimize::RunHistory history;
  history.strategy = field(head, "strategy", path).get<std::string>();
  history.q = field(head, "q", path).get<int>();
  history.initial_best = field(head, "initial_best", path).get<double>();
  history.aborted = field(head, "aborted", path).get<bool>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = parse_json(line, path);
    optimize::IterationRecord rec;
    rec.iteration = field(j, "iteration", path).get<int>();
    rec.batch = matrix_from(field(j, "batch", path), path + ": batch");
    rec.qei_value = field(j, "qei_value", path).get<double>();
    rec.observations =
        vector_from(field(j, "observations", path), path + ": observations");
    rec.trend = field(j, "trend", path).get<double>();
    rec.kernel_variance = field(j, "kernel_variance", path).get<double>();
    rec.lengthscales =
        vector_from(field(j, "lengthscales", path), path + ": lengthscales");
    rec.cdf_calls = field(j, "cdf_calls", path).get<long long>();
    rec.select_seconds = field(j, "select_seconds", path).get<double>();
    rec.eval_seconds = field(j, "eval_seconds", path).get<double>();
    rec.fit_seconds = field(j, "fit_seconds", path).get<double>();
    rec.seed = field(j, "seed", path).get<std::uint64_t>();
    rec.best_observed = field(j, "best_observed", path).get<double>();
    history.iterations.push_back(std::move(rec));
  }
  return history;
}

void write_history_jsonl(const std::string& path,
                         const optimize::RunHistory& history) {
  std::ofstream out = open_out(path);
  json head;
  head["schema"] = "qeikit-history-v1";
  head["strategy"] = history.strategy;
  head["q"] = history.q;
  head["initial_best"] = history.initial_best;
  head["aborted"] = history.aborted;
  out << head.dump() << "\n";
  for (const optimize::IterationRecord& rec : history.iterations) {
    json j;
    j["iteration"] = rec.iteration;
    j["batch"] = matrix_json(rec.batch);
    j["qei_value"] = rec.qei_value;
    j["observations"] = vector_json(rec.observations);
    j["trend"] = rec.trend;
    j["kernel_variance"] = rec.kernel_variance;
    j["lengthscales"] = vector_json(rec.lengthscales);
    j["cdf_calls"] = rec.cdf_calls;
    j["select_seconds"] = rec.select_seconds;
    j["eval_seconds"] = rec.eval_seconds;
    j["fit_seconds"] = rec.fit_seconds;
    j["seed"] = rec.seed;
    j["best_observed"] = rec.best_observed;
    out << j.dump() << "\n";
  }
}

}  // namespace qeikit::io
