#include "clbench/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "clbench/errors.hpp"

namespace clbench {

using nlohmann::json;

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size())
    throw DataError("accuracy: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
  if (preds.empty()) throw DataError("accuracy: empty prediction set");
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

const AccuracyMatrix::Cell& AccuracyMatrix::cell(int t, int i) const {
  return rows_.at(static_cast<std::size_t>(t - 1)).at(static_cast<std::size_t>(i - 1));
}

AccuracyMatrix::Cell& AccuracyMatrix::cell(int t, int i) {
  return rows_.at(static_cast<std::size_t>(t - 1)).at(static_cast<std::size_t>(i - 1));
}

namespace {

void check_indices(int t, int i, int current_tasks) {
  if (t < 1 || i < 1)
    throw ProtocolViolation("accuracy matrix: indices are 1-based, got t=" + std::to_string(t) +
                            " i=" + std::to_string(i));
  if (i > t)
    throw ProtocolViolation("accuracy matrix: a_{" + std::to_string(t) + "," + std::to_string(i) +
                            "} is above the diagonal; task " + std::to_string(i) +
                            " is not trained yet at stage " + std::to_string(t));
  if (t > current_tasks + 1)
    throw ProtocolViolation("accuracy matrix: cannot record stage " + std::to_string(t) +
                            " before stage " + std::to_string(current_tasks + 1));
}

}  // namespace

void AccuracyMatrix::record(int t, int i, std::uint64_t correct, std::uint64_t total) {
  if (total == 0) throw DataError("accuracy matrix: empty evaluation set");
  if (correct > total) throw DataError("accuracy matrix: correct > total");
  check_indices(t, i, tasks());
  if (t == tasks() + 1) rows_.emplace_back(static_cast<std::size_t>(t));
  Cell& c = cell(t, i);
  if (c.set)
    throw ProtocolViolation("accuracy matrix: a_{" + std::to_string(t) + "," + std::to_string(i) +
                            "} already recorded");
  c.set = true;
  c.fractional = true;
  c.correct = correct;
  c.total = total;
}

void AccuracyMatrix::record_value(int t, int i, double value) {
  if (value < 0.0 || value > 1.0)
    throw DataError("accuracy matrix: value " + format_double(value) + " outside [0,1]");
  check_indices(t, i, tasks());
  if (t == tasks() + 1) rows_.emplace_back(static_cast<std::size_t>(t));
  Cell& c = cell(t, i);
  if (c.set)
    throw ProtocolViolation("accuracy matrix: a_{" + std::to_string(t) + "," + std::to_string(i) +
                            "} already recorded");
  c.set = true;
  c.value = value;
}

bool AccuracyMatrix::is_set(int t, int i) const {
  if (t < 1 || t > tasks() || i < 1 || i > t) return false;
  return cell(t, i).set;
}

double AccuracyMatrix::at(int t, int i) const {
  if (t < 1 || t > tasks() || i < 1 || i > t)
    throw StateError("accuracy matrix: a_{" + std::to_string(t) + "," + std::to_string(i) +
                     "} out of range");
  const Cell& c = cell(t, i);
  if (!c.set)
    throw StateError("accuracy matrix: a_{" + std::to_string(t) + "," + std::to_string(i) +
                     "} not recorded");
  return c.fractional ? static_cast<double>(c.correct) / static_cast<double>(c.total) : c.value;
}

bool AccuracyMatrix::row_complete(int t) const {
  if (t < 1 || t > tasks()) return false;
  for (int i = 1; i <= t; ++i) {
    if (!cell(t, i).set) return false;
  }
  return true;
}

bool AccuracyMatrix::complete() const {
  for (int t = 1; t <= tasks(); ++t) {
    if (!row_complete(t)) return false;
  }
  return tasks() > 0;
}

double AccuracyMatrix::average_accuracy(int t) const {
  if (t < 1 || t > tasks() || !row_complete(t))
    throw StateError("average_accuracy: row " + std::to_string(t) + " incomplete");
  double sum = 0.0;
  for (int i = 1; i <= t; ++i) sum += at(t, i);
  return sum / static_cast<double>(t);
}

double AccuracyMatrix::average_forgetting() const {
  const int T = tasks();
  if (T < 2) throw StateError("average_forgetting: needs at least 2 tasks");
  if (!complete()) throw StateError("average_forgetting: matrix incomplete");
  double sum = 0.0;
  for (int i = 1; i <= T - 1; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int t = i; t <= T - 1; ++t) best = std::max(best, at(t, i));
    sum += best - at(T, i);
  }
  return sum / static_cast<double>(T - 1);
}

bool AccuracyMatrix::operator==(const AccuracyMatrix& other) const {
  if (tasks() != other.tasks()) return false;
  for (int t = 1; t <= tasks(); ++t) {
    for (int i = 1; i <= t; ++i) {
      if (is_set(t, i) != other.is_set(t, i)) return false;
      if (is_set(t, i) && at(t, i) != other.at(t, i)) return false;
    }
  }
  return true;
}

bool RunRecord::operator==(const RunRecord& other) const {
  return scenario == other.scenario && strategy == other.strategy && seed == other.seed &&
         matrix == other.matrix && avg_accuracy == other.avg_accuracy &&
         forgetting == other.forgetting;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

json matrix_to_json(const AccuracyMatrix& m) {
  json rows = json::array();
  for (int t = 1; t <= m.tasks(); ++t) {
    json row = json::array();
    for (int i = 1; i <= t; ++i) row.push_back(m.at(t, i));
    rows.push_back(std::move(row));
  }
  return rows;
}

AccuracyMatrix matrix_from_json(const json& rows) {
  AccuracyMatrix m;
  int t = 1;
  for (const json& row : rows) {
    int i = 1;
    for (const json& v : row) m.record_value(t, i++, v.get<double>());
    if (i != t + 1) throw FormatError("results json: matrix row " + std::to_string(t) +
                                      " is not lower-triangular");
    ++t;
  }
  return m;
}

}  // namespace

std::string results_json(const RunRecord& r) {
  json scenario = {{"kind", r.scenario.kind},
                   {"datasets", r.scenario.datasets},
                   {"task_labels", r.scenario.task_labels},
                   {"class_count", r.scenario.class_count}};
  json doc = {{"scenario", std::move(scenario)},
              {"strategy", r.strategy},
              {"seed", r.seed},
              {"matrix", matrix_to_json(r.matrix)},
              {"avg_accuracy", r.avg_accuracy}};
  if (r.forgetting)
    doc["forgetting"] = *r.forgetting;
  else
    doc["forgetting"] = nullptr;
  return doc.dump(2) + "\n";
}

RunRecord parse_results_json(const std::string& text) {
  json doc = json::parse(text);
  RunRecord r;
  const json& scn = doc.at("scenario");
  r.scenario.kind = scn.at("kind").get<std::string>();
  r.scenario.datasets = scn.at("datasets").get<std::vector<std::string>>();
  r.scenario.task_labels = scn.at("task_labels").get<std::vector<std::vector<int>>>();
  r.scenario.class_count = scn.at("class_count").get<int>();
  r.strategy = doc.at("strategy").get<std::string>();
  r.seed = doc.at("seed").get<std::uint64_t>();
  r.matrix = matrix_from_json(doc.at("matrix"));
  r.avg_accuracy = doc.at("avg_accuracy").get<std::vector<double>>();
  if (!doc.at("forgetting").is_null()) r.forgetting = doc.at("forgetting").get<double>();
  return r;
}

RunRecord read_results_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open results file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_results_json(ss.str());
}

void write_matrix_csv(const AccuracyMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (int t = 1; t <= m.tasks(); ++t) {
    for (int i = 1; i <= m.tasks(); ++i) {
      if (i > 1) out << ',';
      if (i <= t && m.is_set(t, i)) out << format_double(m.at(t, i));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

AccuracyMatrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open matrix file '" + path + "'");
  AccuracyMatrix m;
  std::string line;
  int t = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string field;
    int i = 1;
    while (std::getline(row, field, ',')) {
      if (!field.empty()) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc{} || ptr != field.data() + field.size())
          throw FormatError("matrix csv '" + path + "': bad number '" + field + "'");
        m.record_value(t, i, v);
      }
      ++i;
    }
    ++t;
  }
  return m;
}

void emit_results(const RunRecord& record, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());

  {
    std::ofstream out(dir + "/results.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + dir + "/results.json' for writing");
    out << results_json(record);
  }
  write_matrix_csv(record.matrix, dir + "/matrix.csv");
  {
    std::ofstream out(dir + "/running_avg.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + dir + "/running_avg.csv' for writing");
    out << "t,avg_accuracy\n";
    for (std::size_t t = 0; t < record.avg_accuracy.size(); ++t)
      out << (t + 1) << ',' << format_double(record.avg_accuracy[t]) << '\n';
  }
  {
    json doc = {{"wall_clock_s", record.wall_clock_s}};
    std::ofstream out(dir + "/timings.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + dir + "/timings.json' for writing");
    out << doc.dump(2) << "\n";
  }
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

SeedAggregate aggregate_runs(const std::vector<RunRecord>& records) {
  if (records.empty()) throw DataError("aggregate_runs: no records");
  SeedAggregate agg;
  agg.strategy = records.front().strategy;
  agg.scenario_kind = records.front().scenario.kind;
  const std::size_t T = records.front().avg_accuracy.size();
  for (const RunRecord& r : records) {
    if (r.avg_accuracy.size() != T)
      throw DataError("aggregate_runs: records have different task counts");
    agg.seeds.push_back(r.seed);
  }
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> xs;
    for (const RunRecord& r : records) xs.push_back(r.avg_accuracy[t]);
    auto [m, s] = mean_std(xs);
    agg.avg_accuracy_mean.push_back(m);
    agg.avg_accuracy_std.push_back(s);
  }
  if (T > 0) {
    agg.final_accuracy_mean = agg.avg_accuracy_mean.back();
    agg.final_accuracy_std = agg.avg_accuracy_std.back();
  }
  std::vector<double> fs;
  for (const RunRecord& r : records) {
    if (r.forgetting) fs.push_back(*r.forgetting);
  }
  if (!fs.empty()) {
    auto [m, s] = mean_std(fs);
    agg.forgetting_mean = m;
    agg.forgetting_std = s;
  }
  return agg;
}

void emit_aggregate(const SeedAggregate& agg, const std::string& path) {
  json doc = {{"strategy", agg.strategy},
              {"scenario_kind", agg.scenario_kind},
              {"seeds", agg.seeds},
              {"avg_accuracy_mean", agg.avg_accuracy_mean},
              {"avg_accuracy_std", agg.avg_accuracy_std},
              {"std_is", "sample standard deviation across seeds"}};
  doc["final_accuracy_mean"] =
      agg.final_accuracy_mean ? json(*agg.final_accuracy_mean) : json(nullptr);
  doc["final_accuracy_std"] =
      agg.final_accuracy_std ? json(*agg.final_accuracy_std) : json(nullptr);
  doc["forgetting_mean"] = agg.forgetting_mean ? json(*agg.forgetting_mean) : json(nullptr);
  doc["forgetting_std"] = agg.forgetting_std ? json(*agg.forgetting_std) : json(nullptr);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << doc.dump(2) << "\n";
}

}  // namespace clbench
