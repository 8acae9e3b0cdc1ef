#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clbench {

// Fraction of exact matches; DataError on empty or mismatched inputs.
double accuracy(std::span<const int> preds, std::span<const int> labels);

// Lower-triangular a_{t,i} with 1-based indices matching the usual
// notation: a(t, i) is the accuracy on task i right after training task t.
// Cells recorded from counts keep the exact fraction and divide only when
// read, so no accumulation error enters the averages.
class AccuracyMatrix {
 public:
  void record(int t, int i, std::uint64_t correct, std::uint64_t total);
  void record_value(int t, int i, double value);

  int tasks() const { return static_cast<int>(rows_.size()); }
  bool is_set(int t, int i) const;
  double at(int t, int i) const;
  bool row_complete(int t) const;
  bool complete() const;

  // A_t = (1/t) sum_{i<=t} a_{t,i}; the row must be complete.
  double average_accuracy(int t) const;
  // F = (1/(T-1)) sum_{i<T} [ max_{t in i..T-1} a_{t,i} - a_{T,i} ];
  // negative values are legal (backward transfer). Requires T >= 2.
  double average_forgetting() const;

  bool operator==(const AccuracyMatrix& other) const;

 private:
  struct Cell {
    bool set = false;
    bool fractional = false;
    std::uint64_t correct = 0, total = 0;
    double value = 0.0;
  };
  const Cell& cell(int t, int i) const;
  Cell& cell(int t, int i);

  std::vector<std::vector<Cell>> rows_;
};

struct ScenarioDescriptor {
  std::string kind;
  std::vector<std::string> datasets;
  std::vector<std::vector<int>> task_labels;
  int class_count = 0;

  bool operator==(const ScenarioDescriptor&) const = default;
};

struct RunRecord {
  ScenarioDescriptor scenario;
  std::string strategy;
  std::uint64_t seed = 0;
  AccuracyMatrix matrix;
  std::vector<double> avg_accuracy;       // A_t per t
  std::optional<double> forgetting;       // absent for joint training
  std::vector<double> wall_clock_s;       // per task; timings sidecar only

  // Deterministic payload comparison; wall clock excluded.
  bool operator==(const RunRecord& other) const;
};

// Writes results.json, matrix.csv, running_avg.csv and timings.json into
// `dir` (created if missing). results.json holds only the deterministic
// payload; wall clock goes to the timings sidecar.
void emit_results(const RunRecord& record, const std::string& dir);

std::string results_json(const RunRecord& record);
RunRecord parse_results_json(const std::string& json_text);
RunRecord read_results_file(const std::string& path);

// matrix.csv: T rows, T comma-separated columns, cell (t,i) blank for i>t.
void write_matrix_csv(const AccuracyMatrix& m, const std::string& path);
AccuracyMatrix read_matrix_csv(const std::string& path);

// Across-seed aggregation: mean and sample standard deviation (n-1 in the
// denominator, 0 for a single seed).
struct SeedAggregate {
  std::string strategy;
  std::string scenario_kind;
  std::vector<std::uint64_t> seeds;
  std::vector<double> avg_accuracy_mean, avg_accuracy_std;
  std::optional<double> final_accuracy_mean, final_accuracy_std;
  std::optional<double> forgetting_mean, forgetting_std;
};

SeedAggregate aggregate_runs(const std::vector<RunRecord>& records);
void emit_aggregate(const SeedAggregate& agg, const std::string& path);

// Shortest round-trip decimal form, locale-independent.
std::string format_double(double v);

}  // namespace clbench
