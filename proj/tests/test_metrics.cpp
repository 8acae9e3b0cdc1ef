#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "clbench/errors.hpp"
#include "clbench/metrics.hpp"
#include "clbench/rng.hpp"
#include "oracles.hpp"

using namespace clbench;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

RunRecord sample_record() {
  RunRecord r;
  r.scenario = {"class-il", {"synth8"}, {{0, 1}, {2, 3}}, 4};
  r.strategy = "lb";
  r.seed = 3;
  r.matrix.record(1, 1, 9, 10);
  r.matrix.record(2, 1, 7, 10);
  r.matrix.record(2, 2, 8, 10);
  r.avg_accuracy = {r.matrix.average_accuracy(1), r.matrix.average_accuracy(2)};
  r.forgetting = r.matrix.average_forgetting();
  r.wall_clock_s = {0.5, 0.7};
  return r;
}

}  // namespace

TEST_CASE("accuracy basics") {
  const std::vector<int> a = {1, 2, 3, 4};
  CHECK(accuracy(a, a) == 1.0);
  const std::vector<int> wrong = {2, 3, 4, 5};
  CHECK(accuracy(a, wrong) == 0.0);
  const std::vector<int> mostly = {1, 2, 3, 5};
  CHECK(accuracy(mostly, a) == 0.75);
  CHECK_THROWS_AS(accuracy(std::vector<int>{}, std::vector<int>{}), DataError);
  CHECK_THROWS_AS(accuracy(a, mostly.empty() ? a : std::vector<int>{1}), DataError);
}

TEST_CASE("matrix recording rules") {
  AccuracyMatrix m;
  m.record(1, 1, 9, 10);
  CHECK(m.at(1, 1) == 0.9);
  m.record(2, 1, 8, 10);
  m.record(2, 2, 7, 10);
  CHECK(m.at(2, 1) == 0.8);

  // above the diagonal
  CHECK_THROWS_AS(m.record(1, 2, 1, 2), ProtocolViolation);
  // duplicate write
  CHECK_THROWS_AS(m.record(2, 1, 1, 2), ProtocolViolation);
  // skipping a stage
  CHECK_THROWS_AS(m.record(4, 1, 1, 2), ProtocolViolation);
  // empty evaluation set
  CHECK_THROWS_AS(m.record(3, 1, 0, 0), DataError);
}

TEST_CASE("average accuracy hand cases") {
  AccuracyMatrix m;
  m.record(1, 1, 9, 10);
  CHECK(m.average_accuracy(1) == doctest::Approx(0.9).epsilon(1e-15));
  m.record(2, 1, 8, 10);
  m.record(2, 2, 7, 10);
  CHECK(m.average_accuracy(2) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(m.average_accuracy(3), StateError);

  AccuracyMatrix incomplete;
  incomplete.record(1, 1, 1, 2);
  incomplete.record(2, 2, 1, 2);
  CHECK_THROWS_AS(incomplete.average_accuracy(2), StateError);
}

TEST_CASE("average forgetting hand cases, including negative values") {
  {
    AccuracyMatrix m;
    m.record_value(1, 1, 0.9);
    m.record_value(2, 1, 0.7);
    m.record_value(2, 2, 0.8);
    CHECK(m.average_forgetting() == doctest::Approx(0.2).epsilon(1e-15));
  }
  {
    AccuracyMatrix m;
    m.record_value(1, 1, 0.9);
    m.record_value(2, 1, 0.85);
    m.record_value(2, 2, 0.8);
    m.record_value(3, 1, 0.6);
    m.record_value(3, 2, 0.7);
    m.record_value(3, 3, 0.95);
    CHECK(m.average_forgetting() == doctest::Approx(0.2).epsilon(1e-15));
  }
  {
    // backward transfer: negative forgetting is a legal output
    AccuracyMatrix m;
    m.record_value(1, 1, 0.5);
    m.record_value(2, 1, 0.6);
    m.record_value(2, 2, 0.9);
    CHECK(m.average_forgetting() == doctest::Approx(-0.1).epsilon(1e-15));
  }
  {
    AccuracyMatrix m;
    m.record_value(1, 1, 0.5);
    CHECK_THROWS_AS(m.average_forgetting(), StateError);
  }
}

TEST_CASE("constant per-task accuracies give zero forgetting") {
  RngStream rng(1, "test");
  for (int rep = 0; rep < 20; ++rep) {
    const int T = 2 + static_cast<int>(rng.next_below(5));
    std::vector<double> diag(T);
    for (double& v : diag) v = rng.next_unit();
    AccuracyMatrix m;
    for (int t = 1; t <= T; ++t)
      for (int i = 1; i <= t; ++i) m.record_value(t, i, diag[i - 1]);
    CHECK(std::abs(m.average_forgetting()) < 1e-15);
  }
}

TEST_CASE("metrics match the brute-force oracle on 1000 random matrices") {
  RngStream rng(2, "test");
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t T = 2 + rng.next_below(6);
    std::vector<std::vector<double>> dense(T);
    AccuracyMatrix m;
    for (std::size_t t = 0; t < T; ++t) {
      dense[t].resize(t + 1);
      for (std::size_t i = 0; i <= t; ++i) {
        dense[t][i] = rng.next_unit();
        m.record_value(static_cast<int>(t + 1), static_cast<int>(i + 1), dense[t][i]);
      }
    }
    for (std::size_t t = 0; t < T; ++t) {
      CHECK(std::abs(m.average_accuracy(static_cast<int>(t + 1)) -
                     oracle::average_accuracy(dense, t)) <= 1e-12);
    }
    CHECK(std::abs(m.average_forgetting() - oracle::average_forgetting(dense)) <= 1e-12);
  }
}

TEST_CASE("A_t and F stay inside their ranges") {
  RngStream rng(3, "test");
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t T = 2 + rng.next_below(5);
    AccuracyMatrix m;
    for (std::size_t t = 1; t <= T; ++t)
      for (std::size_t i = 1; i <= t; ++i)
        m.record_value(static_cast<int>(t), static_cast<int>(i), rng.next_unit());
    for (std::size_t t = 1; t <= T; ++t) {
      const double a = m.average_accuracy(static_cast<int>(t));
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
    const double f = m.average_forgetting();
    CHECK(f >= -1.0);
    CHECK(f <= 1.0);
  }
}

TEST_CASE("results json round-trips to an equal record") {
  const RunRecord r = sample_record();
  const RunRecord back = parse_results_json(results_json(r));
  CHECK(back == r);
  CHECK(back.forgetting.has_value());

  RunRecord ub = r;
  ub.forgetting.reset();
  const RunRecord ub_back = parse_results_json(results_json(ub));
  CHECK_FALSE(ub_back.forgetting.has_value());
}

TEST_CASE("emit_results writes consistent artifacts") {
  const RunRecord r = sample_record();
  const std::string dir = temp_path("clbench_emit");
  emit_results(r, dir);

  const RunRecord back = read_results_file(dir + "/results.json");
  CHECK(back == r);

  // matrix.csv has T rows and matches the record
  const AccuracyMatrix m = read_matrix_csv(dir + "/matrix.csv");
  CHECK(m == r.matrix);
  {
    std::ifstream in(dir + "/matrix.csv");
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == r.matrix.tasks());
  }

  // running_avg.csv mirrors average_accuracy per row
  {
    std::ifstream in(dir + "/running_avg.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,avg_accuracy");
    std::string line;
    int t = 1;
    while (std::getline(in, line)) {
      const std::size_t comma = line.find(',');
      CHECK(std::stoi(line.substr(0, comma)) == t);
      CHECK(std::stod(line.substr(comma + 1)) ==
            doctest::Approx(r.matrix.average_accuracy(t)).epsilon(1e-15));
      ++t;
    }
    CHECK(t - 1 == r.matrix.tasks());
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("matrix csv round-trip preserves exact values") {
  RngStream rng(4, "test");
  AccuracyMatrix m;
  for (int t = 1; t <= 4; ++t)
    for (int i = 1; i <= t; ++i) m.record_value(t, i, rng.next_unit());
  const std::string path = temp_path("clbench_matrix.csv");
  write_matrix_csv(m, path);
  CHECK(read_matrix_csv(path) == m);
  std::remove(path.c_str());
}

TEST_CASE("aggregation reports mean and sample std across seeds") {
  RunRecord a = sample_record();
  RunRecord b = sample_record();
  b.seed = 4;
  // nudge b's series by rebuilding its matrix
  RunRecord c = sample_record();
  c.seed = 5;

  std::vector<RunRecord> records = {a, b, c};
  records[1].avg_accuracy = {0.8, 0.7};
  records[1].forgetting = 0.3;
  records[2].avg_accuracy = {1.0, 0.8};
  records[2].forgetting = 0.1;

  const SeedAggregate agg = aggregate_runs(records);
  CHECK(agg.seeds == std::vector<std::uint64_t>{3, 4, 5});
  CHECK(agg.avg_accuracy_mean[0] == doctest::Approx((0.9 + 0.8 + 1.0) / 3).epsilon(1e-12));
  // sample std of {0.9, 0.8, 1.0}
  const double mean = (0.9 + 0.8 + 1.0) / 3;
  const double ss = (0.9 - mean) * (0.9 - mean) + (0.8 - mean) * (0.8 - mean) +
                    (1.0 - mean) * (1.0 - mean);
  CHECK(agg.avg_accuracy_std[0] == doctest::Approx(std::sqrt(ss / 2.0)).epsilon(1e-12));
  CHECK(*agg.forgetting_mean == doctest::Approx(0.2).epsilon(1e-9));

  // single record: std 0
  const SeedAggregate one = aggregate_runs({a});
  CHECK(one.avg_accuracy_std[0] == 0.0);

  // records without forgetting leave the aggregate fields unset
  RunRecord ub = a;
  ub.forgetting.reset();
  const SeedAggregate agg_ub = aggregate_runs({ub});
  CHECK_FALSE(agg_ub.forgetting_mean.has_value());
}
