#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "clbench/errors.hpp"
#include "clbench/runner.hpp"

using namespace clbench;

namespace {

std::string temp_dir(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small, fast experiment: 4 classes over 2 tasks on tiny blobs.
ExperimentConfig tiny_experiment(const std::string& out) {
  ExperimentConfig cfg = parse_config_text(
      "[scenario]\n"
      "kind = class-il\n"
      "classes_per_task = 2,2\n"
      "[data]\n"
      "datasets = blobs\n"
      "classes = 4\n"
      "train_per_class = 20\n"
      "val_per_class = 8\n"
      "test_per_class = 8\n"
      "height = 8\n"
      "width = 8\n"
      "[model]\n"
      "conv_filters = 4\n"
      "feature_dim = 8\n"
      "head_hidden = 16\n"
      "[strategy]\n"
      "name = lb\n"
      "[train]\n"
      "epochs = 3\n"
      "batch_size = 16\n"
      "patience = 2\n"
      "lr = 0.05\n"
      "[run]\n"
      "seeds = 0\n");
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("minimal config resolves every default") {
  const ExperimentConfig cfg = parse_config_text(
      "[scenario]\nkind = task-il\n[strategy]\nname = ewc\n");
  CHECK(cfg.scenario.kind == "task-il");
  CHECK(cfg.strategy.kind == StrategyKind::ewc);
  CHECK(cfg.strategy.lambda == 5000.0);  // per-strategy default
  CHECK(cfg.train.epochs == 20);
  CHECK(cfg.train.batch_size == 32);
  CHECK(cfg.train.patience == 5);
  CHECK(cfg.train.lr == 0.01);
  CHECK(cfg.train.momentum == 0.9);
  CHECK(cfg.strategy.balanced_epochs == 4);  // 2 * epochs / 10
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0});
}

TEST_CASE("per-strategy lambda defaults") {
  CHECK(parse_config_text("[strategy]\nname = mas\n").strategy.lambda == 1.0);
  CHECK(parse_config_text("[strategy]\nname = lwf\n").strategy.lambda == 1.0);
  CHECK(parse_config_text("[strategy]\nname = lb\n").strategy.lambda == 0.0);
  // explicit value wins over the default
  CHECK(parse_config_text("[strategy]\nname = ewc\nlambda = 7\n").strategy.lambda == 7.0);
}

TEST_CASE("unknown keys and sections are named in the error") {
  CHECK_THROWS_WITH_AS(parse_config_text("[strategy]\nstratgy = lb\n"),
                       doctest::Contains("stratgy"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("[strat]\nname = lb\n"), doctest::Contains("strat"),
                       ConfigError);
  CHECK_THROWS_AS(parse_config_text("kind = task-il\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[train]\nepochs = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[run]\nseeds =\n"), ConfigError);
}

TEST_CASE("config echo re-parses to an equal config") {
  ExperimentConfig cfg = parse_config_text(
      "[scenario]\nkind = domain-aware\nclasses_per_task = 2,2;3,3\n"
      "[data]\ndatasets = a,b\nclasses = 4,6\nsigma = 2.5\n"
      "[strategy]\nname = icarl\nexemplars_per_class = 7\n"
      "[train]\nepochs = 9\n[run]\nseeds = 1,2,3\nout = somewhere\n");
  const ExperimentConfig back = parse_config_text(echo_config(cfg));
  CHECK(back == cfg);
  // and the echo is a fixed point
  CHECK(echo_config(back) == echo_config(cfg));
}

TEST_CASE("flag overrides win over file values with a notice") {
  ExperimentConfig cfg = parse_config_text("[strategy]\nname = lb\n[run]\nseeds = 0,1\n");
  CliOverrides ov;
  ov.strategy = "ewc";
  ov.seeds = std::vector<std::uint64_t>{5};
  std::vector<std::string> notices;
  apply_overrides(cfg, ov, &notices);
  CHECK(cfg.strategy.kind == StrategyKind::ewc);
  CHECK(cfg.strategy.lambda == 5000.0);  // default re-resolved for the new strategy
  CHECK(cfg.seeds == std::vector<std::uint64_t>{5});
  CHECK(notices.size() == 2);
}

TEST_CASE("seed_rng streams: isolation between labels") {
  // changing the model-init seed leaves the batch order unchanged: the
  // shuffle stream depends only on (seed, "shuffle")
  RngStream s1 = seed_rng(0, "shuffle");
  RngStream s2 = seed_rng(0, "shuffle");
  std::vector<std::size_t> p1, p2;
  s1.permutation(50, p1);
  s2.permutation(50, p2);
  CHECK(p1 == p2);

  RngStream init0 = seed_rng(0, "init");
  RngStream init1 = seed_rng(1, "init");
  bool differ = false;
  for (int i = 0; i < 10 && !differ; ++i) differ = init0.next_u64() != init1.next_u64();
  CHECK(differ);
}

TEST_CASE("run_experiment end to end: artifacts, determinism, matrix shape") {
  const std::string out1 = temp_dir("clbench_run1");
  const std::string out2 = temp_dir("clbench_run2");
  std::filesystem::remove_all(out1);
  std::filesystem::remove_all(out2);

  ExperimentConfig cfg = tiny_experiment(out1);
  const std::vector<RunRecord> records = run_experiment(cfg);
  REQUIRE(records.size() == 1);
  CHECK(records[0].matrix.tasks() == 2);
  CHECK(records[0].matrix.complete());
  CHECK(records[0].avg_accuracy.size() == 2);
  CHECK(records[0].forgetting.has_value());

  CHECK(std::filesystem::exists(out1 + "/seed_0/results.json"));
  CHECK(std::filesystem::exists(out1 + "/seed_0/matrix.csv"));
  CHECK(std::filesystem::exists(out1 + "/seed_0/running_avg.csv"));
  CHECK(std::filesystem::exists(out1 + "/seed_0/timings.json"));
  CHECK(std::filesystem::exists(out1 + "/aggregate.json"));
  CHECK(std::filesystem::exists(out1 + "/config_resolved.cfg"));

  // byte-identical results.json across two executions of the same config
  ExperimentConfig cfg2 = tiny_experiment(out2);
  run_experiment(cfg2);
  CHECK(slurp(out1 + "/seed_0/results.json") == slurp(out2 + "/seed_0/results.json"));
  CHECK(slurp(out1 + "/seed_0/matrix.csv") == slurp(out2 + "/seed_0/matrix.csv"));

  // the resolved-config echo still parses back to the original
  const ExperimentConfig echoed = parse_config_text(slurp(out1 + "/config_resolved.cfg"));
  CHECK(echoed == cfg);

  std::filesystem::remove_all(out1);
  std::filesystem::remove_all(out2);
}

TEST_CASE("five-seed batch emits five records plus one aggregate") {
  const std::string out = temp_dir("clbench_run5");
  std::filesystem::remove_all(out);
  ExperimentConfig cfg = tiny_experiment(out);
  cfg.seeds = {0, 1, 2, 3, 4};
  cfg.train.epochs = 2;

  const std::vector<RunRecord> records = run_experiment(cfg);
  CHECK(records.size() == 5);
  for (std::uint64_t s = 0; s < 5; ++s)
    CHECK(std::filesystem::exists(out + "/seed_" + std::to_string(s) + "/results.json"));
  CHECK(std::filesystem::exists(out + "/aggregate.json"));
  const std::string agg = slurp(out + "/aggregate.json");
  CHECK(agg.find("avg_accuracy_mean") != std::string::npos);
  CHECK(agg.find("avg_accuracy_std") != std::string::npos);
  std::filesystem::remove_all(out);
}

TEST_CASE("ub joint run: single-cell matrix, no forgetting reported") {
  const std::string out = temp_dir("clbench_run_ub");
  std::filesystem::remove_all(out);
  ExperimentConfig cfg = tiny_experiment(out);
  cfg.strategy.kind = StrategyKind::ub;
  cfg.train.epochs = 6;

  const std::vector<RunRecord> records = run_experiment(cfg);
  REQUIRE(records.size() == 1);
  CHECK(records[0].matrix.tasks() == 1);
  CHECK_FALSE(records[0].forgetting.has_value());
  const std::string json = slurp(out + "/seed_0/results.json");
  CHECK(json.find("\"forgetting\": null") != std::string::npos);
  std::filesystem::remove_all(out);
}

TEST_CASE("a bad partition is rejected before any seed runs") {
  const std::string out = temp_dir("clbench_runfail");
  std::filesystem::remove_all(out);
  ExperimentConfig cfg = tiny_experiment(out);
  cfg.scenario.classes_per_task = {{3, 2}};  // sums to 5, dataset has 4
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
  std::filesystem::remove_all(out);
}

TEST_CASE("a failing seed leaves a marker and spares the others") {
  const std::string out = temp_dir("clbench_runfail2");
  std::filesystem::remove_all(out);
  ExperimentConfig cfg = tiny_experiment(out);
  // 8x8 input cannot survive four pooling stages; every seed aborts inside
  // its own run and leaves a marker
  cfg.model.conv_filters = {4, 4, 4, 4};
  const std::vector<RunRecord> records = run_experiment(cfg);
  CHECK(records.empty());
  CHECK(std::filesystem::exists(out + "/seed_0/FAILED.txt"));
  std::filesystem::remove_all(out);
}

TEST_CASE("cross-domain and fine-grained configs run end to end") {
  const std::string out = temp_dir("clbench_runxd");
  std::filesystem::remove_all(out);
  ExperimentConfig cfg = parse_config_text(
      "[scenario]\n"
      "kind = domain-agnostic\n"
      "[data]\n"
      "datasets = domA,domB\n"
      "classes = 4\n"
      "train_per_class = 15\n"
      "val_per_class = 6\n"
      "test_per_class = 6\n"
      "height = 8\n"
      "width = 8\n"
      "[model]\n"
      "conv_filters = 4\n"
      "feature_dim = 8\n"
      "head_hidden = 16\n"
      "[strategy]\n"
      "name = lwf\n"
      "[train]\n"
      "epochs = 2\n"
      "batch_size = 16\n"
      "patience = 2\n"
      "lr = 0.05\n");
  cfg.out_dir = out;
  {
    const std::vector<RunRecord> records = run_experiment(cfg);
    REQUIRE(records.size() == 1);
    CHECK(records[0].matrix.tasks() == 2);
    CHECK(records[0].scenario.class_count == 8);  // 4 + 4 with offsets
    CHECK(records[0].scenario.task_labels[1].front() == 4);
  }
  {
    // fine-grained: each domain further split in two -> 4 tasks
    std::filesystem::remove_all(out);
    cfg.scenario.kind = "fine-grained";
    cfg.scenario.classes_per_task = {{2, 2}};
    cfg.scenario.aware = true;
    const std::vector<RunRecord> records = run_experiment(cfg);
    REQUIRE(records.size() == 1);
    CHECK(records[0].matrix.tasks() == 4);
    CHECK(records[0].scenario.kind == "fine-grained");
  }
  std::filesystem::remove_all(out);
}

TEST_CASE("shuffled class order runs end to end and relabels the stream") {
  const std::string out = temp_dir("clbench_runshuf");
  std::filesystem::remove_all(out);
  ExperimentConfig cfg = tiny_experiment(out);
  cfg.scenario.class_order = "shuffled";
  cfg.scenario.class_order_seed = 3;
  cfg.train.epochs = 1;
  const std::vector<RunRecord> records = run_experiment(cfg);
  REQUIRE(records.size() == 1);
  // relabeled global ids stay contiguous per task
  CHECK(records[0].scenario.task_labels[0] == std::vector<int>{0, 1});
  CHECK(records[0].scenario.task_labels[1] == std::vector<int>{2, 3});
  std::filesystem::remove_all(out);
}

TEST_CASE("model checkpoints are saved when asked") {
  const std::string out = temp_dir("clbench_runsave");
  std::filesystem::remove_all(out);
  ExperimentConfig cfg = tiny_experiment(out);
  cfg.save_models = true;
  cfg.train.epochs = 1;
  run_experiment(cfg);
  CHECK(std::filesystem::exists(out + "/seed_0/model.clmd"));
  const Model m = load_checkpoint(out + "/seed_0/model.clmd");
  CHECK(m.class_count() == 4);
  std::filesystem::remove_all(out);
}
