#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clbench/metrics.hpp"
#include "clbench/model.hpp"
#include "clbench/scenario.hpp"
#include "clbench/strategies.hpp"

namespace clbench {

// Flat key=value config with section headers; every field has a default so
// a minimal file (scenario kind + strategy name) fully resolves.
struct DataConfig {
  std::string source = "synth";  // synth | llcb
  std::string dir = ".";
  std::vector<std::string> datasets = {"synth8"};
  std::uint64_t seed = 0;  // synthetic data seed, shared by all run seeds
  std::vector<std::size_t> classes = {8};
  std::size_t train_per_class = 200;
  std::size_t val_per_class = 40;
  std::size_t test_per_class = 40;
  double sigma = 3.0;
  std::size_t channels = 1, height = 16, width = 16;

  bool operator==(const DataConfig&) const = default;
};

struct ScenarioConfig {
  std::string kind = "class-il";  // task-il|class-il|domain-aware|domain-agnostic|fine-grained
  std::vector<std::vector<int>> classes_per_task = {{2, 2, 2, 2}};
  std::string class_order = "ascending";  // ascending | shuffled
  std::uint64_t class_order_seed = 0;
  bool aware = true;  // fine-grained: domain-aware vs domain-agnostic

  bool operator==(const ScenarioConfig&) const = default;
};

struct ModelArchConfig {
  std::vector<std::size_t> conv_filters = {16, 32};
  std::size_t feature_dim = 128;
  std::size_t head_hidden = 512;

  bool operator==(const ModelArchConfig&) const = default;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  DataConfig data;
  ModelArchConfig model;
  StrategyConfig strategy;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = "results";
  bool save_models = false;

  // Tracks whether the file pinned these, so strategy overrides can
  // re-resolve the per-strategy defaults.
  bool lambda_explicit = false;
  bool balanced_explicit = false;

  bool operator==(const ExperimentConfig& o) const;
};

struct CliOverrides {
  std::optional<std::string> strategy;
  std::optional<std::string> scenario_kind;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::string> out_dir;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Flag-over-file resolution; notices about overridden file values are
// appended to `notices`.
void apply_overrides(ExperimentConfig& cfg, const CliOverrides& ov,
                     std::vector<std::string>* notices);

// Full resolved config in the same file format; re-parses to an equal config.
std::string echo_config(const ExperimentConfig& cfg);

// Per-strategy lambda / balanced-epoch defaults for fields the file left out.
void resolve_strategy_defaults(ExperimentConfig& cfg);

// Datasets loaded or generated per the data section.
std::vector<DatasetBundle> load_bundles(const DataConfig& data);

Scenario build_scenario(const ExperimentConfig& cfg, const std::vector<DatasetBundle>& bundles);

// One full seeded run: build model, walk the task sequence (or train
// jointly for ub), fill the accuracy matrix, and enforce the data-access
// contract (any guard violation throws). The final model is checkpointed
// when `save_model_to` is non-empty.
RunRecord run_single_seed(const ExperimentConfig& cfg, const Scenario& scn, std::uint64_t seed,
                          const std::string& save_model_to = "");

// All seeds; per-seed artifacts under <out>/seed_<s>/, plus aggregate.json
// and config_resolved.cfg. A failing seed leaves a FAILED.txt marker and
// does not disturb the others.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg);

}  // namespace clbench
