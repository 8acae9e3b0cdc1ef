#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clbench/dataset.hpp"
#include "clbench/errors.hpp"
#include "clbench/metrics.hpp"
#include "clbench/runner.hpp"

namespace {

int cmd_run(const std::string& config_path, const clbench::CliOverrides& overrides) {
  clbench::ExperimentConfig cfg = clbench::parse_config_file(config_path);
  std::vector<std::string> notices;
  clbench::apply_overrides(cfg, overrides, &notices);
  for (const std::string& n : notices) std::cerr << "notice: " << n << "\n";

  const std::vector<clbench::RunRecord> records = clbench::run_experiment(cfg);
  if (records.empty()) {
    std::cerr << "all seeds failed\n";
    return 2;
  }
  for (const clbench::RunRecord& r : records) {
    std::cout << r.strategy << " seed " << r.seed
              << ": final avg accuracy = " << clbench::format_double(r.avg_accuracy.back());
    if (r.forgetting)
      std::cout << ", forgetting = " << clbench::format_double(*r.forgetting);
    std::cout << "\n";
  }
  std::cout << "results written to " << cfg.out_dir << "\n";
  return records.size() == cfg.seeds.size() ? 0 : 2;
}

int cmd_metrics(const std::string& matrix_path) {
  const clbench::AccuracyMatrix m = clbench::read_matrix_csv(matrix_path);
  if (m.tasks() == 0) {
    std::cerr << "matrix '" << matrix_path << "' is empty\n";
    return 2;
  }
  for (int t = 1; t <= m.tasks(); ++t)
    std::cout << "A_" << t << " = " << clbench::format_double(m.average_accuracy(t)) << "\n";
  if (m.tasks() >= 2)
    std::cout << "F = " << clbench::format_double(m.average_forgetting()) << "\n";
  else
    std::cout << "F = undefined (single task)\n";
  return 0;
}

int cmd_synth(const clbench::SynthConfig& sc, std::size_t per_class, const std::string& out,
              const std::string& split) {
  clbench::SynthConfig cfg = sc;
  clbench::Split s;
  if (split == "train") {
    s = clbench::Split::train;
    cfg.train_per_class = per_class;
  } else if (split == "val") {
    s = clbench::Split::val;
    cfg.val_per_class = per_class;
  } else if (split == "test") {
    s = clbench::Split::test;
    cfg.test_per_class = per_class;
  } else {
    throw clbench::ConfigError("--split must be train, val or test");
  }
  const clbench::ImageDataset ds = clbench::gen_synthetic(cfg, s);
  clbench::write_container(ds, out);
  std::cout << "wrote " << ds.size() << " samples (" << cfg.classes << " classes, "
            << cfg.channels << "x" << cfg.height << "x" << cfg.width << ") to " << out << "\n";
  return 0;
}

int cmd_inspect(const std::string& path) {
  const clbench::ContainerHeader h = clbench::read_container_header(path);
  std::cout << "container: " << path << "\n"
            << "version:   " << h.version << "\n"
            << "samples:   " << h.count << "\n"
            << "shape:     " << h.channels << "x" << h.height << "x" << h.width << "\n"
            << "classes:   " << h.class_count << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual-learning benchmark engine"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run a configured experiment");
  std::string config_path;
  run->add_option("--config", config_path, "experiment config file")->required();
  std::string strategy_flag, scenario_flag, seeds_flag, out_flag;
  run->add_option("--strategy", strategy_flag, "override strategy (lb|ub|ewc|mas|lwf|icarl|eeil)");
  run->add_option("--scenario", scenario_flag,
                  "override scenario kind (task-il|class-il|domain-aware|domain-agnostic|fine-grained)");
  run->add_option("--seeds", seeds_flag, "override seeds, comma-separated");
  run->add_option("--out", out_flag, "override output directory");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "recompute averages from a matrix.csv");
  std::string matrix_path;
  metrics->add_option("--matrix", matrix_path, "accuracy matrix csv")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic LLCB container");
  clbench::SynthConfig sc;
  std::size_t per_class = 200;
  std::string synth_out, synth_split = "train";
  synth->add_option("--classes", sc.classes, "number of classes")->required();
  synth->add_option("--per-class", per_class, "samples per class")->required();
  synth->add_option("--out", synth_out, "output file")->required();
  synth->add_option("--sigma", sc.sigma, "pixel noise sigma");
  synth->add_option("--seed", sc.seed, "generator seed");
  synth->add_option("--channels", sc.channels, "image channels");
  synth->add_option("--height", sc.height, "image height");
  synth->add_option("--width", sc.width, "image width");
  synth->add_option("--split", synth_split, "split tag (train|val|test)");
  synth->add_option("--name", sc.name, "dataset name");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "print an LLCB container header");
  std::string container_path;
  inspect->add_option("--container", container_path, "container file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) {
      clbench::CliOverrides ov;
      if (!strategy_flag.empty()) ov.strategy = strategy_flag;
      if (!scenario_flag.empty()) ov.scenario_kind = scenario_flag;
      if (!out_flag.empty()) ov.out_dir = out_flag;
      if (!seeds_flag.empty()) {
        std::vector<std::uint64_t> seeds;
        std::size_t pos = 0;
        while (pos <= seeds_flag.size()) {
          const std::size_t comma = seeds_flag.find(',', pos);
          const std::string f = seeds_flag.substr(
              pos, comma == std::string::npos ? std::string::npos : comma - pos);
          seeds.push_back(std::stoull(f));
          if (comma == std::string::npos) break;
          pos = comma + 1;
        }
        ov.seeds = std::move(seeds);
      }
      return cmd_run(config_path, ov);
    }
    if (metrics->parsed()) return cmd_metrics(matrix_path);
    if (synth->parsed()) return cmd_synth(sc, per_class, synth_out, synth_split);
    if (inspect->parsed()) return cmd_inspect(container_path);
  } catch (const clbench::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
