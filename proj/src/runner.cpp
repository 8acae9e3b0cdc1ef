#include "clbench/runner.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "clbench/errors.hpp"

namespace clbench {

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return scenario == o.scenario && data == o.data && model == o.model &&
         strategy.kind == o.strategy.kind && strategy.lambda == o.strategy.lambda &&
         strategy.temperature == o.strategy.temperature &&
         strategy.exemplars_per_class == o.strategy.exemplars_per_class &&
         strategy.balanced_epochs == o.strategy.balanced_epochs &&
         strategy.icarl_nme == o.strategy.icarl_nme &&
         strategy.fisher_sample_cap == o.strategy.fisher_sample_cap &&
         train.epochs == o.train.epochs && train.batch_size == o.train.batch_size &&
         train.patience == o.train.patience && train.lr == o.train.lr &&
         train.momentum == o.train.momentum && seeds == o.seeds && out_dir == o.out_dir &&
         save_models == o.save_models;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string field;
  while (std::getline(ss, field, sep)) out.push_back(trim(field));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

std::size_t parse_size(const std::string& v, const std::string& key) {
  return static_cast<std::size_t>(parse_u64(v, key));
}

double parse_real(const std::string& v, const std::string& key) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::uint64_t> parse_u64_list(const std::string& v, const std::string& key) {
  std::vector<std::uint64_t> out;
  for (const std::string& f : split(v, ',')) out.push_back(parse_u64(f, key));
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& v, const std::string& key) {
  std::vector<std::size_t> out;
  for (const std::string& f : split(v, ',')) out.push_back(parse_size(f, key));
  return out;
}

// "2,2,2,2" or per-domain groups "2,2;3,3,3" -> {{2,2,2,2}} / {{2,2},{3,3,3}}
std::vector<std::vector<int>> parse_partitions(const std::string& v, const std::string& key) {
  std::vector<std::vector<int>> out;
  for (const std::string& group : split(v, ';')) {
    std::vector<int> part;
    for (const std::string& f : split(group, ','))
      part.push_back(static_cast<int>(parse_u64(f, key)));
    out.push_back(std::move(part));
  }
  return out;
}

std::string join_u64(const std::vector<std::uint64_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(xs[i]);
  }
  return s;
}

std::string join_size(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(xs[i]);
  }
  return s;
}

std::string join_partitions(const std::vector<std::vector<int>>& parts) {
  std::string s;
  for (std::size_t g = 0; g < parts.size(); ++g) {
    if (g) s += ";";
    for (std::size_t i = 0; i < parts[g].size(); ++i) {
      if (i) s += ",";
      s += std::to_string(parts[g][i]);
    }
  }
  return s;
}

std::string join_str(const std::vector<std::string>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    s += xs[i];
  }
  return s;
}

}  // namespace

void resolve_strategy_defaults(ExperimentConfig& cfg) {
  if (!cfg.lambda_explicit) {
    switch (cfg.strategy.kind) {
      case StrategyKind::ewc: cfg.strategy.lambda = 5000.0; break;
      case StrategyKind::mas: cfg.strategy.lambda = 1.0; break;
      case StrategyKind::lwf:
      case StrategyKind::icarl:
      case StrategyKind::eeil: cfg.strategy.lambda = 1.0; break;
      case StrategyKind::lb:
      case StrategyKind::ub: cfg.strategy.lambda = 0.0; break;
    }
  }
  if (!cfg.balanced_explicit) {
    cfg.strategy.balanced_epochs = std::max<std::size_t>(1, cfg.train.epochs / 5);
  }
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "scenario" && section != "data" && section != "model" &&
          section != "strategy" && section != "train" && section != "run")
        throw ConfigError("unknown section '" + section + "'");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("key '" + key + "' appears before any [section]");

    if (section == "scenario") {
      if (key == "kind") cfg.scenario.kind = value;
      else if (key == "classes_per_task") cfg.scenario.classes_per_task = parse_partitions(value, key);
      else if (key == "class_order") cfg.scenario.class_order = value;
      else if (key == "class_order_seed") cfg.scenario.class_order_seed = parse_u64(value, key);
      else if (key == "aware") cfg.scenario.aware = parse_bool(value, key);
      else throw ConfigError("unknown key '" + key + "' in [scenario]");
    } else if (section == "data") {
      if (key == "source") cfg.data.source = value;
      else if (key == "dir") cfg.data.dir = value;
      else if (key == "datasets") cfg.data.datasets = split(value, ',');
      else if (key == "seed") cfg.data.seed = parse_u64(value, key);
      else if (key == "classes") cfg.data.classes = parse_size_list(value, key);
      else if (key == "train_per_class") cfg.data.train_per_class = parse_size(value, key);
      else if (key == "val_per_class") cfg.data.val_per_class = parse_size(value, key);
      else if (key == "test_per_class") cfg.data.test_per_class = parse_size(value, key);
      else if (key == "sigma") cfg.data.sigma = parse_real(value, key);
      else if (key == "channels") cfg.data.channels = parse_size(value, key);
      else if (key == "height") cfg.data.height = parse_size(value, key);
      else if (key == "width") cfg.data.width = parse_size(value, key);
      else throw ConfigError("unknown key '" + key + "' in [data]");
    } else if (section == "model") {
      if (key == "conv_filters") cfg.model.conv_filters = parse_size_list(value, key);
      else if (key == "feature_dim") cfg.model.feature_dim = parse_size(value, key);
      else if (key == "head_hidden") cfg.model.head_hidden = parse_size(value, key);
      else throw ConfigError("unknown key '" + key + "' in [model]");
    } else if (section == "strategy") {
      if (key == "name") cfg.strategy.kind = strategy_from_name(value);
      else if (key == "lambda") { cfg.strategy.lambda = parse_real(value, key); cfg.lambda_explicit = true; }
      else if (key == "temperature") cfg.strategy.temperature = parse_real(value, key);
      else if (key == "exemplars_per_class") cfg.strategy.exemplars_per_class = parse_size(value, key);
      else if (key == "balanced_epochs") { cfg.strategy.balanced_epochs = parse_size(value, key); cfg.balanced_explicit = true; }
      else if (key == "icarl_nme") cfg.strategy.icarl_nme = parse_bool(value, key);
      else if (key == "fisher_sample_cap") cfg.strategy.fisher_sample_cap = parse_size(value, key);
      else throw ConfigError("unknown key '" + key + "' in [strategy]");
    } else if (section == "train") {
      if (key == "epochs") cfg.train.epochs = parse_size(value, key);
      else if (key == "batch_size") cfg.train.batch_size = parse_size(value, key);
      else if (key == "patience") cfg.train.patience = parse_size(value, key);
      else if (key == "lr") cfg.train.lr = parse_real(value, key);
      else if (key == "momentum") cfg.train.momentum = parse_real(value, key);
      else throw ConfigError("unknown key '" + key + "' in [train]");
    } else {  // run
      if (key == "seeds") cfg.seeds = parse_u64_list(value, key);
      else if (key == "out") cfg.out_dir = value;
      else if (key == "save_models") cfg.save_models = parse_bool(value, key);
      else throw ConfigError("unknown key '" + key + "' in [run]");
    }
  }
  resolve_strategy_defaults(cfg);
  if (cfg.seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  cfg.strategy.validate();
  cfg.train.validate();
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_overrides(ExperimentConfig& cfg, const CliOverrides& ov,
                     std::vector<std::string>* notices) {
  auto notice = [&](const std::string& msg) {
    if (notices) notices->push_back(msg);
  };
  if (ov.strategy) {
    const StrategyKind kind = strategy_from_name(*ov.strategy);
    if (kind != cfg.strategy.kind)
      notice("flag --strategy " + *ov.strategy + " overrides config value '" +
             strategy_name(cfg.strategy.kind) + "'");
    cfg.strategy.kind = kind;
    resolve_strategy_defaults(cfg);
  }
  if (ov.scenario_kind) {
    if (*ov.scenario_kind != cfg.scenario.kind)
      notice("flag --scenario " + *ov.scenario_kind + " overrides config value '" +
             cfg.scenario.kind + "'");
    cfg.scenario.kind = *ov.scenario_kind;
  }
  if (ov.seeds) {
    if (*ov.seeds != cfg.seeds)
      notice("flag --seeds overrides config value '" + join_u64(cfg.seeds) + "'");
    cfg.seeds = *ov.seeds;
  }
  if (ov.out_dir) {
    if (*ov.out_dir != cfg.out_dir)
      notice("flag --out overrides config value '" + cfg.out_dir + "'");
    cfg.out_dir = *ov.out_dir;
  }
}

std::string echo_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[scenario]\n";
  out << "kind = " << cfg.scenario.kind << "\n";
  out << "classes_per_task = " << join_partitions(cfg.scenario.classes_per_task) << "\n";
  out << "class_order = " << cfg.scenario.class_order << "\n";
  out << "class_order_seed = " << cfg.scenario.class_order_seed << "\n";
  out << "aware = " << (cfg.scenario.aware ? "true" : "false") << "\n";
  out << "\n[data]\n";
  out << "source = " << cfg.data.source << "\n";
  out << "dir = " << cfg.data.dir << "\n";
  out << "datasets = " << join_str(cfg.data.datasets) << "\n";
  out << "seed = " << cfg.data.seed << "\n";
  out << "classes = " << join_size(cfg.data.classes) << "\n";
  out << "train_per_class = " << cfg.data.train_per_class << "\n";
  out << "val_per_class = " << cfg.data.val_per_class << "\n";
  out << "test_per_class = " << cfg.data.test_per_class << "\n";
  out << "sigma = " << format_double(cfg.data.sigma) << "\n";
  out << "channels = " << cfg.data.channels << "\n";
  out << "height = " << cfg.data.height << "\n";
  out << "width = " << cfg.data.width << "\n";
  out << "\n[model]\n";
  out << "conv_filters = " << join_size(cfg.model.conv_filters) << "\n";
  out << "feature_dim = " << cfg.model.feature_dim << "\n";
  out << "head_hidden = " << cfg.model.head_hidden << "\n";
  out << "\n[strategy]\n";
  out << "name = " << strategy_name(cfg.strategy.kind) << "\n";
  out << "lambda = " << format_double(cfg.strategy.lambda) << "\n";
  out << "temperature = " << format_double(cfg.strategy.temperature) << "\n";
  out << "exemplars_per_class = " << cfg.strategy.exemplars_per_class << "\n";
  out << "balanced_epochs = " << cfg.strategy.balanced_epochs << "\n";
  out << "icarl_nme = " << (cfg.strategy.icarl_nme ? "true" : "false") << "\n";
  out << "fisher_sample_cap = " << cfg.strategy.fisher_sample_cap << "\n";
  out << "\n[train]\n";
  out << "epochs = " << cfg.train.epochs << "\n";
  out << "batch_size = " << cfg.train.batch_size << "\n";
  out << "patience = " << cfg.train.patience << "\n";
  out << "lr = " << format_double(cfg.train.lr) << "\n";
  out << "momentum = " << format_double(cfg.train.momentum) << "\n";
  out << "\n[run]\n";
  out << "seeds = " << join_u64(cfg.seeds) << "\n";
  out << "out = " << cfg.out_dir << "\n";
  out << "save_models = " << (cfg.save_models ? "true" : "false") << "\n";
  return out.str();
}

std::vector<DatasetBundle> load_bundles(const DataConfig& data) {
  if (data.datasets.empty()) throw ConfigError("data.datasets must not be empty");
  std::vector<DatasetBundle> bundles;
  if (data.source == "synth") {
    for (std::size_t i = 0; i < data.datasets.size(); ++i) {
      SynthConfig sc;
      sc.name = data.datasets[i];
      sc.classes = data.classes.size() == 1 ? data.classes[0]
                   : i < data.classes.size()
                       ? data.classes[i]
                       : throw ConfigError("data.classes must have 1 or #datasets entries");
      sc.train_per_class = data.train_per_class;
      sc.val_per_class = data.val_per_class;
      sc.test_per_class = data.test_per_class;
      sc.sigma = data.sigma;
      sc.channels = data.channels;
      sc.height = data.height;
      sc.width = data.width;
      sc.seed = data.seed * 1000003ULL + i;  // distinct stream per dataset
      bundles.push_back(DatasetBundle{sc.name, gen_synthetic(sc, Split::train),
                                      gen_synthetic(sc, Split::val),
                                      gen_synthetic(sc, Split::test)});
    }
  } else if (data.source == "llcb") {
    for (const std::string& name : data.datasets) {
      const std::string base = data.dir + "/" + name;
      bundles.push_back(DatasetBundle{
          name, read_container(base + ".train.llcb", Split::train, name),
          read_container(base + ".val.llcb", Split::val, name),
          read_container(base + ".test.llcb", Split::test, name)});
    }
  } else {
    throw ConfigError("data.source must be 'synth' or 'llcb', got '" + data.source + "'");
  }
  return bundles;
}

Scenario build_scenario(const ExperimentConfig& cfg, const std::vector<DatasetBundle>& bundles) {
  const std::string& kind = cfg.scenario.kind;
  std::vector<const DatasetBundle*> ptrs;
  for (const DatasetBundle& b : bundles) ptrs.push_back(&b);

  if (kind == "task-il" || kind == "class-il") {
    if (bundles.size() != 1)
      throw ConfigError(kind + " expects exactly one dataset, got " +
                        std::to_string(bundles.size()));
    if (cfg.scenario.classes_per_task.size() != 1)
      throw ConfigError(kind + " expects a single classes_per_task list");
    std::optional<std::vector<int>> order;
    if (cfg.scenario.class_order == "shuffled") {
      RngStream rng = seed_rng(cfg.scenario.class_order_seed, "classorder");
      std::vector<std::size_t> perm;
      rng.permutation(bundles[0].train.class_count, perm);
      order.emplace(perm.begin(), perm.end());
    } else if (cfg.scenario.class_order != "ascending") {
      throw ConfigError("scenario.class_order must be 'ascending' or 'shuffled'");
    }
    return build_incremental_scenario(bundles[0], cfg.scenario.classes_per_task[0],
                                      kind_from_name(kind), order ? &*order : nullptr);
  }
  if (kind == "domain-aware" || kind == "domain-agnostic") {
    return build_cross_domain(ptrs, kind == "domain-aware");
  }
  if (kind == "fine-grained") {
    std::vector<std::vector<int>> parts = cfg.scenario.classes_per_task;
    if (parts.size() == 1 && bundles.size() > 1)
      parts.assign(bundles.size(), parts[0]);
    return build_fine_grained_cross_domain(ptrs, parts, cfg.scenario.aware);
  }
  throw ConfigError("unknown scenario kind '" + kind + "'");
}

namespace {

ScenarioDescriptor make_descriptor(const ExperimentConfig& cfg, const Scenario& scn) {
  ScenarioDescriptor d;
  d.kind = cfg.scenario.kind;
  for (const DatasetBundle* b : scn.domains) d.datasets.push_back(b->name);
  for (const TaskSpec& t : scn.tasks) d.task_labels.push_back(t.labels);
  d.class_count = scn.class_count;
  return d;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

RunRecord run_single_seed(const ExperimentConfig& cfg, const Scenario& scn, std::uint64_t seed,
                          const std::string& save_model_to) {
  const DatasetBundle& first = *scn.domains.front();
  ModelConfig mc;
  mc.in_channels = first.train.channels;
  mc.in_h = first.train.height;
  mc.in_w = first.train.width;
  mc.conv_filters = cfg.model.conv_filters;
  mc.feature_dim = cfg.model.feature_dim;
  mc.head_hidden = cfg.model.head_hidden;
  mc.seed = seed;

  Model model = build_model(mc);
  RngStream shuffle_rng = seed_rng(seed, "shuffle");
  RngStream fisher_rng = seed_rng(seed, "fisher");
  AccessGuard guard;
  RunContext ctx{&guard, &shuffle_rng, &fisher_rng};

  StrategyState state;
  state.store.budget = cfg.strategy.exemplars_per_class;

  RunRecord rec;
  rec.scenario = make_descriptor(cfg, scn);
  rec.strategy = strategy_name(cfg.strategy.kind);
  rec.seed = seed;

  const int T = static_cast<int>(scn.task_count());
  if (cfg.strategy.kind == StrategyKind::ub) {
    for (int t = 0; t < T; ++t) grow_head(model, scn.tasks[t].labels, t);
    const auto start = std::chrono::steady_clock::now();
    train_joint(model, scn, cfg.train, ctx);
    rec.wall_clock_s.push_back(seconds_since(start));

    guard.begin_phase("eval joint");
    EvalCounts counts;
    for (int i = 0; i < T; ++i) {
      guard.allow(&scn.domain_data(scn.tasks[i].domain).test, scn.tasks[i].test_idx);
      EvalCounts c = evaluate_task(model, scn, T - 1, i, cfg.strategy, state, &guard);
      counts.correct += c.correct;
      counts.total += c.total;
    }
    rec.matrix.record(1, 1, counts.correct, counts.total);
    rec.avg_accuracy.push_back(rec.matrix.average_accuracy(1));
  } else {
    for (int t = 0; t < T; ++t) {
      grow_head(model, scn.tasks[t].labels, t);
      const auto start = std::chrono::steady_clock::now();
      train_task(cfg.strategy.kind, model, scn, t, state, cfg.strategy, cfg.train, ctx);
      rec.wall_clock_s.push_back(seconds_since(start));

      for (int i = 0; i <= t; ++i) {
        guard.begin_phase("eval task " + std::to_string(i) + " after " + std::to_string(t));
        guard.allow(&scn.domain_data(scn.tasks[i].domain).test, scn.tasks[i].test_idx);
        EvalCounts c = evaluate_task(model, scn, t, i, cfg.strategy, state, &guard);
        rec.matrix.record(t + 1, i + 1, c.correct, c.total);
      }
      rec.avg_accuracy.push_back(rec.matrix.average_accuracy(t + 1));
    }
    if (T >= 2) rec.forgetting = rec.matrix.average_forgetting();
  }

  if (guard.violations() > 0) {
    std::string detail = guard.violation_log().empty() ? "" : ": " + guard.violation_log().front();
    throw ProtocolViolation("data-access contract violated " +
                            std::to_string(guard.violations()) + " times" + detail);
  }
  if (!save_model_to.empty()) save_checkpoint(model, save_model_to);
  return rec;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg) {
  const std::vector<DatasetBundle> bundles = load_bundles(cfg.data);
  const Scenario scn = build_scenario(cfg, bundles);

  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.out_dir + "'");
  {
    std::ofstream out(cfg.out_dir + "/config_resolved.cfg", std::ios::binary | std::ios::trunc);
    out << echo_config(cfg);
  }

  // Seeds are independent jobs: immutable data and scenario, per-seed
  // output directory, per-seed RNG streams. The collected records keep seed
  // order, so aggregate.json does not depend on the thread count.
  std::vector<std::optional<RunRecord>> slots(cfg.seeds.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t si = 0; si < static_cast<std::int64_t>(cfg.seeds.size()); ++si) {
    const std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(si)];
    const std::string seed_dir = cfg.out_dir + "/seed_" + std::to_string(seed);
    std::error_code seed_ec;
    std::filesystem::create_directories(seed_dir, seed_ec);
    try {
      RunRecord rec = run_single_seed(cfg, scn, seed,
                                      cfg.save_models ? seed_dir + "/model.clmd" : "");
      emit_results(rec, seed_dir);
      slots[static_cast<std::size_t>(si)] = std::move(rec);
    } catch (const std::exception& e) {
      std::ofstream marker(seed_dir + "/FAILED.txt", std::ios::trunc);
      marker << "seed " << seed << " aborted: " << e.what() << "\n";
#pragma omp critical(clbench_seed_log)
      std::cerr << "seed " << seed << " aborted: " << e.what() << "\n";
    }
  }

  std::vector<RunRecord> records;
  for (std::optional<RunRecord>& slot : slots) {
    if (slot) records.push_back(std::move(*slot));
  }
  if (!records.empty()) {
    emit_aggregate(aggregate_runs(records), cfg.out_dir + "/aggregate.json");
  }
  return records;
}

}  // namespace clbench
