#include "clbench/scenario.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "clbench/errors.hpp"

namespace clbench {

const char* kind_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::task_il: return "task-il";
    case ScenarioKind::class_il: return "class-il";
    case ScenarioKind::domain_aware: return "domain-aware";
    case ScenarioKind::domain_agnostic: return "domain-agnostic";
  }
  return "?";
}

ScenarioKind kind_from_name(const std::string& name) {
  if (name == "task-il") return ScenarioKind::task_il;
  if (name == "class-il") return ScenarioKind::class_il;
  if (name == "domain-aware") return ScenarioKind::domain_aware;
  if (name == "domain-agnostic") return ScenarioKind::domain_agnostic;
  throw ConfigError("unknown scenario kind '" + name + "'");
}

DomainSequence DomainSequence::build(const std::vector<const DatasetBundle*>& domains) {
  if (domains.empty()) throw ConfigError("domain sequence: no domains given");
  std::set<std::string> names;
  for (const DatasetBundle* d : domains) {
    if (!names.insert(d->name).second)
      throw ConfigError("domain sequence: duplicate domain name '" + d->name + "'");
    const ImageDataset& first = domains.front()->train;
    if (d->train.channels != first.channels || d->train.height != first.height ||
        d->train.width != first.width)
      throw ConfigError("domain sequence: '" + d->name +
                        "' image shape differs from the first domain; one model serves all "
                        "domains");
  }
  DomainSequence seq;
  seq.domains = domains;
  int offset = 0;
  for (const DatasetBundle* d : domains) {
    seq.offsets.push_back(offset);
    offset += static_cast<int>(d->train.class_count);
  }
  return seq;
}

int DomainSequence::total_classes() const {
  if (domains.empty()) return 0;
  return offsets.back() + static_cast<int>(domains.back()->train.class_count);
}

namespace {

void check_bundle(const DatasetBundle& ds) {
  ds.train.validate();
  ds.val.validate();
  ds.test.validate();
  if (ds.train.class_count != ds.val.class_count || ds.train.class_count != ds.test.class_count)
    throw DataError("dataset '" + ds.name + "': split class counts disagree");
}

// Tasks for one domain. `rank_of_raw` maps a raw dataset label to its rank
// in the chosen class order; global id = offset + rank.
std::vector<TaskSpec> make_tasks(const DatasetBundle& ds, const std::vector<int>& classes_per_task,
                                 const std::vector<int>& rank_of_raw, int offset,
                                 int first_task_index, int domain) {
  const int n_classes = static_cast<int>(ds.train.class_count);
  int total = 0;
  for (int c : classes_per_task) {
    if (c <= 0) throw ConfigError("classes_per_task entries must be positive");
    total += c;
  }
  if (total != n_classes)
    throw ConfigError("classes_per_task sums to " + std::to_string(total) + " but dataset '" +
                      ds.name + "' has " + std::to_string(n_classes) + " classes");

  std::vector<TaskSpec> tasks(classes_per_task.size());
  std::vector<int> task_of_rank(n_classes);
  int rank = 0;
  for (std::size_t j = 0; j < classes_per_task.size(); ++j) {
    TaskSpec& t = tasks[j];
    t.index = first_task_index + static_cast<int>(j);
    t.domain = domain;
    for (int c = 0; c < classes_per_task[j]; ++c, ++rank) {
      t.labels.push_back(offset + rank);
      task_of_rank[rank] = static_cast<int>(j);
    }
  }

  auto assign = [&](const ImageDataset& split, std::vector<std::size_t> TaskSpec::*member) {
    for (std::size_t i = 0; i < split.size(); ++i) {
      const int r = rank_of_raw[split.labels[i]];
      (tasks[task_of_rank[r]].*member).push_back(i);
    }
  };
  assign(ds.train, &TaskSpec::train_idx);
  assign(ds.val, &TaskSpec::val_idx);
  assign(ds.test, &TaskSpec::test_idx);

  for (const TaskSpec& t : tasks) {
    if (t.train_idx.empty())
      throw DataError("dataset '" + ds.name + "': task " + std::to_string(t.index) +
                      " has no train samples");
  }
  return tasks;
}

std::vector<int> identity_ranks(std::size_t n) {
  std::vector<int> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

// class_order lists raw labels in their new sequence; rank_of_raw inverts it.
std::vector<int> ranks_from_order(const std::vector<int>& order, std::size_t n_classes) {
  if (order.size() != n_classes) throw ConfigError("class order must list every class once");
  std::vector<int> rank(n_classes, -1);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const int raw = order[pos];
    if (raw < 0 || static_cast<std::size_t>(raw) >= n_classes || rank[raw] != -1)
      throw ConfigError("class order must be a permutation of the dataset's classes");
    rank[raw] = static_cast<int>(pos);
  }
  return rank;
}

void check_partition(const Scenario& scn) {
  std::set<int> seen;
  for (const TaskSpec& t : scn.tasks) {
    for (int label : t.labels) {
      if (!seen.insert(label).second)
        throw ProtocolViolation("scenario: label " + std::to_string(label) +
                                " appears in two tasks");
    }
  }
  if (static_cast<int>(seen.size()) != scn.class_count || *seen.begin() != 0 ||
      *seen.rbegin() != scn.class_count - 1)
    throw ProtocolViolation("scenario: task label sets do not partition the label space");
}

}  // namespace

std::vector<TaskSpec> split_classes(const DatasetBundle& ds,
                                    const std::vector<int>& classes_per_task,
                                    const std::vector<int>* class_order) {
  check_bundle(ds);
  const std::vector<int> ranks = class_order
                                     ? ranks_from_order(*class_order, ds.train.class_count)
                                     : identity_ranks(ds.train.class_count);
  return make_tasks(ds, classes_per_task, ranks, 0, 0, 0);
}

Scenario build_incremental_scenario(const DatasetBundle& ds,
                                    const std::vector<int>& classes_per_task, ScenarioKind kind,
                                    const std::vector<int>* class_order) {
  if (kind != ScenarioKind::task_il && kind != ScenarioKind::class_il)
    throw ConfigError("build_incremental_scenario handles task-il and class-il only");
  Scenario scn;
  scn.kind = kind;
  scn.tasks = split_classes(ds, classes_per_task, class_order);
  scn.class_count = static_cast<int>(ds.train.class_count);
  scn.domains = {&ds};
  scn.domain_offsets = {0};
  std::vector<int> ranks = class_order ? ranks_from_order(*class_order, ds.train.class_count)
                                       : identity_ranks(ds.train.class_count);
  scn.label_maps = {std::move(ranks)};
  check_partition(scn);
  return scn;
}

Scenario build_cross_domain(const std::vector<const DatasetBundle*>& domains, bool aware) {
  if (domains.size() < 2) throw ConfigError("cross-domain scenario needs at least 2 domains");
  DomainSequence seq = DomainSequence::build(domains);

  Scenario scn;
  scn.kind = aware ? ScenarioKind::domain_aware : ScenarioKind::domain_agnostic;
  scn.class_count = seq.total_classes();
  scn.domains = seq.domains;
  scn.domain_offsets = seq.offsets;
  for (std::size_t d = 0; d < domains.size(); ++d) {
    check_bundle(*domains[d]);
    const int n_classes = static_cast<int>(domains[d]->train.class_count);
    std::vector<TaskSpec> tasks =
        make_tasks(*domains[d], {n_classes}, identity_ranks(n_classes), seq.offsets[d],
                   static_cast<int>(d), static_cast<int>(d));
    scn.tasks.push_back(std::move(tasks.front()));
    std::vector<int> map(n_classes);
    for (int c = 0; c < n_classes; ++c) map[c] = seq.offsets[d] + c;
    scn.label_maps.push_back(std::move(map));
  }
  check_partition(scn);
  return scn;
}

Scenario build_fine_grained_cross_domain(const std::vector<const DatasetBundle*>& domains,
                                         const std::vector<std::vector<int>>& splits_per_domain,
                                         bool aware) {
  if (domains.size() < 2) throw ConfigError("cross-domain scenario needs at least 2 domains");
  if (splits_per_domain.size() != domains.size())
    throw ConfigError("fine-grained: need one classes_per_task list per domain");
  DomainSequence seq = DomainSequence::build(domains);

  Scenario scn;
  scn.kind = aware ? ScenarioKind::domain_aware : ScenarioKind::domain_agnostic;
  scn.class_count = seq.total_classes();
  scn.domains = seq.domains;
  scn.domain_offsets = seq.offsets;
  int task_index = 0;
  for (std::size_t d = 0; d < domains.size(); ++d) {
    check_bundle(*domains[d]);
    const int n_classes = static_cast<int>(domains[d]->train.class_count);
    std::vector<TaskSpec> tasks =
        make_tasks(*domains[d], splits_per_domain[d], identity_ranks(n_classes), seq.offsets[d],
                   task_index, static_cast<int>(d));
    task_index += static_cast<int>(tasks.size());
    for (TaskSpec& t : tasks) scn.tasks.push_back(std::move(t));
    std::vector<int> map(n_classes);
    for (int c = 0; c < n_classes; ++c) map[c] = seq.offsets[d] + c;
    scn.label_maps.push_back(std::move(map));
  }
  check_partition(scn);
  return scn;
}

std::vector<int> Scenario::seen_labels(int task) const {
  std::vector<int> labels;
  for (int j = 0; j <= task; ++j)
    labels.insert(labels.end(), tasks[j].labels.begin(), tasks[j].labels.end());
  return labels;
}

LogitMask Scenario::eval_mask(int trained_up_to, int eval_task) const {
  if (trained_up_to < 0 || trained_up_to >= static_cast<int>(tasks.size()))
    throw ProtocolViolation("eval_mask: trained_up_to " + std::to_string(trained_up_to) +
                            " out of range");
  if (eval_task < 0)
    throw ProtocolViolation("eval_mask: negative task index");
  if (eval_task > trained_up_to)
    throw ProtocolViolation("eval_mask: task " + std::to_string(eval_task) +
                            " not yet trained at stage " + std::to_string(trained_up_to) +
                            "; future-task evaluation is a leak");

  switch (kind) {
    case ScenarioKind::task_il:
      return LogitMask(tasks[eval_task].labels);
    case ScenarioKind::class_il:
    case ScenarioKind::domain_agnostic:
      return LogitMask(seen_labels(trained_up_to));
    case ScenarioKind::domain_aware: {
      std::vector<int> labels;
      for (int j = 0; j <= trained_up_to; ++j) {
        if (tasks[j].domain == tasks[eval_task].domain)
          labels.insert(labels.end(), tasks[j].labels.begin(), tasks[j].labels.end());
      }
      return LogitMask(std::move(labels));
    }
  }
  throw StateError("eval_mask: unhandled scenario kind");
}

LogitMask Scenario::train_mask(int task) const {
  if (task < 0 || task >= static_cast<int>(tasks.size()))
    throw ProtocolViolation("train_mask: task index out of range");
  switch (kind) {
    case ScenarioKind::task_il:
    case ScenarioKind::domain_aware:
      return LogitMask(tasks[task].labels);
    case ScenarioKind::class_il:
    case ScenarioKind::domain_agnostic:
      return LogitMask(seen_labels(task));
  }
  throw StateError("train_mask: unhandled scenario kind");
}

}  // namespace clbench
