#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clbench/dataset.hpp"
#include "clbench/mask.hpp"

namespace clbench {

enum class ScenarioKind { task_il, class_il, domain_aware, domain_agnostic };

const char* kind_name(ScenarioKind k);
ScenarioKind kind_from_name(const std::string& name);

// One benchmark dataset with its three splits.
struct DatasetBundle {
  std::string name;
  ImageDataset train, val, test;
};

// Ordered domains with label offsets so global ids never collide:
// offset_k = sum of earlier domains' class counts.
struct DomainSequence {
  std::vector<const DatasetBundle*> domains;
  std::vector<int> offsets;

  static DomainSequence build(const std::vector<const DatasetBundle*>& domains);
  int total_classes() const;
};

struct TaskSpec {
  int index = 0;
  int domain = 0;
  std::vector<int> labels;  // global ids, ascending and contiguous
  std::vector<std::size_t> train_idx, val_idx, test_idx;  // into the domain's splits
};

// Immutable protocol definition; owns no data, only indices into the
// bundles it references.
struct Scenario {
  ScenarioKind kind = ScenarioKind::class_il;
  std::vector<TaskSpec> tasks;
  int class_count = 0;
  std::vector<const DatasetBundle*> domains;    // per domain id
  std::vector<int> domain_offsets;
  std::vector<std::vector<int>> label_maps;     // per domain: raw label -> global id

  std::size_t task_count() const { return tasks.size(); }
  const DatasetBundle& domain_data(int domain) const { return *domains.at(domain); }
  int global_label(int domain, std::uint8_t raw) const {
    return label_maps.at(domain).at(raw);
  }

  // Mask the evaluator may use for task `eval_task` after finishing task
  // `trained_up_to` (both 0-based). A future-task query throws.
  LogitMask eval_mask(int trained_up_to, int eval_task) const;
  // Labels the training loss normalizes over while learning task t:
  // the task's own labels for the aware kinds, all seen labels otherwise.
  LogitMask train_mask(int task) const;
  // All labels of tasks 0..t.
  std::vector<int> seen_labels(int task) const;
};

// Partitions one dataset's classes into tasks: block j takes the next
// classes_per_task[j] classes, ascending by label (or by the given class
// order, in which case labels are re-ranked so that global ids stay
// contiguous per task). Index lists are built for all three splits.
std::vector<TaskSpec> split_classes(const DatasetBundle& ds,
                                    const std::vector<int>& classes_per_task,
                                    const std::vector<int>* class_order = nullptr);

Scenario build_incremental_scenario(const DatasetBundle& ds,
                                    const std::vector<int>& classes_per_task, ScenarioKind kind,
                                    const std::vector<int>* class_order = nullptr);

// One task per domain, labels offset per DomainSequence.
Scenario build_cross_domain(const std::vector<const DatasetBundle*>& domains, bool aware);

// Each domain further split by its classes_per_task list; tasks run in
// domain order.
Scenario build_fine_grained_cross_domain(const std::vector<const DatasetBundle*>& domains,
                                         const std::vector<std::vector<int>>& splits_per_domain,
                                         bool aware);

}  // namespace clbench
