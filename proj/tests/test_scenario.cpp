#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "clbench/errors.hpp"
#include "clbench/scenario.hpp"

using namespace clbench;

namespace {

DatasetBundle synth_bundle(const std::string& name, std::size_t classes, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.name = name;
  cfg.classes = classes;
  cfg.train_per_class = 6;
  cfg.val_per_class = 3;
  cfg.test_per_class = 3;
  cfg.height = 4;
  cfg.width = 4;
  cfg.sigma = 2.0;
  cfg.seed = seed;
  if (classes > 8) {
    cfg.centers.clear();
    for (std::size_t k = 0; k < classes; ++k)
      cfg.centers.push_back(10.0 + 235.0 * static_cast<double>(k) / classes);
  }
  return DatasetBundle{name, gen_synthetic(cfg, Split::train), gen_synthetic(cfg, Split::val),
                       gen_synthetic(cfg, Split::test)};
}

std::vector<int> mask_labels(const LogitMask& m) { return m.labels(); }

}  // namespace

TEST_CASE("class partitions split as expected") {
  {
    const DatasetBundle ds = synth_bundle("domA", 8, 1);
    const std::vector<TaskSpec> tasks = split_classes(ds, {2, 2, 2, 2});
    REQUIRE(tasks.size() == 4);
    CHECK(tasks[0].labels == std::vector<int>{0, 1});
    CHECK(tasks[1].labels == std::vector<int>{2, 3});
    CHECK(tasks[2].labels == std::vector<int>{4, 5});
    CHECK(tasks[3].labels == std::vector<int>{6, 7});
  }
  {
    const DatasetBundle ds = synth_bundle("domC", 11, 2);
    const std::vector<TaskSpec> tasks = split_classes(ds, {3, 3, 3, 2});
    REQUIRE(tasks.size() == 4);
    CHECK(tasks[0].labels == std::vector<int>{0, 1, 2});
    CHECK(tasks[1].labels == std::vector<int>{3, 4, 5});
    CHECK(tasks[2].labels == std::vector<int>{6, 7, 8});
    CHECK(tasks[3].labels == std::vector<int>{9, 10});
  }
  {
    const DatasetBundle ds = synth_bundle("domB", 9, 3);
    const std::vector<TaskSpec> tasks = split_classes(ds, {3, 2, 2, 2});
    REQUIRE(tasks.size() == 4);
    CHECK(tasks[0].labels == std::vector<int>{0, 1, 2});
    CHECK(tasks[1].labels == std::vector<int>{3, 4});
    CHECK(tasks[2].labels == std::vector<int>{5, 6});
    CHECK(tasks[3].labels == std::vector<int>{7, 8});
  }
}

TEST_CASE("split_classes rejects a partition that does not sum to the class count") {
  const DatasetBundle ds = synth_bundle("domA", 8, 1);
  CHECK_THROWS_AS(split_classes(ds, {2, 2, 2}), ConfigError);
  CHECK_THROWS_AS(split_classes(ds, {2, 2, 2, 3}), ConfigError);
}

TEST_CASE("partition property: disjoint, exhaustive, every sample exactly once") {
  const DatasetBundle ds = synth_bundle("domA", 8, 4);
  const Scenario scn = build_incremental_scenario(ds, {2, 2, 2, 2}, ScenarioKind::class_il);

  std::set<int> labels;
  for (const TaskSpec& t : scn.tasks)
    for (int l : t.labels) CHECK(labels.insert(l).second);
  CHECK(labels.size() == 8);

  std::set<std::size_t> train_indices;
  std::size_t total = 0;
  for (const TaskSpec& t : scn.tasks) {
    for (std::size_t i : t.train_idx) CHECK(train_indices.insert(i).second);
    total += t.train_idx.size();
  }
  CHECK(total == ds.train.size());

  for (const TaskSpec& t : scn.tasks) {
    const std::set<int> ls(t.labels.begin(), t.labels.end());
    for (std::size_t i : t.train_idx)
      CHECK(ls.count(scn.global_label(t.domain, ds.train.labels[i])));
  }
}

TEST_CASE("shuffled class order is a relabeled partition") {
  const DatasetBundle ds = synth_bundle("domA", 8, 5);
  const std::vector<int> order = {5, 2, 7, 0, 3, 6, 1, 4};
  const Scenario scn =
      build_incremental_scenario(ds, {2, 2, 2, 2}, ScenarioKind::class_il, &order);
  CHECK(scn.global_label(0, 5) == 0);
  CHECK(scn.global_label(0, 2) == 1);
  CHECK(scn.global_label(0, 4) == 7);
  CHECK(scn.tasks[0].labels == std::vector<int>{0, 1});
  for (std::size_t i : scn.tasks[0].train_idx) {
    const int raw = ds.train.labels[i];
    CHECK((raw == 5 || raw == 2));
  }
}

TEST_CASE("eval masks per scenario kind") {
  const DatasetBundle ds = synth_bundle("domA", 8, 6);
  const Scenario task_il = build_incremental_scenario(ds, {2, 2, 2, 2}, ScenarioKind::task_il);
  const Scenario class_il = build_incremental_scenario(ds, {2, 2, 2, 2}, ScenarioKind::class_il);

  CHECK(mask_labels(task_il.eval_mask(3, 1)) == std::vector<int>{2, 3});
  CHECK(mask_labels(class_il.eval_mask(1, 0)) == std::vector<int>{0, 1, 2, 3});
  CHECK(mask_labels(class_il.eval_mask(3, 2)) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});

  CHECK_THROWS_AS(task_il.eval_mask(1, 2), ProtocolViolation);
  CHECK_THROWS_AS(class_il.eval_mask(0, 1), ProtocolViolation);

  for (int t = 0; t < 4; ++t)
    for (int i = 0; i <= t; ++i)
      CHECK(task_il.eval_mask(t, i).is_subset_of(class_il.eval_mask(t, i)));
}

TEST_CASE("cross-domain scenario offsets and masks") {
  const DatasetBundle domA = synth_bundle("domA", 8, 7);
  const DatasetBundle domB = synth_bundle("domB", 9, 8);
  const DatasetBundle domC = synth_bundle("domC", 11, 9);
  const DatasetBundle domD = synth_bundle("domD", 8, 10);
  const std::vector<const DatasetBundle*> domains = {&domA, &domB, &domC, &domD};

  const Scenario aware = build_cross_domain(domains, true);
  REQUIRE(aware.task_count() == 4);
  CHECK(aware.class_count == 36);
  CHECK(aware.tasks[0].labels.front() == 0);
  CHECK(aware.tasks[0].labels.back() == 7);
  CHECK(aware.tasks[1].labels.front() == 8);
  CHECK(aware.tasks[1].labels.back() == 16);
  CHECK(aware.tasks[2].labels.front() == 17);
  CHECK(aware.tasks[2].labels.back() == 27);
  CHECK(aware.tasks[3].labels.front() == 28);
  CHECK(aware.tasks[3].labels.back() == 35);

  const std::vector<int> m1 = mask_labels(aware.eval_mask(2, 1));
  CHECK(m1.front() == 8);
  CHECK(m1.back() == 16);
  CHECK(m1.size() == 9);

  const Scenario agnostic = build_cross_domain(domains, false);
  const std::vector<int> m2 = mask_labels(agnostic.eval_mask(2, 1));
  CHECK(m2.front() == 0);
  CHECK(m2.back() == 27);
  CHECK(m2.size() == 28);
}

TEST_CASE("cross-domain rejects duplicates and singletons") {
  const DatasetBundle domA = synth_bundle("domA", 8, 7);
  const DatasetBundle domA2 = synth_bundle("domA", 8, 8);
  CHECK_THROWS_AS(build_cross_domain({&domA}, true), ConfigError);
  CHECK_THROWS_AS(build_cross_domain({&domA, &domA2}, true), ConfigError);
}

TEST_CASE("fine-grained cross-domain: domains x splits tasks") {
  const DatasetBundle domA = synth_bundle("domA", 8, 11);
  const DatasetBundle domB = synth_bundle("domB", 9, 12);
  const DatasetBundle domC = synth_bundle("domC", 11, 13);
  const DatasetBundle domD = synth_bundle("domD", 8, 14);
  const std::vector<const DatasetBundle*> domains = {&domA, &domB, &domC, &domD};
  const std::vector<std::vector<int>> splits = {
      {2, 2, 2, 2}, {3, 2, 2, 2}, {3, 3, 3, 2}, {2, 2, 2, 2}};

  const Scenario scn = build_fine_grained_cross_domain(domains, splits, true);
  REQUIRE(scn.task_count() == 16);
  CHECK(scn.tasks[0].labels == std::vector<int>{0, 1});
  CHECK(scn.tasks[0].domain == 0);
  CHECK(scn.tasks[4].domain == 1);
  CHECK(scn.tasks[4].labels == std::vector<int>{8, 9, 10});

  std::set<int> all;
  for (const TaskSpec& t : scn.tasks) all.insert(t.labels.begin(), t.labels.end());
  CHECK(all.size() == 36);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 35);

  // domain-aware mask only includes blocks of the queried task's domain
  const std::vector<int> m = mask_labels(scn.eval_mask(2, 1));
  CHECK(m == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("train masks: aware kinds use the task labels, agnostic the seen union") {
  const DatasetBundle ds = synth_bundle("domA", 8, 15);
  const Scenario task_il = build_incremental_scenario(ds, {2, 2, 2, 2}, ScenarioKind::task_il);
  const Scenario class_il = build_incremental_scenario(ds, {2, 2, 2, 2}, ScenarioKind::class_il);
  CHECK(mask_labels(task_il.train_mask(2)) == std::vector<int>{4, 5});
  CHECK(mask_labels(class_il.train_mask(2)) == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("task views never expose samples of other tasks") {
  const DatasetBundle ds = synth_bundle("domA", 8, 16);
  const Scenario scn = build_incremental_scenario(ds, {2, 2, 2, 2}, ScenarioKind::class_il);
  for (const TaskSpec& t : scn.tasks) {
    const std::set<int> ls(t.labels.begin(), t.labels.end());
    for (std::size_t i : t.val_idx) CHECK(ls.count(ds.val.labels[i]));
    for (std::size_t i : t.test_idx) CHECK(ls.count(ds.test.labels[i]));
  }
}
