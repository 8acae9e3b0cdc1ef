#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clbench/dataset.hpp"
#include "clbench/model.hpp"
#include "clbench/scenario.hpp"

namespace clbench {

enum class StrategyKind { lb, ub, ewc, mas, lwf, icarl, eeil };

const char* strategy_name(StrategyKind k);
StrategyKind strategy_from_name(const std::string& name);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::lb;
  double lambda = 0.0;                  // regularization / distillation strength
  double temperature = 2.0;
  std::size_t exemplars_per_class = 20;
  std::size_t balanced_epochs = 4;      // EEIL balanced fine-tuning
  bool icarl_nme = true;                // evaluate iCaRL by nearest-mean-of-exemplars
  std::size_t fisher_sample_cap = 2000;

  void validate() const;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::size_t patience = 5;  // early stopping on current-task val accuracy
  double lr = 0.01;
  double momentum = 0.9;

  void validate() const;
};

// A training sample: index into one domain's train split plus its global label.
struct SampleRef {
  int domain = 0;
  std::size_t index = 0;
  int label = 0;
};

// Per-class exemplar lists in herding-selection order.
struct ExemplarStore {
  std::size_t budget = 20;
  std::map<int, std::vector<SampleRef>> per_class;

  std::size_t total() const;
  std::vector<SampleRef> all() const;  // class-ascending, selection order
};

// Persistent per-strategy memory carried across tasks of one run.
struct StrategyState {
  GradientMap penalty_weights;  // running sum of Fisher / importance diagonals
  GradientMap anchor;           // latest theta*
  std::optional<Model> teacher;
  ExemplarStore store;
  std::map<int, Tensor> class_means;  // normalized exemplar means, per class
  std::vector<std::string> warnings;
};

// Run-scoped wiring shared by all strategies.
struct RunContext {
  AccessGuard* guard = nullptr;
  RngStream* shuffle_rng = nullptr;
  RngStream* fisher_rng = nullptr;
};

// Early stopping on a maximized correct-count: only strictly greater counts
// as improvement, training stops after `patience` non-improving epochs, and
// the snapshot of the best epoch (not the last) is what survives.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  // Records one epoch; false means stop now.
  bool observe(std::uint64_t correct, const GradientMap& params);
  bool has_best() const { return best_correct_ >= 0; }
  const GradientMap& best_params() const;
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  std::size_t patience_ = 0;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::int64_t best_correct_ = -1;
  GradientMap best_;
};

// Diagonal Fisher estimate: mean over sampled training points of the
// squared gradient of -log p(y|x) with y drawn from the model's own
// predictive distribution under `mask`. Anchors are taken by the caller.
GradientMap ewc_estimate_fisher(const Model& m, const Scenario& scn, int task,
                                const LogitMask& mask, std::size_t sample_cap, RngStream& rng,
                                AccessGuard* guard);

// Diagonal importance: mean of |d ||logits||^2 / d theta| over samples.
GradientMap mas_estimate_importance(const Model& m, const Scenario& scn, int task,
                                    std::size_t sample_cap, AccessGuard* guard);

// (lambda/2) sum_k W_k (theta_k - theta*_k)^2 as a tape node over the given
// parameter leaves. Entries whose stored shape is smaller than the current
// parameter (grown head rows) are zero-padded: new rows carry no penalty.
NodeId quadratic_penalty(Tape& tape, const std::map<std::string, NodeId>& params,
                         const GradientMap& anchor, const GradientMap& weights, double lambda);
double quadratic_penalty_value(const GradientMap& params, const GradientMap& anchor,
                               const GradientMap& weights, double lambda);

struct HerdingResult {
  std::vector<std::size_t> order;  // selected feature-row indices, in pick order
  bool capped = false;             // budget exceeded the sample count
};

// Greedy selection: step k picks the row minimizing
// || mean - (selected_sum + candidate) / k ||_2, ties to the lowest index.
HerdingResult herding_select(const Tensor& features, std::size_t budget);

// Herds exemplars for the task's classes from its train split and truncates
// any over-budget class list, keeping the earliest selections.
void update_exemplar_store(ExemplarStore& store, const Scenario& scn, int task, const Model& m,
                           std::vector<std::string>& warnings, AccessGuard* guard);

// Recomputes normalized exemplar feature means with the current model.
void refresh_class_means(StrategyState& state, const Scenario& scn, const Model& m,
                         AccessGuard* guard);

// argmin_{c in mask} || f(x)/||f(x)|| - mean_c ||, ties to the lowest class.
std::vector<int> icarl_nme_classify(const Model& m, const std::map<int, Tensor>& class_means,
                                    const Tensor& batch, const LogitMask& mask);

// Trains one task under the given strategy, updating model and state.
// Rehearsal strategies may additionally touch the exemplar store; nothing
// else outside the task's own splits is accessed.
void train_task(StrategyKind kind, Model& m, const Scenario& scn, int task, StrategyState& state,
                const StrategyConfig& scfg, const TrainConfig& tcfg, const RunContext& ctx);

// Joint training over every task at once (the upper bound). The head must
// already cover the full label space.
void train_joint(Model& m, const Scenario& scn, const TrainConfig& tcfg, const RunContext& ctx);

struct EvalCounts {
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
};

// Accuracy counts on task `eval_task`'s test split after finishing
// `trained_up_to`, using the scenario's evaluation mask and, for iCaRL with
// NME enabled, the exemplar-mean classifier.
EvalCounts evaluate_task(const Model& m, const Scenario& scn, int trained_up_to, int eval_task,
                         const StrategyConfig& scfg, const StrategyState& state,
                         AccessGuard* guard);

// Head-argmax accuracy counts over explicit sample refs of one split.
EvalCounts head_accuracy(const Model& m, const Scenario& scn, const std::vector<SampleRef>& refs,
                         Split split, const LogitMask& mask, AccessGuard* guard);

// Task sample lists with global labels.
std::vector<SampleRef> task_refs(const Scenario& scn, int task, Split split);

// Strategy-state sidecar: the checkpoint record envelope with a section tag
// per state kind ("fisher/", "anchor/", "teacher/", "means/", "store/").
void save_strategy_state(const StrategyState& state, const std::string& path);
StrategyState load_strategy_state(const std::string& path);

}  // namespace clbench
