#include "clbench/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "clbench/errors.hpp"

namespace clbench {

const char* strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::lb: return "lb";
    case StrategyKind::ub: return "ub";
    case StrategyKind::ewc: return "ewc";
    case StrategyKind::mas: return "mas";
    case StrategyKind::lwf: return "lwf";
    case StrategyKind::icarl: return "icarl";
    case StrategyKind::eeil: return "eeil";
  }
  return "?";
}

StrategyKind strategy_from_name(const std::string& name) {
  if (name == "lb") return StrategyKind::lb;
  if (name == "ub") return StrategyKind::ub;
  if (name == "ewc") return StrategyKind::ewc;
  if (name == "mas") return StrategyKind::mas;
  if (name == "lwf") return StrategyKind::lwf;
  if (name == "icarl") return StrategyKind::icarl;
  if (name == "eeil") return StrategyKind::eeil;
  throw ConfigError("unknown strategy '" + name + "'");
}

void StrategyConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("strategy: lambda must be >= 0");
  if (temperature <= 0.0) throw ConfigError("strategy: temperature must be > 0");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (lr <= 0.0) throw ConfigError("train: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0,1)");
}

std::size_t ExemplarStore::total() const {
  std::size_t n = 0;
  for (const auto& [c, refs] : per_class) n += refs.size();
  return n;
}

std::vector<SampleRef> ExemplarStore::all() const {
  std::vector<SampleRef> out;
  for (const auto& [c, refs] : per_class) out.insert(out.end(), refs.begin(), refs.end());
  return out;
}

bool EarlyStopper::observe(std::uint64_t correct, const GradientMap& params) {
  const std::size_t epoch = epoch_++;
  if (static_cast<std::int64_t>(correct) > best_correct_) {
    best_correct_ = static_cast<std::int64_t>(correct);
    best_epoch_ = epoch;
    best_ = params;
    return true;
  }
  return epoch - best_epoch_ < patience_;
}

const GradientMap& EarlyStopper::best_params() const {
  if (!has_best()) throw StateError("early stopper: no epoch observed yet");
  return best_;
}

std::vector<SampleRef> task_refs(const Scenario& scn, int task, Split split) {
  const TaskSpec& t = scn.tasks.at(task);
  const DatasetBundle& bundle = scn.domain_data(t.domain);
  const ImageDataset& ds = split == Split::train  ? bundle.train
                           : split == Split::val  ? bundle.val
                                                  : bundle.test;
  const std::vector<std::size_t>& idx = split == Split::train  ? t.train_idx
                                        : split == Split::val  ? t.val_idx
                                                               : t.test_idx;
  std::vector<SampleRef> refs;
  refs.reserve(idx.size());
  for (std::size_t i : idx)
    refs.push_back({t.domain, i, scn.global_label(t.domain, ds.labels[i])});
  return refs;
}

namespace {

const ImageDataset& split_of(const Scenario& scn, int domain, Split split) {
  const DatasetBundle& b = scn.domain_data(domain);
  return split == Split::train ? b.train : split == Split::val ? b.val : b.test;
}

struct BatchData {
  Tensor x;
  std::vector<int> labels;
};

BatchData materialize(const Scenario& scn, std::span<const SampleRef> refs, Split split,
                      AccessGuard* guard) {
  if (refs.empty()) throw DataError("materialize: empty batch");
  const ImageDataset& first = split_of(scn, refs[0].domain, split);
  BatchData b{Tensor::zeros({refs.size(), first.channels, first.height, first.width}),
              std::vector<int>(refs.size())};
  const std::size_t bytes = first.sample_bytes();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const ImageDataset& ds = split_of(scn, refs[i].domain, split);
    if (ds.sample_bytes() != bytes)
      throw DimensionError("materialize: domains disagree on image shape");
    if (guard) guard->note_access(&ds, refs[i].index);
    const std::uint8_t* src = ds.images.data() + refs[i].index * bytes;
    double* dst = b.x.data.data() + i * bytes;
    for (std::size_t p = 0; p < bytes; ++p) dst[p] = NormalizedView::normalize_pixel(src[p]);
    b.labels[i] = refs[i].label;
  }
  return b;
}

// Zero-pads an entry recorded before the head grew so that new rows carry
// neither penalty weight nor anchor. Row growth appends to the flat buffer,
// so the old data is a prefix of the new layout.
Tensor pad_to(const Tensor& t, const std::vector<std::size_t>& shape) {
  if (t.shape == shape) return t;
  const std::size_t target = shape_numel(shape);
  if (t.numel() > target || t.rank() != shape.size())
    throw DimensionError("penalty entry of shape " + shape_str(t.shape) +
                         " cannot pad to " + shape_str(shape));
  Tensor out = Tensor::zeros(shape);
  std::copy(t.data.begin(), t.data.end(), out.data.begin());
  return out;
}

void add_into(GradientMap& acc, const GradientMap& inc) {
  for (const auto& [name, t] : inc) {
    auto it = acc.find(name);
    if (it == acc.end()) {
      acc.emplace(name, t);
      continue;
    }
    Tensor grown = pad_to(it->second, t.shape);
    for (std::size_t i = 0; i < t.numel(); ++i) grown.data[i] += t.data[i];
    it->second = std::move(grown);
  }
}

struct LossExtras {
  const Model* teacher = nullptr;
  double distill_lambda = 0.0;
  double temperature = 2.0;
  const GradientMap* penalty_weights = nullptr;
  const GradientMap* anchor = nullptr;
  double penalty_lambda = 0.0;
};

NodeId build_loss(Tape& tape, const TapedModel& tm, const std::vector<int>& labels,
                  const LogitMask& loss_mask, const BatchData& batch, const LossExtras& extras) {
  NodeId loss = tape.softmax_xent(tm.logits, labels, &loss_mask);
  if (extras.teacher && extras.distill_lambda > 0.0) {
    const std::size_t k_old = extras.teacher->class_count();
    const std::size_t k_now = tape.value(tm.logits).dim(1);
    if (k_old == 0 || k_old > k_now)
      throw ProtocolViolation("distillation: teacher logit width " + std::to_string(k_old) +
                              " incompatible with student width " + std::to_string(k_now));
    Tensor teacher_logits = eval_logits(*extras.teacher, batch.x);
    NodeId old_slice = tape.slice_cols(tm.logits, k_old);
    NodeId distill = tape.soft_distill(old_slice, teacher_logits, extras.temperature);
    loss = tape.add(loss, tape.scale(distill, extras.distill_lambda));
  }
  if (extras.penalty_weights && extras.penalty_lambda > 0.0) {
    loss = tape.add(loss, quadratic_penalty(tape, tm.params, *extras.anchor,
                                            *extras.penalty_weights, extras.penalty_lambda));
  }
  return loss;
}

void restore_params(Model& m, const GradientMap& snapshot) {
  for (auto& [name, t] : model_params(m)) *t = snapshot.at(name);
}

// One SGD phase over `samples` with per-epoch shuffling, early stopping on
// val accuracy (when val data exists) and best-epoch restore.
void run_phase(Model& m, const Scenario& scn, const std::vector<SampleRef>& samples,
               const std::vector<SampleRef>& val_refs, const LogitMask& loss_mask,
               const LogitMask& val_mask, const LossExtras& extras, const TrainConfig& tcfg,
               const RunContext& ctx, std::size_t epochs, bool early_stop) {
  if (samples.empty()) throw DataError("training phase: empty train sample set");

  GradientMap velocity;
  EarlyStopper stopper(tcfg.patience);

  BatchIter iter(samples.size(), tcfg.batch_size, ctx.shuffle_rng, true);
  std::vector<std::size_t> positions;
  std::vector<SampleRef> batch_refs;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    iter.begin_epoch();
    while (iter.next(positions)) {
      batch_refs.clear();
      for (std::size_t p : positions) batch_refs.push_back(samples[p]);
      BatchData batch = materialize(scn, batch_refs, Split::train, ctx.guard);
      Tape tape(true);
      TapedModel tm = forward_model(m, tape, batch.x);
      NodeId loss = build_loss(tape, tm, batch.labels, loss_mask, batch, extras);
      GradientMap grads = tape.backward(loss);
      sgd_momentum_step(model_params(m), grads, tcfg.lr, tcfg.momentum, velocity);
    }
    if (!early_stop || val_refs.empty()) continue;

    const EvalCounts counts = head_accuracy(m, scn, val_refs, Split::val, val_mask, ctx.guard);
    if (!stopper.observe(counts.correct, snapshot_params(m))) break;
  }
  if (early_stop && !val_refs.empty() && stopper.has_best())
    restore_params(m, stopper.best_params());
}

void require_head_grown(const Model& m, const TaskSpec& task) {
  for (int label : task.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= m.class_count())
      throw ProtocolViolation("train_task: head not grown for label " + std::to_string(label));
  }
}

void guard_training_phase(const RunContext& ctx, const Scenario& scn, int task,
                          const std::vector<SampleRef>& train_samples) {
  if (!ctx.guard) return;
  ctx.guard->begin_phase("train task " + std::to_string(task));
  std::map<int, std::vector<std::size_t>> per_domain;
  for (const SampleRef& r : train_samples) per_domain[r.domain].push_back(r.index);
  for (const auto& [domain, idx] : per_domain)
    ctx.guard->allow(&scn.domain_data(domain).train, idx);
  const TaskSpec& t = scn.tasks.at(task);
  ctx.guard->allow(&scn.domain_data(t.domain).val, t.val_idx);
}

std::vector<SampleRef> with_store(const std::vector<SampleRef>& task_samples,
                                  const ExemplarStore& store) {
  std::vector<SampleRef> all = task_samples;
  const std::vector<SampleRef> stored = store.all();
  all.insert(all.end(), stored.begin(), stored.end());
  return all;
}

// Balanced fine-tuning pool: per seen class, the available samples are the
// task's own (new classes) plus the store; each epoch draws
// min-class-count samples per class without replacement.
void eeil_balanced_phase(Model& m, const Scenario& scn, int task,
                         const std::vector<SampleRef>& task_samples, StrategyState& state,
                         const StrategyConfig& scfg, const TrainConfig& tcfg,
                         const RunContext& ctx) {
  if (scfg.balanced_epochs == 0 || state.store.total() == 0) return;

  std::map<int, std::vector<SampleRef>> per_class;
  for (const SampleRef& r : task_samples) per_class[r.label].push_back(r);
  for (const auto& [c, refs] : state.store.per_class) {
    auto& bucket = per_class[c];
    bucket.insert(bucket.end(), refs.begin(), refs.end());
  }
  std::size_t n_min = std::numeric_limits<std::size_t>::max();
  for (const auto& [c, refs] : per_class) n_min = std::min(n_min, refs.size());
  if (n_min == 0) return;

  const LogitMask loss_mask(scn.seen_labels(task));
  LossExtras extras;
  extras.teacher = state.teacher ? &*state.teacher : nullptr;
  extras.distill_lambda = state.teacher ? scfg.lambda : 0.0;
  extras.temperature = scfg.temperature;

  GradientMap velocity;
  std::vector<std::size_t> perm;
  std::vector<std::size_t> positions;
  std::vector<SampleRef> batch_refs;
  for (std::size_t epoch = 0; epoch < scfg.balanced_epochs; ++epoch) {
    std::vector<SampleRef> pool;
    for (const auto& [c, refs] : per_class) {
      ctx.shuffle_rng->permutation(refs.size(), perm);
      for (std::size_t i = 0; i < n_min; ++i) pool.push_back(refs[perm[i]]);
    }
    BatchIter iter(pool.size(), tcfg.batch_size, ctx.shuffle_rng, true);
    iter.begin_epoch();
    while (iter.next(positions)) {
      batch_refs.clear();
      for (std::size_t p : positions) batch_refs.push_back(pool[p]);
      BatchData batch = materialize(scn, batch_refs, Split::train, ctx.guard);
      Tape tape(true);
      TapedModel tm = forward_model(m, tape, batch.x);
      NodeId loss = build_loss(tape, tm, batch.labels, loss_mask, batch, extras);
      GradientMap grads = tape.backward(loss);
      sgd_momentum_step(model_params(m), grads, tcfg.lr, tcfg.momentum, velocity);
    }
  }
}

Tensor features_of(const Model& m, const Scenario& scn, std::span<const SampleRef> refs,
                   AccessGuard* guard) {
  Tensor feats = Tensor::zeros({refs.size(), m.cfg.feature_dim});
  const std::size_t chunk = 128;
  for (std::size_t start = 0; start < refs.size(); start += chunk) {
    const std::size_t n = std::min(chunk, refs.size() - start);
    BatchData b = materialize(scn, refs.subspan(start, n), Split::train, guard);
    Tensor f = eval_features(m, b.x);
    std::copy(f.data.begin(), f.data.end(),
              feats.data.begin() + static_cast<std::ptrdiff_t>(start * m.cfg.feature_dim));
  }
  return feats;
}

}  // namespace

GradientMap ewc_estimate_fisher(const Model& m, const Scenario& scn, int task,
                                const LogitMask& mask, std::size_t sample_cap, RngStream& rng,
                                AccessGuard* guard) {
  const std::vector<SampleRef> refs = task_refs(scn, task, Split::train);
  const std::size_t count = std::min(sample_cap, refs.size());
  if (count == 0) throw DataError("fisher estimation: no samples");

  GradientMap fisher;
  for (std::size_t s = 0; s < count; ++s) {
    BatchData b = materialize(scn, {&refs[s], 1}, Split::train, guard);
    Tape tape(true);
    TapedModel tm = forward_model(m, tape, b.x);

    // Sample a label from the model's own masked predictive distribution.
    const Tensor& logits = tape.value(tm.logits);
    double max_l = -std::numeric_limits<double>::infinity();
    for (int c : mask.labels()) max_l = std::max(max_l, logits.data[c]);
    double z = 0.0;
    for (int c : mask.labels()) z += std::exp(logits.data[c] - max_l);
    const double u = rng.next_unit() * z;
    double cum = 0.0;
    int sampled = mask.labels().back();
    for (int c : mask.labels()) {
      cum += std::exp(logits.data[c] - max_l);
      if (u < cum) {
        sampled = c;
        break;
      }
    }

    GradientMap grads = tape.backward(tape.softmax_xent(tm.logits, {sampled}, &mask));
    for (auto& [name, g] : grads) {
      for (double& v : g.data) v = v * v;
      add_into(fisher, GradientMap{{name, std::move(g)}});
    }
  }
  for (auto& [name, f] : fisher) {
    for (double& v : f.data) v /= static_cast<double>(count);
  }
  return fisher;
}

GradientMap mas_estimate_importance(const Model& m, const Scenario& scn, int task,
                                    std::size_t sample_cap, AccessGuard* guard) {
  const std::vector<SampleRef> refs = task_refs(scn, task, Split::train);
  const std::size_t count = std::min(sample_cap, refs.size());
  if (count == 0) throw DataError("importance estimation: no samples");

  GradientMap importance;
  for (std::size_t s = 0; s < count; ++s) {
    BatchData b = materialize(scn, {&refs[s], 1}, Split::train, guard);
    Tape tape(true);
    TapedModel tm = forward_model(m, tape, b.x);
    GradientMap grads = tape.backward(tape.sum_squares(tm.logits));
    for (auto& [name, g] : grads) {
      for (double& v : g.data) v = std::abs(v);
      add_into(importance, GradientMap{{name, std::move(g)}});
    }
  }
  for (auto& [name, f] : importance) {
    for (double& v : f.data) v /= static_cast<double>(count);
  }
  return importance;
}

NodeId quadratic_penalty(Tape& tape, const std::map<std::string, NodeId>& params,
                         const GradientMap& anchor, const GradientMap& weights, double lambda) {
  if (lambda < 0.0) throw ParamError("quadratic_penalty: lambda must be >= 0");
  std::optional<NodeId> total;
  for (const auto& [name, w] : weights) {
    auto pit = params.find(name);
    if (pit == params.end())
      throw DimensionError("quadratic_penalty: no parameter named '" + name + "'");
    const std::vector<std::size_t>& shape = tape.value(pit->second).shape;
    NodeId term = tape.weighted_sq_diff(pit->second, pad_to(anchor.at(name), shape),
                                        pad_to(w, shape));
    total = total ? tape.add(*total, term) : term;
  }
  if (!total) throw StateError("quadratic_penalty: empty weight map");
  return tape.scale(*total, lambda / 2.0);
}

double quadratic_penalty_value(const GradientMap& params, const GradientMap& anchor,
                               const GradientMap& weights, double lambda) {
  double sum = 0.0;
  for (const auto& [name, w] : weights) {
    const Tensor& theta = params.at(name);
    const Tensor a = pad_to(anchor.at(name), theta.shape);
    const Tensor wp = pad_to(w, theta.shape);
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      const double d = theta.data[i] - a.data[i];
      sum += wp.data[i] * d * d;
    }
  }
  return 0.5 * lambda * sum;
}

HerdingResult herding_select(const Tensor& features, std::size_t budget) {
  if (features.rank() != 2) throw DimensionError("herding_select: features must be rank 2");
  const std::size_t n = features.dim(0), d = features.dim(1);
  HerdingResult result;
  result.capped = budget > n;
  const std::size_t m = std::min(budget, n);

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += features.data[i * d + j];
  for (double& v : mean) v /= static_cast<double>(n);

  std::vector<bool> taken(n, false);
  std::vector<double> sum(d, 0.0);
  for (std::size_t k = 1; k <= m; ++k) {
    std::size_t best = n;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = mean[j] - (sum[j] + features.data[i * d + j]) / static_cast<double>(k);
        dist += diff * diff;
      }
      if (dist < best_dist) {  // strict: ties keep the lowest index
        best_dist = dist;
        best = i;
      }
    }
    taken[best] = true;
    for (std::size_t j = 0; j < d; ++j) sum[j] += features.data[best * d + j];
    result.order.push_back(best);
  }
  return result;
}

void update_exemplar_store(ExemplarStore& store, const Scenario& scn, int task, const Model& m,
                           std::vector<std::string>& warnings, AccessGuard* guard) {
  const std::vector<SampleRef> refs = task_refs(scn, task, Split::train);
  for (int label : scn.tasks.at(task).labels) {
    std::vector<SampleRef> class_refs;
    for (const SampleRef& r : refs) {
      if (r.label == label) class_refs.push_back(r);
    }
    if (class_refs.empty()) continue;
    Tensor feats = l2_normalize_rows(features_of(m, scn, class_refs, guard));
    HerdingResult h = herding_select(feats, store.budget);
    if (h.capped)
      warnings.push_back("exemplar budget " + std::to_string(store.budget) + " capped to " +
                         std::to_string(class_refs.size()) + " for class " +
                         std::to_string(label));
    std::vector<SampleRef> selected;
    for (std::size_t i : h.order) selected.push_back(class_refs[i]);
    store.per_class[label] = std::move(selected);
  }
  // Fixed per-class budget: drop the tail of the selection order if over.
  for (auto& [c, list] : store.per_class) {
    if (list.size() > store.budget) list.resize(store.budget);
  }
}

void refresh_class_means(StrategyState& state, const Scenario& scn, const Model& m,
                         AccessGuard* guard) {
  state.class_means.clear();
  for (const auto& [label, refs] : state.store.per_class) {
    Tensor feats = l2_normalize_rows(features_of(m, scn, refs, guard));
    Tensor mean = Tensor::zeros({1, m.cfg.feature_dim});
    for (std::size_t i = 0; i < feats.dim(0); ++i)
      for (std::size_t j = 0; j < feats.dim(1); ++j)
        mean.data[j] += feats.data[i * feats.dim(1) + j];
    for (double& v : mean.data) v /= static_cast<double>(feats.dim(0));
    mean = l2_normalize_rows(std::move(mean));
    state.class_means.emplace(label, Tensor({m.cfg.feature_dim}, std::move(mean.data)));
  }
}

std::vector<int> icarl_nme_classify(const Model& m, const std::map<int, Tensor>& class_means,
                                    const Tensor& batch, const LogitMask& mask) {
  for (int c : mask.labels()) {
    if (!class_means.count(c))
      throw ProtocolViolation("nme: class " + std::to_string(c) + " has no exemplar mean");
  }
  Tensor feats = l2_normalize_rows(eval_features(m, batch));
  const std::size_t n = feats.dim(0), d = feats.dim(1);
  std::vector<int> preds(n);
  for (std::size_t i = 0; i < n; ++i) {
    int best = mask.labels().front();
    double best_dist = std::numeric_limits<double>::infinity();
    for (int c : mask.labels()) {
      const Tensor& mu = class_means.at(c);
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = feats.data[i * d + j] - mu.data[j];
        dist += diff * diff;
      }
      if (dist < best_dist) {  // ties keep the lowest class id
        best_dist = dist;
        best = c;
      }
    }
    preds[i] = best;
  }
  return preds;
}

EvalCounts head_accuracy(const Model& m, const Scenario& scn, const std::vector<SampleRef>& refs,
                         Split split, const LogitMask& mask, AccessGuard* guard) {
  EvalCounts counts;
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < refs.size(); start += chunk) {
    const std::size_t n = std::min(chunk, refs.size() - start);
    BatchData b = materialize(scn, {refs.data() + start, n}, split, guard);
    const std::vector<int> preds = apply_mask(eval_logits(m, b.x), mask);
    for (std::size_t i = 0; i < n; ++i) counts.correct += preds[i] == b.labels[i];
    counts.total += n;
  }
  return counts;
}

void train_task(StrategyKind kind, Model& m, const Scenario& scn, int task, StrategyState& state,
                const StrategyConfig& scfg, const TrainConfig& tcfg, const RunContext& ctx) {
  scfg.validate();
  tcfg.validate();
  if (kind == StrategyKind::ub)
    throw ConfigError("train_task: the upper bound trains jointly, use train_joint");
  const TaskSpec& spec = scn.tasks.at(task);
  require_head_grown(m, spec);

  const std::vector<SampleRef> own = task_refs(scn, task, Split::train);
  const std::vector<SampleRef> val = task_refs(scn, task, Split::val);
  const bool rehearsal = kind == StrategyKind::icarl || kind == StrategyKind::eeil;
  const std::vector<SampleRef> samples = rehearsal ? with_store(own, state.store) : own;
  guard_training_phase(ctx, scn, task, samples);

  const LogitMask loss_mask =
      rehearsal ? LogitMask(scn.seen_labels(task)) : scn.train_mask(task);
  const LogitMask val_mask = scn.eval_mask(task, task);

  LossExtras extras;
  switch (kind) {
    case StrategyKind::lb:
      break;
    case StrategyKind::ewc:
    case StrategyKind::mas:
      if (scfg.lambda > 0.0 && !state.penalty_weights.empty()) {
        extras.penalty_weights = &state.penalty_weights;
        extras.anchor = &state.anchor;
        extras.penalty_lambda = scfg.lambda;
      }
      break;
    case StrategyKind::lwf:
    case StrategyKind::icarl:
    case StrategyKind::eeil:
      if (scfg.lambda > 0.0 && state.teacher) {
        extras.teacher = &*state.teacher;
        extras.distill_lambda = scfg.lambda;
        extras.temperature = scfg.temperature;
      }
      break;
    case StrategyKind::ub:
      break;
  }

  run_phase(m, scn, samples, val, loss_mask, val_mask, extras, tcfg, ctx, tcfg.epochs, true);

  switch (kind) {
    case StrategyKind::ewc:
      if (scfg.lambda > 0.0) {
        add_into(state.penalty_weights,
                 ewc_estimate_fisher(m, scn, task, scn.train_mask(task), scfg.fisher_sample_cap,
                                     *ctx.fisher_rng, ctx.guard));
        state.anchor = snapshot_params(m);
      }
      break;
    case StrategyKind::mas:
      if (scfg.lambda > 0.0) {
        add_into(state.penalty_weights,
                 mas_estimate_importance(m, scn, task, scfg.fisher_sample_cap, ctx.guard));
        state.anchor = snapshot_params(m);
      }
      break;
    case StrategyKind::lwf:
      state.teacher = m;
      break;
    case StrategyKind::eeil:
      eeil_balanced_phase(m, scn, task, own, state, scfg, tcfg, ctx);
      [[fallthrough]];
    case StrategyKind::icarl:
      state.store.budget = scfg.exemplars_per_class;
      update_exemplar_store(state.store, scn, task, m, state.warnings, ctx.guard);
      refresh_class_means(state, scn, m, ctx.guard);
      state.teacher = m;
      break;
    default:
      break;
  }
}

void train_joint(Model& m, const Scenario& scn, const TrainConfig& tcfg, const RunContext& ctx) {
  tcfg.validate();
  if (m.class_count() != static_cast<std::size_t>(scn.class_count))
    throw ProtocolViolation("train_joint: head must cover the full label space");

  std::vector<SampleRef> samples, val;
  for (std::size_t t = 0; t < scn.task_count(); ++t) {
    const std::vector<SampleRef> tr = task_refs(scn, static_cast<int>(t), Split::train);
    const std::vector<SampleRef> va = task_refs(scn, static_cast<int>(t), Split::val);
    samples.insert(samples.end(), tr.begin(), tr.end());
    val.insert(val.end(), va.begin(), va.end());
  }
  if (ctx.guard) {
    ctx.guard->begin_phase("joint training");
    std::map<int, std::vector<std::size_t>> train_idx, val_idx;
    for (const SampleRef& r : samples) train_idx[r.domain].push_back(r.index);
    for (const SampleRef& r : val) val_idx[r.domain].push_back(r.index);
    for (const auto& [d, idx] : train_idx) ctx.guard->allow(&scn.domain_data(d).train, idx);
    for (const auto& [d, idx] : val_idx) ctx.guard->allow(&scn.domain_data(d).val, idx);
  }

  std::vector<int> all_labels;
  for (int c = 0; c < scn.class_count; ++c) all_labels.push_back(c);
  const LogitMask mask(std::move(all_labels));
  run_phase(m, scn, samples, val, mask, mask, LossExtras{}, tcfg, ctx, tcfg.epochs, true);
}

namespace {

constexpr char kStateMagic[4] = {'C', 'L', 'S', 'D'};

void append_map(std::vector<std::pair<std::string, Tensor>>& entries, const std::string& section,
                const GradientMap& map) {
  for (const auto& [name, t] : map) entries.emplace_back(section + "/" + name, t);
}

}  // namespace

void save_strategy_state(const StrategyState& state, const std::string& path) {
  std::vector<std::pair<std::string, Tensor>> entries;
  append_map(entries, "fisher", state.penalty_weights);
  append_map(entries, "anchor", state.anchor);
  if (state.teacher) {
    const std::string tmp = path + ".teacher";
    save_checkpoint(*state.teacher, tmp);
    // embed the teacher checkpoint entries under their own section
    for (auto& [name, t] : ckpt::read_file(tmp, "CLMD"))
      entries.emplace_back("teacher/" + name, std::move(t));
    std::remove(tmp.c_str());
  }
  for (const auto& [label, mean] : state.class_means)
    entries.emplace_back("means/" + std::to_string(label), mean);
  entries.emplace_back("store/budget",
                       Tensor::scalar(static_cast<double>(state.store.budget)));
  for (const auto& [label, refs] : state.store.per_class) {
    // per exemplar: (domain, index, global label) as a 3-wide row
    Tensor rows = Tensor::zeros({refs.size(), 3});
    for (std::size_t i = 0; i < refs.size(); ++i) {
      rows.data[i * 3 + 0] = static_cast<double>(refs[i].domain);
      rows.data[i * 3 + 1] = static_cast<double>(refs[i].index);
      rows.data[i * 3 + 2] = static_cast<double>(refs[i].label);
    }
    entries.emplace_back("store/" + std::to_string(label), std::move(rows));
  }
  ckpt::write_file(path, kStateMagic, entries);
}

StrategyState load_strategy_state(const std::string& path) {
  StrategyState state;
  std::vector<std::pair<std::string, Tensor>> teacher_entries;
  for (auto& [name, t] : ckpt::read_file(path, kStateMagic)) {
    const std::size_t slash = name.find('/');
    if (slash == std::string::npos)
      throw FormatError("strategy state '" + path + "': entry '" + name + "' has no section");
    const std::string section = name.substr(0, slash);
    const std::string rest = name.substr(slash + 1);
    if (section == "fisher") {
      state.penalty_weights.emplace(rest, std::move(t));
    } else if (section == "anchor") {
      state.anchor.emplace(rest, std::move(t));
    } else if (section == "teacher") {
      teacher_entries.emplace_back(rest, std::move(t));
    } else if (section == "means") {
      state.class_means.emplace(std::stoi(rest), std::move(t));
    } else if (section == "store") {
      if (rest == "budget") {
        state.store.budget = static_cast<std::size_t>(t.data[0]);
      } else {
        std::vector<SampleRef> refs(t.dim(0));
        for (std::size_t i = 0; i < refs.size(); ++i) {
          refs[i].domain = static_cast<int>(t.data[i * 3 + 0]);
          refs[i].index = static_cast<std::size_t>(t.data[i * 3 + 1]);
          refs[i].label = static_cast<int>(t.data[i * 3 + 2]);
        }
        state.store.per_class.emplace(std::stoi(rest), std::move(refs));
      }
    } else {
      throw FormatError("strategy state '" + path + "': unknown section '" + section + "'");
    }
  }
  if (!teacher_entries.empty()) {
    const std::string tmp = path + ".teacher";
    ckpt::write_file(tmp, "CLMD", teacher_entries);
    state.teacher = load_checkpoint(tmp);
    std::remove(tmp.c_str());
  }
  return state;
}

EvalCounts evaluate_task(const Model& m, const Scenario& scn, int trained_up_to, int eval_task,
                         const StrategyConfig& scfg, const StrategyState& state,
                         AccessGuard* guard) {
  const LogitMask mask = scn.eval_mask(trained_up_to, eval_task);
  const std::vector<SampleRef> refs = task_refs(scn, eval_task, Split::test);
  if (refs.empty()) throw DataError("evaluate_task: empty test split");

  const bool nme = scfg.kind == StrategyKind::icarl && scfg.icarl_nme;
  EvalCounts counts;
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < refs.size(); start += chunk) {
    const std::size_t n = std::min(chunk, refs.size() - start);
    BatchData b = materialize(scn, {refs.data() + start, n}, Split::test, guard);
    const std::vector<int> preds = nme ? icarl_nme_classify(m, state.class_means, b.x, mask)
                                       : apply_mask(eval_logits(m, b.x), mask);
    for (std::size_t i = 0; i < n; ++i) counts.correct += preds[i] == b.labels[i];
    counts.total += n;
  }
  return counts;
}

}  // namespace clbench
