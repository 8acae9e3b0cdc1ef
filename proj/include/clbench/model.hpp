#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clbench/mask.hpp"
#include "clbench/optim.hpp"
#include "clbench/rng.hpp"
#include "clbench/tape.hpp"
#include "clbench/tensor.hpp"

namespace clbench {

// Small CNN learner: per conv block Conv(3x3, pad 1) -> ReLU -> MaxPool2,
// then flatten -> dense(feature_dim) -> ReLU as the feature extractor, and
// a shared head dense(head_hidden) -> ReLU -> dense(class_count) whose last
// layer grows as tasks arrive.
struct ModelConfig {
  std::size_t in_channels = 3;
  std::size_t in_h = 28;
  std::size_t in_w = 28;
  std::vector<std::size_t> conv_filters = {16, 32};
  std::size_t feature_dim = 128;
  std::size_t head_hidden = 512;
  std::uint64_t seed = 0;

  // ConfigError unless in_h and in_w are divisible by 2^#conv_filters and
  // all widths are positive.
  void validate() const;
  std::size_t pooled_h() const { return in_h >> conv_filters.size(); }
  std::size_t pooled_w() const { return in_w >> conv_filters.size(); }
  std::size_t flat_dim() const;

  bool operator==(const ModelConfig&) const = default;
};

struct Model {
  ModelConfig cfg;
  std::vector<Tensor> conv_kernels;  // [F, C_prev, 3, 3] each
  Tensor fc_w, fc_b;                 // flat -> feature_dim
  Tensor head1_w, head1_b;           // feature_dim -> head_hidden
  // Growable output layer, one row per class; absent until the first grow.
  std::optional<Tensor> head2_w;  // [K, head_hidden]
  std::optional<Tensor> head2_b;  // [K]
  std::vector<int> class_to_task;
  RngStream head_rng;  // dedicated stream for new head rows

  std::size_t class_count() const { return class_to_task.size(); }
  int task_of_class(int label) const { return class_to_task.at(label); }
};

// Deterministic initialization from cfg.seed; class_count starts at 0.
Model build_model(const ModelConfig& cfg);

// Appends one output row per new label. Labels must extend the class range
// contiguously ([K, K+m) in ascending order); overlap with existing classes
// is a protocol violation. Existing parameters are untouched.
void grow_head(Model& m, const std::vector<int>& new_labels, int task_id);

// Logits over all classes seen so far; evaluation mode, nothing recorded.
Tensor eval_logits(const Model& m, const Tensor& batch);
// Feature-extractor output before the head; evaluation mode.
Tensor eval_features(const Model& m, const Tensor& batch);

Tensor l2_normalize_rows(Tensor t);

// Full forward on a recording tape with every parameter registered, for
// training steps. `features`/`logits` are node ids on `tape`.
struct TapedModel {
  std::map<std::string, NodeId> params;
  NodeId features = 0;
  NodeId logits = 0;
};
TapedModel forward_model(const Model& m, Tape& tape, const Tensor& batch);

// Argmax restricted to the mask; ties go to the lowest label index.
std::vector<int> apply_mask(const Tensor& logits, const LogitMask& mask);

// Parameters in a fixed order (conv*, fc, head1, head2).
ParamRefs model_params(Model& m);
GradientMap snapshot_params(const Model& m);
std::size_t model_param_count(const Model& m);

// Checkpoints: "CLMD", u16 version, u64 entry count, then per entry
// u16 name length, name bytes, u8 rank, u32 dims, f64 values, all
// little-endian. Includes meta entries so a model reloads standalone.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

// Shared record codec reused by the strategy-state sidecar.
namespace ckpt {
void write_file(const std::string& path, const char magic[4],
                const std::vector<std::pair<std::string, Tensor>>& entries);
std::vector<std::pair<std::string, Tensor>> read_file(const std::string& path,
                                                      const char magic[4]);
}  // namespace ckpt

}  // namespace clbench
