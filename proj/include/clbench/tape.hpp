#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "clbench/mask.hpp"
#include "clbench/tensor.hpp"

namespace clbench {

using NodeId = std::size_t;

// Parameter identifier -> gradient tensor of the parameter's shape.
using GradientMap = std::map<std::string, Tensor>;

// Reverse-mode tape. Nodes are appended in topological order by
// construction (an op can only reference already-created node ids), so the
// backward sweep is a single reverse pass that touches each node once. The
// tape owns every intermediate value until backward() or clear().
//
// A non-recording tape computes values only: no parents, no closures, no
// gradients. Model evaluation uses that mode.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Constant input (no gradient even if t.requires_grad is set).
  NodeId constant(Tensor t);
  // Differentiable leaf registered under `name`; its gradient appears in
  // the GradientMap returned by backward().
  NodeId param(const std::string& name, Tensor t);

  // out[n,o] = sum_i x[n,i] * w[i,o] + b[o]
  NodeId dense_affine(NodeId x, NodeId w, NodeId b);
  // Row-per-class variant for the growable head: out[n,k] = sum_h x[n,h] * w[k,h] + b[k]
  NodeId linear_rows(NodeId x, NodeId w, NodeId b);
  NodeId conv2d(NodeId x, NodeId k, std::int64_t stride, std::int64_t pad);
  NodeId relu(NodeId x);
  NodeId maxpool2(NodeId x);
  // [N,C,H,W] -> [N, C*H*W]
  NodeId flatten2(NodeId x);
  // First `cols` columns of a [N,K] tensor.
  NodeId slice_cols(NodeId x, std::size_t cols);

  // Mean over the batch of -log softmax(logits)[label]; when `mask` is
  // given, columns outside it are excluded from the normalization and a
  // label outside the mask is a protocol violation.
  NodeId softmax_xent(NodeId logits, const std::vector<int>& labels, const LogitMask* mask);

  // T^2 * mean_n KL(softmax(teacher/T) || softmax(student/T)). Teacher is a
  // constant; only the student receives gradient.
  NodeId soft_distill(NodeId student, const Tensor& teacher, double temperature);

  // sum_k x_k^2
  NodeId sum_squares(NodeId x);
  // sum_k w_k * (x_k - anchor_k)^2 with constant anchor and weights.
  NodeId weighted_sq_diff(NodeId x, const Tensor& anchor, const Tensor& weights);
  // sum of all elements
  NodeId sum(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);

  const Tensor& value(NodeId id) const;
  double scalar_value(NodeId id) const;

  // Reverse sweep from a scalar root; returns gradients of all registered
  // params and clears the tape.
  GradientMap backward(NodeId root);

  void clear();

  // Gradient buffer inspection (valid between the sweep and clear; exposed
  // for the finite-difference harness which reads leaf grads directly).
  const std::vector<double>& grad(NodeId id) const;

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void(Tape&)> back;  // empty for leaves/constants
  };

  NodeId push(Tensor value, bool requires_grad, std::function<void(Tape&)> back);
  void accumulate(NodeId id, const std::vector<double>& g);
  void accumulate(NodeId id, const Tensor& g) { accumulate(id, g.data); }

  bool recording_ = true;
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, NodeId>> params_;
};

}  // namespace clbench
