#include "clbench/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "clbench/errors.hpp"
#include "clbench/kernels.hpp"

namespace clbench {

namespace {

// Row-wise softmax over an allowed column set; entries outside the set stay
// zero. Masked-out logits act as -inf: they never enter the normalization.
struct SoftmaxRows {
  Tensor probs;                 // [N,K], zero outside the allowed set
  std::vector<double> logsumexp;  // per row
};

SoftmaxRows masked_softmax(const Tensor& logits, const std::vector<int>& allowed) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  SoftmaxRows r{Tensor::zeros({n, k}), std::vector<double>(n)};
  for (std::size_t row = 0; row < n; ++row) {
    const double* l = logits.data.data() + row * k;
    double m = -std::numeric_limits<double>::infinity();
    for (int j : allowed) m = std::max(m, l[j]);
    double z = 0.0;
    for (int j : allowed) z += std::exp(l[j] - m);
    const double lse = m + std::log(z);
    r.logsumexp[row] = lse;
    double* p = r.probs.data.data() + row * k;
    for (int j : allowed) p[j] = std::exp(l[j] - lse);
  }
  return r;
}

std::vector<int> all_columns(std::size_t k) {
  std::vector<int> cols(k);
  for (std::size_t j = 0; j < k; ++j) cols[j] = static_cast<int>(j);
  return cols;
}

}  // namespace

NodeId Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> back) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = recording_ && requires_grad;
  node.back = node.requires_grad ? std::move(back) : std::function<void(Tape&)>{};
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Tape::constant(Tensor t) {
  t.requires_grad = false;
  return push(std::move(t), false, {});
}

NodeId Tape::param(const std::string& name, Tensor t) {
  if (!recording_) return push(std::move(t), false, {});
  for (const auto& [existing, _] : params_) {
    if (existing == name) throw UsageError("param '" + name + "' registered twice on one tape");
  }
  t.requires_grad = true;
  NodeId id = push(std::move(t), true, {});
  params_.emplace_back(name, id);
  return id;
}

const Tensor& Tape::value(NodeId id) const { return nodes_.at(id).value; }

double Tape::scalar_value(NodeId id) const {
  const Tensor& v = value(id);
  if (v.numel() != 1) throw UsageError("scalar_value on tensor of shape " + shape_str(v.shape));
  return v.data[0];
}

void Tape::accumulate(NodeId id, const std::vector<double>& g) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  for (std::size_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
}

NodeId Tape::dense_affine(NodeId x, NodeId w, NodeId b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(0))
    throw DimensionError("dense_affine: x " + shape_str(xv.shape) + " incompatible with w " +
                         shape_str(wv.shape));
  if (bv.rank() != 1 || bv.dim(0) != wv.dim(1))
    throw DimensionError("dense_affine: bias " + shape_str(bv.shape) + " incompatible with w " +
                         shape_str(wv.shape));
  Tensor out = kernels::add_bias_rows(kernels::matmul_nn(xv, wv), bv);
  const bool req =
      nodes_[x].requires_grad || nodes_[w].requires_grad || nodes_[b].requires_grad;
  NodeId id = push(std::move(out), req, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [x, w, b, id](Tape& t) {
      Tensor g({t.nodes_[id].value.dim(0), t.nodes_[id].value.dim(1)}, t.nodes_[id].grad);
      if (t.nodes_[x].requires_grad) t.accumulate(x, kernels::matmul_nt(g, t.value(w)));
      if (t.nodes_[w].requires_grad) t.accumulate(w, kernels::matmul_tn(t.value(x), g));
      if (t.nodes_[b].requires_grad) t.accumulate(b, kernels::col_sum(g));
    };
  }
  return id;
}

NodeId Tape::linear_rows(NodeId x, NodeId w, NodeId b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
    throw DimensionError("linear_rows: x " + shape_str(xv.shape) + " incompatible with w " +
                         shape_str(wv.shape));
  if (bv.rank() != 1 || bv.dim(0) != wv.dim(0))
    throw DimensionError("linear_rows: bias " + shape_str(bv.shape) + " incompatible with w " +
                         shape_str(wv.shape));
  Tensor out = kernels::add_bias_rows(kernels::matmul_nt(xv, wv), bv);
  const bool req =
      nodes_[x].requires_grad || nodes_[w].requires_grad || nodes_[b].requires_grad;
  NodeId id = push(std::move(out), req, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [x, w, b, id](Tape& t) {
      Tensor g({t.nodes_[id].value.dim(0), t.nodes_[id].value.dim(1)}, t.nodes_[id].grad);
      if (t.nodes_[x].requires_grad) t.accumulate(x, kernels::matmul_nn(g, t.value(w)));
      if (t.nodes_[w].requires_grad) t.accumulate(w, kernels::matmul_tn(g, t.value(x)));
      if (t.nodes_[b].requires_grad) t.accumulate(b, kernels::col_sum(g));
    };
  }
  return id;
}

NodeId Tape::conv2d(NodeId x, NodeId k, std::int64_t stride, std::int64_t pad) {
  const Tensor& xv = value(x);
  const Tensor& kv = value(k);
  const kernels::Conv2dDims dims = kernels::conv2d_dims(xv, kv, stride, pad);
  Tensor out = kernels::conv2d_forward(xv, kv, stride, pad);
  const bool req = nodes_[x].requires_grad || nodes_[k].requires_grad;
  NodeId id = push(std::move(out), req, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [x, k, dims, id](Tape& t) {
      Tensor g(t.nodes_[id].value.shape, t.nodes_[id].grad);
      if (t.nodes_[x].requires_grad)
        t.accumulate(x, kernels::conv2d_backward_input(g, t.value(k), dims));
      if (t.nodes_[k].requires_grad)
        t.accumulate(k, kernels::conv2d_backward_kernel(g, t.value(x), dims));
    };
  }
  return id;
}

NodeId Tape::relu(NodeId x) {
  Tensor out = kernels::relu_forward(value(x));
  NodeId id = push(std::move(out), nodes_[x].requires_grad, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [x, id](Tape& t) {
      Tensor g(t.nodes_[id].value.shape, t.nodes_[id].grad);
      t.accumulate(x, kernels::relu_backward(g, t.value(x)));
    };
  }
  return id;
}

NodeId Tape::maxpool2(NodeId x) {
  kernels::Maxpool2Result r = kernels::maxpool2_forward(value(x));
  const std::vector<std::size_t> in_shape = value(x).shape;
  NodeId id = push(std::move(r.out), nodes_[x].requires_grad, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [x, id, argmax = std::move(r.argmax), in_shape](Tape& t) {
      Tensor g(t.nodes_[id].value.shape, t.nodes_[id].grad);
      t.accumulate(x, kernels::maxpool2_backward(g, argmax, in_shape));
    };
  }
  return id;
}

NodeId Tape::flatten2(NodeId x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 4) throw DimensionError("flatten2: expected 4-d, got " + shape_str(xv.shape));
  Tensor out({xv.dim(0), xv.dim(1) * xv.dim(2) * xv.dim(3)}, xv.data);
  NodeId id = push(std::move(out), nodes_[x].requires_grad, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [x, id](Tape& t) { t.accumulate(x, t.nodes_[id].grad); };
  }
  return id;
}

NodeId Tape::slice_cols(NodeId x, std::size_t cols) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2 || cols == 0 || cols > xv.dim(1))
    throw DimensionError("slice_cols: cannot take first " + std::to_string(cols) +
                         " columns of " + shape_str(xv.shape));
  const std::size_t n = xv.dim(0), k = xv.dim(1);
  Tensor out = Tensor::zeros({n, cols});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.data[i * cols + j] = xv.data[i * k + j];
  NodeId id = push(std::move(out), nodes_[x].requires_grad, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [x, id, n, k, cols](Tape& t) {
      std::vector<double> dx(n * k, 0.0);
      const std::vector<double>& g = t.nodes_[id].grad;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cols; ++j) dx[i * k + j] = g[i * cols + j];
      t.accumulate(x, dx);
    };
  }
  return id;
}

NodeId Tape::softmax_xent(NodeId logits, const std::vector<int>& labels, const LogitMask* mask) {
  const Tensor& lv = value(logits);
  if (lv.rank() != 2)
    throw DimensionError("softmax_xent: logits must be rank 2, got " + shape_str(lv.shape));
  const std::size_t n = lv.dim(0), k = lv.dim(1);
  if (labels.size() != n)
    throw DimensionError("softmax_xent: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(n));
  if (mask) mask->require_within(k, "softmax_xent");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw ProtocolViolation("softmax_xent: label " + std::to_string(y) +
                              " outside logit range [0," + std::to_string(k) + ")");
    if (mask && !mask->contains(y))
      throw ProtocolViolation("softmax_xent: label " + std::to_string(y) +
                              " not in the training mask; task bookkeeping is broken");
  }
  const std::vector<int> allowed = mask ? mask->labels() : all_columns(k);
  SoftmaxRows sm = masked_softmax(lv, allowed);
  double loss = 0.0;
  for (std::size_t row = 0; row < n; ++row)
    loss += sm.logsumexp[row] - lv.data[row * k + static_cast<std::size_t>(labels[row])];
  loss /= static_cast<double>(n);
  NodeId id = push(Tensor::scalar(loss), nodes_[logits].requires_grad, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [logits, id, labels, allowed, probs = std::move(sm.probs), n, k](Tape& t) {
      const double up = t.nodes_[id].grad[0];
      std::vector<double> dl(n * k, 0.0);
      for (std::size_t row = 0; row < n; ++row) {
        for (int j : allowed) {
          const double indicator = (j == labels[row]) ? 1.0 : 0.0;
          dl[row * k + j] = up * (probs.data[row * k + j] - indicator) / static_cast<double>(n);
        }
      }
      t.accumulate(logits, dl);
    };
  }
  return id;
}

NodeId Tape::soft_distill(NodeId student, const Tensor& teacher, double temperature) {
  if (temperature <= 0.0)
    throw ParamError("soft_distill: temperature must be > 0, got " + std::to_string(temperature));
  const Tensor& sv = value(student);
  require_same_shape(sv, teacher, "soft_distill");
  if (sv.rank() != 2)
    throw DimensionError("soft_distill: logits must be rank 2, got " + shape_str(sv.shape));
  const std::size_t n = sv.dim(0), k = sv.dim(1);
  const std::vector<int> cols = all_columns(k);

  Tensor scaled_s = sv;
  Tensor scaled_t = teacher;
  for (double& v : scaled_s.data) v /= temperature;
  for (double& v : scaled_t.data) v /= temperature;
  SoftmaxRows q = masked_softmax(scaled_s, cols);
  SoftmaxRows p = masked_softmax(scaled_t, cols);

  double kl = 0.0;
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t j = 0; j < k; ++j) {
      const double pj = p.probs.data[row * k + j];
      if (pj <= 0.0) continue;
      const double log_p = scaled_t.data[row * k + j] - p.logsumexp[row];
      const double log_q = scaled_s.data[row * k + j] - q.logsumexp[row];
      kl += pj * (log_p - log_q);
    }
  }
  const double loss = temperature * temperature * kl / static_cast<double>(n);
  NodeId id = push(Tensor::scalar(loss), nodes_[student].requires_grad, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [student, id, qp = std::move(q.probs), pp = std::move(p.probs), temperature,
                       n, k](Tape& t) {
      const double up = t.nodes_[id].grad[0];
      std::vector<double> ds(n * k);
      for (std::size_t i = 0; i < n * k; ++i)
        ds[i] = up * temperature * (qp.data[i] - pp.data[i]) / static_cast<double>(n);
      t.accumulate(student, ds);
    };
  }
  return id;
}

NodeId Tape::sum_squares(NodeId x) {
  const Tensor& xv = value(x);
  double acc = 0.0;
  for (double v : xv.data) acc += v * v;
  NodeId id = push(Tensor::scalar(acc), nodes_[x].requires_grad, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [x, id](Tape& t) {
      const double up = t.nodes_[id].grad[0];
      const Tensor& xval = t.value(x);
      std::vector<double> dx(xval.numel());
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = up * 2.0 * xval.data[i];
      t.accumulate(x, dx);
    };
  }
  return id;
}

NodeId Tape::weighted_sq_diff(NodeId x, const Tensor& anchor, const Tensor& weights) {
  const Tensor& xv = value(x);
  require_same_shape(xv, anchor, "weighted_sq_diff anchor");
  require_same_shape(xv, weights, "weighted_sq_diff weights");
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    const double d = xv.data[i] - anchor.data[i];
    acc += weights.data[i] * d * d;
  }
  NodeId id = push(Tensor::scalar(acc), nodes_[x].requires_grad, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [x, id, anchor, weights](Tape& t) {
      const double up = t.nodes_[id].grad[0];
      const Tensor& xval = t.value(x);
      std::vector<double> dx(xval.numel());
      for (std::size_t i = 0; i < dx.size(); ++i)
        dx[i] = up * 2.0 * weights.data[i] * (xval.data[i] - anchor.data[i]);
      t.accumulate(x, dx);
    };
  }
  return id;
}

NodeId Tape::sum(NodeId x) {
  const Tensor& xv = value(x);
  double acc = 0.0;
  for (double v : xv.data) acc += v;
  NodeId id = push(Tensor::scalar(acc), nodes_[x].requires_grad, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [x, id](Tape& t) {
      const double up = t.nodes_[id].grad[0];
      std::vector<double> dx(t.value(x).numel(), up);
      t.accumulate(x, dx);
    };
  }
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
  const bool req = nodes_[a].requires_grad || nodes_[b].requires_grad;
  NodeId id = push(std::move(out), req, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [a, b, id](Tape& t) {
      t.accumulate(a, t.nodes_[id].grad);
      t.accumulate(b, t.nodes_[id].grad);
    };
  }
  return id;
}

NodeId Tape::scale(NodeId a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v *= c;
  NodeId id = push(std::move(out), nodes_[a].requires_grad, {});
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [a, id, c](Tape& t) {
      std::vector<double> da(t.nodes_[id].grad.size());
      for (std::size_t i = 0; i < da.size(); ++i) da[i] = c * t.nodes_[id].grad[i];
      t.accumulate(a, da);
    };
  }
  return id;
}

GradientMap Tape::backward(NodeId root) {
  if (!recording_) throw UsageError("backward called on a non-recording tape");
  if (root >= nodes_.size()) throw UsageError("backward: unknown node id");
  if (nodes_[root].value.numel() != 1)
    throw UsageError("backward: root must be a scalar, got " +
                     shape_str(nodes_[root].value.shape));

  for (Node& node : nodes_) node.grad.assign(node.value.numel(), 0.0);
  nodes_[root].grad[0] = 1.0;

  for (NodeId id = root + 1; id-- > 0;) {
    if (nodes_[id].back) nodes_[id].back(*this);
  }

  GradientMap grads;
  for (const auto& [name, id] : params_) {
    grads.emplace(name, Tensor(nodes_[id].value.shape, nodes_[id].grad));
  }
  clear();
  return grads;
}

void Tape::clear() {
  nodes_.clear();
  params_.clear();
}

const std::vector<double>& Tape::grad(NodeId id) const { return nodes_.at(id).grad; }

}  // namespace clbench
