#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace clbench {

class RngStream;

// Dense row-major tensor of doubles. Value semantics; the autodiff tape
// copies values it needs, so tensors held by callers are never mutated by
// graph operations.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d, bool grad = false);

  static Tensor zeros(std::vector<std::size_t> shape, bool grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value, bool grad = false);
  static Tensor scalar(double value, bool grad = false);
  // Uniform in [-bound, bound].
  static Tensor uniform(std::vector<std::size_t> shape, double bound, RngStream& rng,
                        bool grad = false);

  std::size_t numel() const;
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

// Throws DimensionError naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const std::string& context);

}  // namespace clbench
