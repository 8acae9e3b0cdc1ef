#include "clbench/tensor.hpp"

#include <cmath>

#include "clbench/errors.hpp"
#include "clbench/rng.hpp"

namespace clbench {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d, bool grad)
    : shape(std::move(s)), data(std::move(d)), requires_grad(grad) {
  if (data.size() != shape_numel(shape)) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  for (std::size_t dim : shape) {
    if (dim == 0) throw DimensionError("tensor shape has a zero dimension " + shape_str(shape));
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), grad);
}

Tensor Tensor::scalar(double value, bool grad) {
  return Tensor({1}, {value}, grad);
}

Tensor Tensor::uniform(std::vector<std::size_t> shape, double bound, RngStream& rng, bool grad) {
  std::size_t n = shape_numel(shape);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = (2.0 * rng.next_unit() - 1.0) * bound;
  return Tensor(std::move(shape), std::move(d), grad);
}

std::size_t Tensor::numel() const { return data.size(); }

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& context) {
  if (!a.same_shape(b)) {
    throw DimensionError(context + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  }
}

}  // namespace clbench
