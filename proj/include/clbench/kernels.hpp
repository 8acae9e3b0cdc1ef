#pragma once

#include <cstdint>
#include <vector>

#include "clbench/tensor.hpp"

namespace clbench::kernels {

// Numeric kernels backing the autodiff ops. Every kernel exists twice with
// an identical per-element body: `serial::` is the reference, `par::` adds
// OpenMP worksharing over independent output elements. Because each output
// element is produced by exactly one thread with a fixed inner summation
// order, par results are bit-identical to serial for any thread count; the
// test suite asserts this and the clbench-bench tool times the two.
//
// Shapes are validated once in the dispatch wrappers below; serial/par
// assume valid pre-sized outputs.

struct Conv2dDims {
  std::int64_t n, c, h, w;      // input
  std::int64_t f, kh, kw;       // kernel
  std::int64_t stride, pad;
  std::int64_t ho, wo;          // output spatial
};

namespace serial {
void matmul_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n);
void matmul_nt(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n);
void matmul_tn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n);
void add_bias_rows(double* c, const double* bias, std::int64_t m, std::int64_t n);
void col_sum(const double* g, double* out, std::int64_t m, std::int64_t n);
void conv2d_forward(const double* x, const double* k, double* y, const Conv2dDims& d);
void conv2d_backward_input(const double* g, const double* k, double* dx, const Conv2dDims& d);
void conv2d_backward_kernel(const double* g, const double* x, double* dk, const Conv2dDims& d);
void maxpool2_forward(const double* x, double* y, std::size_t* argmax, std::int64_t n,
                      std::int64_t c, std::int64_t h, std::int64_t w);
void maxpool2_backward(const double* g, const std::size_t* argmax, double* dx,
                       std::int64_t out_elems, std::int64_t in_elems);
void relu_forward(const double* x, double* y, std::int64_t n);
void relu_backward(const double* g, const double* x, double* dx, std::int64_t n);
}  // namespace serial

namespace par {
void matmul_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n);
void matmul_nt(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n);
void matmul_tn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n);
void add_bias_rows(double* c, const double* bias, std::int64_t m, std::int64_t n);
void col_sum(const double* g, double* out, std::int64_t m, std::int64_t n);
void conv2d_forward(const double* x, const double* k, double* y, const Conv2dDims& d);
void conv2d_backward_input(const double* g, const double* k, double* dx, const Conv2dDims& d);
void conv2d_backward_kernel(const double* g, const double* x, double* dk, const Conv2dDims& d);
void maxpool2_forward(const double* x, double* y, std::size_t* argmax, std::int64_t n,
                      std::int64_t c, std::int64_t h, std::int64_t w);
void maxpool2_backward(const double* g, const std::size_t* argmax, double* dx,
                       std::int64_t out_elems, std::int64_t in_elems);
void relu_forward(const double* x, double* y, std::int64_t n);
void relu_backward(const double* g, const double* x, double* dx, std::int64_t n);
}  // namespace par

// Tensor-level dispatch: validates shapes, allocates outputs, runs par::.

// out[m,n] = sum_k a[m,k] * b[k,n]
Tensor matmul_nn(const Tensor& a, const Tensor& b);
// out[m,n] = sum_k a[m,k] * b[n,k]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// out[m,n] = sum_k a[k,m] * b[k,n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor add_bias_rows(Tensor c, const Tensor& bias);
Tensor col_sum(const Tensor& g);

Conv2dDims conv2d_dims(const Tensor& x, const Tensor& k, std::int64_t stride, std::int64_t pad);
Tensor conv2d_forward(const Tensor& x, const Tensor& k, std::int64_t stride, std::int64_t pad);
Tensor conv2d_backward_input(const Tensor& g, const Tensor& k, const Conv2dDims& d);
Tensor conv2d_backward_kernel(const Tensor& g, const Tensor& x, const Conv2dDims& d);

struct Maxpool2Result {
  Tensor out;
  std::vector<std::size_t> argmax;  // flat input index per output element
};
Maxpool2Result maxpool2_forward(const Tensor& x);
Tensor maxpool2_backward(const Tensor& g, const std::vector<std::size_t>& argmax,
                         const std::vector<std::size_t>& in_shape);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& g, const Tensor& x);

}  // namespace clbench::kernels
