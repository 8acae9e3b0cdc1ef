#include "clbench/kernels.hpp"

#include <algorithm>

#include "clbench/errors.hpp"

namespace clbench::kernels {

// Per-element bodies shared by serial:: and par::. Inner reduction order is
// fixed, so a given output element is computed identically in both variants.
namespace detail {

inline void matmul_nn_row(const double* a, const double* b, double* c, std::int64_t i,
                          std::int64_t k, std::int64_t n) {
  const double* arow = a + i * k;
  double* crow = c + i * n;
  for (std::int64_t j = 0; j < n; ++j) crow[j] = 0.0;
  for (std::int64_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * n;
    for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void matmul_nt_row(const double* a, const double* b, double* c, std::int64_t i,
                          std::int64_t k, std::int64_t n) {
  const double* arow = a + i * k;
  double* crow = c + i * n;
  for (std::int64_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double acc = 0.0;
    for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
    crow[j] = acc;
  }
}

inline void matmul_tn_row(const double* a, const double* b, double* c, std::int64_t i,
                          std::int64_t m, std::int64_t k, std::int64_t n) {
  // c[i,j] = sum_p a[p,i] * b[p,j]
  double* crow = c + i * n;
  for (std::int64_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::int64_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
    crow[j] = acc;
  }
}

inline void conv2d_forward_image(const double* x, const double* k, double* y, const Conv2dDims& d,
                                 std::int64_t n, std::int64_t f) {
  const std::int64_t in_img = d.c * d.h * d.w;
  const double* xn = x + n * in_img;
  const double* kf = k + f * d.c * d.kh * d.kw;
  double* yo = y + (n * d.f + f) * d.ho * d.wo;
  for (std::int64_t oh = 0; oh < d.ho; ++oh) {
    for (std::int64_t ow = 0; ow < d.wo; ++ow) {
      double acc = 0.0;
      for (std::int64_t c = 0; c < d.c; ++c) {
        const double* xc = xn + c * d.h * d.w;
        const double* kc = kf + c * d.kh * d.kw;
        for (std::int64_t r = 0; r < d.kh; ++r) {
          const std::int64_t ih = oh * d.stride - d.pad + r;
          if (ih < 0 || ih >= d.h) continue;
          for (std::int64_t s = 0; s < d.kw; ++s) {
            const std::int64_t iw = ow * d.stride - d.pad + s;
            if (iw < 0 || iw >= d.w) continue;
            acc += xc[ih * d.w + iw] * kc[r * d.kw + s];
          }
        }
      }
      yo[oh * d.wo + ow] = acc;
    }
  }
}

// Gather form: every input pixel collects the output positions it fed.
inline void conv2d_backward_input_channel(const double* g, const double* k, double* dx,
                                          const Conv2dDims& d, std::int64_t n, std::int64_t c) {
  double* dxc = dx + (n * d.c + c) * d.h * d.w;
  for (std::int64_t ih = 0; ih < d.h; ++ih) {
    for (std::int64_t iw = 0; iw < d.w; ++iw) {
      double acc = 0.0;
      for (std::int64_t f = 0; f < d.f; ++f) {
        const double* gf = g + (n * d.f + f) * d.ho * d.wo;
        const double* kc = k + (f * d.c + c) * d.kh * d.kw;
        for (std::int64_t r = 0; r < d.kh; ++r) {
          const std::int64_t num_h = ih + d.pad - r;
          if (num_h < 0 || num_h % d.stride != 0) continue;
          const std::int64_t oh = num_h / d.stride;
          if (oh >= d.ho) continue;
          for (std::int64_t s = 0; s < d.kw; ++s) {
            const std::int64_t num_w = iw + d.pad - s;
            if (num_w < 0 || num_w % d.stride != 0) continue;
            const std::int64_t ow = num_w / d.stride;
            if (ow >= d.wo) continue;
            acc += gf[oh * d.wo + ow] * kc[r * d.kw + s];
          }
        }
      }
      dxc[ih * d.w + iw] = acc;
    }
  }
}

inline void conv2d_backward_kernel_tap(const double* g, const double* x, double* dk,
                                       const Conv2dDims& d, std::int64_t flat) {
  // flat indexes (f, c, r, s)
  const std::int64_t s = flat % d.kw;
  const std::int64_t r = (flat / d.kw) % d.kh;
  const std::int64_t c = (flat / (d.kw * d.kh)) % d.c;
  const std::int64_t f = flat / (d.kw * d.kh * d.c);
  double acc = 0.0;
  for (std::int64_t n = 0; n < d.n; ++n) {
    const double* gf = g + (n * d.f + f) * d.ho * d.wo;
    const double* xc = x + (n * d.c + c) * d.h * d.w;
    for (std::int64_t oh = 0; oh < d.ho; ++oh) {
      const std::int64_t ih = oh * d.stride - d.pad + r;
      if (ih < 0 || ih >= d.h) continue;
      for (std::int64_t ow = 0; ow < d.wo; ++ow) {
        const std::int64_t iw = ow * d.stride - d.pad + s;
        if (iw < 0 || iw >= d.w) continue;
        acc += gf[oh * d.wo + ow] * xc[ih * d.w + iw];
      }
    }
  }
  dk[flat] = acc;
}

inline void maxpool2_channel(const double* x, double* y, std::size_t* argmax, std::int64_t nc,
                             std::int64_t h, std::int64_t w) {
  const std::int64_t ho = h / 2, wo = w / 2;
  const double* xc = x + nc * h * w;
  double* yc = y + nc * ho * wo;
  std::size_t* ac = argmax + nc * ho * wo;
  for (std::int64_t oh = 0; oh < ho; ++oh) {
    for (std::int64_t ow = 0; ow < wo; ++ow) {
      // First maximum in row-major window order wins ties.
      std::int64_t best = (2 * oh) * w + 2 * ow;
      double best_v = xc[best];
      const std::int64_t cand[3] = {(2 * oh) * w + 2 * ow + 1, (2 * oh + 1) * w + 2 * ow,
                                    (2 * oh + 1) * w + 2 * ow + 1};
      for (std::int64_t idx : cand) {
        if (xc[idx] > best_v) {
          best_v = xc[idx];
          best = idx;
        }
      }
      yc[oh * wo + ow] = best_v;
      ac[oh * wo + ow] = static_cast<std::size_t>(nc * h * w + best);
    }
  }
}

}  // namespace detail

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) detail::matmul_nn_row(a, b, c, i, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) detail::matmul_nt_row(a, b, c, i, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) detail::matmul_tn_row(a, b, c, i, m, k, n);
}

void add_bias_rows(double* c, const double* bias, std::int64_t m, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) c[i * n + j] += bias[j];
}

void col_sum(const double* g, double* out, std::int64_t m, std::int64_t n) {
  for (std::int64_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < m; ++i) acc += g[i * n + j];
    out[j] = acc;
  }
}

void conv2d_forward(const double* x, const double* k, double* y, const Conv2dDims& d) {
  for (std::int64_t nf = 0; nf < d.n * d.f; ++nf)
    detail::conv2d_forward_image(x, k, y, d, nf / d.f, nf % d.f);
}

void conv2d_backward_input(const double* g, const double* k, double* dx, const Conv2dDims& d) {
  for (std::int64_t nc = 0; nc < d.n * d.c; ++nc)
    detail::conv2d_backward_input_channel(g, k, dx, d, nc / d.c, nc % d.c);
}

void conv2d_backward_kernel(const double* g, const double* x, double* dk, const Conv2dDims& d) {
  const std::int64_t taps = d.f * d.c * d.kh * d.kw;
  for (std::int64_t t = 0; t < taps; ++t) detail::conv2d_backward_kernel_tap(g, x, dk, d, t);
}

void maxpool2_forward(const double* x, double* y, std::size_t* argmax, std::int64_t n,
                      std::int64_t c, std::int64_t h, std::int64_t w) {
  for (std::int64_t nc = 0; nc < n * c; ++nc) detail::maxpool2_channel(x, y, argmax, nc, h, w);
}

void maxpool2_backward(const double* g, const std::size_t* argmax, double* dx,
                       std::int64_t out_elems, std::int64_t in_elems) {
  std::fill(dx, dx + in_elems, 0.0);
  // Pool windows are disjoint, so argmax targets never collide.
  for (std::int64_t i = 0; i < out_elems; ++i) dx[argmax[i]] += g[i];
}

void relu_forward(const double* x, double* y, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* g, const double* x, double* dx, std::int64_t n) {
  // Subgradient 0 at x == 0.
  for (std::int64_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? g[i] : 0.0;
}

}  // namespace serial

namespace par {

void matmul_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) detail::matmul_nn_row(a, b, c, i, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) detail::matmul_nt_row(a, b, c, i, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) detail::matmul_tn_row(a, b, c, i, m, k, n);
}

void add_bias_rows(double* c, const double* bias, std::int64_t m, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) c[i * n + j] += bias[j];
}

void col_sum(const double* g, double* out, std::int64_t m, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < m; ++i) acc += g[i * n + j];
    out[j] = acc;
  }
}

void conv2d_forward(const double* x, const double* k, double* y, const Conv2dDims& d) {
#pragma omp parallel for schedule(static)
  for (std::int64_t nf = 0; nf < d.n * d.f; ++nf)
    detail::conv2d_forward_image(x, k, y, d, nf / d.f, nf % d.f);
}

void conv2d_backward_input(const double* g, const double* k, double* dx, const Conv2dDims& d) {
#pragma omp parallel for schedule(static)
  for (std::int64_t nc = 0; nc < d.n * d.c; ++nc)
    detail::conv2d_backward_input_channel(g, k, dx, d, nc / d.c, nc % d.c);
}

void conv2d_backward_kernel(const double* g, const double* x, double* dk, const Conv2dDims& d) {
  const std::int64_t taps = d.f * d.c * d.kh * d.kw;
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < taps; ++t) detail::conv2d_backward_kernel_tap(g, x, dk, d, t);
}

void maxpool2_forward(const double* x, double* y, std::size_t* argmax, std::int64_t n,
                      std::int64_t c, std::int64_t h, std::int64_t w) {
#pragma omp parallel for schedule(static)
  for (std::int64_t nc = 0; nc < n * c; ++nc) detail::maxpool2_channel(x, y, argmax, nc, h, w);
}

void maxpool2_backward(const double* g, const std::size_t* argmax, double* dx,
                       std::int64_t out_elems, std::int64_t in_elems) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < in_elems; ++i) dx[i] = 0.0;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < out_elems; ++i) dx[argmax[i]] += g[i];
}

void relu_forward(const double* x, double* y, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* g, const double* x, double* dx, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? g[i] : 0.0;
}

}  // namespace par

namespace {

void require_rank2(const Tensor& t, const char* name) {
  if (t.rank() != 2)
    throw DimensionError(std::string(name) + " must be rank 2, got " + shape_str(t.shape));
}

}  // namespace

Tensor matmul_nn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nn a");
  require_rank2(b, "matmul_nn b");
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul_nn: inner dimensions disagree " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  Tensor c = Tensor::zeros({a.dim(0), b.dim(1)});
  par::matmul_nn(a.data.data(), b.data.data(), c.data.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt a");
  require_rank2(b, "matmul_nt b");
  if (a.dim(1) != b.dim(1))
    throw DimensionError("matmul_nt: inner dimensions disagree " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  Tensor c = Tensor::zeros({a.dim(0), b.dim(0)});
  par::matmul_nt(a.data.data(), b.data.data(), c.data.data(), a.dim(0), a.dim(1), b.dim(0));
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_tn a");
  require_rank2(b, "matmul_tn b");
  if (a.dim(0) != b.dim(0))
    throw DimensionError("matmul_tn: inner dimensions disagree " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  Tensor c = Tensor::zeros({a.dim(1), b.dim(1)});
  par::matmul_tn(a.data.data(), b.data.data(), c.data.data(), a.dim(1), a.dim(0), b.dim(1));
  return c;
}

Tensor add_bias_rows(Tensor c, const Tensor& bias) {
  require_rank2(c, "add_bias_rows c");
  if (bias.rank() != 1 || bias.dim(0) != c.dim(1))
    throw DimensionError("add_bias_rows: bias " + shape_str(bias.shape) + " does not match " +
                         shape_str(c.shape));
  par::add_bias_rows(c.data.data(), bias.data.data(), c.dim(0), c.dim(1));
  return c;
}

Tensor col_sum(const Tensor& g) {
  require_rank2(g, "col_sum g");
  Tensor out = Tensor::zeros({g.dim(1)});
  par::col_sum(g.data.data(), out.data.data(), g.dim(0), g.dim(1));
  return out;
}

Conv2dDims conv2d_dims(const Tensor& x, const Tensor& k, std::int64_t stride, std::int64_t pad) {
  if (x.rank() != 4 || k.rank() != 4)
    throw DimensionError("conv2d: expected 4-d input and kernel, got " + shape_str(x.shape) +
                         " and " + shape_str(k.shape));
  if (x.dim(1) != k.dim(1))
    throw DimensionError("conv2d: channel mismatch " + shape_str(x.shape) + " vs " +
                         shape_str(k.shape));
  if (stride < 1) throw ParamError("conv2d: stride must be >= 1");
  if (pad < 0) throw ParamError("conv2d: pad must be >= 0");
  Conv2dDims d;
  d.n = static_cast<std::int64_t>(x.dim(0));
  d.c = static_cast<std::int64_t>(x.dim(1));
  d.h = static_cast<std::int64_t>(x.dim(2));
  d.w = static_cast<std::int64_t>(x.dim(3));
  d.f = static_cast<std::int64_t>(k.dim(0));
  d.kh = static_cast<std::int64_t>(k.dim(2));
  d.kw = static_cast<std::int64_t>(k.dim(3));
  d.stride = stride;
  d.pad = pad;
  if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw)
    throw DimensionError("conv2d: kernel " + shape_str(k.shape) + " larger than padded input " +
                         shape_str(x.shape) + " with pad " + std::to_string(pad));
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  return d;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& k, std::int64_t stride, std::int64_t pad) {
  Conv2dDims d = conv2d_dims(x, k, stride, pad);
  Tensor y = Tensor::zeros({static_cast<std::size_t>(d.n), static_cast<std::size_t>(d.f),
                            static_cast<std::size_t>(d.ho), static_cast<std::size_t>(d.wo)});
  par::conv2d_forward(x.data.data(), k.data.data(), y.data.data(), d);
  return y;
}

Tensor conv2d_backward_input(const Tensor& g, const Tensor& k, const Conv2dDims& d) {
  Tensor dx = Tensor::zeros({static_cast<std::size_t>(d.n), static_cast<std::size_t>(d.c),
                             static_cast<std::size_t>(d.h), static_cast<std::size_t>(d.w)});
  par::conv2d_backward_input(g.data.data(), k.data.data(), dx.data.data(), d);
  return dx;
}

Tensor conv2d_backward_kernel(const Tensor& g, const Tensor& x, const Conv2dDims& d) {
  Tensor dk = Tensor::zeros({static_cast<std::size_t>(d.f), static_cast<std::size_t>(d.c),
                             static_cast<std::size_t>(d.kh), static_cast<std::size_t>(d.kw)});
  par::conv2d_backward_kernel(g.data.data(), x.data.data(), dk.data.data(), d);
  return dk;
}

Maxpool2Result maxpool2_forward(const Tensor& x) {
  if (x.rank() != 4)
    throw DimensionError("maxpool2: expected 4-d input, got " + shape_str(x.shape));
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
    throw DimensionError("maxpool2: spatial dims must be even, got " + shape_str(x.shape));
  Maxpool2Result r;
  r.out = Tensor::zeros({x.dim(0), x.dim(1), x.dim(2) / 2, x.dim(3) / 2});
  r.argmax.resize(r.out.numel());
  par::maxpool2_forward(x.data.data(), r.out.data.data(), r.argmax.data(), x.dim(0), x.dim(1),
                        x.dim(2), x.dim(3));
  return r;
}

Tensor maxpool2_backward(const Tensor& g, const std::vector<std::size_t>& argmax,
                         const std::vector<std::size_t>& in_shape) {
  Tensor dx = Tensor::zeros(in_shape);
  par::maxpool2_backward(g.data.data(), argmax.data(), dx.data.data(), g.numel(), dx.numel());
  return dx;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape);
  par::relu_forward(x.data.data(), y.data.data(), x.numel());
  return y;
}

Tensor relu_backward(const Tensor& g, const Tensor& x) {
  require_same_shape(g, x, "relu_backward");
  Tensor dx = Tensor::zeros(x.shape);
  par::relu_backward(g.data.data(), x.data.data(), dx.data.data(), x.numel());
  return dx;
}

}  // namespace clbench::kernels
