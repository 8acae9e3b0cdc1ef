// Times the serial reference kernels against the OpenMP variants on
// training-shaped workloads and checks that both produce bit-identical
// output while at it.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "clbench/kernels.hpp"
#include "clbench/rng.hpp"
#include "clbench/tensor.hpp"

using namespace clbench;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, RngStream& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = 2.0 * rng.next_unit() - 1.0;
  return t;
}

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() /
         reps;
}

void report(const char* name, double serial_s, double par_s, bool identical) {
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx   %s\n", name, serial_s * 1e3, par_s * 1e3,
              serial_s / par_s, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  RngStream rng(42, "bench");

#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP not available; par kernels run serially\n");
#endif
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "omp", "speedup");

  const int reps = 10;

  {
    const std::size_t m = 128, k = 512, n = 256;
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    Tensor cs = Tensor::zeros({m, n});
    Tensor cp = Tensor::zeros({m, n});
    double ts = time_of(
        [&] { kernels::serial::matmul_nn(a.data.data(), b.data.data(), cs.data.data(), m, k, n); },
        reps);
    double tp = time_of(
        [&] { kernels::par::matmul_nn(a.data.data(), b.data.data(), cp.data.data(), m, k, n); },
        reps);
    report("matmul_nn 128x512x256", ts, tp, cs.data == cp.data);
  }

  {
    const std::size_t batch = 32, c = 16, h = 28, w = 28, f = 32;
    Tensor x = random_tensor({batch, c, h, w}, rng);
    Tensor k = random_tensor({f, c, 3, 3}, rng);
    const kernels::Conv2dDims d = kernels::conv2d_dims(x, k, 1, 1);
    Tensor ys = Tensor::zeros({batch, f, static_cast<std::size_t>(d.ho),
                               static_cast<std::size_t>(d.wo)});
    Tensor yp = ys;
    double ts = time_of(
        [&] { kernels::serial::conv2d_forward(x.data.data(), k.data.data(), ys.data.data(), d); },
        reps);
    double tp = time_of(
        [&] { kernels::par::conv2d_forward(x.data.data(), k.data.data(), yp.data.data(), d); },
        reps);
    report("conv2d fwd 32x16x28x28", ts, tp, ys.data == yp.data);

    Tensor g = random_tensor(ys.shape, rng);
    Tensor dxs = Tensor::zeros(x.shape);
    Tensor dxp = dxs;
    ts = time_of(
        [&] {
          kernels::serial::conv2d_backward_input(g.data.data(), k.data.data(), dxs.data.data(), d);
        },
        reps);
    tp = time_of(
        [&] {
          kernels::par::conv2d_backward_input(g.data.data(), k.data.data(), dxp.data.data(), d);
        },
        reps);
    report("conv2d bwd-input", ts, tp, dxs.data == dxp.data);

    Tensor dks = Tensor::zeros(k.shape);
    Tensor dkp = dks;
    ts = time_of(
        [&] {
          kernels::serial::conv2d_backward_kernel(g.data.data(), x.data.data(), dks.data.data(),
                                                  d);
        },
        reps);
    tp = time_of(
        [&] {
          kernels::par::conv2d_backward_kernel(g.data.data(), x.data.data(), dkp.data.data(), d);
        },
        reps);
    report("conv2d bwd-kernel", ts, tp, dks.data == dkp.data);
  }

  {
    const std::size_t batch = 64, c = 32, h = 28, w = 28;
    Tensor x = random_tensor({batch, c, h, w}, rng);
    Tensor ys = Tensor::zeros({batch, c, h / 2, w / 2});
    Tensor yp = ys;
    std::vector<std::size_t> as(ys.numel()), ap(ys.numel());
    double ts = time_of(
        [&] {
          kernels::serial::maxpool2_forward(x.data.data(), ys.data.data(), as.data(), batch, c, h,
                                            w);
        },
        reps);
    double tp = time_of(
        [&] {
          kernels::par::maxpool2_forward(x.data.data(), yp.data.data(), ap.data(), batch, c, h,
                                         w);
        },
        reps);
    report("maxpool2 fwd 64x32x28x28", ts, tp, ys.data == yp.data && as == ap);
  }

  return 0;
}
