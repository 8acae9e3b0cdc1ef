#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "clbench/errors.hpp"
#include "clbench/kernels.hpp"
#include "clbench/rng.hpp"
#include "oracles.hpp"

using namespace clbench;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, RngStream& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = 2.0 * rng.next_unit() - 1.0;
  return t;
}

}  // namespace

TEST_CASE("matmul matches the triple-loop oracle exactly") {
  RngStream rng(1, "test");
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 2}, rng);
  const Tensor c = kernels::matmul_nn(a, b);
  const Tensor ref = oracle::matmul(a, b);
  CHECK(c.data == ref.data);
}

TEST_CASE("matmul identity and hand case") {
  // x=[[1,2]], w=identity -> unchanged
  const Tensor x({1, 2}, {1.0, 2.0});
  const Tensor eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
  CHECK(kernels::matmul_nn(x, eye).data == std::vector<double>{1.0, 2.0});
  // [[1,1]] * [[2],[3]] + [1] = [[6]]
  const Tensor x2({1, 2}, {1.0, 1.0});
  const Tensor w({2, 1}, {2.0, 3.0});
  const Tensor b({1}, {1.0});
  CHECK(kernels::add_bias_rows(kernels::matmul_nn(x2, w), b).data == std::vector<double>{6.0});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_WITH_AS(kernels::matmul_nn(a, b),
                       doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("serial and omp kernels are bit-identical") {
  RngStream rng(2, "test");
  // matmul family
  {
    const std::size_t m = 17, k = 23, n = 9;
    const Tensor a = random_tensor({m, k}, rng);
    const Tensor b = random_tensor({k, n}, rng);
    Tensor cs = Tensor::zeros({m, n}), cp = cs;
    kernels::serial::matmul_nn(a.data.data(), b.data.data(), cs.data.data(), m, k, n);
    kernels::par::matmul_nn(a.data.data(), b.data.data(), cp.data.data(), m, k, n);
    CHECK(cs.data == cp.data);

    const Tensor bt = random_tensor({n, k}, rng);
    Tensor ds = Tensor::zeros({m, n}), dp = ds;
    kernels::serial::matmul_nt(a.data.data(), bt.data.data(), ds.data.data(), m, k, n);
    kernels::par::matmul_nt(a.data.data(), bt.data.data(), dp.data.data(), m, k, n);
    CHECK(ds.data == dp.data);

    const Tensor at = random_tensor({k, m}, rng);
    const Tensor bn = random_tensor({k, n}, rng);
    Tensor es = Tensor::zeros({m, n}), ep = es;
    kernels::serial::matmul_tn(at.data.data(), bn.data.data(), es.data.data(), m, k, n);
    kernels::par::matmul_tn(at.data.data(), bn.data.data(), ep.data.data(), m, k, n);
    CHECK(es.data == ep.data);
  }
  // conv forward/backward
  {
    const Tensor x = random_tensor({2, 3, 8, 10}, rng);
    const Tensor k = random_tensor({4, 3, 3, 3}, rng);
    const kernels::Conv2dDims d = kernels::conv2d_dims(x, k, 1, 1);
    Tensor ys = Tensor::zeros({2, 4, 8, 10}), yp = ys;
    kernels::serial::conv2d_forward(x.data.data(), k.data.data(), ys.data.data(), d);
    kernels::par::conv2d_forward(x.data.data(), k.data.data(), yp.data.data(), d);
    CHECK(ys.data == yp.data);

    const Tensor g = random_tensor(ys.shape, rng);
    Tensor dxs = Tensor::zeros(x.shape), dxp = dxs;
    kernels::serial::conv2d_backward_input(g.data.data(), k.data.data(), dxs.data.data(), d);
    kernels::par::conv2d_backward_input(g.data.data(), k.data.data(), dxp.data.data(), d);
    CHECK(dxs.data == dxp.data);

    Tensor dks = Tensor::zeros(k.shape), dkp = dks;
    kernels::serial::conv2d_backward_kernel(g.data.data(), x.data.data(), dks.data.data(), d);
    kernels::par::conv2d_backward_kernel(g.data.data(), x.data.data(), dkp.data.data(), d);
    CHECK(dks.data == dkp.data);
  }
  // pooling
  {
    const Tensor x = random_tensor({3, 2, 6, 6}, rng);
    Tensor ys = Tensor::zeros({3, 2, 3, 3}), yp = ys;
    std::vector<std::size_t> as(ys.numel()), ap(ys.numel());
    kernels::serial::maxpool2_forward(x.data.data(), ys.data.data(), as.data(), 3, 2, 6, 6);
    kernels::par::maxpool2_forward(x.data.data(), yp.data.data(), ap.data(), 3, 2, 6, 6);
    CHECK(ys.data == yp.data);
    CHECK(as == ap);

    const Tensor g = random_tensor(ys.shape, rng);
    Tensor dxs = Tensor::zeros(x.shape), dxp = dxs;
    kernels::serial::maxpool2_backward(g.data.data(), as.data(), dxs.data.data(), g.numel(),
                                       dxs.numel());
    kernels::par::maxpool2_backward(g.data.data(), ap.data(), dxp.data.data(), g.numel(),
                                    dxp.numel());
    CHECK(dxs.data == dxp.data);
  }
}

TEST_CASE("conv2d identity kernel returns the input") {
  RngStream rng(3, "test");
  const Tensor x = random_tensor({1, 1, 5, 5}, rng);
  const Tensor k({1, 1, 1, 1}, {1.0});
  CHECK(kernels::conv2d_forward(x, k, 1, 0).data == x.data);
}

TEST_CASE("3x3 all-ones kernel on a constant image sums to 9c") {
  const double c = 0.37;
  const Tensor x = Tensor::full({1, 1, 6, 6}, c);
  const Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  const Tensor y = kernels::conv2d_forward(x, k, 1, 0);
  CHECK(y.dim(2) == 4);
  for (double v : y.data) CHECK(v == doctest::Approx(9.0 * c).epsilon(1e-12));
}

TEST_CASE("conv2d matches the sliding-window oracle exactly") {
  RngStream rng(4, "test");
  const Tensor x = random_tensor({1, 1, 5, 5}, rng);
  const Tensor k = random_tensor({1, 1, 3, 3}, rng);
  for (int pad = 0; pad <= 2; ++pad) {
    for (int stride = 1; stride <= 2; ++stride) {
      CHECK(kernels::conv2d_forward(x, k, stride, pad).data ==
            oracle::conv2d(x, k, stride, pad).data);
    }
  }
}

TEST_CASE("conv2d rejects a kernel larger than the padded input") {
  const Tensor x = Tensor::zeros({1, 1, 2, 2});
  const Tensor k = Tensor::zeros({1, 1, 3, 3});
  CHECK_THROWS_AS(kernels::conv2d_forward(x, k, 1, 0), DimensionError);
  CHECK_NOTHROW(kernels::conv2d_forward(x, k, 1, 1));
}

TEST_CASE("maxpool2 basics and tie routing") {
  const Tensor x({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  kernels::Maxpool2Result r = kernels::maxpool2_forward(x);
  CHECK(r.out.data == std::vector<double>{4.0});

  // constant image: gradient routed to the top-left of each window
  const Tensor c = Tensor::full({1, 1, 4, 4}, 1.5);
  kernels::Maxpool2Result rc = kernels::maxpool2_forward(c);
  for (double v : rc.out.data) CHECK(v == 1.5);
  CHECK(rc.argmax == std::vector<std::size_t>{0, 2, 8, 10});
  const Tensor g = Tensor::full({1, 1, 2, 2}, 1.0);
  const Tensor dx = kernels::maxpool2_backward(g, rc.argmax, c.shape);
  CHECK(dx.data[0] == 1.0);
  CHECK(dx.data[1] == 0.0);
}

TEST_CASE("maxpool2 matches the window-scan oracle") {
  RngStream rng(5, "test");
  const Tensor x = random_tensor({1, 1, 4, 4}, rng);
  CHECK(kernels::maxpool2_forward(x).out.data == oracle::maxpool2(x).data);
}

TEST_CASE("maxpool2 rejects odd spatial dims") {
  CHECK_THROWS_AS(kernels::maxpool2_forward(Tensor::zeros({1, 1, 3, 4})), DimensionError);
  CHECK_THROWS_AS(kernels::maxpool2_forward(Tensor::zeros({1, 1, 4, 5})), DimensionError);
}

TEST_CASE("relu forward and backward follow the subgradient-0 convention") {
  const Tensor x({3}, {-1.0, 0.0, 2.0});
  CHECK(kernels::relu_forward(x).data == std::vector<double>{0.0, 0.0, 2.0});
  const Tensor g({3}, {1.0, 1.0, 1.0});
  CHECK(kernels::relu_backward(g, x).data == std::vector<double>{0.0, 0.0, 1.0});

  const Tensor pos({3}, {0.5, 1.0, 7.0});
  CHECK(kernels::relu_forward(pos).data == pos.data);
}
