#include "coderain/conv.hpp"

#include <doctest.h>

#include <random>

using namespace coderain;

namespace {

Tensor random_tensor(int c, int h, int w, std::mt19937_64& rng) {
  Tensor t(c, h, w);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : t.data) v = dist(rng);
  return t;
}

KernelBank random_bank(int oc, int ic, int s, std::mt19937_64& rng) {
  KernelBank k(oc, ic, s);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : k.data) v = dist(rng);
  return k;
}

}  // namespace

TEST_CASE("conv2d scalar and identity") {
  Tensor x(1, 1, 1);
  x.data = {2.0};
  KernelBank k(1, 1, 1);
  k.data = {3.0};
  CHECK(conv2d(x, k).data[0] == doctest::Approx(6.0));
  CHECK(conv2d_adjoint(x, k).data[0] == doctest::Approx(6.0));

  std::mt19937_64 rng(5);
  Tensor img = random_tensor(1, 6, 7, rng);
  KernelBank ident(1, 1, 3);
  ident.at(0, 0, 1, 1) = 1.0;
  Tensor out = conv2d(img, ident);
  Tensor adj = conv2d_adjoint(img, ident);
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(out.data[i] == img.data[i]);
    CHECK(adj.data[i] == img.data[i]);
  }
}

TEST_CASE("conv2d all-ones overlap counts") {
  Tensor x(1, 3, 3);
  for (double& v : x.data) v = 1.0;
  KernelBank k(1, 1, 3);
  for (double& v : k.data) v = 1.0;
  Tensor out = conv2d(x, k);
  CHECK(out.at(0, 1, 1) == doctest::Approx(9.0));
  CHECK(out.at(0, 0, 0) == doctest::Approx(4.0));
  CHECK(out.at(0, 0, 2) == doctest::Approx(4.0));
  CHECK(out.at(0, 2, 0) == doctest::Approx(4.0));
  CHECK(out.at(0, 2, 2) == doctest::Approx(4.0));
  CHECK(out.at(0, 0, 1) == doctest::Approx(6.0));
}

TEST_CASE("conv2d shape validation") {
  Tensor x(2, 4, 4);
  KernelBank k(3, 1, 3);
  CHECK_THROWS_AS(conv2d(x, k), ShapeError);
  CHECK_THROWS_AS(conv2d_adjoint(x, k), ShapeError);
  CHECK_THROWS_AS(KernelBank(1, 1, 4), ParamError);
}

TEST_CASE("adjoint identity over random shapes and kernel sizes") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const int ic = 1 + static_cast<int>(rng() % 4);
    const int oc = 1 + static_cast<int>(rng() % 4);
    const int s = 3 + 2 * static_cast<int>(rng() % 3);
    Tensor a = random_tensor(ic, 8, 8, rng);
    Tensor b = random_tensor(oc, 8, 8, rng);
    KernelBank k = random_bank(oc, ic, s, rng);
    const double lhs = dot(conv2d(a, k), b);
    const double rhs = dot(a, conv2d_adjoint(b, k));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("conv2d linearity") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = random_tensor(2, 8, 8, rng);
    Tensor b = random_tensor(2, 8, 8, rng);
    KernelBank k = random_bank(3, 2, 3, rng);
    const double alpha = 0.7, beta = -1.3;
    Tensor combo = add(scale(a, alpha), scale(b, beta));
    Tensor lhs = conv2d(combo, k);
    Tensor rhs = add(scale(conv2d(a, k), alpha), scale(conv2d(b, k), beta));
    for (std::size_t i = 0; i < lhs.size(); ++i)
      CHECK(lhs.data[i] == doctest::Approx(rhs.data[i]).epsilon(1e-10));
  }
}

TEST_CASE("parallel kernels match the serial reference bitwise") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 8; ++trial) {
    const int ic = 1 + static_cast<int>(rng() % 3);
    const int oc = 1 + static_cast<int>(rng() % 5);
    const int s = 3 + 2 * static_cast<int>(rng() % 3);
    const int h = 5 + static_cast<int>(rng() % 20);
    const int w = 5 + static_cast<int>(rng() % 20);
    Tensor x = random_tensor(ic, h, w, rng);
    Tensor g = random_tensor(oc, h, w, rng);
    KernelBank k = random_bank(oc, ic, s, rng);

    Tensor par = conv2d(x, k);
    Tensor ser = serial::conv2d(x, k);
    REQUIRE(par.size() == ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) CHECK(par.data[i] == ser.data[i]);

    Tensor par_adj = conv2d_adjoint(g, k);
    Tensor ser_adj = serial::conv2d_adjoint(g, k);
    for (std::size_t i = 0; i < par_adj.size(); ++i) CHECK(par_adj.data[i] == ser_adj.data[i]);

    std::vector<double> gp(k.size(), 0.0), gs(k.size(), 0.0);
    conv2d_kernel_grad_accum(x, g, s, gp);
    serial::conv2d_kernel_grad_accum(x, g, s, gs);
    for (std::size_t i = 0; i < gp.size(); ++i) CHECK(gp[i] == gs[i]);
  }
}

TEST_CASE("kernel gradient equals per-element inner products") {
  std::mt19937_64 rng(31);
  Tensor x = random_tensor(2, 6, 6, rng);
  Tensor dout = random_tensor(3, 6, 6, rng);
  const int s = 3;
  std::vector<double> grad(3 * 2 * s * s, 0.0);
  conv2d_kernel_grad_accum(x, dout, s, grad);

  // d<dout, conv(x,k)>/dk[q] probed with unit kernels
  for (int oc = 0; oc < 3; ++oc)
    for (int ic = 0; ic < 2; ++ic)
      for (int ky = 0; ky < s; ++ky)
        for (int kx = 0; kx < s; ++kx) {
          KernelBank unit(3, 2, s);
          unit.at(oc, ic, ky, kx) = 1.0;
          const double expected = dot(conv2d(x, unit), dout);
          const double got = grad[((oc * 2 + ic) * s + ky) * s + kx];
          CHECK(got == doctest::Approx(expected).epsilon(1e-10));
        }
}
