// Microbenchmarks comparing the OpenMP kernels against the serial reference
// on solver-sized workloads. Build target: conv_bench.

#include "coderain/conv.hpp"
#include "coderain/model.hpp"
#include "coderain/train.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace coderain;

namespace {

Tensor random_tensor(int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor t(c, h, w);
  for (double& v : t.data) v = dist(rng);
  return t;
}

KernelBank random_bank(int oc, int ic, int s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  KernelBank k(oc, ic, s);
  for (double& v : k.data) v = dist(rng);
  return k;
}

void args_conv(benchmark::internal::Benchmark* b) {
  // channels, image size, kernel size
  b->Args({32, 32, 3})->Args({32, 64, 3})->Args({16, 128, 3})->Args({16, 64, 7});
}

void bm_conv2d_omp(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const int s = static_cast<int>(state.range(2));
  Tensor x = random_tensor(c, n, n, 1);
  KernelBank k = random_bank(c, c, s, 2);
  for (auto _ : state) {
    Tensor out = conv2d(x, k);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c) * c * s * s * n * n);
}

void bm_conv2d_serial(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const int s = static_cast<int>(state.range(2));
  Tensor x = random_tensor(c, n, n, 1);
  KernelBank k = random_bank(c, c, s, 2);
  for (auto _ : state) {
    Tensor out = serial::conv2d(x, k);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c) * c * s * s * n * n);
}

void bm_adjoint_omp(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const int s = static_cast<int>(state.range(2));
  Tensor g = random_tensor(c, n, n, 3);
  KernelBank k = random_bank(c, c, s, 4);
  for (auto _ : state) {
    Tensor out = conv2d_adjoint(g, k);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c) * c * s * s * n * n);
}

void bm_adjoint_serial(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const int s = static_cast<int>(state.range(2));
  Tensor g = random_tensor(c, n, n, 3);
  KernelBank k = random_bank(c, c, s, 4);
  for (auto _ : state) {
    Tensor out = serial::conv2d_adjoint(g, k);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c) * c * s * s * n * n);
}

void bm_kernel_grad_omp(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const int s = static_cast<int>(state.range(2));
  Tensor x = random_tensor(c, n, n, 5);
  Tensor d = random_tensor(c, n, n, 6);
  std::vector<double> grad(static_cast<std::size_t>(c) * c * s * s, 0.0);
  for (auto _ : state) {
    conv2d_kernel_grad_accum(x, d, s, grad);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c) * c * s * s * n * n);
}

void bm_kernel_grad_serial(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const int s = static_cast<int>(state.range(2));
  Tensor x = random_tensor(c, n, n, 5);
  Tensor d = random_tensor(c, n, n, 6);
  std::vector<double> grad(static_cast<std::size_t>(c) * c * s * s, 0.0);
  for (auto _ : state) {
    serial::conv2d_kernel_grad_accum(x, d, s, grad);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c) * c * s * s * n * n);
}

// end-to-end forward pass at inference shape
void bm_derain_forward(benchmark::State& state) {
  ModelParams m(16, 32, 3, static_cast<int>(state.range(0)), 8);
  init_model(m, 9);
  Tensor y = random_tensor(3, 64, 64, 10);
  for (double& v : y.data) v = 0.5 + 0.4 * v;
  for (auto _ : state) {
    DerainResult res = derain(y, m);
    benchmark::DoNotOptimize(res.x.data.data());
  }
}

BENCHMARK(bm_conv2d_omp)->Apply(args_conv)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_conv2d_serial)->Apply(args_conv)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_adjoint_omp)->Apply(args_conv)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_adjoint_serial)->Apply(args_conv)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_kernel_grad_omp)->Apply(args_conv)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_kernel_grad_serial)->Apply(args_conv)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_derain_forward)->Arg(5)->Arg(25)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
