// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "fedlora/adapter.hpp"
#include "fedlora/linalg.hpp"

namespace {

using fedlora::DenseMatrix;
using fedlora::RngStream;
using fedlora::StreamKind;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RngStream rng(1, {StreamKind::kTest, 0, 0});
  const DenseMatrix a = fedlora::gaussian_matrix(n, n, 1.0, rng);
  const DenseMatrix b = fedlora::gaussian_matrix(n, n, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(fedlora::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

void BM_GaussianMatrix(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RngStream rng(2, {StreamKind::kTest, 0, 0});
  for (auto _ : state) benchmark::DoNotOptimize(fedlora::gaussian_matrix(n, n, 1.0, rng));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_GaussianMatrix)->Arg(64)->Arg(512);

void BM_AdapterForwardBackward(benchmark::State& state) {
  const auto r = static_cast<std::size_t>(state.range(0));
  RngStream rng(3, {StreamKind::kTest, 0, 0});
  auto adapter = fedlora::init_adapter(64, 64, r, 0.125, rng);
  adapter.b = fedlora::gaussian_matrix(64, r, 0.1, rng);
  adapter.gamma = 1.0;
  const DenseMatrix w0 = fedlora::gaussian_matrix(64, 64, 0.125, rng);
  const DenseMatrix x = fedlora::gaussian_matrix(64, 16, 1.0, rng);
  const DenseMatrix v = fedlora::gaussian_matrix(64, 16, 1.0, rng);
  for (auto _ : state) {
    const auto out = fedlora::adapter_forward(adapter, w0, x);
    benchmark::DoNotOptimize(fedlora::adapter_backward(adapter, x, out.ax, v));
  }
}
BENCHMARK(BM_AdapterForwardBackward)->RangeMultiplier(4)->Range(4, 512);

}  // namespace

BENCHMARK_MAIN();
