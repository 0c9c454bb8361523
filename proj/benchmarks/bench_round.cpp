// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "fedlora/fed.hpp"

namespace {

void BM_FederatedRound(benchmark::State& state) {
  fedlora::ExperimentConfig cfg;
  cfg.rank = static_cast<std::size_t>(state.range(0));
  cfg.n_clients = static_cast<std::size_t>(state.range(1));
  fedlora::Federation fed(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(fed.run_round());
}
BENCHMARK(BM_FederatedRound)
    ->Args({8, 3})
    ->Args({128, 3})
    ->Args({512, 3})
    ->Args({64, 16})
    ->Unit(benchmark::kMillisecond);

void BM_Aggregate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  fedlora::RngStream rng(4, {fedlora::StreamKind::kTest, 0, 0});
  std::vector<fedlora::AdapterUpload> uploads;
  for (std::size_t i = 0; i < n; ++i) {
    uploads.push_back({i, {fedlora::gaussian_matrix(128, 64, 1.0, rng)}, {}});
  }
  fedlora::ServerState server;
  for (auto _ : state) benchmark::DoNotOptimize(fedlora::aggregate(server, uploads));
}
BENCHMARK(BM_Aggregate)->Arg(4)->Arg(20);

}  // namespace

BENCHMARK_MAIN();
