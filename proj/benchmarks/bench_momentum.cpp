// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "adapm/linalg.hpp"
#include "adapm/momentum.hpp"
#include "bench_util.hpp"

namespace {

using adapm::Matrix;
using adapm::MomentumMode;
using adapm::MomentumState;

void BM_LowRankFit(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto r = std::max<std::size_t>(1, n / 20);
  std::mt19937_64 rng(1);
  const Matrix target = bench::gaussian(rng, n, n);
  const adapm::LowRankPair warm{bench::gaussian(rng, n, r, 0.1), bench::gaussian(rng, r, n, 0.1)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(adapm::low_rank_fit(target, warm, 5));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_LowRankFit)->RangeMultiplier(2)->Range(32, 256)->Complexity();

void BM_ColdRefresh(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const Matrix target = bench::gaussian(rng, n, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(adapm::cold_refresh(target, std::max<std::size_t>(1, n / 20)));
  }
}
BENCHMARK(BM_ColdRefresh)->RangeMultiplier(2)->Range(32, 128);

void BM_UpdateFull(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  const Matrix g = bench::gaussian(rng, n, n);
  MomentumState s(MomentumMode::full(), n, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(adapm::update_full(s, g, 0.9));
  }
}
BENCHMARK(BM_UpdateFull)->RangeMultiplier(2)->Range(32, 256);

void BM_UpdateLowRank(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  const Matrix g = bench::gaussian(rng, n, n);
  MomentumState s(MomentumMode::low_rank(0.05), n, n, adapm::SecondMomentMode::Full, 7);
  const adapm::LowRankOptions opts;
  for (auto _ : state) {
    benchmark::DoNotOptimize(adapm::update_lowrank(s, g, 0.9, opts, false));
  }
}
BENCHMARK(BM_UpdateLowRank)->RangeMultiplier(2)->Range(32, 256);

}  // namespace
