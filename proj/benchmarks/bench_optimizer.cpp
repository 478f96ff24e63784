// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <optional>
#include <string>
#include <vector>

#include "adapm/optimizer.hpp"
#include "adapm/partition.hpp"
#include "bench_util.hpp"

namespace {

// One transformer-like layer of width d: attention, two MLP matrices, a bias.
std::vector<adapm::NamedParameter> layer(std::size_t d) {
  std::mt19937_64 rng(11);
  std::vector<adapm::NamedParameter> p;
  auto add = [&](std::string name, std::size_t rows, std::optional<std::size_t> cols) {
    adapm::ParamShape shape{rows, cols};
    adapm::Matrix value = cols ? bench::gaussian(rng, rows, *cols, 0.02) : adapm::Matrix(rows, 1);
    p.push_back({name, adapm::classify(name, shape), shape, std::move(value)});
  };
  for (const char* n : {"wq", "wk", "wv", "wo"}) add(std::string("layers.0.attn.") + n, d, d);
  add("layers.0.mlp.w_in", d, 4 * d);
  add("layers.0.mlp.w_out", 4 * d, d);
  add("layers.0.ln.bias", d, std::nullopt);
  return p;
}

void run(benchmark::State& state, const char* row) {
  const auto d = static_cast<std::size_t>(state.range(0));
  adapm::AdaPMConfig cfg;
  cfg.total_steps = 1u << 30;
  adapm::ParamRegistry reg(layer(d), adapm::policy_from_table1(row), cfg, 5);
  std::mt19937_64 rng(12);
  std::vector<adapm::Matrix> base;
  for (const auto& p : reg.parameters()) {
    base.push_back(bench::gaussian(rng, p.value.rows(), p.value.cols(), 1e-3));
  }
  std::size_t t = 0;
  for (auto _ : state) {
    auto grads = base;
    benchmark::DoNotOptimize(adapm::step(reg, grads, ++t, cfg));
  }
}

void BM_StepAllFull(benchmark::State& state) { run(state, "all-full"); }
void BM_StepDefault(benchmark::State& state) { run(state, "adapm-default"); }
BENCHMARK(BM_StepAllFull)->Arg(64)->Arg(128);
BENCHMARK(BM_StepDefault)->Arg(64)->Arg(128);

}  // namespace
