// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "adapm/toy_model.hpp"

namespace {

void BM_ToyForwardBackward(benchmark::State& state) {
  adapm::toy::ToyTransformerConfig mc;
  const adapm::toy::ToyTransformer model(mc);
  const auto params = model.build();
  adapm::toy::TaskStream ts(mc.vocab, 1);
  const auto batch = ts.next_batch(static_cast<std::size_t>(state.range(0)), 32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward_backward(params, batch));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ToyForwardBackward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
