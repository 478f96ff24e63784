// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>

#include "adapm/errors.hpp"
#include "adapm/toy_model.hpp"

namespace adapm::toy {

TrainingError::TrainingError(std::size_t step, const std::string& what)
    : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}

TrainResult train(const ToyTransformer& model, ParamRegistry& registry, const AdaPMConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  if (options.steps == 0) throw std::invalid_argument("steps must be positive");
  if (options.steps > cfg.total_steps) {
    throw std::invalid_argument("steps exceed the schedule's total_steps");
  }
  if (options.batch_size == 0 || options.eval_every == 0) {
    throw std::invalid_argument("batch_size and eval_every must be positive");
  }
  const ToyTransformerConfig& mc = model.config();
  const double limit = 10.0 * std::log(static_cast<double>(mc.vocab));
  const Batch held_out = eval_batch(mc.vocab, options.eval_batch_size, mc.seq_len, options.seed);
  TaskStream stream(mc.vocab, options.seed);

  TrainResult result;
  auto evaluate = [&](std::size_t step) {
    const double loss = model.loss(registry.parameters(), held_out);
    if (!(loss <= limit)) throw TrainingError(step, "loss " + std::to_string(loss) + " diverged");
    result.trace.push_back({step, loss});
  };

  const std::size_t start = registry.last_step();
  if (start == 0) evaluate(0);
  for (std::size_t t = start + 1; t <= start + options.steps; ++t) {
    if (t > cfg.total_steps) throw TrainingError(t, "step beyond the schedule's total_steps");
    const Batch batch = stream.next_batch(options.batch_size, mc.seq_len);
    ForwardResult fr = model.forward_backward(registry.parameters(), batch);
    if (!(fr.loss <= limit)) {
      throw TrainingError(t, "training loss " + std::to_string(fr.loss) + " diverged");
    }
    try {
      step(registry, fr.grads, t, cfg);
    } catch (const StepError& e) {
      throw TrainingError(t, e.what());
    }
    if (t % options.eval_every == 0 || t == start + options.steps) evaluate(t);
  }
  const Batch final_set =
      eval_batch(mc.vocab, options.final_eval_batch_size, mc.seq_len, options.seed + 1);
  result.final_loss = model.loss(registry.parameters(), final_set);
  return result;
}

ToyRun train_toy(ToyTransformerConfig model_cfg, const PartitionPolicy& policy,
                 const AdaPMConfig& cfg, const TrainOptions& options) {
  model_cfg.seed = options.seed;
  const ToyTransformer model(model_cfg);
  ParamRegistry registry(model.build(), policy, cfg, options.seed);
  TrainResult result = train(model, registry, cfg, options);
  return {std::move(result), std::move(registry)};
}

}  // namespace adapm::toy
