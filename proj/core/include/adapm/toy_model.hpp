// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adapm/matrix.hpp"
#include "adapm/optimizer.hpp"
#include "adapm/partition.hpp"

namespace adapm::toy {

struct ToyTransformerConfig {
  std::size_t vocab = 32;
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 1;
  std::size_t mlp_ratio = 4;
  std::size_t seq_len = 32;
  std::uint64_t seed = 0;
  double init_scale = 0.02;

  std::vector<std::string> diagnostics() const;
  void validate() const;
};

/// Token ids laid out as batch_size rows of seq_len tokens.
struct Batch {
  std::size_t batch_size = 0;
  std::size_t seq_len = 0;
  std::vector<std::uint32_t> tokens;
  std::vector<std::uint32_t> targets;

  /// Throws std::invalid_argument on inconsistent lengths or ids >= vocab.
  void validate(std::size_t vocab) const;
  std::size_t token_count() const noexcept { return batch_size * seq_len; }
};

/// Sum: total cross-entropy over all tokens. Mean: Sum divided by the token
/// count, the setting used for training.
enum class LossReduction { Sum, Mean };

struct ForwardResult {
  double loss = 0.0;
  /// Same order and shapes as the parameter list.
  std::vector<Matrix> grads;
};

/// Pre-norm decoder-only transformer with single-head causal attention,
/// GELU (tanh form) MLP, fixed sinusoidal positions, bias-free projections
/// and an untied output head. Activations are row vectors; projections are
/// stored as in x out matrices.
class ToyTransformer {
 public:
  /// Throws std::invalid_argument on an invalid config.
  explicit ToyTransformer(ToyTransformerConfig config);

  const ToyTransformerConfig& config() const noexcept { return config_; }

  /// Fresh parameters drawn from N(0, init_scale^2) for matrices, with
  /// layer-norm gains at 1 and shifts at 0. Deterministic in config().seed.
  std::vector<NamedParameter> build() const;

  std::size_t parameter_count() const noexcept { return names_.size(); }

  /// Loss and gradients with respect to every parameter. Throws
  /// DimensionError if params do not match build()'s layout and
  /// NumericalError on a non-finite loss.
  ForwardResult forward_backward(std::span<const NamedParameter> params, const Batch& batch,
                                 LossReduction reduction = LossReduction::Mean) const;

  /// Loss only.
  double loss(std::span<const NamedParameter> params, const Batch& batch,
              LossReduction reduction = LossReduction::Mean) const;

 private:
  ForwardResult run(std::span<const NamedParameter> params, const Batch& batch,
                    LossReduction reduction, bool with_grads) const;

  ToyTransformerConfig config_;
  std::vector<std::string> names_;
  std::vector<BlockRole> roles_;
  std::vector<ParamShape> shapes_;
  Matrix positions_;
};

/// Synthetic language in which every token after the first two is the sum
/// of the previous two modulo the vocabulary size. The first two tokens of
/// each sequence are uniform.
class TaskStream {
 public:
  TaskStream(std::size_t vocab, std::uint64_t seed);

  /// seq_len + 1 tokens of one sequence.
  std::vector<std::uint32_t> next_sequence(std::size_t seq_len);
  Batch next_batch(std::size_t batch_size, std::size_t seq_len);

 private:
  std::size_t vocab_;
  std::mt19937_64 rng_;
};

/// Next token under the task's rule.
std::uint32_t next_token(std::uint32_t previous, std::uint32_t current, std::size_t vocab);

/// Smoothed count-based bigram predictor fitted on train and scored
/// (mean cross-entropy) on eval.
double bigram_baseline_loss(const Batch& train, const Batch& eval, std::size_t vocab,
                            double smoothing = 0.1);

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
};

struct TrainOptions {
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  std::size_t eval_every = 10;
  std::size_t eval_batch_size = 16;
  std::size_t final_eval_batch_size = 64;
  std::uint64_t seed = 0;
};

struct TrainResult {
  /// Held-out loss at step 0 and every eval_every steps, plus the last step.
  std::vector<LossPoint> trace;
  /// Held-out loss on the larger final evaluation set.
  double final_loss = 0.0;
};

/// Training diverged (held-out loss above 10 ln V) or hit a step error.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t step, const std::string& what);
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Trains registry in place. Batches come from TaskStream(seed); the
/// held-out sets from a stream seeded independently of it.
TrainResult train(const ToyTransformer& model, ParamRegistry& registry, const AdaPMConfig& cfg,
                  const TrainOptions& options);

struct ToyRun {
  TrainResult result;
  ParamRegistry registry;
};

/// Builds a model with model_cfg.seed = options.seed, a registry under
/// policy and trains it.
ToyRun train_toy(ToyTransformerConfig model_cfg, const PartitionPolicy& policy,
                 const AdaPMConfig& cfg, const TrainOptions& options);

/// Held-out batch used by train() for a given seed.
Batch eval_batch(std::size_t vocab, std::size_t batch_size, std::size_t seq_len,
                 std::uint64_t seed);

}  // namespace adapm::toy
