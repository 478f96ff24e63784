// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <stdexcept>

#include "adapm/toy_model.hpp"

namespace adapm::toy {

std::uint32_t next_token(std::uint32_t previous, std::uint32_t current, std::size_t vocab) {
  return static_cast<std::uint32_t>((static_cast<std::size_t>(previous) + current) % vocab);
}

TaskStream::TaskStream(std::size_t vocab, std::uint64_t seed) : vocab_(vocab), rng_(seed) {
  if (vocab < 2) throw std::invalid_argument("task vocabulary must have at least 2 tokens");
}

std::vector<std::uint32_t> TaskStream::next_sequence(std::size_t seq_len) {
  std::uniform_int_distribution<std::uint32_t> uniform(0, static_cast<std::uint32_t>(vocab_ - 1));
  std::vector<std::uint32_t> seq(seq_len + 1);
  seq[0] = uniform(rng_);
  if (seq.size() > 1) seq[1] = uniform(rng_);
  for (std::size_t i = 2; i < seq.size(); ++i) seq[i] = next_token(seq[i - 2], seq[i - 1], vocab_);
  return seq;
}

Batch TaskStream::next_batch(std::size_t batch_size, std::size_t seq_len) {
  Batch b;
  b.batch_size = batch_size;
  b.seq_len = seq_len;
  b.tokens.reserve(batch_size * seq_len);
  b.targets.reserve(batch_size * seq_len);
  for (std::size_t s = 0; s < batch_size; ++s) {
    const auto seq = next_sequence(seq_len);
    b.tokens.insert(b.tokens.end(), seq.begin(), seq.end() - 1);
    b.targets.insert(b.targets.end(), seq.begin() + 1, seq.end());
  }
  return b;
}

Batch eval_batch(std::size_t vocab, std::size_t batch_size, std::size_t seq_len,
                 std::uint64_t seed) {
  // Fixed offset keeps held-out sequences off the training stream of the same seed.
  TaskStream stream(vocab, seed ^ 0x9e3779b97f4a7c15ULL);
  return stream.next_batch(batch_size, seq_len);
}

double bigram_baseline_loss(const Batch& train, const Batch& eval, std::size_t vocab,
                            double smoothing) {
  train.validate(vocab);
  eval.validate(vocab);
  if (!(smoothing > 0.0)) throw std::invalid_argument("smoothing must be positive");
  std::vector<double> counts(vocab * vocab, smoothing);
  std::vector<double> totals(vocab, smoothing * static_cast<double>(vocab));
  for (std::size_t i = 0; i < train.token_count(); ++i) {
    counts[train.tokens[i] * vocab + train.targets[i]] += 1.0;
    totals[train.tokens[i]] += 1.0;
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < eval.token_count(); ++i) {
    loss -= std::log(counts[eval.tokens[i] * vocab + eval.targets[i]] / totals[eval.tokens[i]]);
  }
  return loss / static_cast<double>(eval.token_count());
}

}  // namespace adapm::toy
