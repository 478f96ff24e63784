// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adapm/matrix.hpp"
#include "adapm/momentum.hpp"
#include "adapm/partition.hpp"

namespace adapm {

/// How clip(m^c / (sqrt(v) + eps), threshold) bounds the update.
enum class UpdateClipMode {
  Elementwise,  // clamp every entry to [-threshold, threshold]
  Norm,         // rescale the whole update to Frobenius norm <= threshold
};

std::string_view to_string(UpdateClipMode mode) noexcept;
UpdateClipMode update_clip_mode_from_string(std::string_view name);

struct AdaPMConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
  double rank_ratio = 0.05;
  /// Every refresh_period-th step re-anchors low-rank factors with a truncated SVD.
  std::size_t refresh_period = 100;
  std::size_t inner_iters = 5;
  double inner_base_lr = kDefaultInnerBaseLr;
  double clip_threshold = 1.0;
  UpdateClipMode clip_mode = UpdateClipMode::Elementwise;
  /// Global gradient-norm clip; <= 0 disables it.
  double global_grad_clip = 1.0;
  double base_lr = 1e-3;
  std::size_t warmup_steps = 2000;
  std::size_t total_steps = 10000;
  double min_lr_ratio = 0.1;
  SecondMomentMode second_moment_mode = SecondMomentMode::Full;
  bool bias_correction = true;

  /// Human-readable problems; empty means the config is usable.
  std::vector<std::string> diagnostics() const;
  /// Throws std::invalid_argument listing every diagnostic.
  void validate() const;

  LowRankOptions low_rank_options() const {
    return {inner_iters, inner_base_lr, bias_correction};
  }
};

/// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to
/// base_lr * min_lr_ratio at total_steps. Valid for 1 <= t <= total_steps.
double lr_schedule(std::size_t t, const AdaPMConfig& cfg);

/// Scales every gradient by threshold / norm when the global L2 norm over all
/// of them exceeds threshold. Returns the norm before clipping.
double global_clip(std::span<Matrix> grads, double threshold);

/// Entrywise clamp to [-threshold, threshold].
Matrix clip_update(const Matrix& u, double threshold);
/// Rescale to Frobenius norm at most threshold.
Matrix clip_update_norm(const Matrix& u, double threshold);

/// Parameters together with their optimizer state and learning-rate multipliers.
class ParamRegistry {
 public:
  /// Resolves each parameter against the policy and allocates its state.
  /// 1-D parameters are always labelled VectorParam. Throws
  /// std::invalid_argument on duplicate names or a value/shape mismatch.
  ParamRegistry(std::vector<NamedParameter> params, const PartitionPolicy& policy,
                const AdaPMConfig& cfg, std::uint64_t seed = 0);

  std::size_t size() const noexcept { return params_.size(); }
  std::span<const NamedParameter> parameters() const noexcept { return params_; }
  const NamedParameter& parameter(std::size_t i) const { return params_.at(i); }
  Matrix& value(std::size_t i) { return params_.at(i).value; }

  const MomentumState& state(std::size_t i) const { return states_.at(i); }
  MomentumState& state(std::size_t i) { return states_.at(i); }
  const Assignment& assignment(std::size_t i) const { return assignments_.at(i); }
  double lr_multiplier(std::size_t i) const { return assignments_.at(i).lr_multiplier; }

  std::optional<std::size_t> index_of(std::string_view name) const;

  /// Last step index passed to step(); 0 before the first step.
  std::size_t last_step() const noexcept { return last_step_; }
  void set_last_step(std::size_t t) noexcept { last_step_ = t; }

  std::size_t first_order_reals() const noexcept;
  std::size_t second_order_reals() const noexcept;

  /// Zero-filled gradient buffers shaped like the parameters.
  std::vector<Matrix> zero_grads() const;

 private:
  std::vector<NamedParameter> params_;
  std::vector<MomentumState> states_;
  std::vector<Assignment> assignments_;
  std::size_t last_step_ = 0;
};

struct StepReport {
  double lr = 0.0;
  double grad_norm = 0.0;
  /// Largest ||r_t||_F over low-rank parameters this step.
  double max_residual_norm = 0.0;
  bool refreshed = false;
};

/// One AdaPM step. For every parameter:
///   dir = none / full / debiased low-rank momentum of the clipped gradient
///   v   = beta2 v + (1 - beta2) g^2            (per entry or block mean)
///   W  -= eta_t * (clip(dir / (sqrt(v) + eps)) + lambda W)
/// with eta_t = lr_schedule(t) * lr_multiplier. Low-rank factors are
/// re-anchored by truncated SVD when t % refresh_period == 0.
///
/// grads are clipped in place. t must exceed the previous step index.
/// Throws StepError naming the parameter on a shape mismatch or a
/// non-finite update.
StepReport step(ParamRegistry& registry, std::span<Matrix> grads, std::size_t t,
                const AdaPMConfig& cfg);

}  // namespace adapm
