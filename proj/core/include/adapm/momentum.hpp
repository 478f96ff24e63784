// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "adapm/linalg.hpp"
#include "adapm/matrix.hpp"

namespace adapm {

enum class MomentumKind { None, Full, LowRank };

/// How a parameter's first-order statistic is stored and updated.
class MomentumMode {
 public:
  static MomentumMode none() { return MomentumMode(MomentumKind::None, 0.0); }
  static MomentumMode full() { return MomentumMode(MomentumKind::Full, 0.0); }
  /// Throws std::invalid_argument unless rank_ratio is in (0, 1].
  static MomentumMode low_rank(double rank_ratio);

  MomentumKind kind() const noexcept { return kind_; }
  double rank_ratio() const noexcept { return rank_ratio_; }

  /// max(1, round(rank_ratio * min(rows, cols))); 0 for the other kinds.
  std::size_t rank_for(std::size_t rows, std::size_t cols) const noexcept;

  std::string to_string() const;

  friend bool operator==(const MomentumMode&, const MomentumMode&) = default;

 private:
  MomentumMode(MomentumKind kind, double ratio) : kind_(kind), rank_ratio_(ratio) {}

  MomentumKind kind_;
  double rank_ratio_;
};

std::string_view to_string(MomentumKind kind) noexcept;
/// Accepts "none", "full", "lowrank"/"low-rank"; throws std::invalid_argument otherwise.
MomentumKind momentum_kind_from_string(std::string_view name);

/// Per-entry second moment or one scalar per parameter block.
enum class SecondMomentMode { Full, BlockMean };

std::string_view to_string(SecondMomentMode mode) noexcept;
SecondMomentMode second_moment_mode_from_string(std::string_view name);

/// Knobs of the low-rank estimator that live outside the mode itself.
struct LowRankOptions {
  std::size_t inner_iters = 5;
  double inner_base_lr = kDefaultInnerBaseLr;
  /// When false the raw factor product L R is used as the momentum.
  bool bias_correction = true;
};

/// Persistent per-parameter optimizer state. Holds exactly the first-order
/// storage its mode implies: nothing, an m x n matrix, or (m + n) r reals.
class MomentumState {
 public:
  MomentumState(MomentumMode mode, std::size_t rows, std::size_t cols,
                SecondMomentMode second = SecondMomentMode::Full, std::uint64_t seed = 0);

  const MomentumMode& mode() const noexcept { return mode_; }
  SecondMomentMode second_moment_mode() const noexcept { return second_mode_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t rank() const noexcept { return low_rank_ ? low_rank_->rank() : 0; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t step_count() const noexcept { return step_count_; }

  const std::optional<Matrix>& full_momentum() const noexcept { return full_m_; }
  const std::optional<LowRankPair>& low_rank() const noexcept { return low_rank_; }
  /// Per-entry second moment; empty in BlockMean mode.
  const Matrix& second_moment() const noexcept { return v_; }
  /// Block scalar; meaningful in BlockMean mode only.
  double second_moment_scalar() const noexcept { return v_scalar_; }
  /// Second moment governing entry (i, j) under either storage mode.
  double second_moment_at(std::size_t i, std::size_t j) const noexcept {
    return second_mode_ == SecondMomentMode::Full ? v_(i, j) : v_scalar_;
  }

  /// Reals held between steps for the first-order statistic.
  std::size_t first_order_reals() const noexcept;
  /// Reals held between steps for the second-order statistic.
  std::size_t second_order_reals() const noexcept;

  /// Replaces the stored tensors; used when restoring a checkpoint.
  /// Shapes must match what the mode implies.
  void restore(std::optional<Matrix> full_m, std::optional<LowRankPair> low_rank, Matrix v,
               double v_scalar, std::uint64_t step_count, bool factors_seeded);

  bool factors_seeded() const noexcept { return factors_seeded_; }

 private:
  friend struct MomentumAccess;

  MomentumMode mode_;
  SecondMomentMode second_mode_;
  std::size_t rows_;
  std::size_t cols_;
  std::uint64_t seed_;
  std::uint64_t step_count_ = 0;
  std::optional<Matrix> full_m_;
  std::optional<LowRankPair> low_rank_;
  bool factors_seeded_ = false;
  Matrix v_;
  double v_scalar_ = 0.0;
};

struct StepOutput {
  /// Update direction before second-moment scaling.
  Matrix m_corrected;
  /// ||L_t R_t - m_t||_F for low-rank states, 0 otherwise.
  double residual_norm = 0.0;
};

/// m <- (1 - beta1) grad + beta1 m. Throws StateError unless the mode is Full.
StepOutput update_full(MomentumState& state, const Matrix& grad, double beta1);

/// Momentum-free direction: the gradient itself.
StepOutput update_none(const Matrix& grad);

/// Debiased low-rank momentum step.
///
///   m_t  = (1 - beta1) grad + beta1 L_{t-1} R_{t-1}      (transient)
///   L_t, R_t fitted to m_t (warm-started descent, or truncated SVD when
///   refresh_due is set)
///   r_t  = L_t R_t - m_t
///   m^c  = m_t - beta1 / (1 - beta1) r_t
///
/// The very first fit starts from L = 0 and R with i.i.d. Gaussian entries
/// of scale kFactorInitScale, since zero factors are a stationary point.
/// Throws std::invalid_argument if beta1 is outside [0, 1), StateError on a
/// mode mismatch and NumericalError on a non-finite residual.
StepOutput update_lowrank(MomentumState& state, const Matrix& grad, double beta1,
                          const LowRankOptions& options, bool refresh_due);

/// v <- beta2 v + (1 - beta2) grad^2, or its block mean in BlockMean mode.
void update_second_moment(MomentumState& state, const Matrix& grad, double beta2);

/// Arithmetic mean of all entries. Throws std::invalid_argument when empty.
double reduce_second_moment_blockmean(const Matrix& v);

/// Scale of the symmetry-breaking perturbation applied to R before the first fit.
inline constexpr double kFactorInitScale = 1e-4;

}  // namespace adapm
