// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapm/momentum.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "adapm/errors.hpp"

namespace adapm {

MomentumMode MomentumMode::low_rank(double rank_ratio) {
  if (!(rank_ratio > 0.0 && rank_ratio <= 1.0)) {
    throw std::invalid_argument("rank_ratio must lie in (0, 1], got " + std::to_string(rank_ratio));
  }
  return MomentumMode(MomentumKind::LowRank, rank_ratio);
}

std::size_t MomentumMode::rank_for(std::size_t rows, std::size_t cols) const noexcept {
  if (kind_ != MomentumKind::LowRank) return 0;
  const auto shortest = static_cast<double>(std::min(rows, cols));
  const auto r = static_cast<std::size_t>(std::llround(rank_ratio_ * shortest));
  return std::clamp<std::size_t>(r, 1, std::min(rows, cols));
}

std::string MomentumMode::to_string() const {
  if (kind_ == MomentumKind::LowRank) return "lowrank(" + std::to_string(rank_ratio_) + ")";
  return std::string(adapm::to_string(kind_));
}

std::string_view to_string(MomentumKind kind) noexcept {
  switch (kind) {
    case MomentumKind::None: return "none";
    case MomentumKind::Full: return "full";
    case MomentumKind::LowRank: return "lowrank";
  }
  return "unknown";
}

MomentumKind momentum_kind_from_string(std::string_view name) {
  if (name == "none") return MomentumKind::None;
  if (name == "full") return MomentumKind::Full;
  if (name == "lowrank" || name == "low-rank") return MomentumKind::LowRank;
  throw std::invalid_argument("unknown momentum mode '" + std::string(name) + "'");
}

std::string_view to_string(SecondMomentMode mode) noexcept {
  return mode == SecondMomentMode::Full ? "full" : "blockmean";
}

SecondMomentMode second_moment_mode_from_string(std::string_view name) {
  if (name == "full") return SecondMomentMode::Full;
  if (name == "blockmean" || name == "block-mean") return SecondMomentMode::BlockMean;
  throw std::invalid_argument("unknown second-moment mode '" + std::string(name) + "'");
}

MomentumState::MomentumState(MomentumMode mode, std::size_t rows, std::size_t cols,
                             SecondMomentMode second, std::uint64_t seed)
    : mode_(mode), second_mode_(second), rows_(rows), cols_(cols), seed_(seed) {
  if (rows == 0 || cols == 0) throw DimensionError("momentum state for an empty parameter");
  switch (mode_.kind()) {
    case MomentumKind::None: break;
    case MomentumKind::Full: full_m_.emplace(rows, cols); break;
    case MomentumKind::LowRank:
      low_rank_.emplace(LowRankPair::zeros(rows, cols, mode_.rank_for(rows, cols)));
      break;
  }
  if (second_mode_ == SecondMomentMode::Full) v_ = Matrix(rows, cols);
}

std::size_t MomentumState::first_order_reals() const noexcept {
  if (full_m_) return full_m_->size();
  if (low_rank_) return low_rank_->stored_reals();
  return 0;
}

std::size_t MomentumState::second_order_reals() const noexcept {
  return second_mode_ == SecondMomentMode::Full ? v_.size() : 1;
}

void MomentumState::restore(std::optional<Matrix> full_m, std::optional<LowRankPair> low_rank,
                            Matrix v, double v_scalar, std::uint64_t step_count,
                            bool factors_seeded) {
  if (full_m.has_value() != full_m_.has_value() || low_rank.has_value() != low_rank_.has_value()) {
    throw StateError("restore: stored tensors do not match mode " + mode_.to_string());
  }
  if (full_m) require_same_shape(*full_m, *full_m_, "restore momentum");
  if (low_rank) {
    require_same_shape(low_rank->left(), low_rank_->left(), "restore left factor");
    require_same_shape(low_rank->right(), low_rank_->right(), "restore right factor");
  }
  require_same_shape(v, v_, "restore second moment");
  if (v_scalar < 0.0) throw StateError("restore: negative second moment");
  full_m_ = std::move(full_m);
  low_rank_ = std::move(low_rank);
  v_ = std::move(v);
  v_scalar_ = v_scalar;
  step_count_ = step_count;
  factors_seeded_ = factors_seeded;
}

struct MomentumAccess {
  static Matrix& full(MomentumState& s) { return *s.full_m_; }
  static LowRankPair& factors(MomentumState& s) { return *s.low_rank_; }
  static Matrix& v(MomentumState& s) { return s.v_; }
  static double& v_scalar(MomentumState& s) { return s.v_scalar_; }
  static void tick(MomentumState& s) { ++s.step_count_; }
  static void seed_factors(MomentumState& s) {
    if (s.factors_seeded_) return;
    std::mt19937_64 rng(s.seed_);
    std::normal_distribution<double> normal(0.0, kFactorInitScale);
    for (double& x : s.low_rank_->right().values()) x += normal(rng);
    s.factors_seeded_ = true;
  }
};

namespace {

void check_beta(double beta, const char* name) {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw std::invalid_argument(std::string(name) + " must lie in [0, 1), got " +
                                std::to_string(beta));
  }
}

void check_grad(const MomentumState& state, const Matrix& grad) {
  if (grad.rows() != state.rows() || grad.cols() != state.cols()) {
    throw DimensionError("gradient " + grad.shape_string() + " does not match state " +
                         std::to_string(state.rows()) + "x" + std::to_string(state.cols()));
  }
}

}  // namespace

StepOutput update_full(MomentumState& state, const Matrix& grad, double beta1) {
  if (state.mode().kind() != MomentumKind::Full) {
    throw StateError("update_full on a " + state.mode().to_string() + " state");
  }
  check_beta(beta1, "beta1");
  check_grad(state, grad);
  Matrix& m = MomentumAccess::full(state);
  auto ms = m.values();
  auto gs = grad.values();
  for (std::size_t i = 0; i < ms.size(); ++i) ms[i] = (1.0 - beta1) * gs[i] + beta1 * ms[i];
  MomentumAccess::tick(state);
  return {m, 0.0};
}

StepOutput update_none(const Matrix& grad) { return {grad, 0.0}; }

StepOutput update_lowrank(MomentumState& state, const Matrix& grad, double beta1,
                          const LowRankOptions& options, bool refresh_due) {
  if (state.mode().kind() != MomentumKind::LowRank) {
    throw StateError("update_lowrank on a " + state.mode().to_string() + " state");
  }
  check_beta(beta1, "beta1");
  check_grad(state, grad);

  LowRankPair& factors = MomentumAccess::factors(state);
  Matrix m = factors.product();
  m *= beta1;
  axpy(1.0 - beta1, grad, m);

  if (refresh_due) {
    factors = cold_refresh(m, factors.rank());
  } else {
    MomentumAccess::seed_factors(state);
    factors = low_rank_fit(m, std::move(factors), options.inner_iters, options.inner_base_lr);
  }

  Matrix approx = factors.product();
  Matrix residual = approx - m;
  const double residual_norm = frobenius_norm(residual);
  if (!std::isfinite(residual_norm)) {
    throw NumericalError("update_lowrank: non-finite residual");
  }
  MomentumAccess::tick(state);

  if (!options.bias_correction) return {std::move(approx), residual_norm};
  axpy(-beta1 / (1.0 - beta1), residual, m);
  return {std::move(m), residual_norm};
}

void update_second_moment(MomentumState& state, const Matrix& grad, double beta2) {
  check_beta(beta2, "beta2");
  check_grad(state, grad);
  if (state.second_moment_mode() == SecondMomentMode::BlockMean) {
    double& v = MomentumAccess::v_scalar(state);
    v = beta2 * v + (1.0 - beta2) * reduce_second_moment_blockmean(hadamard(grad, grad));
    return;
  }
  auto vs = MomentumAccess::v(state).values();
  auto gs = grad.values();
  for (std::size_t i = 0; i < vs.size(); ++i) vs[i] = beta2 * vs[i] + (1.0 - beta2) * gs[i] * gs[i];
}

double reduce_second_moment_blockmean(const Matrix& v) {
  if (v.empty()) throw std::invalid_argument("block mean of an empty matrix");
  double sum = 0.0;
  for (double x : v.values()) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace adapm
