// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "adapm/errors.hpp"

namespace adapm {

LowRankPair::LowRankPair(Matrix left, Matrix right)
    : left_(std::move(left)), right_(std::move(right)) {
  if (left_.cols() != right_.rows()) {
    throw DimensionError("low-rank pair: left " + left_.shape_string() + " and right " +
                         right_.shape_string() + " disagree on rank");
  }
  const std::size_t r = left_.cols();
  if (r < 1 || r > std::min(left_.rows(), right_.cols())) {
    throw DimensionError("low-rank pair: rank " + std::to_string(r) + " outside [1, min(" +
                         std::to_string(left_.rows()) + ", " + std::to_string(right_.cols()) +
                         ")]");
  }
}

LowRankPair LowRankPair::zeros(std::size_t rows, std::size_t cols, std::size_t rank) {
  return LowRankPair(Matrix(rows, rank), Matrix(rank, cols));
}

FactorGradients factor_gradients(const Matrix& left, const Matrix& right, const Matrix& target) {
  if (left.cols() != right.rows() || left.rows() != target.rows() ||
      right.cols() != target.cols()) {
    throw DimensionError("factor_gradients: L " + left.shape_string() + ", R " +
                         right.shape_string() + ", target " + target.shape_string());
  }
  Matrix residual = matmul(left, right);
  residual -= target;
  return {matmul_bt(residual, right), matmul_at(left, residual)};
}

double cosine_inner_lr(std::size_t k, std::size_t iterations, double base) {
  if (iterations < 1 || k < 1 || k > iterations) {
    throw std::invalid_argument("cosine_inner_lr: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(iterations) + "]");
  }
  const double phase = std::numbers::pi * static_cast<double>(k) / static_cast<double>(iterations);
  return base * 0.5 * (1.0 + std::cos(phase));
}

LowRankPair low_rank_fit(const Matrix& target, LowRankPair warm, std::size_t iterations,
                         double base_lr) {
  if (warm.rows() != target.rows() || warm.cols() != target.cols()) {
    throw DimensionError("low_rank_fit: warm start " + std::to_string(warm.rows()) + "x" +
                         std::to_string(warm.cols()) + " vs target " + target.shape_string());
  }
  if (iterations < 1) throw std::invalid_argument("low_rank_fit: need at least one iteration");

  Matrix& left = warm.left();
  Matrix& right = warm.right();
  for (std::size_t k = 1; k <= iterations; ++k) {
    const double step = cosine_inner_lr(k, iterations, base_lr);
    if (step == 0.0) continue;
    auto [d_left, d_right] = factor_gradients(left, right, target);
    // Block Lipschitz constants of the two sub-problems; a zero factor means
    // the other factor's gradient vanishes too, so there is nothing to scale.
    const double lip_left = squared_norm(right);
    const double lip_right = squared_norm(left);
    if (lip_left > 0.0) axpy(-step / lip_left, d_left, left);
    if (lip_right > 0.0) axpy(-step / lip_right, d_right, right);
    if (!left.all_finite() || !right.all_finite()) {
      throw NumericalError("low_rank_fit: non-finite factors at inner step " + std::to_string(k) +
                           " of " + std::to_string(iterations));
    }
  }
  return warm;
}

LowRankPair cold_refresh(const Matrix& target, std::size_t rank) {
  const std::size_t k = std::min(target.rows(), target.cols());
  if (rank < 1 || rank > k) {
    throw std::invalid_argument("cold_refresh: rank " + std::to_string(rank) + " outside [1, " +
                                std::to_string(k) + "]");
  }
  const ThinSvd svd = thin_svd(target);
  Matrix left(target.rows(), rank);
  Matrix right(rank, target.cols());
  for (std::size_t c = 0; c < rank; ++c) {
    const double s = svd.singular_values[c];
    for (std::size_t i = 0; i < target.rows(); ++i) left(i, c) = svd.u(i, c) * s;
    for (std::size_t j = 0; j < target.cols(); ++j) right(c, j) = svd.vt(c, j);
  }
  return LowRankPair(std::move(left), std::move(right));
}

}  // namespace adapm
