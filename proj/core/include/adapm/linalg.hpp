// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "adapm/matrix.hpp"

namespace adapm {

/// Factored rank-r representation left * right of an m x n matrix.
/// left is m x r, right is r x n, with 1 <= r <= min(m, n).
class LowRankPair {
 public:
  LowRankPair(Matrix left, Matrix right);

  /// Zero factors of the given shape (the t = 0 state of the momentum).
  static LowRankPair zeros(std::size_t rows, std::size_t cols, std::size_t rank);

  const Matrix& left() const noexcept { return left_; }
  const Matrix& right() const noexcept { return right_; }
  Matrix& left() noexcept { return left_; }
  Matrix& right() noexcept { return right_; }

  std::size_t rank() const noexcept { return left_.cols(); }
  std::size_t rows() const noexcept { return left_.rows(); }
  std::size_t cols() const noexcept { return right_.cols(); }
  std::size_t stored_reals() const noexcept { return left_.size() + right_.size(); }

  Matrix product() const { return matmul(left_, right_); }

 private:
  Matrix left_;
  Matrix right_;
};

struct FactorGradients {
  Matrix d_left;
  Matrix d_right;
};

/// Gradients of 0.5 * ||L R - target||_F^2:
///   d/dL = (L R - target) R^T,  d/dR = L^T (L R - target).
FactorGradients factor_gradients(const Matrix& left, const Matrix& right, const Matrix& target);

/// Cosine inner step multiplier base * 0.5 * (1 + cos(pi k / K)) for 1 <= k <= K.
double cosine_inner_lr(std::size_t k, std::size_t iterations, double base);

/// Default base step for low_rank_fit. Each factor's step is this base
/// divided by the squared Frobenius norm of the other factor.
inline constexpr double kDefaultInnerBaseLr = 0.5;

/// Warm-started gradient descent on 0.5 * ||L R - target||_F^2.
///
/// Runs `iterations` simultaneous steps on both factors starting from `warm`.
/// Step k uses cosine_inner_lr(k, iterations, base_lr) scaled per factor by
/// 1 / ||other factor||_F^2, the block Lipschitz bound, so the iteration is
/// invariant to rescaling L -> sL, R -> R/s.
///
/// Throws NumericalError naming the inner step if a non-finite value appears.
LowRankPair low_rank_fit(const Matrix& target, LowRankPair warm, std::size_t iterations,
                         double base_lr = kDefaultInnerBaseLr);

/// Thin singular value decomposition a = U diag(s) Vt with singular values
/// in nonincreasing order. U is m x k, Vt is k x n, k = min(m, n).
struct ThinSvd {
  Matrix u;
  std::vector<double> singular_values;
  Matrix vt;
};

/// One-sided Jacobi SVD. Accurate to working precision for the small and
/// medium matrices the optimizer factors.
ThinSvd thin_svd(const Matrix& a);

/// Best rank-r approximation of target in Frobenius norm, returned with the
/// singular values absorbed into the left factor.
LowRankPair cold_refresh(const Matrix& target, std::size_t rank);

}  // namespace adapm
