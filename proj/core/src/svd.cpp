// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "adapm/errors.hpp"
#include "adapm/linalg.hpp"

namespace adapm {
namespace {

constexpr int kMaxSweeps = 80;

// One-sided Jacobi on the rows of `cols_as_rows` (the columns of a tall
// matrix stored transposed so each column is contiguous). Accumulates the
// right rotations into `v_rows`, whose row i is column i of V.
void orthogonalize(Matrix& cols_as_rows, Matrix& v_rows) {
  const std::size_t n = cols_as_rows.rows();
  const double tol = std::numeric_limits<double>::epsilon() * 4.0;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto gp = cols_as_rows.row(p);
        auto gq = cols_as_rows.row(q);
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < gp.size(); ++i) {
          alpha += gp[i] * gp[i];
          beta += gq[i] * gq[i];
          gamma += gp[i] * gq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = c * t;
        for (std::size_t i = 0; i < gp.size(); ++i) {
          const double x = gp[i], y = gq[i];
          gp[i] = c * x - s * y;
          gq[i] = s * x + c * y;
        }
        auto vp = v_rows.row(p);
        auto vq = v_rows.row(q);
        for (std::size_t i = 0; i < vp.size(); ++i) {
          const double x = vp[i], y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) return;
  }
}

// SVD of a matrix with rows >= cols.
ThinSvd tall_svd(const Matrix& a) {
  const std::size_t n = a.cols();
  Matrix g = a.transposed();  // n x m, row j = column j of a
  Matrix v = Matrix::identity(n);
  orthogonalize(g, v);

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (double x : g.row(j)) s += x * x;
    norms[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  ThinSvd out{Matrix(a.rows(), n), std::vector<double>(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    const double sigma = norms[j];
    out.singular_values[k] = sigma;
    if (sigma > 0.0) {
      for (std::size_t i = 0; i < a.rows(); ++i) out.u(i, k) = g(j, i) / sigma;
    }
    for (std::size_t i = 0; i < n; ++i) out.vt(k, i) = v(j, i);
  }
  return out;
}

}  // namespace

ThinSvd thin_svd(const Matrix& a) {
  if (a.empty()) throw DimensionError("thin_svd: empty matrix");
  if (!a.all_finite()) throw NumericalError("thin_svd: non-finite input");
  if (a.rows() >= a.cols()) return tall_svd(a);
  ThinSvd t = tall_svd(a.transposed());
  return {t.vt.transposed(), std::move(t.singular_values), t.u.transposed()};
}

}  // namespace adapm
