// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/SVD>

#include "adapm/errors.hpp"
#include "adapm/linalg.hpp"
#include "oracles.hpp"

using adapm::LowRankPair;
using adapm::Matrix;

namespace {

double objective(const Matrix& l, const Matrix& r, const Matrix& target) {
  const Matrix diff = oracle::triple_loop_matmul(l, r) - target;
  return 0.5 * adapm::squared_norm(diff);
}

std::vector<double> eigen_singular_values(const Matrix& a) {
  Eigen::MatrixXd e(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) e(i, j) = a(i, j);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(e);
  const auto& s = svd.singularValues();
  return {s.data(), s.data() + s.size()};
}

}  // namespace

TEST_SUITE("linalg") {
  TEST_CASE("factor gradients: trivial cases") {
    const Matrix l{{1}}, r{{1}};
    auto g = adapm::factor_gradients(l, r, Matrix{{0}});
    CHECK(g.d_left == Matrix{{1}});
    CHECK(g.d_right == Matrix{{1}});
    auto zero = adapm::factor_gradients(l, r, Matrix{{1}});
    CHECK(adapm::max_abs(zero.d_left) == 0);
    CHECK(adapm::max_abs(zero.d_right) == 0);
    CHECK_THROWS_AS(adapm::factor_gradients(Matrix(3, 2), Matrix(2, 4), Matrix(3, 3)),
                    adapm::DimensionError);
  }

  TEST_CASE("factor gradients match central finite differences at 100 points") {
    std::mt19937_64 rng(3);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Matrix l = oracle::random_matrix(rng, 6, 2);
      const Matrix r = oracle::random_matrix(rng, 2, 4);
      const Matrix t = oracle::random_matrix(rng, 6, 4);
      const auto g = adapm::factor_gradients(l, r, t);
      const double h = 1e-6;
      auto check = [&](const Matrix& base, const Matrix& analytic, bool is_left) {
        for (std::size_t i = 0; i < base.rows(); ++i) {
          for (std::size_t j = 0; j < base.cols(); ++j) {
            Matrix plus = base, minus = base;
            plus(i, j) += h;
            minus(i, j) -= h;
            const double fp = is_left ? objective(plus, r, t) : objective(l, plus, t);
            const double fm = is_left ? objective(minus, r, t) : objective(l, minus, t);
            const double fd = (fp - fm) / (2 * h);
            worst = std::max(worst, std::abs(fd - analytic(i, j)) /
                                        std::max(1.0, std::abs(analytic(i, j))));
          }
        }
      };
      check(l, g.d_left, true);
      check(r, g.d_right, false);
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("cosine inner learning rate") {
    CHECK(adapm::cosine_inner_lr(5, 5, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(adapm::cosine_inner_lr(2, 4, 1.0) == doctest::Approx(0.5));
    CHECK(adapm::cosine_inner_lr(1, 5, 1.0) == doctest::Approx(0.5 * (1 + std::cos(M_PI / 5))));
    CHECK(adapm::cosine_inner_lr(1, 5, 1.0) == doctest::Approx(0.9045).epsilon(1e-4));
    for (std::size_t k = 1; k < 10; ++k) {
      CHECK(adapm::cosine_inner_lr(k, 10, 2.0) >= adapm::cosine_inner_lr(k + 1, 10, 2.0));
    }
    CHECK_THROWS_AS(adapm::cosine_inner_lr(0, 5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(adapm::cosine_inner_lr(6, 5, 1.0), std::invalid_argument);
  }

  TEST_CASE("low-rank fit keeps an exact factorization fixed") {
    const Matrix l{{1}, {2}, {3}}, r{{4, 5}};
    const Matrix target = adapm::matmul(l, r);
    const LowRankPair out = adapm::low_rank_fit(target, LowRankPair(l, r), 5);
    CHECK(oracle::max_abs_diff(out.left(), l) < 1e-14);
    CHECK(oracle::max_abs_diff(out.right(), r) < 1e-14);
  }

  TEST_CASE("low-rank fit recovers a rank-1 target from a small random start") {
    std::mt19937_64 rng(5);
    const Matrix u = oracle::random_matrix(rng, 9, 1), v = oracle::random_matrix(rng, 1, 7);
    const Matrix target = adapm::matmul(u, v);
    LowRankPair warm(oracle::random_matrix(rng, 9, 1, 1e-2), oracle::random_matrix(rng, 1, 7, 1e-2));
    // Repeated K-step fits: the warm-started schedule of consecutive optimizer steps.
    for (int round = 0; round < 200; ++round) warm = adapm::low_rank_fit(target, warm, 5);
    CHECK(oracle::frob(warm.product() - target) / oracle::frob(target) < 1e-3);
  }

  TEST_CASE("low-rank fit never increases the objective") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
      const Matrix target = oracle::random_matrix(rng, 20, 20);
      LowRankPair warm(oracle::random_matrix(rng, 20, 5), oracle::random_matrix(rng, 5, 20));
      const double before = oracle::frob(warm.product() - target);
      const LowRankPair out = adapm::low_rank_fit(target, warm, 5);
      CHECK(oracle::frob(out.product() - target) <= before * (1 + 1e-12));
    }
  }

  TEST_CASE("low-rank fit rejects mismatched shapes and bad factors") {
    CHECK_THROWS_AS(adapm::low_rank_fit(Matrix(4, 4), LowRankPair::zeros(4, 3, 1), 5),
                    adapm::DimensionError);
    CHECK_THROWS_AS(adapm::low_rank_fit(Matrix(4, 4), LowRankPair::zeros(4, 4, 1), 0),
                    std::invalid_argument);
    Matrix target(2, 2, 1.0);
    target(0, 0) = std::nan("");
    CHECK_THROWS_AS(adapm::low_rank_fit(target, LowRankPair(Matrix(2, 1, 1.0), Matrix(1, 2, 1.0)), 3),
                    adapm::NumericalError);
    CHECK_THROWS_AS(LowRankPair(Matrix(3, 2), Matrix(3, 4)), adapm::DimensionError);
  }

  TEST_CASE("cold refresh: Eckart-Young on a diagonal") {
    const Matrix d{{3, 0, 0}, {0, 2, 0}, {0, 0, 1}};
    const LowRankPair p = adapm::cold_refresh(d, 2);
    CHECK(oracle::max_abs_diff(p.product(), Matrix{{3, 0, 0}, {0, 2, 0}, {0, 0, 0}}) < 1e-12);
    CHECK_THROWS_AS(adapm::cold_refresh(d, 0), std::invalid_argument);
    CHECK_THROWS_AS(adapm::cold_refresh(d, 4), std::invalid_argument);
  }

  TEST_CASE("cold refresh reconstructs exact-rank and full-rank targets") {
    std::mt19937_64 rng(13);
    const Matrix rank1 = adapm::matmul(oracle::random_matrix(rng, 6, 1), oracle::random_matrix(rng, 1, 5));
    CHECK(oracle::max_abs_diff(adapm::cold_refresh(rank1, 1).product(), rank1) < 1e-10);
    for (auto [m, n] : {std::pair{7, 7}, {12, 5}, {5, 12}}) {
      const Matrix a = oracle::random_matrix(rng, m, n);
      const Matrix back = adapm::cold_refresh(a, std::min(m, n)).product();
      CHECK(oracle::frob(back - a) / oracle::frob(a) < 1e-8);
    }
  }

  TEST_CASE("cold refresh residual matches a dense SVD oracle") {
    std::mt19937_64 rng(21);
    const Matrix a = oracle::random_matrix(rng, 10, 8);
    const std::vector<double> s = eigen_singular_values(a);
    double tail = 0.0;
    for (std::size_t i = 3; i < s.size(); ++i) tail += s[i] * s[i];
    const double resid = oracle::frob(adapm::cold_refresh(a, 3).product() - a);
    CHECK(std::abs(resid - std::sqrt(tail)) < 1e-8);

    const adapm::ThinSvd svd = adapm::thin_svd(a);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(svd.singular_values[i] == doctest::Approx(s[i]).epsilon(1e-12));
  }

  TEST_CASE("thin svd factors are orthonormal and reconstruct the input") {
    std::mt19937_64 rng(34);
    for (auto [m, n] : {std::pair{9, 4}, {4, 9}, {6, 6}}) {
      const Matrix a = oracle::random_matrix(rng, m, n);
      const adapm::ThinSvd svd = adapm::thin_svd(a);
      const std::size_t k = std::min(m, n);
      Matrix us = svd.u;
      for (std::size_t i = 0; i < us.rows(); ++i) {
        for (std::size_t j = 0; j < k; ++j) us(i, j) *= svd.singular_values[j];
      }
      CHECK(oracle::max_abs_diff(adapm::matmul(us, svd.vt), a) < 1e-10);
      CHECK(oracle::max_abs_diff(adapm::matmul_at(svd.u, svd.u), Matrix::identity(k)) < 1e-10);
      CHECK(oracle::max_abs_diff(adapm::matmul_bt(svd.vt, svd.vt), Matrix::identity(k)) < 1e-10);
      for (std::size_t j = 1; j < k; ++j) CHECK(svd.singular_values[j - 1] >= svd.singular_values[j]);
    }
  }
}
