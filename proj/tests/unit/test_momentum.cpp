// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/SVD>

#include "adapm/errors.hpp"
#include "adapm/momentum.hpp"
#include "oracles.hpp"

using adapm::Matrix;
using adapm::MomentumMode;
using adapm::MomentumState;

namespace {

// Best rank-r approximation from Eigen's SVD.
Matrix eigen_truncate(const Matrix& a, std::size_t r) {
  Eigen::MatrixXd e(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) e(i, j) = a(i, j);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(e, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Index k = static_cast<Eigen::Index>(r);
  const Eigen::MatrixXd t = svd.matrixU().leftCols(k) * svd.singularValues().head(k).asDiagonal() *
                            svd.matrixV().leftCols(k).transpose();
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = t(i, j);
  }
  return out;
}

}  // namespace

TEST_SUITE("momentum") {
  TEST_CASE("rank from ratio") {
    CHECK(MomentumMode::low_rank(0.05).rank_for(64, 64) == 3);
    CHECK(MomentumMode::low_rank(0.05).rank_for(1600, 6400) == 80);
    CHECK(MomentumMode::low_rank(0.05).rank_for(4, 100) == 1);
    CHECK(MomentumMode::low_rank(1.0).rank_for(5, 3) == 3);
    CHECK(MomentumMode::full().rank_for(8, 8) == 0);
    CHECK_THROWS_AS(MomentumMode::low_rank(0.0), std::invalid_argument);
    CHECK_THROWS_AS(MomentumMode::low_rank(1.5), std::invalid_argument);
  }

  TEST_CASE("state storage matches its mode") {
    CHECK(MomentumState(MomentumMode::none(), 8, 8).first_order_reals() == 0);
    CHECK(MomentumState(MomentumMode::full(), 8, 8).first_order_reals() == 64);
    CHECK(MomentumState(MomentumMode::low_rank(0.25), 8, 8).first_order_reals() == 32);
    CHECK(MomentumState(MomentumMode::full(), 8, 8).second_order_reals() == 64);
    CHECK(MomentumState(MomentumMode::full(), 8, 8, adapm::SecondMomentMode::BlockMean)
              .second_order_reals() == 1);
    CHECK_THROWS_AS(MomentumState(MomentumMode::full(), 0, 8), adapm::DimensionError);
  }

  TEST_CASE("mode names round-trip") {
    for (auto k : {adapm::MomentumKind::None, adapm::MomentumKind::Full, adapm::MomentumKind::LowRank}) {
      CHECK(adapm::momentum_kind_from_string(adapm::to_string(k)) == k);
    }
    CHECK_THROWS_AS(adapm::momentum_kind_from_string("partial"), std::invalid_argument);
    CHECK(adapm::second_moment_mode_from_string("blockmean") == adapm::SecondMomentMode::BlockMean);
  }

  TEST_CASE("full momentum is an exponential moving average") {
    MomentumState s(MomentumMode::full(), 2, 2);
    const Matrix g1{{1, 2}, {3, 4}}, g2{{-1, 0}, {1, 0}};
    auto o1 = adapm::update_full(s, g1, 0.9);
    CHECK(oracle::max_abs_diff(o1.m_corrected, 0.1 * g1) < 1e-15);
    auto o2 = adapm::update_full(s, g2, 0.9);
    CHECK(oracle::max_abs_diff(o2.m_corrected, 0.1 * g2 + 0.9 * (0.1 * g1)) < 1e-15);
    CHECK(s.step_count() == 2);
    CHECK(o2.residual_norm == 0.0);
  }

  TEST_CASE("no momentum passes the gradient through") {
    const Matrix g{{1, -2}};
    CHECK(adapm::update_none(g).m_corrected == g);
  }

  TEST_CASE("update preconditions") {
    MomentumState full(MomentumMode::full(), 2, 2);
    MomentumState low(MomentumMode::low_rank(0.5), 2, 2);
    const Matrix g(2, 2, 1.0);
    CHECK_THROWS_AS(adapm::update_lowrank(full, g, 0.9, {}, false), adapm::StateError);
    CHECK_THROWS_AS(adapm::update_full(low, g, 0.9), adapm::StateError);
    CHECK_THROWS_AS(adapm::update_lowrank(low, g, 1.0, {}, false), std::invalid_argument);
    CHECK_THROWS_AS(adapm::update_full(full, Matrix(3, 2), 0.9), adapm::DimensionError);
    CHECK_THROWS_AS(adapm::update_second_moment(full, g, 1.0), std::invalid_argument);
  }

  TEST_CASE("refresh step equals the debiased truncated-SVD oracle") {
    std::mt19937_64 rng(4);
    const double beta = 0.9;
    MomentumState s(MomentumMode::low_rank(0.25), 12, 8, adapm::SecondMomentMode::Full, 9);
    Matrix prev(12, 8);  // L_{t-1} R_{t-1}, tracked independently
    for (int t = 0; t < 10; ++t) {
      const Matrix g = oracle::random_matrix(rng, 12, 8);
      const Matrix m = (1 - beta) * g + beta * prev;
      const Matrix lr = eigen_truncate(m, 2);
      const Matrix expected = m - (beta / (1 - beta)) * (lr - m);
      const auto out = adapm::update_lowrank(s, g, beta, {}, true);
      CHECK(oracle::max_abs_diff(out.m_corrected, expected) < 1e-10);
      CHECK(out.residual_norm == doctest::Approx(oracle::frob(lr - m)).epsilon(1e-10));
      prev = lr;
    }
  }

  TEST_CASE("without bias correction the factor product is the momentum") {
    std::mt19937_64 rng(6);
    MomentumState s(MomentumMode::low_rank(0.25), 8, 8, adapm::SecondMomentMode::Full, 1);
    adapm::LowRankOptions opts;
    opts.bias_correction = false;
    for (int t = 0; t < 5; ++t) {
      const auto out = adapm::update_lowrank(s, oracle::random_matrix(rng, 8, 8), 0.9, opts, false);
      CHECK(oracle::max_abs_diff(out.m_corrected, s.low_rank()->product()) < 1e-15);
    }
  }

  TEST_CASE("exact-rank gradient streams reproduce full momentum") {
    std::mt19937_64 rng(10);
    const std::size_t m = 16, n = 12, r = 2;
    const Matrix u = oracle::random_matrix(rng, m, r), v = oracle::random_matrix(rng, r, n);
    MomentumState low(MomentumMode::low_rank(static_cast<double>(r) / n), m, n);
    MomentumState full(MomentumMode::full(), m, n);
    REQUIRE(low.rank() == r);
    adapm::LowRankOptions opts;
    opts.inner_iters = 5;
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      // Coefficients vary per step; the column and row spaces stay fixed.
      const Matrix g = adapm::matmul(adapm::matmul(u, oracle::random_matrix(rng, r, r)), v);
      const auto a = adapm::update_lowrank(low, g, 0.9, opts, true);
      const auto b = adapm::update_full(full, g, 0.9);
      CHECK(a.residual_norm < 1e-8 * std::max(1.0, oracle::frob(b.m_corrected)));
      worst = std::max(worst, oracle::frob(a.m_corrected - b.m_corrected));
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("first factor seeding is deterministic per seed") {
    std::mt19937_64 rng(12);
    const Matrix g = oracle::random_matrix(rng, 10, 10);
    MomentumState a(MomentumMode::low_rank(0.2), 10, 10, adapm::SecondMomentMode::Full, 3);
    MomentumState b(MomentumMode::low_rank(0.2), 10, 10, adapm::SecondMomentMode::Full, 3);
    MomentumState c(MomentumMode::low_rank(0.2), 10, 10, adapm::SecondMomentMode::Full, 4);
    const auto oa = adapm::update_lowrank(a, g, 0.9, {}, false);
    const auto ob = adapm::update_lowrank(b, g, 0.9, {}, false);
    const auto oc = adapm::update_lowrank(c, g, 0.9, {}, false);
    CHECK(oa.m_corrected == ob.m_corrected);
    CHECK_FALSE(oa.m_corrected == oc.m_corrected);
    CHECK(a.factors_seeded());
    CHECK(adapm::max_abs(a.low_rank()->left()) > 0.0);
  }

  TEST_CASE("second moment: per entry and block mean") {
    MomentumState full(MomentumMode::none(), 1, 2);
    MomentumState mini(MomentumMode::none(), 1, 2, adapm::SecondMomentMode::BlockMean);
    const Matrix g{{1, 3}};
    adapm::update_second_moment(full, g, 0.95);
    adapm::update_second_moment(mini, g, 0.95);
    CHECK(full.second_moment()(0, 0) == doctest::Approx(0.05));
    CHECK(full.second_moment()(0, 1) == doctest::Approx(0.45));
    CHECK(mini.second_moment_scalar() == doctest::Approx(0.05 * 5.0));
    CHECK(mini.second_moment_at(0, 1) == mini.second_moment_scalar());
    CHECK(adapm::reduce_second_moment_blockmean(Matrix{{1, 2}, {3, 6}}) == 3.0);
    CHECK_THROWS_AS(adapm::reduce_second_moment_blockmean(Matrix()), std::invalid_argument);
  }

  TEST_CASE("restore validates shapes against the mode") {
    MomentumState s(MomentumMode::full(), 2, 2);
    CHECK_THROWS_AS(s.restore(std::nullopt, std::nullopt, Matrix(2, 2), 0.0, 0, false),
                    adapm::StateError);
    CHECK_THROWS_AS(s.restore(Matrix(2, 3), std::nullopt, Matrix(2, 2), 0.0, 0, false),
                    adapm::DimensionError);
    s.restore(Matrix(2, 2, 1.0), std::nullopt, Matrix(2, 2, 2.0), 0.0, 7, false);
    CHECK(s.step_count() == 7);
    CHECK((*s.full_momentum())(1, 1) == 1.0);
  }
}
