// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "adapm/errors.hpp"
#include "adapm/matrix.hpp"

namespace adapm::theory {

using Vector = std::vector<double>;

/// Which target-signal condition fixes W*.
enum class TargetForm {
  Squared,    // Sigma_ii W*_i^2 = i^-b, so W*_i = i^((a - b) / 2)
  Unsquared,  // Sigma_ii W*_i = i^-b, so W*_i = i^(a - b)
};

/// Linear regression with Gaussian covariates x ~ N(0, diag(i^-a)) and
/// y = <W*, x> + noise, noise ~ N(0, noise_variance). Indices are 1-based
/// in the formulas, 0-based in storage.
class PowerLawProblem {
 public:
  /// Throws std::invalid_argument unless d >= 1, a >= 1, b >= 1 and
  /// noise_variance >= 0.
  PowerLawProblem(std::size_t d, double a, double b, double noise_variance,
                  TargetForm form = TargetForm::Squared);

  /// Problem with an explicit optimum (e.g. zero), ignoring the exponent b.
  static PowerLawProblem with_optimum(std::size_t d, double a, double noise_variance,
                                      Vector w_star);

  std::size_t dim() const noexcept { return sigma_.size(); }
  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  double noise_variance() const noexcept { return noise_variance_; }
  const Vector& sigma() const noexcept { return sigma_; }
  const Vector& sigma_sqrt() const noexcept { return sigma_sqrt_; }
  const Vector& w_star() const noexcept { return w_star_; }

  /// sum_i Sigma_ii (W_i - W*_i)^2.
  double excess_risk(std::span<const double> w) const;

 private:
  double a_ = 1.0;
  double b_ = 1.0;
  double noise_variance_ = 0.0;
  Vector sigma_;
  Vector sigma_sqrt_;
  Vector w_star_;
};

struct Sample {
  Vector x;
  double y = 0.0;
};

Sample sample(const PowerLawProblem& problem, std::mt19937_64& rng);

/// Allocation-free form of sample(); x must already have dim() entries.
double sample_into(const PowerLawProblem& problem, std::mt19937_64& rng, std::span<double> x);

/// (<x, W> - y) x. Throws DimensionError on a size mismatch.
Vector stochastic_grad(std::span<const double> w, std::span<const double> x, double y);

struct StepSizes {
  double delta = 0.0;
  double gamma = 0.0;
};

/// floor(T / log2(T)).
std::size_t phase_length(std::size_t horizon);

/// Step sizes quartered once per phase of phase_length(T) steps.
/// Throws std::invalid_argument unless T >= 4 and t < T.
StepSizes piecewise_schedule(std::size_t t, std::size_t horizon, double delta0, double gamma0);

/// gamma0 = c * beta^(-1 + 1/a).
double coupled_gamma0(double c, double beta, double a);

/// Risk exceeded kDivergenceRisk.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(std::size_t step, double risk);
  std::size_t step() const noexcept { return step_; }
  double risk() const noexcept { return risk_; }

 private:
  std::size_t step_;
  double risk_;
};

inline constexpr double kDivergenceRisk = 1e6;

struct RiskPoint {
  std::size_t step = 0;
  double risk = 0.0;
};

/// Excess risk after 0, 1, 2, 4, ... steps and after the last step.
struct RiskTrace {
  std::vector<RiskPoint> points;
  double final_risk() const { return points.back().risk; }
};

struct RunOptions {
  std::size_t horizon = 1024;
  std::uint64_t seed = 0;
  /// Starting point; zero when empty.
  Vector w0;
};

/// W_t = W_{t-1} - delta_t g(W_{t-1}).
RiskTrace run_sgd(const PowerLawProblem& problem, double delta0, const RunOptions& options);

/// Accelerated SGD with momentum parameter beta in (0, 1]:
///   U = (W + beta V) / (1 + beta)
///   W = U - delta_t g(U)
///   V = beta U + (1 - beta) V - gamma_t g(U)
/// The gradient is evaluated at U, and W and V both start at w0.
/// Draws the same random stream as run_sgd for a given seed.
RiskTrace run_asgd(const PowerLawProblem& problem, double beta, double delta0, double gamma0,
                   const RunOptions& options);

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  /// Root-mean-square residual in log space.
  double rms_error = 0.0;
};

/// Least squares of log(risk) against log(T). Needs >= 4 points and
/// positive values; throws std::invalid_argument otherwise.
ScalingFit fit_scaling_exponent(std::span<const std::pair<double, double>> points);

struct BiasSimSpec {
  double beta1 = 0.9;
  Matrix mean_residual = Matrix(1, 1, 1.0);
  /// Standard deviation of the i.i.d. Gaussian residual noise (Monte Carlo only).
  double noise_scale = 0.0;
  std::size_t horizon = 200;
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
};

/// bias[t] = || E[b_t] - beta R / (1 - beta) ||_F for t = 0..horizon, where
/// b_t = beta b_{t-1} + beta r_{t-1} and b_0 = 0.
struct BiasTrace {
  std::vector<double> bias;
  /// Standard error of each entry; zeros in deterministic mode.
  std::vector<double> std_error;
};

/// ||R|| beta^(t+1) / (1 - beta).
double bias_closed_form(double residual_norm, double beta, std::size_t t);

/// Expectation recursion, tracked as the offset from its fixed point so
/// that small biases are not lost to cancellation.
BiasTrace simulate_bias_decay_deterministic(const BiasSimSpec& spec);

/// Replicate average over noisy residuals r_t = R + noise_scale * N(0, 1).
BiasTrace simulate_bias_decay_monte_carlo(const BiasSimSpec& spec);

/// Runs body(0), ..., body(n - 1), possibly concurrently.
using ParallelFor = std::function<void(std::size_t, const std::function<void(std::size_t)>&)>;

/// Plain loop.
void sequential_for(std::size_t n, const std::function<void(std::size_t)>& body);

double median(std::vector<double> values);

struct RunRecord {
  double a = 0.0;
  double b = 0.0;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
  /// 1 for vanilla SGD.
  double beta = 1.0;
  RiskTrace trace;
};

struct ScalingSweep {
  std::size_t dim = 256;
  double a = 2.0;
  double b = 3.0;
  double noise_variance = 1.0;
  TargetForm form = TargetForm::Squared;
  double delta0 = 0.2;
  std::vector<std::size_t> horizons = {256, 1024, 4096, 16384};
  std::vector<std::uint64_t> seeds;
};

struct ScalingResult {
  std::vector<RunRecord> runs;
  /// (T, median final risk over seeds) per horizon.
  std::vector<std::pair<double, double>> medians;
  ScalingFit fit;
  /// max(1/a - 1, (1 - b)/a).
  double predicted_slope = 0.0;
};

/// Vanilla SGD final risk for every (horizon, seed), fitted on the medians.
ScalingResult scaling_sweep(const ScalingSweep& sweep, const ParallelFor& parallel = sequential_for);

struct MomentumSweep {
  std::size_t dim = 256;
  double a = 3.0;
  double b = 1.5;
  double noise_variance = 1.0;
  TargetForm form = TargetForm::Squared;
  double delta0 = 0.2;
  /// gamma0 = coupling * beta^(-1 + 1/a).
  double coupling = 0.2;
  std::size_t horizon = 16384;
  /// Must contain 1.
  std::vector<double> betas = {1.0, 0.5, 0.2, 0.1, 0.05, 0.02};
  std::vector<std::uint64_t> seeds;
};

struct MomentumResult {
  std::vector<RunRecord> runs;
  /// Median final risk per entry of betas (same order).
  std::vector<double> medians;
  double sgd_median = 0.0;
  double best_beta = 1.0;
  double best_momentum_median = 0.0;
  /// Some beta < 1 has a strictly lower median final risk than beta = 1.
  bool momentum_wins() const noexcept { return best_momentum_median < sgd_median; }
};

/// ASGD final risk for every (beta, seed); a diverged run counts as infinite risk.
MomentumResult momentum_sweep(const MomentumSweep& sweep,
                              const ParallelFor& parallel = sequential_for);

}  // namespace adapm::theory
