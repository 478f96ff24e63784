// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapm/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace adapm::theory {
namespace {

bool is_log_grid_step(std::size_t t) { return t == 0 || (t & (t - 1)) == 0; }

void record(RiskTrace& trace, std::size_t t, double risk, std::size_t horizon) {
  if (!std::isfinite(risk) || risk > kDivergenceRisk) throw DivergenceError(t, risk);
  if (is_log_grid_step(t) || t == horizon) trace.points.push_back({t, risk});
}

Vector initial_point(const PowerLawProblem& problem, const RunOptions& options) {
  if (options.horizon < 4) throw std::invalid_argument("horizon must be at least 4");
  if (options.w0.empty()) return Vector(problem.dim(), 0.0);
  if (options.w0.size() != problem.dim()) {
    throw DimensionError("w0 has " + std::to_string(options.w0.size()) + " entries, problem has " +
                         std::to_string(problem.dim()));
  }
  return options.w0;
}

}  // namespace

PowerLawProblem::PowerLawProblem(std::size_t d, double a, double b, double noise_variance,
                                 TargetForm form)
    : a_(a), b_(b), noise_variance_(noise_variance) {
  if (d == 0) throw std::invalid_argument("dimension must be positive");
  if (!(a >= 1.0) || !(b >= 1.0)) throw std::invalid_argument("exponents a and b must be >= 1");
  if (!(noise_variance >= 0.0)) throw std::invalid_argument("noise variance must be >= 0");
  sigma_.resize(d);
  sigma_sqrt_.resize(d);
  w_star_.resize(d);
  const double exponent = form == TargetForm::Squared ? 0.5 * (a - b) : a - b;
  for (std::size_t k = 0; k < d; ++k) {
    const double i = static_cast<double>(k + 1);
    sigma_[k] = std::pow(i, -a);
    sigma_sqrt_[k] = std::sqrt(sigma_[k]);
    w_star_[k] = std::pow(i, exponent);
  }
}

PowerLawProblem PowerLawProblem::with_optimum(std::size_t d, double a, double noise_variance,
                                              Vector w_star) {
  PowerLawProblem p(d, a, 1.0, noise_variance);
  if (w_star.size() != d) throw DimensionError("optimum size does not match dimension");
  p.w_star_ = std::move(w_star);
  return p;
}

double PowerLawProblem::excess_risk(std::span<const double> w) const {
  if (w.size() != dim()) throw DimensionError("risk: vector size does not match dimension");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double diff = w[i] - w_star_[i];
    s += sigma_[i] * diff * diff;
  }
  return s;
}

double sample_into(const PowerLawProblem& problem, std::mt19937_64& rng, std::span<double> x) {
  if (x.size() != problem.dim()) throw DimensionError("sample buffer size does not match");
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vector& w_star = problem.w_star();
  const Vector& scale = problem.sigma_sqrt();
  double y = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = scale[i] * normal(rng);
    y += w_star[i] * x[i];
  }
  // Always consume the noise draw so the stream layout is independent of sigma^2.
  const double eps = normal(rng);
  return y + std::sqrt(problem.noise_variance()) * eps;
}

Sample sample(const PowerLawProblem& problem, std::mt19937_64& rng) {
  Sample s;
  s.x.resize(problem.dim());
  s.y = sample_into(problem, rng, s.x);
  return s;
}

Vector stochastic_grad(std::span<const double> w, std::span<const double> x, double y) {
  if (w.size() != x.size()) throw DimensionError("gradient: W and x sizes differ");
  const double resid = std::inner_product(w.begin(), w.end(), x.begin(), 0.0) - y;
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = resid * x[i];
  return g;
}

std::size_t phase_length(std::size_t horizon) {
  if (horizon < 4) throw std::invalid_argument("horizon must be at least 4");
  const double t = static_cast<double>(horizon);
  return static_cast<std::size_t>(std::floor(t / std::log2(t)));
}

StepSizes piecewise_schedule(std::size_t t, std::size_t horizon, double delta0, double gamma0) {
  const std::size_t k = phase_length(horizon);
  if (t >= horizon) {
    throw std::invalid_argument("step " + std::to_string(t) + " outside [0, " +
                                std::to_string(horizon) + ")");
  }
  const double factor = std::pow(0.25, static_cast<double>(t / k));
  return {delta0 * factor, gamma0 * factor};
}

double coupled_gamma0(double c, double beta, double a) {
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must be in (0, 1]");
  return c * std::pow(beta, -1.0 + 1.0 / a);
}

DivergenceError::DivergenceError(std::size_t step, double risk)
    : NumericalError("risk " + std::to_string(risk) + " diverged at step " + std::to_string(step)),
      step_(step),
      risk_(risk) {}

RiskTrace run_sgd(const PowerLawProblem& problem, double delta0, const RunOptions& options) {
  Vector w = initial_point(problem, options);
  Vector x(problem.dim());
  std::mt19937_64 rng(options.seed);
  RiskTrace trace;
  record(trace, 0, problem.excess_risk(w), options.horizon);
  for (std::size_t t = 0; t < options.horizon; ++t) {
    const double delta = piecewise_schedule(t, options.horizon, delta0, delta0).delta;
    const double y = sample_into(problem, rng, x);
    const double resid = std::inner_product(w.begin(), w.end(), x.begin(), 0.0) - y;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= delta * (resid * x[i]);
    record(trace, t + 1, problem.excess_risk(w), options.horizon);
  }
  return trace;
}

RiskTrace run_asgd(const PowerLawProblem& problem, double beta, double delta0, double gamma0,
                   const RunOptions& options) {
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must be in (0, 1]");
  Vector w = initial_point(problem, options);
  Vector v = w;
  Vector u(w.size());
  Vector x(problem.dim());
  std::mt19937_64 rng(options.seed);
  RiskTrace trace;
  record(trace, 0, problem.excess_risk(w), options.horizon);
  for (std::size_t t = 0; t < options.horizon; ++t) {
    const StepSizes s = piecewise_schedule(t, options.horizon, delta0, gamma0);
    for (std::size_t i = 0; i < w.size(); ++i) u[i] = (w[i] + beta * v[i]) / (1.0 + beta);
    const double y = sample_into(problem, rng, x);
    const double resid = std::inner_product(u.begin(), u.end(), x.begin(), 0.0) - y;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = resid * x[i];
      w[i] = u[i] - s.delta * g;
      v[i] = beta * u[i] + (1.0 - beta) * v[i] - s.gamma * g;
    }
    record(trace, t + 1, problem.excess_risk(w), options.horizon);
  }
  return trace;
}

ScalingFit fit_scaling_exponent(std::span<const std::pair<double, double>> points) {
  if (points.size() < 4) throw std::invalid_argument("scaling fit needs at least 4 points");
  std::vector<double> lx, ly;
  for (const auto& [t, r] : points) {
    if (!(t > 0.0) || !(r > 0.0)) throw std::invalid_argument("scaling fit needs positive values");
    lx.push_back(std::log(t));
    ly.push_back(std::log(r));
  }
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("scaling fit needs distinct T values");
  ScalingFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - (fit.intercept + fit.slope * lx[i]);
    sse += e * e;
  }
  fit.rms_error = std::sqrt(sse / n);
  return fit;
}

double bias_closed_form(double residual_norm, double beta, std::size_t t) {
  return residual_norm * std::pow(beta, static_cast<double>(t + 1)) / (1.0 - beta);
}

namespace {
void check_bias_spec(const BiasSimSpec& spec) {
  if (!(spec.beta1 > 0.0 && spec.beta1 < 1.0)) throw std::invalid_argument("beta1 must be in (0, 1)");
  if (!spec.mean_residual.all_finite()) throw std::invalid_argument("mean residual must be finite");
  if (!(spec.noise_scale >= 0.0)) throw std::invalid_argument("noise scale must be >= 0");
}
}  // namespace

BiasTrace simulate_bias_decay_deterministic(const BiasSimSpec& spec) {
  check_bias_spec(spec);
  const double beta = spec.beta1;
  // e_t = b_t - beta R / (1 - beta) obeys e_t = beta e_{t-1}, e_0 = -beta R / (1 - beta).
  Matrix e = (-beta / (1.0 - beta)) * spec.mean_residual;
  BiasTrace trace;
  trace.bias.reserve(spec.horizon + 1);
  for (std::size_t t = 0; t <= spec.horizon; ++t) {
    if (t > 0) e *= beta;
    trace.bias.push_back(frobenius_norm(e));
  }
  trace.std_error.assign(trace.bias.size(), 0.0);
  return trace;
}

BiasTrace simulate_bias_decay_monte_carlo(const BiasSimSpec& spec) {
  check_bias_spec(spec);
  if (spec.replicates < 2) throw std::invalid_argument("Monte Carlo needs at least 2 replicates");
  const double beta = spec.beta1;
  const std::size_t n = spec.mean_residual.size();
  const std::size_t steps = spec.horizon + 1;
  const Matrix fixed = (beta / (1.0 - beta)) * spec.mean_residual;
  // Per (t, entry) running sums of the offset from the fixed point.
  std::vector<double> sum(steps * n, 0.0), sum_sq(steps * n, 0.0);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> b(n);
  const auto& rbar = spec.mean_residual.values();
  for (std::size_t rep = 0; rep < spec.replicates; ++rep) {
    std::fill(b.begin(), b.end(), 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
      if (t > 0) {
        for (std::size_t k = 0; k < n; ++k) {
          b[k] = beta * b[k] + beta * (rbar[k] + spec.noise_scale * normal(rng));
        }
      }
      for (std::size_t k = 0; k < n; ++k) {
        const double e = b[k] - fixed.values()[k];
        sum[t * n + k] += e;
        sum_sq[t * n + k] += e * e;
      }
    }
  }
  const double reps = static_cast<double>(spec.replicates);
  BiasTrace trace;
  for (std::size_t t = 0; t < steps; ++t) {
    double norm_sq = 0.0, var_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double mean = sum[t * n + k] / reps;
      norm_sq += mean * mean;
      var_sum += std::max(0.0, (sum_sq[t * n + k] - reps * mean * mean) / (reps - 1.0));
    }
    trace.bias.push_back(std::sqrt(norm_sq));
    trace.std_error.push_back(std::sqrt(var_sum / reps));
  }
  return trace;
}

void sequential_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

ScalingResult scaling_sweep(const ScalingSweep& sweep, const ParallelFor& parallel) {
  if (sweep.seeds.empty()) throw std::invalid_argument("scaling sweep needs seeds");
  const PowerLawProblem problem(sweep.dim, sweep.a, sweep.b, sweep.noise_variance, sweep.form);
  ScalingResult out;
  const std::size_t ns = sweep.seeds.size();
  out.runs.resize(sweep.horizons.size() * ns);
  parallel(out.runs.size(), [&](std::size_t job) {
    RunRecord& rec = out.runs[job];
    rec.a = sweep.a;
    rec.b = sweep.b;
    rec.horizon = sweep.horizons[job / ns];
    rec.seed = sweep.seeds[job % ns];
    rec.trace = run_sgd(problem, sweep.delta0, {rec.horizon, rec.seed, {}});
  });
  for (std::size_t h = 0; h < sweep.horizons.size(); ++h) {
    std::vector<double> finals;
    for (std::size_t s = 0; s < ns; ++s) finals.push_back(out.runs[h * ns + s].trace.final_risk());
    out.medians.emplace_back(static_cast<double>(sweep.horizons[h]), median(finals));
  }
  out.fit = fit_scaling_exponent(out.medians);
  out.predicted_slope = std::max(1.0 / sweep.a - 1.0, (1.0 - sweep.b) / sweep.a);
  return out;
}

MomentumResult momentum_sweep(const MomentumSweep& sweep, const ParallelFor& parallel) {
  if (sweep.seeds.empty()) throw std::invalid_argument("momentum sweep needs seeds");
  if (std::find(sweep.betas.begin(), sweep.betas.end(), 1.0) == sweep.betas.end()) {
    throw std::invalid_argument("momentum sweep must include beta = 1");
  }
  const PowerLawProblem problem(sweep.dim, sweep.a, sweep.b, sweep.noise_variance, sweep.form);
  MomentumResult out;
  const std::size_t ns = sweep.seeds.size();
  out.runs.resize(sweep.betas.size() * ns);
  parallel(out.runs.size(), [&](std::size_t job) {
    RunRecord& rec = out.runs[job];
    rec.a = sweep.a;
    rec.b = sweep.b;
    rec.horizon = sweep.horizon;
    rec.seed = sweep.seeds[job % ns];
    rec.beta = sweep.betas[job / ns];
    const double gamma0 = coupled_gamma0(sweep.coupling, rec.beta, sweep.a);
    try {
      rec.trace = run_asgd(problem, rec.beta, sweep.delta0, gamma0, {rec.horizon, rec.seed, {}});
    } catch (const DivergenceError& e) {
      rec.trace.points = {{e.step(), INFINITY}};
    }
  });
  bool have_momentum = false;
  for (std::size_t k = 0; k < sweep.betas.size(); ++k) {
    std::vector<double> finals;
    for (std::size_t s = 0; s < ns; ++s) finals.push_back(out.runs[k * ns + s].trace.final_risk());
    const double m = median(finals);
    out.medians.push_back(m);
    if (sweep.betas[k] == 1.0) {
      out.sgd_median = m;
    } else if (!have_momentum || m < out.best_momentum_median) {
      have_momentum = true;
      out.best_momentum_median = m;
      out.best_beta = sweep.betas[k];
    }
  }
  if (!have_momentum) out.best_momentum_median = out.sgd_median;
  return out;
}

}  // namespace adapm::theory
