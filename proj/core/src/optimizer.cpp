// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "adapm/errors.hpp"

namespace adapm {

std::string_view to_string(UpdateClipMode mode) noexcept {
  return mode == UpdateClipMode::Elementwise ? "elementwise" : "norm";
}

UpdateClipMode update_clip_mode_from_string(std::string_view name) {
  if (name == "elementwise") return UpdateClipMode::Elementwise;
  if (name == "norm") return UpdateClipMode::Norm;
  throw std::invalid_argument("unknown clip mode '" + std::string(name) + "'");
}

std::vector<std::string> AdaPMConfig::diagnostics() const {
  std::vector<std::string> out;
  if (!(beta1 >= 0.0 && beta1 < 1.0)) {
    out.push_back("beta1 must lie in [0, 1); the low-rank bias correction divides by (1 - beta1)");
  }
  if (!(beta2 >= 0.0 && beta2 < 1.0)) out.push_back("beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) out.push_back("eps must be positive");
  if (!(weight_decay >= 0.0)) out.push_back("weight_decay must be non-negative");
  if (!(rank_ratio > 0.0 && rank_ratio <= 1.0)) out.push_back("rank_ratio must lie in (0, 1]");
  if (refresh_period < 1) out.push_back("refresh_period must be at least 1");
  if (inner_iters < 1) out.push_back("inner_iters must be at least 1");
  if (!(inner_base_lr > 0.0)) out.push_back("inner_base_lr must be positive");
  if (!(clip_threshold > 0.0)) out.push_back("clip_threshold must be positive");
  if (!(base_lr >= 0.0)) out.push_back("base_lr must be non-negative");
  if (total_steps < 1) out.push_back("total_steps must be at least 1");
  if (warmup_steps > total_steps) out.push_back("warmup_steps exceeds total_steps");
  if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0)) out.push_back("min_lr_ratio must lie in [0, 1]");
  return out;
}

void AdaPMConfig::validate() const {
  const auto problems = diagnostics();
  if (problems.empty()) return;
  std::ostringstream msg;
  msg << "invalid optimizer config:";
  for (const auto& p : problems) msg << "\n  - " << p;
  throw std::invalid_argument(msg.str());
}

double lr_schedule(std::size_t t, const AdaPMConfig& cfg) {
  if (t < 1 || t > cfg.total_steps) {
    throw std::invalid_argument("lr_schedule: step " + std::to_string(t) + " outside [1, " +
                                std::to_string(cfg.total_steps) + "]");
  }
  if (t <= cfg.warmup_steps) {
    return cfg.base_lr * static_cast<double>(t) / static_cast<double>(cfg.warmup_steps);
  }
  const double span = static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  const double progress = static_cast<double>(t - cfg.warmup_steps) / span;
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return cfg.base_lr * (cfg.min_lr_ratio + (1.0 - cfg.min_lr_ratio) * cosine);
}

double global_clip(std::span<Matrix> grads, double threshold) {
  double total = 0.0;
  for (const Matrix& g : grads) total += squared_norm(g);
  const double norm = std::sqrt(total);
  if (threshold > 0.0 && norm > threshold) {
    const double scale = threshold / norm;
    for (Matrix& g : grads) g *= scale;
  }
  return norm;
}

Matrix clip_update(const Matrix& u, double threshold) {
  Matrix out = u;
  for (double& x : out.values()) x = std::clamp(x, -threshold, threshold);
  return out;
}

Matrix clip_update_norm(const Matrix& u, double threshold) {
  const double norm = frobenius_norm(u);
  if (norm <= threshold) return u;
  return (threshold / norm) * u;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

ParamRegistry::ParamRegistry(std::vector<NamedParameter> params, const PartitionPolicy& policy,
                             const AdaPMConfig& cfg, std::uint64_t seed)
    : params_(std::move(params)) {
  std::unordered_set<std::string> seen;
  states_.reserve(params_.size());
  assignments_.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    NamedParameter& p = params_[i];
    if (!seen.insert(p.name).second) {
      throw std::invalid_argument("duplicate parameter name '" + p.name + "'");
    }
    if (p.value.rows() != p.shape.rows || p.value.cols() != p.shape.matrix_cols()) {
      throw DimensionError("parameter '" + p.name + "' value " + p.value.shape_string() +
                           " does not match its declared shape");
    }
    if (p.shape.is_vector()) p.role = BlockRole::VectorParam;
    const Assignment& a = policy.resolve(p.name, p.role, p.shape);
    assignments_.push_back(a);
    states_.emplace_back(a.mode, p.value.rows(), p.value.cols(), cfg.second_moment_mode,
                         splitmix64(seed ^ splitmix64(i + 1)));
  }
}

std::optional<std::size_t> ParamRegistry::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamRegistry::first_order_reals() const noexcept {
  std::size_t n = 0;
  for (const auto& s : states_) n += s.first_order_reals();
  return n;
}

std::size_t ParamRegistry::second_order_reals() const noexcept {
  std::size_t n = 0;
  for (const auto& s : states_) n += s.second_order_reals();
  return n;
}

std::vector<Matrix> ParamRegistry::zero_grads() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.value.rows(), p.value.cols());
  return out;
}

StepReport step(ParamRegistry& registry, std::span<Matrix> grads, std::size_t t,
                const AdaPMConfig& cfg) {
  if (grads.size() != registry.size()) {
    throw std::invalid_argument("step: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(registry.size()) + " parameters");
  }
  if (t <= registry.last_step()) {
    throw std::invalid_argument("step: index " + std::to_string(t) + " does not advance past " +
                                std::to_string(registry.last_step()));
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const NamedParameter& p = registry.parameter(i);
    if (!grads[i].same_shape(p.value)) {
      throw StepError(p.name, "gradient " + grads[i].shape_string() + " vs parameter " +
                                  p.value.shape_string());
    }
  }

  StepReport report;
  report.grad_norm = global_clip(grads, cfg.global_grad_clip);
  report.lr = lr_schedule(t, cfg);
  report.refreshed = t % cfg.refresh_period == 0;
  const LowRankOptions low_rank = cfg.low_rank_options();

  for (std::size_t i = 0; i < registry.size(); ++i) {
    const std::string& name = registry.parameter(i).name;
    MomentumState& state = registry.state(i);
    const Matrix& g = grads[i];
    try {
      StepOutput out;
      switch (state.mode().kind()) {
        case MomentumKind::None: out = update_none(g); break;
        case MomentumKind::Full: out = update_full(state, g, cfg.beta1); break;
        case MomentumKind::LowRank:
          out = update_lowrank(state, g, cfg.beta1, low_rank, report.refreshed);
          report.max_residual_norm = std::max(report.max_residual_norm, out.residual_norm);
          break;
      }
      update_second_moment(state, g, cfg.beta2);

      Matrix& dir = out.m_corrected;
      for (std::size_t r = 0; r < dir.rows(); ++r) {
        for (std::size_t c = 0; c < dir.cols(); ++c) {
          dir(r, c) /= std::sqrt(state.second_moment_at(r, c)) + cfg.eps;
        }
      }
      const Matrix update = cfg.clip_mode == UpdateClipMode::Elementwise
                                ? clip_update(dir, cfg.clip_threshold)
                                : clip_update_norm(dir, cfg.clip_threshold);

      const double eta = report.lr * registry.lr_multiplier(i);
      Matrix& w = registry.value(i);
      auto ws = w.values();
      auto us = update.values();
      for (std::size_t k = 0; k < ws.size(); ++k) {
        ws[k] -= eta * (us[k] + cfg.weight_decay * ws[k]);
      }
      if (!w.all_finite()) throw NumericalError("non-finite parameter after update");
    } catch (const StepError&) {
      throw;
    } catch (const std::exception& e) {
      throw StepError(name, e.what());
    }
  }
  registry.set_last_step(t);
  return report;
}

}  // namespace adapm
