// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "adapm/optimizer.hpp"
#include "adapm/theory.hpp"
#include "adapm/toy_model.hpp"

namespace adapm::tools {

enum class Command { TrainToy, TheoryBench, BiasSim, MemoryReport, AblationTable1 };

inline constexpr std::array<std::string_view, 5> kCommandNames = {
    "train-toy", "theory-bench", "bias-sim", "memory-report", "ablation-table1"};

std::string_view to_string(Command c) noexcept;
std::optional<Command> command_from_string(std::string_view name);

/// Model and training loop settings shared by train-toy and ablation-table1.
struct ToySettings {
  toy::ToyTransformerConfig model;
  toy::TrainOptions train;
};

struct TheorySettings {
  std::size_t dim = 256;
  double noise_variance = 1.0;
  theory::TargetForm form = theory::TargetForm::Squared;
  double delta0 = 0.2;
  /// Scaling fit for vanilla SGD.
  double scaling_a = 2.0;
  double scaling_b = 3.0;
  std::vector<std::size_t> horizons = {256, 1024, 4096, 16384};
  /// Momentum comparisons, one per (a, b) pair.
  struct Problem {
    double a = 3.0;
    double b = 1.5;
    /// gamma0 = coupling * beta^(-1 + 1/a); defaults to delta0 when absent.
    std::optional<double> coupling;
  };
  std::vector<Problem> momentum_problems = {{3.0, 1.5, std::nullopt}, {2.0, 3.0, std::nullopt}};
  std::vector<double> betas = {1.0, 0.5, 0.2, 0.1, 0.05, 0.02};
  std::size_t momentum_horizon = 16384;
};

struct BiasSettings {
  std::vector<double> betas = {0.5, 0.9, 0.99};
  std::size_t horizon = 200;
  bool deterministic = true;
  bool monte_carlo = true;
  /// Mean residual drawn from N(0, 1) with residual_seed.
  std::size_t rows = 4;
  std::size_t cols = 4;
  std::uint64_t residual_seed = 7;
  double noise_scale = 1.0;
  std::size_t replicates = 2000;
};

struct MemorySettings {
  /// Bundled table name (gpt2_xl, gpt2_124m, toy) or a file path.
  std::string shape_table = "gpt2_xl";
  std::size_t bytes_per_real = 4;
};

/// One ablation configuration: a policy plus optimizer overrides applied on
/// top of the experiment's optimizer block.
struct AblationRow {
  std::string label;
  nlohmann::json policy;
  nlohmann::json optimizer = nlohmann::json::object();
};

struct ExperimentSpec {
  Command command = Command::TrainToy;
  AdaPMConfig optimizer;
  /// Preset name or inline rules, as accepted by policy_from_json.
  nlohmann::json policy = "adapm-default";
  ToySettings toy;
  TheorySettings theory;
  BiasSettings bias;
  MemorySettings memory;
  std::vector<AblationRow> ablation;
  std::vector<std::uint64_t> seeds = {0};
  std::filesystem::path output_dir;

  /// Optimizer config with the row's overrides applied.
  AdaPMConfig optimizer_for(const AblationRow& row) const;
};

/// Invalid spec; raised before any compute.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> diagnostics);
  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

/// Default spec for a command; the bundled configs are these serialized.
ExperimentSpec default_spec(Command command);

/// Every field of the spec, including the resolved optimizer config.
nlohmann::json spec_to_json(const ExperimentSpec& spec);

/// Accepts a spec or a run manifest (whose "spec" member is used).
/// Missing sections take the command's defaults. Throws ConfigError.
ExperimentSpec spec_from_json(const nlohmann::json& j);
ExperimentSpec load_spec(const std::filesystem::path& path);

/// Schema and semantic checks; empty means runnable.
std::vector<std::string> validate(const nlohmann::json& j);
std::vector<std::string> validate(const ExperimentSpec& spec);

/// Directory holding the bundled shape tables.
std::filesystem::path shapes_dir();
std::filesystem::path resolve_shape_table(const std::string& name_or_path);

/// Worker count from ADAPM_WORKERS, defaulting to 1.
std::size_t worker_count();

/// Thread-pool ParallelFor over worker_count() threads. The first exception
/// thrown by a body is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

struct RunOutcome {
  int exit_code = 0;
  std::filesystem::path output_dir;
  nlohmann::json summary;
};

inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRunError = 3;
inline constexpr int kCsvSchemaVersion = 1;

/// Writes manifest.json, result CSVs and summary.json to spec.output_dir.
/// Failures write error.json next to whatever was already produced.
RunOutcome run(const ExperimentSpec& spec);

}  // namespace adapm::tools
