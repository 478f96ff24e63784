// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "adapm/optimizer.hpp"
#include "adapm/partition.hpp"

namespace adapm {

/// Every field is written. Missing fields keep their defaults when reading,
/// so an empty object yields the default config. Unknown keys are rejected.
nlohmann::json config_to_json(const AdaPMConfig& cfg);
AdaPMConfig config_from_json(const nlohmann::json& j, AdaPMConfig base = {});

/// A policy is either a preset name string, {"preset": name, "rank_ratio": r},
/// or {"rules": [...]} with rule objects
///   {"role": "query", "name": "regex", "shape": "matrix|vector|any",
///    "mode": "none|full|lowrank", "rank_ratio": 0.05, "lr_multiplier": 1.0}
nlohmann::json policy_to_json(const PartitionPolicy& policy);
PartitionPolicy policy_from_json(const nlohmann::json& j, double default_rank_ratio);

inline constexpr int kCheckpointVersion = 1;

/// Versioned checkpoint: named parameter matrices plus per-parameter state.
nlohmann::json checkpoint_to_json(const ParamRegistry& registry);
/// Restores values and state into a registry built with the same parameter
/// names and modes. Throws std::invalid_argument on any mismatch.
void checkpoint_from_json(const nlohmann::json& j, ParamRegistry& registry);

void save_checkpoint(const std::filesystem::path& path, const ParamRegistry& registry);
void load_checkpoint(const std::filesystem::path& path, ParamRegistry& registry);

}  // namespace adapm
