// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adapm/partition.hpp"

namespace adapm {

/// One parameter of a model shape table. Tied entries share their target's
/// optimizer state and contribute nothing of their own.
struct ShapeEntry {
  std::string name;
  ParamShape shape;
  std::optional<BlockRole> role;
  std::optional<std::string> tied_to;

  BlockRole resolved_role() const { return role.value_or(classify(name, shape)); }
};

struct ShapeTable {
  std::string model;
  std::vector<ShapeEntry> entries;

  std::uint64_t parameter_count() const noexcept;
};

/// Parses a shape table document. Accepts an explicit "params" list and/or a
/// "per_layer" template expanded "num_layers" times with "{layer}" replaced.
/// Throws std::invalid_argument on malformed input.
ShapeTable parse_shape_table(std::string_view json_text);
ShapeTable load_shape_table(const std::filesystem::path& path);

enum class OptimizerVariant { AdamW, AdamMini, AdaPM, AdaPMMini };

inline constexpr std::array<OptimizerVariant, 4> kAllVariants = {
    OptimizerVariant::AdamW, OptimizerVariant::AdamMini, OptimizerVariant::AdaPM,
    OptimizerVariant::AdaPMMini};

std::string_view to_string(OptimizerVariant v) noexcept;

struct StateCount {
  std::uint64_t first_order_reals = 0;
  std::uint64_t second_order_reals = 0;

  std::uint64_t total_reals() const noexcept { return first_order_reals + second_order_reals; }
};

struct VariantMemory {
  OptimizerVariant variant = OptimizerVariant::AdamW;
  StateCount totals;
  std::map<BlockRole, StateCount> by_role;
};

/// Persistent optimizer-state footprint of four optimizer variants.
struct MemoryReport {
  std::string model;
  std::size_t bytes_per_real = 4;
  std::uint64_t parameter_count = 0;
  std::array<VariantMemory, 4> variants;

  const VariantMemory& variant(OptimizerVariant v) const;
  std::uint64_t bytes(OptimizerVariant v) const;
  std::uint64_t first_order_bytes(OptimizerVariant v) const;
  /// Decimal gigabytes (1e9 bytes).
  double gigabytes(OptimizerVariant v) const;
};

/// AdamW keeps m and v per entry; Adam-mini keeps m per entry and one v per
/// block; AdaPM stores first-order state per the policy (0, m*n or (m+n)*r)
/// and v per entry; AdaPM-mini combines the policy with one v per block.
/// Throws std::invalid_argument on an empty table.
MemoryReport memory_report(const ShapeTable& table, const PartitionPolicy& policy,
                           std::size_t bytes_per_real = 4);

}  // namespace adapm
