// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "adapm/matrix.hpp"
#include "adapm/momentum.hpp"

namespace adapm {

/// Transformer block a parameter belongs to.
enum class BlockRole {
  Embedding,
  Query,
  Key,
  Value,
  AttnOutProj,
  MlpIn,
  MlpOut,
  Head,
  VectorParam,
  Other,
};

inline constexpr std::array<BlockRole, 10> kAllRoles = {
    BlockRole::Embedding, BlockRole::Query,  BlockRole::Key,  BlockRole::Value,
    BlockRole::AttnOutProj, BlockRole::MlpIn, BlockRole::MlpOut, BlockRole::Head,
    BlockRole::VectorParam, BlockRole::Other};

std::string_view to_string(BlockRole role) noexcept;
/// Inverse of to_string; throws std::invalid_argument on an unknown name.
BlockRole block_role_from_string(std::string_view name);

/// (rows, cols) of a 2-D parameter or (rows, none) of a 1-D one.
struct ParamShape {
  std::size_t rows = 0;
  std::optional<std::size_t> cols;

  bool is_vector() const noexcept { return !cols.has_value(); }
  std::size_t matrix_cols() const noexcept { return cols.value_or(1); }
  std::size_t numel() const noexcept { return rows * matrix_cols(); }
};

/// Maps a parameter name and shape to its block role. 1-D shapes are always
/// VectorParam; unrecognized names fall through to Other.
BlockRole classify(std::string_view param_name, const ParamShape& shape);

/// A named model parameter with its role label.
struct NamedParameter {
  std::string name;
  BlockRole role = BlockRole::Other;
  ParamShape shape;
  Matrix value;
};

struct Assignment {
  MomentumMode mode = MomentumMode::full();
  double lr_multiplier = 1.0;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

enum class ShapeFilter { Any, Matrix, Vector };

/// One policy rule. Every present criterion must match.
struct PartitionRule {
  std::optional<BlockRole> role;
  /// ECMAScript regex searched in the parameter name.
  std::optional<std::string> name_pattern;
  ShapeFilter shape = ShapeFilter::Any;
  Assignment assignment;

  bool is_catch_all() const noexcept {
    return !role && !name_pattern && shape == ShapeFilter::Any;
  }
};

/// Ordered rule list; the first matching rule wins. Immutable after
/// construction. A full-momentum catch-all is appended when the last rule
/// is not already one.
class PartitionPolicy {
 public:
  /// Throws std::invalid_argument for a non-positive lr multiplier, an
  /// invalid regex, or a rule that could hand LowRank to a 1-D parameter.
  explicit PartitionPolicy(std::vector<PartitionRule> rules, std::string label = "custom");

  const std::vector<PartitionRule>& rules() const noexcept { return rules_; }
  const std::string& label() const noexcept { return label_; }

  /// Assignment for a concrete parameter.
  const Assignment& resolve(std::string_view name, BlockRole role, const ParamShape& shape) const;

  /// Index of the first rule matching the parameter, if any.
  std::optional<std::size_t> matching_rule(std::string_view name, BlockRole role,
                                           const ParamShape& shape) const;

 private:
  bool matches(std::size_t i, std::string_view name, BlockRole role,
               const ParamShape& shape) const;

  std::vector<PartitionRule> rules_;
  std::vector<std::optional<std::regex>> compiled_;
  std::string label_;
};

/// Assignment for a role, ignoring rules that need a parameter name.
/// VectorParam is evaluated with a 1-D shape, every other role with a 2-D one.
const Assignment& assign(BlockRole role, const PartitionPolicy& policy);

/// Learning-rate multiplier for momentum-free blocks in the presets.
inline constexpr double kNoMomentumLrMultiplier = 0.75;
inline constexpr double kDefaultRankRatio = 0.05;

/// Preset labels reproducing the four partition ablations:
///   "all-full"            every block full momentum
///   "none-em-o"           Q, K, V, Mlp full; Em, O none
///   "all-lowrank-qkv-mlp" Q, K, V, Mlp low-rank; Em, O none
///   "adapm-default"       V full; Q, K, Mlp low-rank; Em, O none
inline constexpr std::array<std::string_view, 4> kTable1Presets = {
    "all-full", "none-em-o", "all-lowrank-qkv-mlp", "adapm-default"};

/// Builds a preset policy. Throws std::invalid_argument on an unknown label.
PartitionPolicy policy_from_table1(std::string_view row, double rank_ratio = kDefaultRankRatio);

/// The default policy ("adapm-default").
PartitionPolicy default_policy(double rank_ratio = kDefaultRankRatio);

}  // namespace adapm
