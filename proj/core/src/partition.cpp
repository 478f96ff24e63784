// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapm/partition.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace adapm {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> components(std::string_view name) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : lower(name)) {
    if (c == '.' || c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  while (!parts.empty() && (parts.back() == "weight" || parts.back() == "bias")) parts.pop_back();
  return parts;
}

bool one_of(const std::string& s, std::initializer_list<std::string_view> options) {
  return std::find(options.begin(), options.end(), s) != options.end();
}

// Role and shape criteria; the name pattern is checked separately.
bool structural_match(const PartitionRule& rule, BlockRole role, const ParamShape& shape) {
  if (rule.role && *rule.role != role) return false;
  if (rule.shape == ShapeFilter::Matrix && shape.is_vector()) return false;
  if (rule.shape == ShapeFilter::Vector && !shape.is_vector()) return false;
  // 1-D state cannot be factored; such a rule simply does not apply.
  if (shape.is_vector() && rule.assignment.mode.kind() == MomentumKind::LowRank) return false;
  return true;
}

bool parent_mentions(const std::vector<std::string>& parts, std::string_view what) {
  if (parts.size() < 2) return false;
  return parts[parts.size() - 2].find(what) != std::string::npos;
}

}  // namespace

std::string_view to_string(BlockRole role) noexcept {
  switch (role) {
    case BlockRole::Embedding: return "embedding";
    case BlockRole::Query: return "query";
    case BlockRole::Key: return "key";
    case BlockRole::Value: return "value";
    case BlockRole::AttnOutProj: return "attn_out_proj";
    case BlockRole::MlpIn: return "mlp_in";
    case BlockRole::MlpOut: return "mlp_out";
    case BlockRole::Head: return "head";
    case BlockRole::VectorParam: return "vector";
    case BlockRole::Other: return "other";
  }
  return "other";
}

BlockRole block_role_from_string(std::string_view name) {
  for (BlockRole r : kAllRoles) {
    if (to_string(r) == name) return r;
  }
  throw std::invalid_argument("unknown block role '" + std::string(name) + "'");
}

BlockRole classify(std::string_view param_name, const ParamShape& shape) {
  if (shape.is_vector()) return BlockRole::VectorParam;
  const auto parts = components(param_name);
  if (parts.empty()) return BlockRole::Other;
  const std::string& leaf = parts.back();

  if (leaf.find("emb") != std::string::npos || one_of(leaf, {"wte", "wpe"})) {
    return BlockRole::Embedding;
  }
  if (one_of(leaf, {"lm_head", "head", "unembed", "output", "classifier"})) return BlockRole::Head;
  if (one_of(leaf, {"wq", "q_proj", "query", "q"})) return BlockRole::Query;
  if (one_of(leaf, {"wk", "k_proj", "key", "k"})) return BlockRole::Key;
  if (one_of(leaf, {"wv", "v_proj", "value", "v"})) return BlockRole::Value;
  if (one_of(leaf, {"wo", "o_proj", "out_proj"})) return BlockRole::AttnOutProj;
  if (one_of(leaf, {"w_in", "c_fc", "fc1", "fc_in", "up_proj", "gate_proj", "w1", "w3"})) {
    return BlockRole::MlpIn;
  }
  if (one_of(leaf, {"w_out", "fc2", "fc_out", "down_proj", "w2"})) return BlockRole::MlpOut;
  if (leaf == "c_proj") {
    if (parent_mentions(parts, "attn")) return BlockRole::AttnOutProj;
    if (parent_mentions(parts, "mlp") || parent_mentions(parts, "ffn")) return BlockRole::MlpOut;
  }
  return BlockRole::Other;
}

PartitionPolicy::PartitionPolicy(std::vector<PartitionRule> rules, std::string label)
    : rules_(std::move(rules)), label_(std::move(label)) {
  if (rules_.empty() || !rules_.back().is_catch_all()) {
    rules_.push_back(PartitionRule{});
  }
  compiled_.reserve(rules_.size());
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const PartitionRule& rule = rules_[i];
    if (!(rule.assignment.lr_multiplier > 0.0)) {
      throw std::invalid_argument("policy rule " + std::to_string(i) +
                                  ": lr_multiplier must be positive");
    }
    const bool low_rank = rule.assignment.mode.kind() == MomentumKind::LowRank;
    if (low_rank && (rule.shape == ShapeFilter::Vector || rule.role == BlockRole::VectorParam)) {
      throw std::invalid_argument("policy rule " + std::to_string(i) +
                                  ": low-rank momentum is undefined for 1-D parameters");
    }
    if (rule.name_pattern) {
      try {
        compiled_.emplace_back(std::regex(*rule.name_pattern, std::regex::ECMAScript));
      } catch (const std::regex_error& e) {
        throw std::invalid_argument("policy rule " + std::to_string(i) + ": bad pattern '" +
                                    *rule.name_pattern + "': " + e.what());
      }
    } else {
      compiled_.emplace_back(std::nullopt);
    }
  }
}

bool PartitionPolicy::matches(std::size_t i, std::string_view name, BlockRole role,
                              const ParamShape& shape) const {
  if (!structural_match(rules_[i], role, shape)) return false;
  if (compiled_[i] && !std::regex_search(name.begin(), name.end(), *compiled_[i])) return false;
  return true;
}

std::optional<std::size_t> PartitionPolicy::matching_rule(std::string_view name, BlockRole role,
                                                          const ParamShape& shape) const {
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    if (matches(i, name, role, shape)) return i;
  }
  return std::nullopt;
}

const Assignment& PartitionPolicy::resolve(std::string_view name, BlockRole role,
                                           const ParamShape& shape) const {
  if (const auto i = matching_rule(name, role, shape)) return rules_[*i].assignment;
  // Unreachable while the catch-all is intact, but a vector parameter could
  // skip a low-rank catch-all written by hand.
  static const Assignment fallback{};
  return fallback;
}

const Assignment& assign(BlockRole role, const PartitionPolicy& policy) {
  const ParamShape shape = role == BlockRole::VectorParam ? ParamShape{1, std::nullopt}
                                                          : ParamShape{1, 1};
  for (const PartitionRule& rule : policy.rules()) {
    if (!rule.name_pattern && structural_match(rule, role, shape)) return rule.assignment;
  }
  static const Assignment fallback{};
  return fallback;
}

PartitionPolicy policy_from_table1(std::string_view row, double rank_ratio) {
  const Assignment none{MomentumMode::none(), kNoMomentumLrMultiplier};
  const Assignment full{MomentumMode::full(), 1.0};
  const Assignment low{MomentumMode::low_rank(rank_ratio), 1.0};
  auto rule = [](BlockRole role, const Assignment& a) {
    return PartitionRule{role, std::nullopt, ShapeFilter::Matrix, a};
  };

  std::vector<PartitionRule> rules;
  if (row == "all-full") {
    // catch-all only
  } else if (row == "none-em-o") {
    rules = {rule(BlockRole::Embedding, none), rule(BlockRole::AttnOutProj, none)};
  } else if (row == "all-lowrank-qkv-mlp") {
    rules = {rule(BlockRole::Embedding, none), rule(BlockRole::AttnOutProj, none),
             rule(BlockRole::Query, low),      rule(BlockRole::Key, low),
             rule(BlockRole::Value, low),      rule(BlockRole::MlpIn, low),
             rule(BlockRole::MlpOut, low)};
  } else if (row == "adapm-default") {
    rules = {rule(BlockRole::Embedding, none), rule(BlockRole::AttnOutProj, none),
             rule(BlockRole::Query, low),      rule(BlockRole::Key, low),
             rule(BlockRole::MlpIn, low),      rule(BlockRole::MlpOut, low),
             rule(BlockRole::Value, full)};
  } else {
    throw std::invalid_argument("unknown partition preset '" + std::string(row) + "'");
  }
  rules.push_back(PartitionRule{std::nullopt, std::nullopt, ShapeFilter::Any, full});
  return PartitionPolicy(std::move(rules), std::string(row));
}

PartitionPolicy default_policy(double rank_ratio) {
  return policy_from_table1("adapm-default", rank_ratio);
}

}  // namespace adapm
