// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <set>
#include <stdexcept>

#include "adapm/serialization.hpp"

namespace adapm {
namespace {

using nlohmann::json;

const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys = {
      "beta1",          "beta2",          "eps",           "weight_decay",
      "rank_ratio",     "refresh_period", "inner_iters",   "inner_base_lr",
      "clip_threshold", "clip_mode",      "global_grad_clip", "base_lr",
      "warmup_steps",   "total_steps",    "min_lr_ratio",  "second_moment_mode",
      "bias_correction"};
  return keys;
}

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", std::vector<double>(m.values().begin(), m.values().end())}};
}

Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

std::string_view shape_filter_name(ShapeFilter f) {
  switch (f) {
    case ShapeFilter::Any: return "any";
    case ShapeFilter::Matrix: return "matrix";
    case ShapeFilter::Vector: return "vector";
  }
  return "any";
}

ShapeFilter shape_filter_from(const std::string& s) {
  if (s == "any") return ShapeFilter::Any;
  if (s == "matrix") return ShapeFilter::Matrix;
  if (s == "vector") return ShapeFilter::Vector;
  throw std::invalid_argument("unknown shape filter '" + s + "'");
}

}  // namespace

json config_to_json(const AdaPMConfig& c) {
  return json{{"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eps", c.eps},
              {"weight_decay", c.weight_decay},
              {"rank_ratio", c.rank_ratio},
              {"refresh_period", c.refresh_period},
              {"inner_iters", c.inner_iters},
              {"inner_base_lr", c.inner_base_lr},
              {"clip_threshold", c.clip_threshold},
              {"clip_mode", std::string(to_string(c.clip_mode))},
              {"global_grad_clip", c.global_grad_clip},
              {"base_lr", c.base_lr},
              {"warmup_steps", c.warmup_steps},
              {"total_steps", c.total_steps},
              {"min_lr_ratio", c.min_lr_ratio},
              {"second_moment_mode", std::string(to_string(c.second_moment_mode))},
              {"bias_correction", c.bias_correction}};
}

AdaPMConfig config_from_json(const json& j, AdaPMConfig c) {
  if (!j.is_object()) throw std::invalid_argument("optimizer config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!config_keys().contains(key)) {
      throw std::invalid_argument("unknown optimizer config key '" + key + "'");
    }
  }
  try {
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.rank_ratio = j.value("rank_ratio", c.rank_ratio);
    c.refresh_period = j.value("refresh_period", c.refresh_period);
    c.inner_iters = j.value("inner_iters", c.inner_iters);
    c.inner_base_lr = j.value("inner_base_lr", c.inner_base_lr);
    c.clip_threshold = j.value("clip_threshold", c.clip_threshold);
    if (j.contains("clip_mode")) {
      c.clip_mode = update_clip_mode_from_string(j.at("clip_mode").get<std::string>());
    }
    c.global_grad_clip = j.value("global_grad_clip", c.global_grad_clip);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.min_lr_ratio = j.value("min_lr_ratio", c.min_lr_ratio);
    if (j.contains("second_moment_mode")) {
      c.second_moment_mode =
          second_moment_mode_from_string(j.at("second_moment_mode").get<std::string>());
    }
    c.bias_correction = j.value("bias_correction", c.bias_correction);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("optimizer config: ") + e.what());
  }
  return c;
}

json policy_to_json(const PartitionPolicy& policy) {
  json rules = json::array();
  for (const PartitionRule& r : policy.rules()) {
    json jr;
    if (r.role) jr["role"] = std::string(to_string(*r.role));
    if (r.name_pattern) jr["name"] = *r.name_pattern;
    jr["shape"] = std::string(shape_filter_name(r.shape));
    jr["mode"] = std::string(to_string(r.assignment.mode.kind()));
    if (r.assignment.mode.kind() == MomentumKind::LowRank) {
      jr["rank_ratio"] = r.assignment.mode.rank_ratio();
    }
    jr["lr_multiplier"] = r.assignment.lr_multiplier;
    rules.push_back(std::move(jr));
  }
  return json{{"label", policy.label()}, {"rules", std::move(rules)}};
}

PartitionPolicy policy_from_json(const json& j, double default_rank_ratio) {
  try {
    if (j.is_string()) return policy_from_table1(j.get<std::string>(), default_rank_ratio);
    if (!j.is_object()) throw std::invalid_argument("policy must be a preset name or an object");
    if (j.contains("preset")) {
      return policy_from_table1(j.at("preset").get<std::string>(),
                                j.value("rank_ratio", default_rank_ratio));
    }
    std::vector<PartitionRule> rules;
    for (const json& jr : j.at("rules")) {
      PartitionRule r;
      if (jr.contains("role")) r.role = block_role_from_string(jr.at("role").get<std::string>());
      if (jr.contains("name")) r.name_pattern = jr.at("name").get<std::string>();
      r.shape = shape_filter_from(jr.value("shape", std::string("any")));
      const MomentumKind kind = momentum_kind_from_string(jr.at("mode").get<std::string>());
      switch (kind) {
        case MomentumKind::None: r.assignment.mode = MomentumMode::none(); break;
        case MomentumKind::Full: r.assignment.mode = MomentumMode::full(); break;
        case MomentumKind::LowRank:
          r.assignment.mode = MomentumMode::low_rank(jr.value("rank_ratio", default_rank_ratio));
          break;
      }
      r.assignment.lr_multiplier = jr.value("lr_multiplier", 1.0);
      rules.push_back(std::move(r));
    }
    return PartitionPolicy(std::move(rules), j.value("label", std::string("custom")));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("policy: ") + e.what());
  }
}

json checkpoint_to_json(const ParamRegistry& registry) {
  json params = json::array();
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const NamedParameter& p = registry.parameter(i);
    const MomentumState& s = registry.state(i);
    json state{{"mode", std::string(to_string(s.mode().kind()))},
               {"second_moment_mode", std::string(to_string(s.second_moment_mode()))},
               {"step_count", s.step_count()},
               {"factors_seeded", s.factors_seeded()},
               {"v_scalar", s.second_moment_scalar()}};
    if (s.full_momentum()) state["m"] = matrix_to_json(*s.full_momentum());
    if (s.low_rank()) {
      state["left"] = matrix_to_json(s.low_rank()->left());
      state["right"] = matrix_to_json(s.low_rank()->right());
    }
    if (s.second_moment_mode() == SecondMomentMode::Full) {
      state["v"] = matrix_to_json(s.second_moment());
    }
    params.push_back(json{{"name", p.name},
                          {"role", std::string(to_string(p.role))},
                          {"value", matrix_to_json(p.value)},
                          {"state", std::move(state)}});
  }
  return json{{"format", "adapm-checkpoint"},
              {"version", kCheckpointVersion},
              {"step", registry.last_step()},
              {"params", std::move(params)}};
}

void checkpoint_from_json(const json& j, ParamRegistry& registry) {
  try {
    if (j.at("format").get<std::string>() != "adapm-checkpoint") {
      throw std::invalid_argument("not an adapm checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw std::invalid_argument("unsupported checkpoint version " + std::to_string(version));
    }
    const json& params = j.at("params");
    if (params.size() != registry.size()) {
      throw std::invalid_argument("checkpoint holds " + std::to_string(params.size()) +
                                  " parameters, registry has " + std::to_string(registry.size()));
    }
    for (const json& jp : params) {
      const std::string name = jp.at("name").get<std::string>();
      const auto idx = registry.index_of(name);
      if (!idx) throw std::invalid_argument("checkpoint parameter '" + name + "' not in registry");
      MomentumState& s = registry.state(*idx);
      const json& js = jp.at("state");
      if (momentum_kind_from_string(js.at("mode").get<std::string>()) != s.mode().kind()) {
        throw std::invalid_argument("checkpoint parameter '" + name + "' has a different mode");
      }
      Matrix value = matrix_from_json(jp.at("value"));
      require_same_shape(value, registry.value(*idx), "checkpoint value");
      std::optional<Matrix> m;
      std::optional<LowRankPair> lr;
      if (js.contains("m")) m = matrix_from_json(js.at("m"));
      if (js.contains("left")) {
        lr.emplace(matrix_from_json(js.at("left")), matrix_from_json(js.at("right")));
      }
      Matrix v = js.contains("v") ? matrix_from_json(js.at("v")) : Matrix();
      s.restore(std::move(m), std::move(lr), std::move(v), js.at("v_scalar").get<double>(),
                js.at("step_count").get<std::uint64_t>(), js.at("factors_seeded").get<bool>());
      registry.value(*idx) = std::move(value);
    }
    registry.set_last_step(j.at("step").get<std::size_t>());
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParamRegistry& registry) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(registry).dump() << '\n';
}

void load_checkpoint(const std::filesystem::path& path, ParamRegistry& registry) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open checkpoint " + path.string());
  checkpoint_from_json(json::parse(in), registry);
}

}  // namespace adapm
