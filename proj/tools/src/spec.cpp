// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "adapm/memory.hpp"
#include "adapm/serialization.hpp"
#include "adapm_tools/experiment.hpp"

#ifndef ADAPM_SHAPES_DIR
#define ADAPM_SHAPES_DIR "data/shapes"
#endif

namespace adapm::tools {
namespace {

using nlohmann::json;

// Reads typed members of one JSON object, recording problems instead of
// throwing, and flags members nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path, std::vector<std::string>& diags)
      : j_(j), path_(std::move(path)), diags_(diags) {
    if (!j_.is_object()) diags_.push_back(path_ + ": expected an object");
  }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!j_.is_object() || !j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      diags_.push_back(path_ + "." + key + ": wrong type (" + j_.at(key).dump() + ")");
    }
  }

  void read_optional(const std::string& key, std::optional<double>& out) {
    if (!j_.is_object() || !j_.contains(key)) return;
    double v = 0.0;
    read(key, v);
    out = v;
  }

  const json* raw(const std::string& key) {
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) diags_.push_back(path_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string>& diags_;
  std::set<std::string> seen_;
};

bool uses_toy(Command c) { return c == Command::TrainToy || c == Command::AblationTable1; }
bool uses_optimizer(Command c) {
  return uses_toy(c) || c == Command::MemoryReport;
}
bool uses_policy(Command c) { return c == Command::TrainToy || c == Command::MemoryReport; }

std::string_view form_name(theory::TargetForm f) {
  return f == theory::TargetForm::Squared ? "squared" : "unsquared";
}

json toy_model_json(const toy::ToyTransformerConfig& m) {
  return {{"vocab", m.vocab},     {"dim", m.dim},         {"layers", m.layers},
          {"heads", m.heads},     {"mlp_ratio", m.mlp_ratio}, {"seq_len", m.seq_len},
          {"init_scale", m.init_scale}};
}

json toy_train_json(const toy::TrainOptions& t) {
  return {{"steps", t.steps},
          {"batch_size", t.batch_size},
          {"eval_every", t.eval_every},
          {"eval_batch_size", t.eval_batch_size},
          {"final_eval_batch_size", t.final_eval_batch_size}};
}

json theory_json(const TheorySettings& t) {
  json problems = json::array();
  for (const auto& p : t.momentum_problems) {
    json jp{{"a", p.a}, {"b", p.b}};
    if (p.coupling) jp["coupling"] = *p.coupling;
    problems.push_back(jp);
  }
  return {{"dim", t.dim},
          {"noise_variance", t.noise_variance},
          {"target_form", std::string(form_name(t.form))},
          {"delta0", t.delta0},
          {"scaling", {{"a", t.scaling_a}, {"b", t.scaling_b}, {"horizons", t.horizons}}},
          {"momentum",
           {{"problems", problems}, {"betas", t.betas}, {"horizon", t.momentum_horizon}}}};
}

json bias_json(const BiasSettings& b) {
  return {{"betas", b.betas},
          {"horizon", b.horizon},
          {"deterministic", b.deterministic},
          {"monte_carlo", b.monte_carlo},
          {"rows", b.rows},
          {"cols", b.cols},
          {"residual_seed", b.residual_seed},
          {"noise_scale", b.noise_scale},
          {"replicates", b.replicates}};
}

void read_toy(const json& j, ToySettings& toy, std::vector<std::string>& diags) {
  ObjectReader top(j, "spec", diags);
  if (const json* m = top.raw("model")) {
    ObjectReader r(*m, "model", diags);
    r.read("vocab", toy.model.vocab);
    r.read("dim", toy.model.dim);
    r.read("layers", toy.model.layers);
    r.read("heads", toy.model.heads);
    r.read("mlp_ratio", toy.model.mlp_ratio);
    r.read("seq_len", toy.model.seq_len);
    r.read("init_scale", toy.model.init_scale);
    r.finish();
  }
  if (const json* t = top.raw("train")) {
    ObjectReader r(*t, "train", diags);
    r.read("steps", toy.train.steps);
    r.read("batch_size", toy.train.batch_size);
    r.read("eval_every", toy.train.eval_every);
    r.read("eval_batch_size", toy.train.eval_batch_size);
    r.read("final_eval_batch_size", toy.train.final_eval_batch_size);
    r.finish();
  }
}

void read_theory(const json& j, TheorySettings& t, std::vector<std::string>& diags) {
  ObjectReader r(j, "theory", diags);
  r.read("dim", t.dim);
  r.read("noise_variance", t.noise_variance);
  r.read("delta0", t.delta0);
  std::string form(form_name(t.form));
  r.read("target_form", form);
  if (form == "squared") {
    t.form = theory::TargetForm::Squared;
  } else if (form == "unsquared") {
    t.form = theory::TargetForm::Unsquared;
  } else {
    diags.push_back("theory.target_form: expected 'squared' or 'unsquared', got '" + form + "'");
  }
  if (const json* s = r.raw("scaling")) {
    ObjectReader rs(*s, "theory.scaling", diags);
    rs.read("a", t.scaling_a);
    rs.read("b", t.scaling_b);
    rs.read("horizons", t.horizons);
    rs.finish();
  }
  if (const json* m = r.raw("momentum")) {
    ObjectReader rm(*m, "theory.momentum", diags);
    rm.read("betas", t.betas);
    rm.read("horizon", t.momentum_horizon);
    if (const json* probs = rm.raw("problems")) {
      if (!probs->is_array()) {
        diags.push_back("theory.momentum.problems: expected an array");
      } else {
        t.momentum_problems.clear();
        for (std::size_t i = 0; i < probs->size(); ++i) {
          TheorySettings::Problem p;
          ObjectReader rp((*probs)[i], "theory.momentum.problems[" + std::to_string(i) + "]", diags);
          rp.read("a", p.a);
          rp.read("b", p.b);
          rp.read_optional("coupling", p.coupling);
          rp.finish();
          t.momentum_problems.push_back(p);
        }
      }
    }
    rm.finish();
  }
  r.finish();
}

void read_bias(const json& j, BiasSettings& b, std::vector<std::string>& diags) {
  ObjectReader r(j, "bias", diags);
  r.read("betas", b.betas);
  r.read("horizon", b.horizon);
  r.read("deterministic", b.deterministic);
  r.read("monte_carlo", b.monte_carlo);
  r.read("rows", b.rows);
  r.read("cols", b.cols);
  r.read("residual_seed", b.residual_seed);
  r.read("noise_scale", b.noise_scale);
  r.read("replicates", b.replicates);
  r.finish();
}

void read_memory(const json& j, MemorySettings& m, std::vector<std::string>& diags) {
  ObjectReader r(j, "memory", diags);
  r.read("shape_table", m.shape_table);
  r.read("bytes_per_real", m.bytes_per_real);
  r.finish();
}

void read_ablation(const json& j, std::vector<AblationRow>& rows, std::vector<std::string>& diags) {
  if (!j.is_array()) {
    diags.push_back("ablation: expected an array of rows");
    return;
  }
  rows.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    AblationRow row;
    const std::string path = "ablation[" + std::to_string(i) + "]";
    ObjectReader r(j[i], path, diags);
    r.read("label", row.label);
    if (const json* p = r.raw("policy")) row.policy = *p;
    if (const json* o = r.raw("optimizer")) row.optimizer = *o;
    r.finish();
    if (row.label.empty()) diags.push_back(path + ": missing label");
    if (row.policy.is_null()) diags.push_back(path + ": missing policy");
    rows.push_back(std::move(row));
  }
}

// Spec plus the diagnostics collected while reading it.
ExperimentSpec parse(const json& input, std::vector<std::string>& diags) {
  const json* j = &input;
  if (input.is_object() && input.contains("format") &&
      input.at("format") == "adapm-run-manifest") {
    if (!input.contains("spec")) {
      diags.push_back("manifest has no spec");
      return {};
    }
    j = &input.at("spec");
  }
  if (!j->is_object()) {
    diags.push_back("spec must be a JSON object");
    return {};
  }
  std::string command_name;
  if (!j->contains("command") || !j->at("command").is_string()) {
    diags.push_back("spec.command: missing or not a string");
    return {};
  }
  command_name = j->at("command").get<std::string>();
  const auto command = command_from_string(command_name);
  if (!command) {
    diags.push_back("spec.command: unknown command '" + command_name + "'");
    return {};
  }
  ExperimentSpec spec = default_spec(*command);
  ObjectReader top(*j, "spec", diags);
  top.raw("command");
  if (const json* o = top.raw("optimizer")) {
    try {
      spec.optimizer = config_from_json(*o, spec.optimizer);
    } catch (const std::invalid_argument& e) {
      diags.push_back(e.what());
    }
  }
  if (const json* p = top.raw("policy")) spec.policy = *p;
  if (uses_toy(*command)) {
    top.raw("model");
    top.raw("train");
    read_toy(*j, spec.toy, diags);
  }
  if (const json* t = top.raw("theory")) read_theory(*t, spec.theory, diags);
  if (const json* b = top.raw("bias")) read_bias(*b, spec.bias, diags);
  if (const json* m = top.raw("memory")) read_memory(*m, spec.memory, diags);
  if (const json* a = top.raw("ablation")) read_ablation(*a, spec.ablation, diags);
  top.read("seeds", spec.seeds);
  std::string out = spec.output_dir.string();
  top.read("output_dir", out);
  spec.output_dir = out;
  top.finish();
  return spec;
}

void check_policy(const ExperimentSpec& spec, const json& policy_json, const AdaPMConfig& cfg,
                  const std::string& where, std::vector<std::string>& diags) {
  std::optional<PartitionPolicy> policy;
  try {
    policy = policy_from_json(policy_json, cfg.rank_ratio);
  } catch (const std::exception& e) {
    diags.push_back(where + ": " + e.what());
    return;
  }
  // Role coverage: a rule that can never fire is almost always a typo.
  struct Param {
    std::string name;
    BlockRole role;
    ParamShape shape;
  };
  std::vector<Param> params;
  if (uses_toy(spec.command)) {
    try {
      toy::ToyTransformer model(spec.toy.model);
      for (const auto& p : model.build()) params.push_back({p.name, p.role, p.shape});
    } catch (const std::exception&) {
      return;  // model diagnostics are reported separately
    }
  } else {
    try {
      const ShapeTable table = load_shape_table(resolve_shape_table(spec.memory.shape_table));
      for (const auto& e : table.entries) params.push_back({e.name, e.resolved_role(), e.shape});
    } catch (const std::exception&) {
      return;
    }
  }
  std::vector<bool> fired(policy->rules().size(), false);
  for (const auto& p : params) {
    if (const auto i = policy->matching_rule(p.name, p.role, p.shape)) fired[*i] = true;
  }
  for (std::size_t i = 0; i < fired.size(); ++i) {
    if (!fired[i] && !policy->rules()[i].is_catch_all()) {
      diags.push_back(where + ": rule " + std::to_string(i) + " matches no parameter");
    }
  }
  for (const auto& p : params) {
    const Assignment& a = policy->resolve(p.name, p.role, p.shape);
    if (a.mode.kind() == MomentumKind::LowRank && cfg.beta1 >= 1.0) {
      diags.push_back(where + ": '" + p.name +
                      "' is low-rank but beta1 >= 1 makes the bias correction divide by zero");
      break;
    }
  }
}

std::string join(const std::vector<std::string>& items) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) out << (i ? "; " : "") << items[i];
  return out.str();
}

}  // namespace

std::string_view to_string(Command c) noexcept {
  return kCommandNames[static_cast<std::size_t>(c)];
}

std::optional<Command> command_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kCommandNames.size(); ++i) {
    if (kCommandNames[i] == name) return static_cast<Command>(i);
  }
  return std::nullopt;
}

ConfigError::ConfigError(std::vector<std::string> diagnostics)
    : std::invalid_argument("invalid experiment spec: " + join(diagnostics)),
      diagnostics_(std::move(diagnostics)) {}

AdaPMConfig ExperimentSpec::optimizer_for(const AblationRow& row) const {
  return config_from_json(row.optimizer, optimizer);
}

ExperimentSpec default_spec(Command command) {
  ExperimentSpec spec;
  spec.command = command;
  spec.output_dir = std::filesystem::path("runs") / std::string(to_string(command));
  if (uses_toy(command)) {
    spec.optimizer.base_lr = 2e-2;
    spec.optimizer.warmup_steps = 100;
    spec.optimizer.total_steps = 2000;
    spec.toy.train.steps = 2000;
    spec.toy.train.batch_size = 32;
  }
  switch (command) {
    case Command::AblationTable1:
      for (std::string_view preset : kTable1Presets) {
        spec.ablation.push_back({std::string(preset), std::string(preset), json::object()});
      }
      spec.seeds = {0, 1, 2};
      break;
    case Command::TheoryBench:
      spec.seeds.clear();
      for (std::uint64_t s = 0; s < 20; ++s) spec.seeds.push_back(s);
      break;
    default:
      break;
  }
  return spec;
}

json spec_to_json(const ExperimentSpec& spec) {
  json j{{"command", std::string(to_string(spec.command))}};
  if (uses_optimizer(spec.command)) j["optimizer"] = config_to_json(spec.optimizer);
  if (uses_policy(spec.command)) j["policy"] = spec.policy;
  if (uses_toy(spec.command)) {
    j["model"] = toy_model_json(spec.toy.model);
    j["train"] = toy_train_json(spec.toy.train);
  }
  switch (spec.command) {
    case Command::TheoryBench: j["theory"] = theory_json(spec.theory); break;
    case Command::BiasSim: j["bias"] = bias_json(spec.bias); break;
    case Command::MemoryReport:
      j["memory"] = {{"shape_table", spec.memory.shape_table},
                     {"bytes_per_real", spec.memory.bytes_per_real}};
      break;
    case Command::AblationTable1: {
      json rows = json::array();
      for (const auto& r : spec.ablation) {
        rows.push_back({{"label", r.label}, {"policy", r.policy}, {"optimizer", r.optimizer}});
      }
      j["ablation"] = rows;
      break;
    }
    default: break;
  }
  j["seeds"] = spec.seeds;
  j["output_dir"] = spec.output_dir.string();
  return j;
}

ExperimentSpec spec_from_json(const json& j) {
  std::vector<std::string> diags;
  ExperimentSpec spec = parse(j, diags);
  if (diags.empty()) diags = validate(spec);
  if (!diags.empty()) throw ConfigError(std::move(diags));
  return spec;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file " + path.string()});
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  return spec_from_json(j);
}

std::vector<std::string> validate(const json& j) {
  std::vector<std::string> diags;
  const ExperimentSpec spec = parse(j, diags);
  if (!diags.empty()) return diags;
  return validate(spec);
}

std::vector<std::string> validate(const ExperimentSpec& spec) {
  std::vector<std::string> diags;
  auto add_all = [&diags](const std::string& where, const std::vector<std::string>& items) {
    for (const auto& d : items) diags.push_back(where + ": " + d);
  };
  if (spec.seeds.empty()) diags.emplace_back("seeds: at least one seed is required");
  if (spec.output_dir.empty()) diags.emplace_back("output_dir: must not be empty");
  if (uses_optimizer(spec.command)) add_all("optimizer", spec.optimizer.diagnostics());
  if (uses_toy(spec.command)) {
    add_all("model", spec.toy.model.diagnostics());
    const auto& t = spec.toy.train;
    if (t.steps == 0) diags.emplace_back("train.steps: must be positive");
    if (t.batch_size == 0 || t.eval_every == 0 || t.eval_batch_size == 0 ||
        t.final_eval_batch_size == 0) {
      diags.emplace_back("train: batch sizes and eval_every must be positive");
    }
  }
  switch (spec.command) {
    case Command::TrainToy:
      if (spec.toy.train.steps > spec.optimizer.total_steps) {
        diags.emplace_back("train.steps exceeds optimizer.total_steps");
      }
      check_policy(spec, spec.policy, spec.optimizer, "policy", diags);
      break;
    case Command::AblationTable1: {
      if (spec.ablation.empty()) diags.emplace_back("ablation: at least one row is required");
      std::set<std::string> labels;
      for (std::size_t i = 0; i < spec.ablation.size(); ++i) {
        const AblationRow& row = spec.ablation[i];
        const std::string where = "ablation[" + std::to_string(i) + "]";
        if (!labels.insert(row.label).second) diags.push_back(where + ": duplicate label");
        AdaPMConfig cfg;
        try {
          cfg = spec.optimizer_for(row);
        } catch (const std::exception& e) {
          diags.push_back(where + ".optimizer: " + e.what());
          continue;
        }
        add_all(where + ".optimizer", cfg.diagnostics());
        if (spec.toy.train.steps > cfg.total_steps) {
          diags.push_back(where + ": train.steps exceeds optimizer.total_steps");
        }
        check_policy(spec, row.policy, cfg, where + ".policy", diags);
      }
      break;
    }
    case Command::TheoryBench: {
      const auto& t = spec.theory;
      if (t.dim == 0) diags.emplace_back("theory.dim: must be positive");
      if (!(t.noise_variance >= 0.0)) diags.emplace_back("theory.noise_variance: must be >= 0");
      if (!(t.delta0 > 0.0)) diags.emplace_back("theory.delta0: must be positive");
      if (!(t.scaling_a >= 1.0 && t.scaling_b >= 1.0)) {
        diags.emplace_back("theory.scaling: exponents must be >= 1");
      }
      if (t.horizons.size() < 4) diags.emplace_back("theory.scaling.horizons: need at least 4");
      for (std::size_t h : t.horizons) {
        if (h < 4) diags.emplace_back("theory.scaling.horizons: every horizon must be >= 4");
      }
      if (t.momentum_horizon < 4) diags.emplace_back("theory.momentum.horizon: must be >= 4");
      bool has_one = false;
      for (double b : t.betas) {
        if (!(b > 0.0 && b <= 1.0)) diags.emplace_back("theory.momentum.betas: must lie in (0, 1]");
        has_one = has_one || b == 1.0;
      }
      if (!has_one) diags.emplace_back("theory.momentum.betas: must include 1 as the baseline");
      for (const auto& p : t.momentum_problems) {
        if (!(p.a >= 1.0 && p.b >= 1.0)) {
          diags.emplace_back("theory.momentum.problems: exponents must be >= 1");
        }
        if (p.coupling && !(*p.coupling > 0.0)) {
          diags.emplace_back("theory.momentum.problems: coupling must be positive");
        }
      }
      break;
    }
    case Command::BiasSim: {
      const auto& b = spec.bias;
      for (double beta : b.betas) {
        if (!(beta > 0.0 && beta < 1.0)) diags.emplace_back("bias.betas: must lie in (0, 1)");
      }
      if (b.betas.empty()) diags.emplace_back("bias.betas: at least one value is required");
      if (b.rows == 0 || b.cols == 0) diags.emplace_back("bias: rows and cols must be positive");
      if (!(b.noise_scale >= 0.0)) diags.emplace_back("bias.noise_scale: must be >= 0");
      if (b.monte_carlo && b.replicates < 2) diags.emplace_back("bias.replicates: need >= 2");
      if (!b.deterministic && !b.monte_carlo) {
        diags.emplace_back("bias: enable deterministic and/or monte_carlo");
      }
      break;
    }
    case Command::MemoryReport: {
      if (spec.memory.bytes_per_real == 0) diags.emplace_back("memory.bytes_per_real: must be > 0");
      const auto path = resolve_shape_table(spec.memory.shape_table);
      if (!std::filesystem::is_regular_file(path)) {
        diags.push_back("memory.shape_table: cannot find '" + spec.memory.shape_table + "'");
      } else {
        try {
          load_shape_table(path);
        } catch (const std::exception& e) {
          diags.push_back(std::string("memory.shape_table: ") + e.what());
        }
      }
      check_policy(spec, spec.policy, spec.optimizer, "policy", diags);
      break;
    }
  }
  return diags;
}

std::filesystem::path shapes_dir() {
  if (const char* env = std::getenv("ADAPM_SHAPES_DIR"); env && *env) return env;
  return ADAPM_SHAPES_DIR;
}

std::filesystem::path resolve_shape_table(const std::string& name_or_path) {
  const std::filesystem::path bundled = shapes_dir() / (name_or_path + ".json");
  if (name_or_path.find('/') == std::string::npos && name_or_path.find('.') == std::string::npos) {
    return bundled;
  }
  return name_or_path;
}

}  // namespace adapm::tools
