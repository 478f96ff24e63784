// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "adapm_tools/experiment.hpp"

using namespace adapm;
using namespace adapm::tools;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("adapm_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

bool mentions(const std::vector<std::string>& diags, const std::string& needle) {
  for (const auto& d : diags) {
    if (d.find(needle) != std::string::npos) return true;
  }
  return false;
}

ExperimentSpec tiny_toy_spec() {
  ExperimentSpec spec = default_spec(Command::TrainToy);
  spec.toy.model.vocab = 8;
  spec.toy.model.dim = 8;
  spec.toy.model.seq_len = 6;
  spec.toy.train.steps = 20;
  spec.toy.train.batch_size = 2;
  spec.optimizer.warmup_steps = 5;
  spec.optimizer.total_steps = 20;
  spec.seeds = {0, 1};
  return spec;
}

// Re-runs the manifest written in `first` into `second` and compares files.
void check_rerun(const fs::path& first, const fs::path& second,
                 const std::vector<std::string>& files) {
  json m = read_json(first / "manifest.json");
  ExperimentSpec again = spec_from_json(m);
  again.output_dir = second;
  const auto outcome = run(again);
  REQUIRE(outcome.exit_code == 0);
  for (const auto& f : files) {
    INFO(f);
    REQUIRE(fs::exists(first / f));
    CHECK(slurp(first / f) == slurp(second / f));
  }
}

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("command names") {
    for (auto name : kCommandNames) CHECK(to_string(*command_from_string(name)) == name);
    CHECK_FALSE(command_from_string("train").has_value());
  }

  TEST_CASE("default specs validate and round-trip") {
    for (auto name : kCommandNames) {
      INFO(name);
      const ExperimentSpec spec = default_spec(*command_from_string(name));
      CHECK(validate(spec).empty());
      const json j = spec_to_json(spec);
      CHECK(validate(j).empty());
      CHECK(spec_to_json(spec_from_json(j)) == j);
    }
  }

  TEST_CASE("bundled configs validate") {
    int seen = 0;
    for (const auto& entry : fs::directory_iterator(ADAPM_TEST_CONFIGS_DIR)) {
      if (entry.path().extension() != ".json") continue;
      INFO(entry.path());
      ++seen;
      CHECK(validate(read_json(entry.path())).empty());
    }
    CHECK(seen == static_cast<int>(kCommandNames.size()));
  }

  TEST_CASE("diagnostics") {
    json j = spec_to_json(default_spec(Command::TrainToy));
    j["optimizer"]["beta1"] = 1.0;
    CHECK(mentions(validate(j), "beta1"));

    j = spec_to_json(default_spec(Command::TrainToy));
    j["policy"] = "table-9";
    CHECK(mentions(validate(j), "table-9"));

    j = spec_to_json(default_spec(Command::TrainToy));
    j["optimizer"]["rank_ratio"] = 1.5;
    CHECK(mentions(validate(j), "rank_ratio"));

    j = spec_to_json(default_spec(Command::TrainToy));
    j["colour"] = "blue";
    CHECK(mentions(validate(j), "colour"));

    j = spec_to_json(default_spec(Command::TrainToy));
    j["policy"] = json::parse(R"({"rules":[{"name":"^no_such_param$","mode":"none"}]})");
    CHECK_FALSE(validate(j).empty());

    j = spec_to_json(default_spec(Command::MemoryReport));
    j["memory"]["shape_table"] = "no_such_table";
    CHECK_FALSE(validate(j).empty());

    CHECK_FALSE(validate(json{{"command", "fly"}}).empty());
    CHECK_FALSE(validate(json::array()).empty());
    CHECK_THROWS_AS(spec_from_json(json{{"command", "fly"}}), ConfigError);
  }

  TEST_CASE("bias-sim output and manifest rerun") {
    ExperimentSpec spec = default_spec(Command::BiasSim);
    spec.bias.horizon = 30;
    spec.bias.replicates = 50;
    const fs::path a = scratch("bias_a"), b = scratch("bias_b");
    spec.output_dir = a;
    const auto outcome = run(spec);
    REQUIRE(outcome.exit_code == 0);
    CHECK(fs::exists(a / "summary.json"));
    // Deterministic rows: the consecutive ratio column equals beta1.
    std::ifstream csv(a / "bias.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line.rfind("# schema_version=", 0) == 0);
    std::getline(csv, line);
    int checked = 0;
    while (std::getline(csv, line)) {
      std::vector<std::string> cols;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
      REQUIRE(cols.size() == 8);
      if (cols[0] != "deterministic" || cols[2] == "0") continue;
      CHECK(std::stod(cols[6]) == doctest::Approx(std::stod(cols[1])).epsilon(1e-12));
      ++checked;
    }
    CHECK(checked == 3 * 30);
    check_rerun(a, b, {"bias.csv", "summary.json"});
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("memory-report lists every variant") {
    ExperimentSpec spec = default_spec(Command::MemoryReport);
    const fs::path a = scratch("mem_a"), b = scratch("mem_b");
    spec.output_dir = a;
    const auto outcome = run(spec);
    REQUIRE(outcome.exit_code == 0);
    for (const char* v : {"adamw", "adam-mini", "adapm", "adapm-mini"}) {
      CHECK(outcome.summary.at("variants").contains(v));
    }
    check_rerun(a, b, {"memory.csv", "summary.json"});
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("train-toy rerun and ablation rows") {
    ExperimentSpec spec = tiny_toy_spec();
    const fs::path a = scratch("toy_a"), b = scratch("toy_b");
    spec.output_dir = a;
    const auto outcome = run(spec);
    REQUIRE(outcome.exit_code == 0);
    CHECK(fs::exists(a / "checkpoint_seed1.json"));
    check_rerun(a, b, {"loss_trace.csv", "summary.json"});

    ExperimentSpec abl = tiny_toy_spec();
    abl.command = Command::AblationTable1;
    abl.seeds = {0};
    abl.ablation = default_spec(Command::AblationTable1).ablation;
    abl.output_dir = scratch("abl");
    const auto ao = run(abl);
    REQUIRE(ao.exit_code == 0);
    std::ifstream csv(abl.output_dir / "ablation.csv");
    std::string line;
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 2 + 4);  // schema line, header, one row per preset
    for (const auto& p : {a, b, abl.output_dir}) fs::remove_all(p);
  }

  TEST_CASE("failures leave an error record") {
    ExperimentSpec bad = tiny_toy_spec();
    bad.optimizer.beta1 = 1.0;
    bad.output_dir = scratch("bad_cfg");
    const auto c = run(bad);
    CHECK(c.exit_code == kExitConfigError);
    CHECK(read_json(bad.output_dir / "error.json").at("error").at("kind") == "config");
    CHECK_FALSE(fs::exists(bad.output_dir / "manifest.json"));

    ExperimentSpec diverge = tiny_toy_spec();
    diverge.optimizer.base_lr = 1e4;
    diverge.optimizer.weight_decay = 0.0;
    diverge.output_dir = scratch("diverge");
    const auto d = run(diverge);
    CHECK(d.exit_code == kExitRunError);
    CHECK(read_json(diverge.output_dir / "error.json").at("error").at("kind") == "training");
    CHECK(fs::exists(diverge.output_dir / "manifest.json"));
    fs::remove_all(bad.output_dir);
    fs::remove_all(diverge.output_dir);
  }
}
