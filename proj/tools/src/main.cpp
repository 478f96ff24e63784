// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "adapm_tools/experiment.hpp"

namespace {

using adapm::tools::Command;
using nlohmann::json;

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const unsigned long long v = std::stoull(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad seed '" + item + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw std::invalid_argument("--seeds needs at least one value");
  return seeds;
}

void print_error(const std::string& kind, const std::string& message,
                 const std::vector<std::string>& diags = {}) {
  json err{{"error", {{"kind", kind}, {"message", message}}}};
  if (!diags.empty()) err["error"]["diagnostics"] = diags;
  std::cerr << err.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AdaPM experiment runner"};
  app.require_subcommand(1);

  std::string config, out, seeds;
  for (std::string_view name : adapm::tools::kCommandNames) {
    CLI::App* sub = app.add_subcommand(std::string(name), "run " + std::string(name));
    sub->add_option("--config", config, "experiment spec or run manifest (JSON)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides the spec)");
    sub->add_option("--seeds", seeds, "comma-separated seeds (overrides the spec)");
  }
  CLI::App* val = app.add_subcommand("validate", "check a spec without running it");
  val->add_option("--config", config, "experiment spec or run manifest (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  std::string defaults_for;
  CLI::App* defaults = app.add_subcommand("defaults", "print the default spec for a command");
  defaults->add_option("command", defaults_for, "command name")
      ->required()
      ->check(CLI::IsMember(std::vector<std::string>(adapm::tools::kCommandNames.begin(),
                                                     adapm::tools::kCommandNames.end())));

  CLI11_PARSE(app, argc, argv);
  CLI::App* chosen = app.get_subcommands().front();

  if (chosen == defaults) {
    const auto cmd = adapm::tools::command_from_string(defaults_for);
    std::cout << adapm::tools::spec_to_json(adapm::tools::default_spec(*cmd)).dump(2) << '\n';
    return 0;
  }

  if (chosen == val) {
    std::ifstream in(config);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      print_error("config", e.what());
      return adapm::tools::kExitConfigError;
    }
    const auto diags = adapm::tools::validate(j);
    std::cout << json{{"diagnostics", diags}}.dump(2) << '\n';
    return diags.empty() ? 0 : adapm::tools::kExitConfigError;
  }

  const Command command = *adapm::tools::command_from_string(chosen->get_name());
  adapm::tools::ExperimentSpec spec;
  try {
    spec = config.empty() ? adapm::tools::default_spec(command) : adapm::tools::load_spec(config);
    if (spec.command != command) {
      throw adapm::tools::ConfigError({"config is for '" +
                                       std::string(adapm::tools::to_string(spec.command)) +
                                       "', not '" + chosen->get_name() + "'"});
    }
    if (!out.empty()) spec.output_dir = out;
    if (!seeds.empty()) spec.seeds = parse_seeds(seeds);
  } catch (const adapm::tools::ConfigError& e) {
    print_error("config", e.what(), e.diagnostics());
    return adapm::tools::kExitConfigError;
  } catch (const std::exception& e) {
    print_error("config", e.what());
    return adapm::tools::kExitConfigError;
  }

  const adapm::tools::RunOutcome outcome = adapm::tools::run(spec);
  if (outcome.exit_code != 0) {
    std::cerr << outcome.summary.dump(2) << '\n';
    return outcome.exit_code;
  }
  std::cout << outcome.summary.dump(2) << '\n';
  return 0;
}
