// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include "adapm/memory.hpp"
#include "adapm/serialization.hpp"
#include "adapm_tools/experiment.hpp"

#ifndef ADAPM_VERSION
#define ADAPM_VERSION "unknown"
#endif

namespace adapm::tools {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Shortest text that parses back to the same double.
std::string num(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::string& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << "# schema_version=" << kCsvSchemaVersion << '\n' << header << '\n';
  }
  template <class... Ts>
  void row(const Ts&... cells) {
    std::size_t i = 0;
    ((out_ << (i++ ? "," : "") << cell(cells)), ...);
    out_ << '\n';
  }

 private:
  static std::string cell(double x) { return num(x); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(std::string_view s) { return std::string(s); }
  template <class T>
    requires std::is_integral_v<T>
  static std::string cell(T x) {
    return std::to_string(x);
  }
  std::ofstream out_;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json decisions() {
  return {{"update_clip", "elementwise clamp of m^c / (sqrt(v) + eps) to the clip threshold; "
                          "norm clipping via clip_mode"},
          {"refresh_period", "every step runs the warm-started fit; every refresh_period-th step "
                             "replaces the factors by a truncated SVD of m_t"},
          {"weight_decay", "lambda * W inside the eta_t parentheses (decoupled, scaled by eta_t)"},
          {"bias_correction_1_minus_beta_t", "not applied"},
          {"second_moment_no_momentum_blocks", "tracked"},
          {"block_mean_granularity", "one scalar per parameter tensor"},
          {"inner_step", "step_k / ||other factor||_F^2 with step_k = base * 0.5 (1 + cos(pi k / K))"},
          {"asgd_gradient_point", "U_{t-1}"},
          {"target_form_default", "squared: Sigma_ii W*_i^2 = i^-b"},
          {"gamma_coupling", "gamma0 = coupling * beta^(-1 + 1/a), coupling defaults to delta0"}};
}

json manifest(const ExperimentSpec& spec) {
  json m{{"format", "adapm-run-manifest"},
         {"version", 1},
         {"code_version", ADAPM_VERSION},
         {"csv_schema_version", kCsvSchemaVersion},
         {"spec", spec_to_json(spec)},
         {"decisions", decisions()}};
  if (spec.command == Command::TrainToy || spec.command == Command::MemoryReport) {
    m["resolved_policy"] = policy_to_json(policy_from_json(spec.policy, spec.optimizer.rank_ratio));
  }
  if (spec.command == Command::AblationTable1) {
    json rows = json::array();
    for (const auto& row : spec.ablation) {
      const AdaPMConfig cfg = spec.optimizer_for(row);
      rows.push_back({{"label", row.label},
                      {"optimizer", config_to_json(cfg)},
                      {"policy", policy_to_json(policy_from_json(row.policy, cfg.rank_ratio))}});
    }
    m["resolved_rows"] = rows;
  }
  return m;
}

// ---- train-toy -------------------------------------------------------------

json run_train_toy(const ExperimentSpec& spec, const fs::path& dir) {
  const PartitionPolicy policy = policy_from_json(spec.policy, spec.optimizer.rank_ratio);
  std::vector<std::optional<toy::ToyRun>> runs(spec.seeds.size());
  std::vector<std::exception_ptr> errors(spec.seeds.size());
  parallel_for(spec.seeds.size(), [&](std::size_t i) {
    try {
      toy::TrainOptions opt = spec.toy.train;
      opt.seed = spec.seeds[i];
      runs[i].emplace(toy::train_toy(spec.toy.model, policy, spec.optimizer, opt));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  CsvWriter trace(dir / "loss_trace.csv", "seed,step,loss");
  json finals = json::object();
  std::vector<double> values;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!runs[i]) continue;
    for (const auto& p : runs[i]->result.trace) trace.row(spec.seeds[i], p.step, p.loss);
    finals[std::to_string(spec.seeds[i])] = runs[i]->result.final_loss;
    values.push_back(runs[i]->result.final_loss);
    save_checkpoint(dir / ("checkpoint_seed" + std::to_string(spec.seeds[i]) + ".json"),
                    runs[i]->registry);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  const auto& m = spec.toy.model;
  toy::TaskStream stream(m.vocab, spec.seeds.front());
  const toy::Batch fit = stream.next_batch(spec.toy.train.batch_size * 50, m.seq_len);
  const toy::Batch held = toy::eval_batch(m.vocab, spec.toy.train.final_eval_batch_size, m.seq_len,
                                          spec.seeds.front() + 1);
  return {{"command", "train-toy"},
          {"policy", policy.label()},
          {"final_loss", finals},
          {"median_final_loss", theory::median(values)},
          {"uniform_loss", std::log(static_cast<double>(m.vocab))},
          {"bigram_loss", toy::bigram_baseline_loss(fit, held, m.vocab)}};
}

// ---- ablation-table1 -------------------------------------------------------

json run_ablation(const ExperimentSpec& spec, const fs::path& dir) {
  const std::size_t ns = spec.seeds.size();
  std::vector<double> finals(spec.ablation.size() * ns, NAN);
  std::vector<std::exception_ptr> errors(finals.size());
  parallel_for(finals.size(), [&](std::size_t job) {
    try {
      const AblationRow& row = spec.ablation[job / ns];
      const AdaPMConfig cfg = spec.optimizer_for(row);
      const PartitionPolicy policy = policy_from_json(row.policy, cfg.rank_ratio);
      toy::TrainOptions opt = spec.toy.train;
      opt.seed = spec.seeds[job % ns];
      finals[job] = toy::train_toy(spec.toy.model, policy, cfg, opt).result.final_loss;
    } catch (...) {
      errors[job] = std::current_exception();
    }
  });
  CsvWriter runs(dir / "ablation_runs.csv", "label,seed,final_loss");
  CsvWriter table(dir / "ablation.csv", "label,median_final_loss,relative_to_first");
  json rows = json::array();
  double first = NAN;
  for (std::size_t r = 0; r < spec.ablation.size(); ++r) {
    std::vector<double> vals;
    for (std::size_t s = 0; s < ns; ++s) {
      const double v = finals[r * ns + s];
      if (std::isnan(v)) continue;
      runs.row(spec.ablation[r].label, spec.seeds[s], v);
      vals.push_back(v);
    }
    if (vals.size() != ns) continue;
    const double med = theory::median(vals);
    if (r == 0) first = med;
    const double rel = med / first - 1.0;
    table.row(spec.ablation[r].label, med, rel);
    rows.push_back({{"label", spec.ablation[r].label},
                    {"median_final_loss", med},
                    {"relative_to_first", rel},
                    {"final_losses", vals}});
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return {{"command", "ablation-table1"}, {"rows", rows}};
}

// ---- theory-bench ----------------------------------------------------------

void write_trace(CsvWriter& out, const char* experiment, const theory::RunRecord& r) {
  for (const auto& p : r.trace.points) {
    out.row(experiment, r.a, r.b, r.horizon, r.seed, r.beta, p.step, p.risk);
  }
}

json run_theory(const ExperimentSpec& spec, const fs::path& dir) {
  const TheorySettings& t = spec.theory;
  theory::ScalingSweep ss;
  ss.dim = t.dim;
  ss.a = t.scaling_a;
  ss.b = t.scaling_b;
  ss.noise_variance = t.noise_variance;
  ss.form = t.form;
  ss.delta0 = t.delta0;
  ss.horizons = t.horizons;
  ss.seeds = spec.seeds;
  const theory::ScalingResult scaling = theory::scaling_sweep(ss, parallel_for);

  CsvWriter risk(dir / "risk.csv", "experiment,a,b,T,seed,beta,risk");
  CsvWriter traces(dir / "risk_trace.csv", "experiment,a,b,T,seed,beta,step,risk");
  for (const auto& r : scaling.runs) {
    risk.row("scaling", r.a, r.b, r.horizon, r.seed, r.beta, r.trace.final_risk());
    write_trace(traces, "scaling", r);
  }
  json medians = json::array();
  for (const auto& [T, m] : scaling.medians) medians.push_back({{"T", T}, {"median_risk", m}});
  json summary{{"command", "theory-bench"},
               {"scaling",
                {{"a", ss.a},
                 {"b", ss.b},
                 {"medians", medians},
                 {"slope", scaling.fit.slope},
                 {"intercept", scaling.fit.intercept},
                 {"rms_error", scaling.fit.rms_error},
                 {"predicted_slope", scaling.predicted_slope}}}};
  json momentum = json::array();
  for (const auto& p : t.momentum_problems) {
    theory::MomentumSweep ms;
    ms.dim = t.dim;
    ms.a = p.a;
    ms.b = p.b;
    ms.noise_variance = t.noise_variance;
    ms.form = t.form;
    ms.delta0 = t.delta0;
    ms.coupling = p.coupling.value_or(t.delta0);
    ms.horizon = t.momentum_horizon;
    ms.betas = t.betas;
    ms.seeds = spec.seeds;
    const theory::MomentumResult res = theory::momentum_sweep(ms, parallel_for);
    for (const auto& r : res.runs) {
      risk.row("momentum", r.a, r.b, r.horizon, r.seed, r.beta, r.trace.final_risk());
      write_trace(traces, "momentum", r);
    }
    json per_beta = json::array();
    for (std::size_t k = 0; k < ms.betas.size(); ++k) {
      per_beta.push_back({{"beta", ms.betas[k]}, {"median_risk", num(res.medians[k])}});
    }
    momentum.push_back({{"a", p.a},
                        {"b", p.b},
                        {"coupling", ms.coupling},
                        {"medians", per_beta},
                        {"sgd_median", res.sgd_median},
                        {"best_beta", res.best_beta},
                        {"best_momentum_median", res.best_momentum_median},
                        {"momentum_wins", res.momentum_wins()}});
  }
  summary["momentum"] = momentum;
  return summary;
}

// ---- bias-sim --------------------------------------------------------------

json run_bias(const ExperimentSpec& spec, const fs::path& dir) {
  const BiasSettings& b = spec.bias;
  Matrix rbar(b.rows, b.cols);
  std::mt19937_64 rng(b.residual_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& x : rbar.values()) x = normal(rng);
  const double rnorm = frobenius_norm(rbar);

  struct Job {
    bool deterministic;
    double beta;
  };
  std::vector<Job> jobs;
  for (double beta : b.betas) {
    if (b.deterministic) jobs.push_back({true, beta});
    if (b.monte_carlo) jobs.push_back({false, beta});
  }
  std::vector<theory::BiasTrace> traces(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    theory::BiasSimSpec s;
    s.beta1 = jobs[i].beta;
    s.mean_residual = rbar;
    s.noise_scale = b.noise_scale;
    s.horizon = b.horizon;
    s.replicates = b.replicates;
    s.seed = spec.seeds.front();
    traces[i] = jobs[i].deterministic ? theory::simulate_bias_decay_deterministic(s)
                                      : theory::simulate_bias_decay_monte_carlo(s);
  });
  CsvWriter out(dir / "bias.csv", "mode,beta,t,bias,closed_form,relative_error,ratio,std_error");
  json results = json::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const char* mode = jobs[i].deterministic ? "deterministic" : "monte_carlo";
    double worst = 0.0, worst_z = 0.0;
    const auto& tr = traces[i];
    for (std::size_t t = 0; t < tr.bias.size(); ++t) {
      const double closed = theory::bias_closed_form(rnorm, jobs[i].beta, t);
      const double rel = std::abs(tr.bias[t] - closed) / closed;
      worst = std::max(worst, rel);
      if (tr.std_error[t] > 0.0) {
        worst_z = std::max(worst_z, std::abs(tr.bias[t] - closed) / tr.std_error[t]);
      }
      const std::string ratio = t == 0 ? std::string() : num(tr.bias[t] / tr.bias[t - 1]);
      out.row(mode, jobs[i].beta, t, tr.bias[t], closed, rel, ratio, tr.std_error[t]);
    }
    json r{{"mode", mode}, {"beta", jobs[i].beta}};
    // Monte Carlo error is judged against its standard error; the relative
    // error is meaningless once the bias sinks below the noise floor.
    if (jobs[i].deterministic) {
      r["max_relative_error"] = worst;
    } else {
      r["max_abs_error_in_std_errors"] = worst_z;
    }
    results.push_back(r);
  }
  return {{"command", "bias-sim"}, {"residual_norm", rnorm}, {"results", results}};
}

// ---- memory-report ---------------------------------------------------------

json run_memory(const ExperimentSpec& spec, const fs::path& dir) {
  const ShapeTable table = load_shape_table(resolve_shape_table(spec.memory.shape_table));
  const PartitionPolicy policy = policy_from_json(spec.policy, spec.optimizer.rank_ratio);
  const MemoryReport report = memory_report(table, policy, spec.memory.bytes_per_real);
  CsvWriter out(dir / "memory.csv",
                "variant,role,first_order_reals,second_order_reals,total_bytes");
  json variants = json::object();
  const std::size_t bpr = spec.memory.bytes_per_real;
  for (OptimizerVariant v : kAllVariants) {
    const VariantMemory& vm = report.variant(v);
    for (const auto& [role, count] : vm.by_role) {
      out.row(to_string(v), to_string(role), count.first_order_reals, count.second_order_reals,
              (count.first_order_reals + count.second_order_reals) * bpr);
    }
    out.row(to_string(v), "total", vm.totals.first_order_reals, vm.totals.second_order_reals,
            report.bytes(v));
    variants[std::string(to_string(v))] = {{"first_order_bytes", report.first_order_bytes(v)},
                                           {"total_bytes", report.bytes(v)},
                                           {"total_gb", report.gigabytes(v)}};
  }
  const double ratio = static_cast<double>(report.first_order_bytes(OptimizerVariant::AdaPM)) /
                       static_cast<double>(report.first_order_bytes(OptimizerVariant::AdamW));
  return {{"command", "memory-report"},
          {"model", table.model},
          {"parameter_count", table.parameter_count()},
          {"policy", policy.label()},
          {"bytes_per_real", bpr},
          {"variants", variants},
          {"first_order_ratio_vs_adamw", ratio}};
}

}  // namespace

std::size_t worker_count() {
  if (const char* env = std::getenv("ADAPM_WORKERS"); env && *env) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
  }
  return 1;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

RunOutcome run(const ExperimentSpec& spec) {
  RunOutcome outcome;
  outcome.output_dir = spec.output_dir;
  const fs::path dir = spec.output_dir;
  auto fail = [&](int code, const char* kind, const std::string& message,
                  const std::vector<std::string>& diags) {
    outcome.exit_code = code;
    json err{{"error", {{"kind", kind}, {"command", std::string(to_string(spec.command))},
                        {"message", message}}}};
    if (!diags.empty()) err["error"]["diagnostics"] = diags;
    outcome.summary = err;
    std::error_code ec;
    if (fs::is_directory(dir, ec)) {
      try {
        write_json(dir / "error.json", err);
      } catch (const std::exception&) {
      }
    }
    return outcome;
  };

  if (auto diags = validate(spec); !diags.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    return fail(kExitConfigError, "config", "invalid experiment spec", diags);
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    return fail(kExitConfigError, "config", "cannot create output directory " + dir.string(), {});
  }
  try {
    write_json(dir / "manifest.json", manifest(spec));
    fs::remove(dir / "error.json", ec);
    switch (spec.command) {
      case Command::TrainToy: outcome.summary = run_train_toy(spec, dir); break;
      case Command::AblationTable1: outcome.summary = run_ablation(spec, dir); break;
      case Command::TheoryBench: outcome.summary = run_theory(spec, dir); break;
      case Command::BiasSim: outcome.summary = run_bias(spec, dir); break;
      case Command::MemoryReport: outcome.summary = run_memory(spec, dir); break;
    }
    write_json(dir / "summary.json", outcome.summary);
  } catch (const toy::TrainingError& e) {
    return fail(kExitRunError, "training", e.what(), {});
  } catch (const std::exception& e) {
    return fail(kExitRunError, "runtime", e.what(), {});
  }
  return outcome;
}

}  // namespace adapm::tools
