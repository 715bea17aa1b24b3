/**
 * Copyright (c) edgesplit contributors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: full pipeline runs, ablation suites and network
// trace generation.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "edgesplit/error.hpp"
#include "edgesplit/experiment.hpp"
#include "edgesplit/suites.hpp"
#include "edgesplit/system_sim.hpp"

namespace fs = std::filesystem;
using namespace edgesplit;

namespace {

ExperimentConfig base_config(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

int cmd_run(const std::string& config_path, std::vector<std::uint64_t> seeds, const fs::path& out) {
  ExperimentConfig config = load_config(config_path);
  if (seeds.empty()) {
    if (!config.seed) throw ConfigurationError("no seed: pass --seed or set [run] seed");
    seeds.push_back(*config.seed);
  }
  // Reject bad references before any simulation starts.
  for (std::uint64_t s : seeds) {
    ExperimentConfig c = config;
    c.seed = s;
    c.validate();
  }
  std::vector<MetricsRow> rows;
  std::vector<RunSummary> summaries;
  for (std::uint64_t s : seeds) {
    ExperimentConfig c = config;
    c.seed = s;
    RunResult r = run_experiment(c);
    std::printf("seed %llu: policy %s, mean latency %.1f ms, mean energy %.2f mJ, reward %.3f\n",
                static_cast<unsigned long long>(s), r.summary.policy.c_str(), r.summary.mean_latency_ms,
                r.summary.mean_energy_mj, r.summary.mean_reward);
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    summaries.push_back(std::move(r.summary));
  }
  write_text_atomic(out / "metrics.csv", metrics_csv(rows));
  write_text_atomic(out / "summary.csv", summary_csv(summaries));
  std::printf("wrote %s and %s\n", (out / "metrics.csv").c_str(), (out / "summary.csv").c_str());
  return 0;
}

int cmd_ablate(const std::string& suite, const std::string& config_path,
               const std::vector<std::uint64_t>& seeds, const fs::path& out) {
  ExperimentConfig base = base_config(config_path);
  auto prepared = [&](std::uint64_t s) {
    ExperimentConfig c = base;
    c.seed = s;
    return prepare_run(c);
  };
  if (suite == "theorems") {
    const std::uint64_t s = seeds.empty() ? 1 : seeds.front();
    const auto interp = interpolation_suite(s);
    const auto gap = sampling_gap_suite(s);
    write_text_atomic(out / "interpolation.csv", interpolation_csv(interp));
    write_text_atomic(out / "sampling_gap.csv", sampling_gap_csv(gap));
    std::printf("interpolation: %d graphs, %d violations; sampling gap slope %.3f\n", interp.graphs,
                interp.violations, gap.log_log_slope);
    return 0;
  }
  if (suite == "rl") {
    std::vector<StrategyRow> rows;
    for (std::uint64_t s : seeds) {
      const auto r = strategy_suite(prepared(s));
      rows.insert(rows.end(), r.begin(), r.end());
      std::printf("seed %llu done\n", static_cast<unsigned long long>(s));
    }
    write_text_atomic(out / "strategies.csv", strategy_csv(rows));
    return 0;
  }
  if (suite == "loss") {
    std::vector<LossRow> rows;
    std::string degradation = "seed,variant,degradation\n";
    for (std::uint64_t s : seeds) {
      const auto r = loss_suite(prepared(s), loss_variants(base.server));
      for (const auto& v : loss_variants(base.server)) {
        degradation += std::to_string(s) + "," + v.name + "," +
                       std::to_string(accuracy_degradation(r, v.name)) + "\n";
      }
      rows.insert(rows.end(), r.begin(), r.end());
      std::printf("seed %llu done\n", static_cast<unsigned long long>(s));
    }
    write_text_atomic(out / "loss.csv", loss_csv(rows));
    write_text_atomic(out / "loss_degradation.csv", degradation);
    return 0;
  }
  if (suite == "calibration") {
    std::vector<CalibrationReport> reports;
    for (std::uint64_t s : seeds) {
      ExperimentConfig c = base;
      c.seed = s;
      c.probe_frames = std::max(c.probe_frames, 1500);
      reports.push_back(calibration_suite(prepare_run(c)));
    }
    // A single-component memory has zero posterior entropy everywhere.
    ExperimentConfig flat = base;
    flat.seed = seeds.empty() ? 1 : seeds.front();
    flat.edge.gmm.num_components = 1;
    flat.edge.virtual_negatives = 0;
    const CalibrationReport constant = calibration_suite(prepare_run(flat));
    write_text_atomic(out / "calibration.csv", calibration_csv(reports));
    write_text_atomic(out / "calibration_constant.csv", calibration_csv({constant}));
    for (const auto& r : reports) {
      std::printf("seed %llu: correlation %s\n", static_cast<unsigned long long>(r.seed),
                  r.correlation ? std::to_string(*r.correlation).c_str() : "undefined");
    }
    return 0;
  }
  throw ConfigurationError("unknown suite '" + suite + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive split-computing experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Run the full pipeline and write metrics.csv and summary.csv");
  run->add_option("--config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seeds, "Seed, or comma-separated seed list")->delimiter(',');
  run->add_option("--out", out_dir, "Output directory")->required();

  std::string suite;
  std::string ablate_config;
  std::vector<std::uint64_t> ablate_seeds{1, 2, 3, 4, 5};
  std::string ablate_out;
  auto* ablate = app.add_subcommand("ablate", "Run a comparison suite");
  ablate->add_option("--suite", suite, "Suite to run")
      ->required()
      ->check(CLI::IsMember({"rl", "loss", "calibration", "theorems"}));
  ablate->add_option("--config", ablate_config, "Base INI configuration")->check(CLI::ExistingFile);
  ablate->add_option("--seeds", ablate_seeds, "Comma-separated seed list")->delimiter(',');
  ablate->add_option("--out", ablate_out, "Output directory")->required();

  auto* trace = app.add_subcommand("trace", "Network trace utilities");
  trace->require_subcommand(1);
  std::string kind;
  std::uint64_t trace_seed = 0;
  std::string trace_out;
  std::int64_t duration_ms = 60000;
  auto* gen = trace->add_subcommand("gen", "Generate a synthetic trace as CSV");
  gen->add_option("--kind", kind, "Trace profile")
      ->required()
      ->check(CLI::IsMember({"stable", "variable", "congested"}));
  gen->add_option("--seed", trace_seed, "Seed")->required();
  gen->add_option("--out", trace_out, "Output CSV path")->required();
  gen->add_option("--duration-ms", duration_ms, "Trace length in milliseconds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, seeds, out_dir);
    if (*ablate) return cmd_ablate(suite, ablate_config, ablate_seeds, ablate_out);
    if (*gen) {
      const NetworkTrace t = make_profile(parse_trace_kind(kind), trace_seed, duration_ms);
      write_text_atomic(trace_out, trace_to_csv(t));
      std::printf("wrote %zu points to %s\n", t.points.size(), trace_out.c_str());
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
