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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "edgesplit/error.hpp"
#include "edgesplit/experiment.hpp"

using namespace edgesplit;

namespace {

// Small network and stream so full pipeline runs take about a second.
const char* kSmallIni = R"(
[run]
seed = 3
network = stable
frames = 240
pretrain_frames = 120
probe_frames = 80
probe_interval = 100

[stream]
input_dim = 32
num_classes = 4
min_segment_frames = 5
max_segment_frames = 15

[encoder]
hidden_dim = 32
embed_dim = 16

[gmm]
num_components = 8
warmup_frames = 20

[edge]
virtual_negatives = 32
mask_width = 4

[control]
train_episodes = 2
train_passes = 2
episode_frames = 1000

[server]
buffer_capacity = 40
)";

ExperimentConfig small(PolicyKind policy, const std::string& network = "stable", int frames = 240) {
  ExperimentConfig cfg = parse_config(kSmallIni);
  cfg.policy = policy;
  cfg.network = network;
  cfg.frames = frames;
  return cfg;
}

EnvironmentSpec pi_env() {
  EnvironmentSpec env;
  env.platform = pi_like_profile();
  env.accuracy = AccuracyTable{0.9, 0.7, 0.95, 0.85};
  return env;
}

}  // namespace

TEST_CASE("config parsing fills defaults and applies keys") {
  const ExperimentConfig d = parse_config("");
  CHECK_FALSE(d.seed.has_value());
  CHECK(d.policy == PolicyKind::kRl);
  CHECK(d.frames == 3000);
  CHECK(d.edge.gmm.num_components == 64);
  CHECK(d.reward.alpha == 10.0);
  CHECK(d.server.lambda1 == 0.1);
  CHECK_THROWS_AS(d.validate(), ConfigurationError);

  const ExperimentConfig c = parse_config(
      "[run]\nseed = 9\npolicy = static\nstatic_k = 2\n[encoder]\nembed_dim = 32\n"
      "[stream]\ninput_dim = 64\nnum_classes = 6\n[server]\ntask = cross-entropy\n");
  CHECK(*c.seed == 9);
  CHECK(c.policy == PolicyKind::kStatic);
  CHECK(c.static_k == 2);
  CHECK(c.edge.gmm.dim == 32);
  CHECK(c.edge.encoder.input_dim == 64);
  CHECK(c.server.num_classes == 6);
  CHECK(c.server.task == TaskLoss::kCrossEntropy);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("scenario presets apply before explicit keys") {
  const ExperimentConfig q = parse_config("[run]\nscenario = quick\nframes = 1500\n");
  CHECK(q.frames == 1500);
  CHECK(q.pretrain_frames == 300);
  CHECK_THROWS_AS(parse_config("[run]\nscenario = huge\n"), ConfigurationError);
}

TEST_CASE("config errors are reported up front") {
  CHECK_THROWS_AS(parse_config("[nope]\nx = 1\n"), ConfigurationError);
  CHECK_THROWS_AS(parse_config("[run]\nfrobnicate = 1\n"), ConfigurationError);
  CHECK_THROWS_AS(parse_config("[run]\nframes = ten\n"), ConfigurationError);
  CHECK_THROWS_AS(parse_config("[run]\nseed = -1\n"), ConfigurationError);
  CHECK_THROWS_AS(parse_config("[run]\npolicy = greedy\n"), ConfigurationError);
  CHECK_THROWS_AS(parse_config("[edge]\nin_batch_negatives = maybe\n"), ConfigurationError);

  auto with = [](const std::string& text) { return parse_config("[run]\nseed = 1\n" + text); };
  CHECK_THROWS_AS(parse_config("[run]\nseed = 1\nplatform = toaster\n").validate(), ConfigurationError);
  CHECK_THROWS_AS(parse_config("[run]\nseed = 1\nnetwork = dialup\n").validate(), ConfigurationError);
  CHECK_THROWS_AS(parse_config("[run]\nseed = 1\npolicy = static\nstatic_k = 9\n").validate(),
                  ConfigurationError);
  CHECK_THROWS_AS(parse_config("[run]\nseed = 1\nframes = 500\n").validate(), ConfigurationError);
  CHECK_THROWS_AS(with("[stream]\nsteady_fraction = 0.7\n").validate(), ConfigurationError);
  CHECK_THROWS_AS(prepare_run(parse_config("[run]\nplatform = toaster\n")), ConfigurationError);
}

TEST_CASE("load_config reads files") {
  const auto path = std::filesystem::temp_directory_path() / "edgesplit_cfg_test.ini";
  {
    std::ofstream out(path);
    out << "[run]\nseed = 12\nnetwork = variable\n";
  }
  const ExperimentConfig c = load_config(path);
  CHECK(*c.seed == 12);
  CHECK(c.network == "variable");
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path), ConfigurationError);
}

TEST_CASE("quantisation is coupled to the estimated link") {
  const EnvironmentSpec env = pi_env();
  const TracePoint fast{0, 40.0, 20.0, 0.0};
  CHECK(finalize_action({8, true}, env, 40.0, fast) == SplitAction{8, false});
  CHECK(finalize_action({3, false}, env, 40.0, fast) == SplitAction{3, false});
  // 8 x 512 B at 0.05 Mbps is far beyond half the budget.
  CHECK(finalize_action({3, false}, env, 0.05, fast) == SplitAction{3, true});
}

TEST_CASE("simulate_frame keeps the cost identities") {
  EnvironmentSpec env = pi_env();
  Rng rng(4);
  const TracePoint link{0, 20.0, 40.0, 0.0};
  for (int k = 0; k <= 8; ++k) {
    const FrameOutcome o = simulate_frame(env, {k, false}, link, 0.3, k % 2 == 0, rng);
    CHECK(o.cost.latency_ms() == o.cost.edge_ms + o.cost.tx_ms + o.cost.server_ms);
    CHECK(o.cost.energy_mj == o.cost.compute_energy_mj + o.cost.radio_energy_mj + o.cost.sync_energy_mj);
    CHECK(o.accuracy == env.accuracy.lookup(k < 8, k % 2 == 0));
    CHECK(o.reward == compute_reward(o.accuracy, o.cost.latency_ms(), o.cost.energy_mj, env.reward));
  }
  env.extra_drop_rate = 0.5;
  int dropped = 0;
  for (int i = 0; i < 2000; ++i) {
    const FrameOutcome o = simulate_frame(env, {1, false}, link, 0.0, false, rng);
    if (o.cost.dropped) {
      ++dropped;
      CHECK(o.accuracy == 0.0);
      CHECK(o.cost.server_ms == 0.0);
    }
  }
  CHECK(std::abs(dropped / 2000.0 - 0.5) < 0.05);
  const FrameOutcome local = simulate_frame(env, {8, false}, link, 0.0, false, rng);
  CHECK_FALSE(local.cost.dropped);
}

TEST_CASE("fixed controllers over an episode") {
  const EnvironmentSpec env = pi_env();
  EpisodeInputs in;
  in.frames.assign(200, EnvFrame{0.5, false});
  in.cpu.assign(200, 0.3);
  in.trace = make_profile(TraceKind::kStable, 2, 2000);

  Controller server{PolicyKind::kServerOnly};
  const EpisodeResult s = run_episode(env, server, in, 1);
  std::size_t batch = 0;
  for (int f = 0; f < 8; ++f) batch += s.outcomes[static_cast<std::size_t>(f)].cost.tx_bytes;
  CHECK(batch == 262144);
  CHECK(s.transitions.empty());

  Controller edge{PolicyKind::kEdgeOnly};
  for (const auto& o : run_episode(env, edge, in, 1).outcomes) CHECK(o.cost.tx_bytes == 0);

  // Cold start keeps the rule local even when it would offload.
  Controller rule{PolicyKind::kRule, nullptr, RuleThresholds{0.05, 1.0}};
  const EpisodeResult r = run_episode(env, rule, in, 1);
  CHECK(r.outcomes[49].action.k == 8);
  CHECK(r.outcomes[50].action.k == 0);
}

TEST_CASE("policy episodes emit one transition per learnable decision") {
  const EnvironmentSpec env = pi_env();
  EpisodeInputs in;
  in.frames.assign(205, EnvFrame{0.2, true});
  in.cpu.assign(205, 0.1);
  in.trace = make_profile(TraceKind::kVariable, 3, 2050);
  Rng rng(1);
  const PolicyParams policy = make_policy(9, 8, rng);
  Controller c{PolicyKind::kRl, &policy, {}, 0, SelectMode::kSample};
  const EpisodeResult r = run_episode(env, c, in, 7);
  // Decisions at 0, 10, ..., 200; the first five fall inside the cold start.
  CHECK(r.transitions.size() == 16);
  CHECK(r.transitions.back().done);
  double block = 0.0;
  for (int f = 50; f < 60; ++f) block += r.outcomes[static_cast<std::size_t>(f)].reward;
  CHECK(r.transitions.front().reward == doctest::Approx(block / 10.0).epsilon(1e-12));
  // The last block holds five frames.
  double tail = 0.0;
  for (int f = 200; f < 205; ++f) tail += r.outcomes[static_cast<std::size_t>(f)].reward;
  CHECK(r.transitions.back().reward == doctest::Approx(tail / 5.0).epsilon(1e-12));
  const EpisodeResult again = run_episode(env, c, in, 7);
  CHECK(again.mean_reward == r.mean_reward);
}

TEST_CASE("adaptation time counts frames from the collapse until latency settles") {
  NetworkTrace trace;
  trace.points = {{0, 20.0, 30.0, 0.0}, {1000, 1.0, 150.0, 0.0}, {3000, 20.0, 30.0, 0.0}};
  std::vector<double> latency(500, 100.0);
  for (int f = 100; f < 130; ++f) latency[static_cast<std::size_t>(f)] = 900.0;
  CHECK(*adaptation_time_ms(latency, trace, 500.0) == 300.0);
  CHECK(*adaptation_time_ms(std::vector<double>(500, 100.0), trace, 500.0) == 0.0);
  // A brief dip under the budget does not count as settled.
  latency[140] = 900.0;
  CHECK(*adaptation_time_ms(latency, trace, 500.0) == 410.0);
  CHECK_FALSE(adaptation_time_ms(std::vector<double>(500, 900.0), trace, 500.0).has_value());
  NetworkTrace flat;
  flat.points = {{0, 20.0, 30.0, 0.0}};
  CHECK_FALSE(adaptation_time_ms(latency, flat, 500.0).has_value());
}

TEST_CASE("rule calibration returns grid thresholds") {
  const EnvironmentSpec env = pi_env();
  EpisodeInputs in;
  in.frames.assign(300, EnvFrame{0.5, false});
  in.cpu.assign(300, 0.3);
  in.trace = make_profile(TraceKind::kStable, 5, 3000);
  const RuleThresholds t = calibrate_rule_thresholds(env, {in}, 1);
  CHECK(t.bw_min > 0.0);
  CHECK(t.bw_min <= 1.0);
  CHECK(t.cpu_max > 0.0);
  CHECK(t.cpu_max <= 1.0);
  CHECK(std::abs(t.bw_min * 20.0 - std::round(t.bw_min * 20.0)) < 1e-9);
}

TEST_CASE("server-only and edge-only pipeline runs") {
  const RunResult s = run_experiment(small(PolicyKind::kServerOnly));
  REQUIRE(s.rows.size() == 240);
  std::size_t batch = 0;
  for (int f = 0; f < 8; ++f) batch += s.rows[static_cast<std::size_t>(f)].tx_bytes;
  CHECK(batch == 262144);
  CHECK(s.summary.tx_bytes_per_batch == 262144.0);
  CHECK(s.summary.mean_k == 0.0);
  CHECK_FALSE(s.summary.adaptation_ms.has_value());

  const RunResult e = run_experiment(small(PolicyKind::kEdgeOnly));
  std::size_t sync = 0;
  for (const auto& r : e.rows) {
    CHECK(r.tx_bytes == 0);
    sync += r.sync_bytes;
  }
  CHECK(sync > 0);
  CHECK(e.summary.total_sync_bytes == sync);
  CHECK(e.summary.mean_energy_mj == doctest::Approx(67.4));
}

TEST_CASE("pipeline rows satisfy the accounting identities") {
  const RunResult r = run_experiment(small(PolicyKind::kRl));
  REQUIRE(r.rows.size() == 240);
  int probes = 0;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const MetricsRow& row = r.rows[i];
    CHECK(row.frame == static_cast<std::int64_t>(i));
    CHECK(row.t_ms == row.frame * 10);
    CHECK(row.latency_ms == row.edge_ms + row.tx_ms + row.server_ms);
    CHECK(row.energy_mj == row.compute_mj + row.radio_mj + row.sync_mj);
    CHECK(row.k >= 0);
    CHECK(row.k <= 8);
    if (i < 50) CHECK(row.k == 8);
    if (i % 10 != 0 && i > 0) CHECK(row.k == r.rows[i - 1].k);
    if (row.probe_accuracy) ++probes;
  }
  CHECK(probes == 3);  // frames 99, 199 and the last one
  CHECK(r.summary.frames == 240);
}

TEST_CASE("identical config and seed give identical metrics bytes") {
  const ExperimentConfig cfg = small(PolicyKind::kRl, "congested", 1000);
  const std::string a = metrics_csv(run_experiment(cfg).rows);
  const std::string b = metrics_csv(run_experiment(cfg).rows);
  CHECK(a == b);
  ExperimentConfig other = cfg;
  other.seed = 4;
  CHECK(metrics_csv(run_experiment(other).rows) != a);
}

TEST_CASE("csv writers") {
  MetricsRow row;
  row.latency_ms = 0.1 + 0.2;
  const std::string csv = metrics_csv({row, row});
  std::istringstream in(csv);
  std::string header, line;
  std::getline(in, header);
  CHECK(header.rfind("seed,frame,t_ms,k,", 0) == 0);
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.back() == ',');  // no probe value on this row
    CHECK(line.find("0.30000000000000004") != std::string::npos);
  }
  CHECK(lines == 2);

  RunSummary a, b;
  a.seed = 1;
  b.seed = 2;
  a.mean_energy_mj = 60.0;
  b.mean_energy_mj = 80.0;
  a.adaptation_ms = 100.0;
  const std::string s = summary_csv({a, b});
  CHECK(s.find("\nmean,") != std::string::npos);
  CHECK(s.find("\nstd,") != std::string::npos);
  CHECK(s.find(",70,") != std::string::npos);
  CHECK(summary_csv({a}).find("mean,") == std::string::npos);

  const auto path = std::filesystem::temp_directory_path() / "edgesplit_out_test" / "x.csv";
  write_text_atomic(path, "hello\n");
  std::ifstream back(path);
  std::string got;
  std::getline(back, got);
  CHECK(got == "hello");
  CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove_all(path.parent_path());
}
