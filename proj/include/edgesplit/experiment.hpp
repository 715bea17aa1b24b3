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

// Experiment orchestration: run configuration, the per-frame split/cost
// simulation shared by training and evaluation, policy training and rule
// calibration, and the full edge-to-server pipeline with CSV output.

#ifndef EDGESPLIT_EXPERIMENT_HPP_
#define EDGESPLIT_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "edgesplit/control.hpp"
#include "edgesplit/edge_learner.hpp"
#include "edgesplit/server.hpp"
#include "edgesplit/stream.hpp"
#include "edgesplit/system_sim.hpp"

namespace edgesplit {

/// Decorrelated child seed for an independent random stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

enum class PolicyKind { kRl, kRule, kStatic, kEdgeOnly, kServerOnly };

PolicyKind parse_policy_kind(const std::string& name);
std::string to_string(PolicyKind kind);

struct ExperimentConfig {
  std::optional<std::uint64_t> seed;
  std::string scenario = "default";
  std::string platform = "pi4";
  std::string network = "congested";
  PolicyKind policy = PolicyKind::kRl;
  int static_k = 3;
  int frames = 3000;
  /// Edge learning before the measured run; also used to fit the accuracy
  /// table and to train the controller.
  int pretrain_frames = 1500;
  /// Extra uplink loss applied on top of the trace's loss.
  double drop_rate = 0.0;
  int probe_interval = 500;
  int probe_frames = 600;
  double cpu_mean = 0.3;
  double max_bandwidth_mbps = 50.0;

  SyntheticStreamSpec stream;
  EdgeLearnerConfig edge;

  RewardWeights reward;
  int t_step = 10;
  int cold_start_frames = 50;
  int policy_hidden = 32;
  PpoConfig ppo;
  /// Distinct training episodes, each replayed `train_passes` times.
  int train_episodes = 16;
  int train_passes = 8;
  int episode_frames = 2000;
  RuleThresholds rule;
  bool calibrate_rule = true;

  HybridLossConfig server;
  int buffer_capacity = 100;
  int refine_every = 10;
  double server_lr = 0.01;
  int t_sync = 100;
  double high_bandwidth_mbps = 20.0;

  /// Checks ranges and cross-references; throws ConfigurationError.
  void validate() const;
};

/// INI text with sections [run], [stream], [encoder], [gmm], [edge],
/// [control], [server]. Unknown sections or keys are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Expected accuracy of a frame by processing path and regime.
struct AccuracyTable {
  double edge_steady = 0.0;
  double edge_transient = 0.0;
  double server_steady = 0.0;
  double server_transient = 0.0;

  double lookup(bool on_server, bool transient) const;
};

/// Per-frame inputs of the control problem that do not depend on actions.
struct EnvFrame {
  double uncertainty = 0.0;
  bool transient = false;
};

struct EnvironmentSpec {
  PlatformProfile platform;
  EncoderConfig encoder;
  RewardWeights reward;
  AccuracyTable accuracy;
  int t_step = 10;
  int cold_start_frames = 50;
  double max_bandwidth_mbps = 50.0;
  double max_uncertainty = 1.0;
  double extra_drop_rate = 0.0;
  std::int64_t frame_ms = 10;
};

struct FrameOutcome {
  SplitAction action;
  FrameCost cost;
  double accuracy = 0.0;
  double reward = 0.0;
};

/// Quantisation decision for split k under the current bandwidth estimate.
SplitAction finalize_action(SplitAction action, const EnvironmentSpec& env, double ema_bandwidth_mbps,
                            const TracePoint& link);

/// Cost, accuracy proxy and reward of one frame. Dropped frames score zero
/// accuracy. `rng` decides drops.
FrameOutcome simulate_frame(const EnvironmentSpec& env, const SplitAction& action,
                            const TracePoint& link, double cpu_util, bool transient, Rng& rng);

/// Anything that maps an observed state to a split at decision boundaries.
struct Controller {
  PolicyKind kind = PolicyKind::kEdgeOnly;
  const PolicyParams* policy = nullptr;  // kRl
  RuleThresholds thresholds;             // kRule
  int static_k = 0;                      // kStatic
  SelectMode mode = SelectMode::kGreedy;
};

struct Decision {
  SplitAction action;
  int action_index = 0;
  double log_prob = 0.0;
  double value = 0.0;
  bool learnable = false;  // produced by the policy (not cold start)
};

Decision decide(const Controller& controller, const SystemState& state, int num_blocks,
                std::int64_t frame_index, int cold_start_frames, Rng& rng);

struct EpisodeInputs {
  std::vector<EnvFrame> frames;
  NetworkTrace trace;
  std::vector<double> cpu;
};

struct EpisodeResult {
  std::vector<FrameOutcome> outcomes;
  std::vector<Transition> transitions;
  double mean_reward = 0.0;
};

/// Runs a controller over the inputs; transitions carry the block-mean reward.
EpisodeResult run_episode(const EnvironmentSpec& env, const Controller& controller,
                          const EpisodeInputs& inputs, std::uint64_t seed);

struct TrainingReport {
  std::vector<double> episode_rewards;
};

PolicyParams train_policy(const EnvironmentSpec& env, const std::vector<EpisodeInputs>& episodes,
                          int hidden_width, const PpoConfig& ppo, int passes, std::uint64_t seed,
                          TrainingReport* report = nullptr);

/// Grid search over (bw_min, cpu_max) maximising mean episode reward.
RuleThresholds calibrate_rule_thresholds(const EnvironmentSpec& env,
                                         const std::vector<EpisodeInputs>& episodes,
                                         std::uint64_t seed);

/// Milliseconds from the start of the largest bandwidth collapse until the
/// latency stays at or under t_max for `hold_frames` consecutive frames.
/// Empty when the trace has no collapse or latency never settles.
std::optional<double> adaptation_time_ms(const std::vector<double>& latency_ms,
                                         const NetworkTrace& trace, double t_max_ms,
                                         std::int64_t frame_ms = 10, int hold_frames = 50);

struct MetricsRow {
  std::int64_t seed = 0;
  std::int64_t frame = 0;
  std::int64_t t_ms = 0;
  int k = 0;
  bool quantized = false;
  double uncertainty = 0.0;
  double cpu = 0.0;
  double bandwidth_mbps = 0.0;
  double ema_bandwidth_mbps = 0.0;
  double edge_ms = 0.0;
  double tx_ms = 0.0;
  double server_ms = 0.0;
  double latency_ms = 0.0;
  double energy_mj = 0.0;
  double compute_mj = 0.0;
  double radio_mj = 0.0;
  double sync_mj = 0.0;
  std::size_t tx_bytes = 0;
  std::size_t sync_bytes = 0;
  bool dropped = false;
  double accuracy_proxy = 0.0;
  double reward = 0.0;
  double swd_to_uniform = 0.0;
  double dirichlet_energy = 0.0;
  std::optional<double> probe_accuracy;
};

struct RunSummary {
  std::uint64_t seed = 0;
  std::string policy;
  std::string network;
  std::int64_t frames = 0;
  double mean_latency_ms = 0.0;
  double p95_latency_ms = 0.0;
  double mean_energy_mj = 0.0;
  double mean_reward = 0.0;
  double mean_k = 0.0;
  double drop_fraction = 0.0;
  double quantized_fraction = 0.0;
  std::size_t total_tx_bytes = 0;
  double tx_bytes_per_batch = 0.0;  // per uplink batch of 8 frames
  std::size_t total_sync_bytes = 0;
  double battery_hours = 0.0;
  std::optional<double> adaptation_ms;
  double final_probe_accuracy = 0.0;
  double final_swd = 0.0;
  double final_dirichlet = 0.0;
  AccuracyTable accuracy;
};

struct RunResult {
  std::vector<MetricsRow> rows;
  RunSummary summary;
};

/// Everything a run needs before its measured frames: a pre-trained edge
/// learner, the fitted accuracy table and the controller inputs.
struct PreparedRun {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::vector<StreamFrame> pretrain_stream;
  std::vector<StreamFrame> run_stream;
  std::vector<StreamFrame> probe_stream;
  EncoderState encoder;
  GmmState gmm;
  ServerModel server;
  AccuracyTable accuracy;
  EnvironmentSpec env;
};

/// Edge prefix up to split k followed by the server's blocks from k on.
DenseMatrix server_path_embeddings(const EncoderState& edge, const LayerStack& server_blocks,
                                   const std::vector<StreamFrame>& frames, int k);

PreparedRun prepare_run(const ExperimentConfig& config);

/// Per-frame inputs of a fresh stream scored by the prepared (frozen) edge
/// model.
std::vector<EnvFrame> score_stream(const PreparedRun& prep, const std::vector<StreamFrame>& frames);

/// Training episodes drawn from variable and congested traces.
std::vector<EpisodeInputs> make_training_episodes(const PreparedRun& prep, int count,
                                                  std::uint64_t seed);

/// Controller for the configured policy: trains PPO or calibrates the rule
/// when asked to. The returned controller points into `policy_storage`.
Controller make_controller(const PreparedRun& prep, PolicyParams& policy_storage);

RunResult run_experiment(const ExperimentConfig& config);
/// Same pipeline from an already prepared run.
RunResult run_prepared(const PreparedRun& prep, const Controller& controller);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string summary_csv(const std::vector<RunSummary>& runs);
/// Writes through a temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace edgesplit

#endif  // EDGESPLIT_EXPERIMENT_HPP_
