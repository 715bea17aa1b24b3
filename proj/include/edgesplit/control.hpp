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

// Control plane for split selection: the normalised MDP state, a shared-trunk
// actor-critic network, PPO with generalised advantage estimation, the reward
// and the static and threshold baselines.

#ifndef EDGESPLIT_CONTROL_HPP_
#define EDGESPLIT_CONTROL_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "edgesplit/numerics.hpp"

namespace edgesplit {

struct SystemState {
  double uncertainty_norm = 0.0;
  double cpu_util = 0.0;
  double bandwidth_norm = 0.0;

  Vector as_vector() const { return {uncertainty_norm, cpu_util, bandwidth_norm}; }
};

struct SplitAction {
  int k = 0;
  bool quantize = false;

  bool operator==(const SplitAction&) const = default;
};

struct RewardWeights {
  double alpha = 10.0;
  double beta = 5.0;
  double eta = 3.0;
  double t_max_ms = 500.0;
  double e_budget_mj = 150.0;

  void validate() const;
};

/// Normalises raw measurements into [0, 1]^3. `max_uncertainty` is ln C.
SystemState observe(double uncertainty, double max_uncertainty, double cpu_pct,
                    double ema_bandwidth_mbps, double max_bandwidth_mbps);

/// r = alpha A - beta Lat/T_max - eta E/E_budget
double compute_reward(double accuracy, double latency_ms, double energy_mj,
                      const RewardWeights& weights);

/// Actor-critic with one shared tanh layer feeding a softmax head over the
/// split choices and a scalar value head.
struct PolicyParams {
  DenseLayer shared;       // hidden x 3
  DenseLayer policy_head;  // actions x hidden
  DenseLayer value_head;   // 1 x hidden

  int num_actions() const { return static_cast<int>(policy_head.out_dim()); }
  int hidden_width() const { return static_cast<int>(shared.out_dim()); }
  std::size_t parameter_count() const;
  Vector flatten() const;
  void assign(std::span<const double> flat);
};

/// `num_actions` is L + 1 for split control. Heads start at zero so the
/// initial policy is uniform and the value is zero.
PolicyParams make_policy(int num_actions, int hidden_width, Rng& rng);

struct PolicyOutput {
  Vector hidden;
  Vector logits;
  Vector probs;
  Vector log_probs;
  double value = 0.0;
};

PolicyOutput policy_forward(const PolicyParams& params, const SystemState& state);

/// d log pi(action | state) / d params, flattened in PolicyParams::flatten order.
Vector log_prob_gradient(const PolicyParams& params, const SystemState& state, int action);

enum class SelectMode { kSample, kGreedy };

struct ActionChoice {
  SplitAction action;
  double log_prob = 0.0;
  double value = 0.0;
  bool cold_start = false;
};

/// Chooses the split for the next decision block. Frames before
/// `cold_start_frames` always get k = L (local processing).
ActionChoice select_action(const PolicyParams& params, const SystemState& state, SelectMode mode,
                           Rng& rng, std::int64_t frame_index, int cold_start_frames = 50);

struct Transition {
  SystemState state;
  int action = 0;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
};

struct PpoConfig {
  double gamma = 0.99;
  double clip = 0.2;
  double gae_lambda = 0.95;
  int epochs = 4;
  double lr = 3e-3;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;

  void validate() const;
};

/// Adam moments over the flattened policy parameters.
struct PpoOptimizer {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step = 0;
};

struct PpoDiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  std::vector<double> advantages;  // after normalisation
  std::vector<double> final_ratios;
};

/// Generalised advantage estimates and bootstrapped returns.
void compute_gae(const std::vector<Transition>& trajectory, double gamma, double lambda,
                 double bootstrap_value, Vector& advantages, Vector& returns);

PpoDiagnostics ppo_update(PolicyParams& params, PpoOptimizer& optimizer,
                          const std::vector<Transition>& trajectory, const PpoConfig& config,
                          double bootstrap_value = 0.0);

struct RuleThresholds {
  double bw_min = 0.5;   // normalised bandwidth
  double cpu_max = 0.5;  // normalised CPU load
};

/// Offload everything (k = 0) when bandwidth > bw_min and cpu < cpu_max,
/// otherwise stay local (k = L). Equality does not offload.
SplitAction rule_based_action(const SystemState& state, const RuleThresholds& thresholds,
                              int num_blocks);

SplitAction static_action(int k_fixed, int num_blocks);

/// INT8 is enabled whenever the split offloads (k < L) and the fp32 payload
/// would take longer than half the latency budget on the estimated link.
SplitAction couple_quantization(SplitAction action, int num_blocks, double fp32_tx_ms,
                                double t_max_ms);

/// Holds the active split between decision boundaries. Changing it anywhere
/// else raises InvalidStateError.
class AtomicSwitch {
 public:
  explicit AtomicSwitch(int t_step, SplitAction initial);

  bool is_boundary(std::int64_t frame_index) const { return frame_index % t_step_ == 0; }
  void commit(std::int64_t frame_index, SplitAction action);
  const SplitAction& active() const { return active_; }
  int t_step() const { return t_step_; }

 private:
  int t_step_;
  SplitAction active_;
};

/// Checkpoint layout: "ESPL" magic, u32 version, u32 input width, u32 hidden
/// width, u32 action count, then every parameter as a little-endian double in
/// PolicyParams::flatten order.
std::vector<std::uint8_t> serialize_policy(const PolicyParams& params);
PolicyParams deserialize_policy(std::span<const std::uint8_t> bytes);
void save_policy(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_policy(const std::filesystem::path& path);

}  // namespace edgesplit

#endif  // EDGESPLIT_CONTROL_HPP_
