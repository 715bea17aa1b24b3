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

#include "edgesplit/control.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "edgesplit/bytes.hpp"
#include "edgesplit/error.hpp"

namespace edgesplit {

void RewardWeights::validate() const {
  if (!(alpha > 0 && beta > 0 && eta > 0 && t_max_ms > 0 && e_budget_mj > 0)) {
    throw ConfigurationError("reward weights and budgets must be positive");
  }
}

SystemState observe(double uncertainty, double max_uncertainty, double cpu_pct,
                    double ema_bandwidth_mbps, double max_bandwidth_mbps) {
  if (!(max_uncertainty > 0.0) || !(max_bandwidth_mbps > 0.0)) {
    throw ConfigurationError("observe: normalisers must be positive");
  }
  SystemState s;
  s.uncertainty_norm = std::clamp(uncertainty / max_uncertainty, 0.0, 1.0);
  s.cpu_util = std::clamp(cpu_pct / 100.0, 0.0, 1.0);
  s.bandwidth_norm = std::clamp(ema_bandwidth_mbps / max_bandwidth_mbps, 0.0, 1.0);
  return s;
}

double compute_reward(double accuracy, double latency_ms, double energy_mj,
                      const RewardWeights& w) {
  return w.alpha * accuracy - w.beta * (latency_ms / w.t_max_ms) -
         w.eta * (energy_mj / w.e_budget_mj);
}

std::size_t PolicyParams::parameter_count() const {
  const std::vector<DenseLayer> layers{shared, policy_head, value_head};
  return edgesplit::parameter_count(layers);
}

Vector PolicyParams::flatten() const {
  const std::vector<DenseLayer> layers{shared, policy_head, value_head};
  return flatten_parameters(layers);
}

void PolicyParams::assign(std::span<const double> flat) {
  std::vector<DenseLayer> layers{shared, policy_head, value_head};
  assign_parameters(layers, flat);
  shared = std::move(layers[0]);
  policy_head = std::move(layers[1]);
  value_head = std::move(layers[2]);
}

PolicyParams make_policy(int num_actions, int hidden_width, Rng& rng) {
  if (num_actions < 2) throw ConfigurationError("policy needs at least two actions");
  if (hidden_width < 1) throw ConfigurationError("policy hidden width must be >= 1");
  PolicyParams p;
  p.shared = make_dense_layer(3, static_cast<std::size_t>(hidden_width), Activation::kTanh, rng);
  p.policy_head = DenseLayer{DenseMatrix(static_cast<std::size_t>(num_actions),
                                         static_cast<std::size_t>(hidden_width)),
                             Vector(static_cast<std::size_t>(num_actions), 0.0),
                             Activation::kLinear};
  p.value_head = DenseLayer{DenseMatrix(1, static_cast<std::size_t>(hidden_width)), Vector(1, 0.0),
                            Activation::kLinear};
  return p;
}

PolicyOutput policy_forward(const PolicyParams& params, const SystemState& state) {
  PolicyOutput out;
  const Vector s = state.as_vector();
  const std::vector<DenseLayer> trunk{params.shared};
  out.hidden = mlp_forward(trunk, s).output;
  const std::vector<DenseLayer> head{params.policy_head};
  out.logits = mlp_forward(head, out.hidden).output;
  const std::vector<DenseLayer> critic{params.value_head};
  out.value = mlp_forward(critic, out.hidden).output[0];
  const double lse = log_sum_exp(out.logits);
  out.log_probs.resize(out.logits.size());
  out.probs.resize(out.logits.size());
  for (std::size_t a = 0; a < out.logits.size(); ++a) {
    out.log_probs[a] = out.logits[a] - lse;
    out.probs[a] = std::exp(out.log_probs[a]);
  }
  return out;
}

namespace {

// Gradient of (d_logits . logits + d_value * value) w.r.t. the flattened
// parameters.
Vector backprop_heads(const PolicyParams& params, const SystemState& state,
                      const PolicyOutput& out, const Vector& d_logits, double d_value) {
  const std::size_t H = out.hidden.size();
  const std::size_t A = out.logits.size();
  const Vector s = state.as_vector();
  Vector d_hidden(H, 0.0);
  LayerGradient g_policy{DenseMatrix(A, H), Vector(A, 0.0)};
  LayerGradient g_value{DenseMatrix(1, H), Vector(1, 0.0)};
  for (std::size_t a = 0; a < A; ++a) {
    g_policy.bias[a] = d_logits[a];
    for (std::size_t h = 0; h < H; ++h) {
      g_policy.weights(a, h) = d_logits[a] * out.hidden[h];
      d_hidden[h] += d_logits[a] * params.policy_head.weights(a, h);
    }
  }
  g_value.bias[0] = d_value;
  for (std::size_t h = 0; h < H; ++h) {
    g_value.weights(0, h) = d_value * out.hidden[h];
    d_hidden[h] += d_value * params.value_head.weights(0, h);
  }
  LayerGradient g_shared{DenseMatrix(H, s.size()), Vector(H, 0.0)};
  for (std::size_t h = 0; h < H; ++h) {
    const double pre = d_hidden[h] * (1.0 - out.hidden[h] * out.hidden[h]);
    g_shared.bias[h] = pre;
    for (std::size_t i = 0; i < s.size(); ++i) g_shared.weights(h, i) = pre * s[i];
  }
  return flatten_gradient({g_shared, g_policy, g_value});
}

void check_action(const PolicyParams& params, int action) {
  if (action < 0 || action >= params.num_actions()) {
    throw ConfigurationError("action " + std::to_string(action) + " outside the policy's range");
  }
}

}  // namespace

Vector log_prob_gradient(const PolicyParams& params, const SystemState& state, int action) {
  check_action(params, action);
  const PolicyOutput out = policy_forward(params, state);
  Vector d_logits(out.probs.size());
  for (std::size_t a = 0; a < d_logits.size(); ++a) {
    d_logits[a] = (static_cast<int>(a) == action ? 1.0 : 0.0) - out.probs[a];
  }
  return backprop_heads(params, state, out, d_logits, 0.0);
}

ActionChoice select_action(const PolicyParams& params, const SystemState& state, SelectMode mode,
                           Rng& rng, std::int64_t frame_index, int cold_start_frames) {
  const PolicyOutput out = policy_forward(params, state);
  ActionChoice choice;
  choice.value = out.value;
  int a = 0;
  if (frame_index < cold_start_frames) {
    a = params.num_actions() - 1;
    choice.cold_start = true;
  } else if (mode == SelectMode::kGreedy) {
    a = static_cast<int>(std::max_element(out.probs.begin(), out.probs.end()) - out.probs.begin());
  } else {
    a = static_cast<int>(rng.categorical(out.probs));
  }
  choice.action.k = a;
  choice.log_prob = out.log_probs[static_cast<std::size_t>(a)];
  return choice;
}

void PpoConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw ConfigurationError("ppo: gamma and lambda must lie in [0, 1]");
  }
  if (!(clip > 0.0) || epochs < 1 || !(lr >= 0.0)) {
    throw ConfigurationError("ppo: clip must be positive, epochs >= 1, lr >= 0");
  }
}

void compute_gae(const std::vector<Transition>& trajectory, double gamma, double lambda,
                 double bootstrap_value, Vector& advantages, Vector& returns) {
  const std::size_t n = trajectory.size();
  advantages.assign(n, 0.0);
  returns.assign(n, 0.0);
  double next_value = bootstrap_value;
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const Transition& t = trajectory[i];
    const double mask = t.done ? 0.0 : 1.0;
    const double delta = t.reward + gamma * next_value * mask - t.value;
    running = delta + gamma * lambda * mask * running;
    advantages[i] = running;
    returns[i] = running + t.value;
    next_value = t.value;
  }
}

PpoDiagnostics ppo_update(PolicyParams& params, PpoOptimizer& opt,
                          const std::vector<Transition>& trajectory, const PpoConfig& config,
                          double bootstrap_value) {
  config.validate();
  if (trajectory.empty()) throw ConfigurationError("ppo_update: empty trajectory");
  for (const auto& t : trajectory) {
    check_action(params, t.action);
    if (!std::isfinite(t.reward)) throw TrainingDivergenceError("ppo_update: non-finite reward");
  }
  Vector adv, ret;
  compute_gae(trajectory, config.gamma, config.gae_lambda, bootstrap_value, adv, ret);
  if (adv.size() > 1) {
    const double m = mean(adv);
    const double sd = stddev(adv);
    for (double& a : adv) a = sd > 1e-12 ? (a - m) / (sd + 1e-8) : 0.0;
  }

  const std::size_t P = params.parameter_count();
  if (opt.first_moment.size() != P) {
    opt.first_moment.assign(P, 0.0);
    opt.second_moment.assign(P, 0.0);
    opt.step = 0;
  }
  const double n = static_cast<double>(trajectory.size());
  PpoDiagnostics diag;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Vector grad(P, 0.0);
    double policy_loss = 0.0, value_loss = 0.0, ent = 0.0;
    int clipped = 0;
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
      const Transition& t = trajectory[i];
      const PolicyOutput out = policy_forward(params, t.state);
      const auto a = static_cast<std::size_t>(t.action);
      const double ratio = std::exp(out.log_probs[a] - t.log_prob);
      const double clipped_ratio = std::clamp(ratio, 1.0 - config.clip, 1.0 + config.clip);
      const double unclipped_obj = ratio * adv[i];
      const double clipped_obj = clipped_ratio * adv[i];
      const bool use_unclipped = unclipped_obj <= clipped_obj;
      if (!use_unclipped) ++clipped;
      policy_loss -= std::min(unclipped_obj, clipped_obj) / n;
      const double v_err = out.value - ret[i];
      value_loss += v_err * v_err / n;
      double h = 0.0;
      for (std::size_t c = 0; c < out.probs.size(); ++c) h -= out.probs[c] * out.log_probs[c];
      ent += h / n;

      // Loss = -surrogate + c_v (V - R)^2 - c_e H, averaged over samples.
      Vector d_logits(out.probs.size(), 0.0);
      if (use_unclipped && adv[i] != 0.0) {
        const double coeff = -ratio * adv[i] / n;  // d loss / d log pi(a)
        for (std::size_t c = 0; c < d_logits.size(); ++c) {
          d_logits[c] += coeff * ((c == a ? 1.0 : 0.0) - out.probs[c]);
        }
      }
      if (config.entropy_coef != 0.0) {
        for (std::size_t c = 0; c < d_logits.size(); ++c) {
          const double dh = -out.probs[c] * (out.log_probs[c] + h);
          d_logits[c] -= config.entropy_coef * dh / n;
        }
      }
      const double d_value = config.value_coef * 2.0 * v_err / n;
      const Vector g = backprop_heads(params, t.state, out, d_logits, d_value);
      for (std::size_t p = 0; p < P; ++p) grad[p] += g[p];
    }
    const double total_loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * ent;
    if (!std::isfinite(total_loss)) throw TrainingDivergenceError("ppo_update: non-finite loss");
    for (double g : grad)
      if (!std::isfinite(g)) throw TrainingDivergenceError("ppo_update: non-finite gradient");
    if (config.max_grad_norm > 0.0) {
      const double gn = norm(grad);
      if (gn > config.max_grad_norm)
        for (double& g : grad) g *= config.max_grad_norm / gn;
    }
    diag.policy_loss = policy_loss;
    diag.value_loss = value_loss;
    diag.entropy = ent;
    diag.clip_fraction = clipped / n;

    // Adam on the flattened parameters.
    ++opt.step;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
    Vector theta = params.flatten();
    for (std::size_t p = 0; p < P; ++p) {
      opt.first_moment[p] = b1 * opt.first_moment[p] + (1 - b1) * grad[p];
      opt.second_moment[p] = b2 * opt.second_moment[p] + (1 - b2) * grad[p] * grad[p];
      const double update = config.lr * (opt.first_moment[p] / c1) /
                            (std::sqrt(opt.second_moment[p] / c2) + eps);
      theta[p] -= update;
    }
    params.assign(theta);
  }
  diag.advantages = adv;
  diag.final_ratios.reserve(trajectory.size());
  for (const auto& t : trajectory) {
    const PolicyOutput out = policy_forward(params, t.state);
    diag.final_ratios.push_back(
        std::exp(out.log_probs[static_cast<std::size_t>(t.action)] - t.log_prob));
  }
  return diag;
}

SplitAction rule_based_action(const SystemState& state, const RuleThresholds& thresholds,
                              int num_blocks) {
  if (!(thresholds.bw_min > 0.0) || !(thresholds.cpu_max > 0.0)) {
    throw ConfigurationError("rule thresholds must be positive");
  }
  const bool offload =
      state.bandwidth_norm > thresholds.bw_min && state.cpu_util < thresholds.cpu_max;
  return SplitAction{offload ? 0 : num_blocks, false};
}

SplitAction static_action(int k_fixed, int num_blocks) {
  if (k_fixed < 0 || k_fixed > num_blocks) {
    throw ConfigurationError("static split " + std::to_string(k_fixed) + " outside [0, " +
                             std::to_string(num_blocks) + "]");
  }
  return SplitAction{k_fixed, false};
}

SplitAction couple_quantization(SplitAction action, int num_blocks, double fp32_tx_ms,
                                double t_max_ms) {
  action.quantize = action.k < num_blocks && fp32_tx_ms > 0.5 * t_max_ms;
  return action;
}

AtomicSwitch::AtomicSwitch(int t_step, SplitAction initial) : t_step_(t_step), active_(initial) {
  if (t_step < 1) throw ConfigurationError("decision interval must be >= 1 frame");
}

void AtomicSwitch::commit(std::int64_t frame_index, SplitAction action) {
  if (!is_boundary(frame_index) && !(action == active_)) {
    throw InvalidStateError("split change requested at frame " + std::to_string(frame_index) +
                            ", which is inside a decision block");
  }
  active_ = action;
}

namespace {

constexpr std::uint32_t kPolicyVersion = 1;

}  // namespace

std::vector<std::uint8_t> serialize_policy(const PolicyParams& params) {
  std::vector<std::uint8_t> out{'E', 'S', 'P', 'L'};
  bytes::put_le<std::uint32_t>(out, kPolicyVersion);
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.shared.in_dim()));
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.hidden_width()));
  bytes::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.num_actions()));
  for (double v : params.flatten()) bytes::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

PolicyParams deserialize_policy(std::span<const std::uint8_t> data) {
  if (data.size() < 20 || data[0] != 'E' || data[1] != 'S' || data[2] != 'P' || data[3] != 'L') {
    throw ConfigurationError("not a policy checkpoint");
  }
  std::size_t pos = 4;
  const auto version = bytes::get_le<std::uint32_t>(data, pos);
  if (version != kPolicyVersion) throw ConfigurationError("unsupported policy checkpoint version");
  const auto input = bytes::get_le<std::uint32_t>(data, pos);
  const auto hidden = bytes::get_le<std::uint32_t>(data, pos);
  const auto actions = bytes::get_le<std::uint32_t>(data, pos);
  if (input != 3) throw ConfigurationError("policy checkpoint has the wrong state width");
  Rng unused(0);
  PolicyParams params = make_policy(static_cast<int>(actions), static_cast<int>(hidden), unused);
  const std::size_t P = params.parameter_count();
  if (data.size() != pos + 8 * P) throw ConfigurationError("policy checkpoint length mismatch");
  Vector flat(P);
  for (double& v : flat) v = std::bit_cast<double>(bytes::get_le<std::uint64_t>(data, pos));
  params.assign(flat);
  return params;
}

void save_policy(const PolicyParams& params, const std::filesystem::path& path) {
  const auto data = serialize_policy(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

PolicyParams load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("cannot read " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return deserialize_policy(data);
}

}  // namespace edgesplit
