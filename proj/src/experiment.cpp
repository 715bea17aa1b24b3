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

#include "edgesplit/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "edgesplit/error.hpp"
#include "edgesplit/manifold.hpp"
#include "edgesplit/probe.hpp"

namespace edgesplit {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace {

// Seed tags, one per independent random stream of a run.
enum SeedTag : std::uint64_t {
  kPretrainStream = 1,
  kRunStream,
  kProbeStream,
  kPretrainLearner,
  kServerInit,
  kServerPrior,
  kRunLearner,
  kRunTrace,
  kRunCpu,
  kRunDecisions,
  kRunPriors,
  kProbeSplit,
  kPolicyTraining,
  kEpisodePool,
  kRuleCalibration,
};

// ---------------------------------------------------------------- config ---

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw std::out_of_range(v);
    }
    return static_cast<int>(x);
  } catch (const std::exception&) {
    throw ConfigurationError("config: " + key + " expects an integer, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigurationError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigurationError("config: " + key + " expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigurationError("config: " + key + " expects a boolean, got '" + v + "'");
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;
using SectionTable = std::map<std::string, Setter>;

Setter set(int& field) {
  return [&field](const std::string& k, const std::string& v) { field = to_int(k, v); };
}
Setter set(double& field) {
  return [&field](const std::string& k, const std::string& v) { field = to_double(k, v); };
}
Setter set(bool& field) {
  return [&field](const std::string& k, const std::string& v) { field = to_bool(k, v); };
}
Setter set(std::string& field) {
  return [&field](const std::string&, const std::string& v) { field = v; };
}
Setter set(std::int64_t& field) {
  return [&field](const std::string& k, const std::string& v) { field = to_int(k, v); };
}

std::map<std::string, SectionTable> key_table(ExperimentConfig& c) {
  std::map<std::string, SectionTable> t;
  t["run"] = {
      {"seed", [&c](const std::string& k, const std::string& v) { c.seed = to_u64(k, v); }},
      {"scenario", set(c.scenario)},
      {"platform", set(c.platform)},
      {"network", set(c.network)},
      {"policy", [&c](const std::string&, const std::string& v) { c.policy = parse_policy_kind(v); }},
      {"static_k", set(c.static_k)},
      {"frames", set(c.frames)},
      {"pretrain_frames", set(c.pretrain_frames)},
      {"drop_rate", set(c.drop_rate)},
      {"probe_interval", set(c.probe_interval)},
      {"probe_frames", set(c.probe_frames)},
      {"cpu_mean", set(c.cpu_mean)},
      {"max_bandwidth_mbps", set(c.max_bandwidth_mbps)},
  };
  t["stream"] = {
      {"num_classes",
       [&c](const std::string& k, const std::string& v) {
         c.stream.num_classes = to_int(k, v);
         c.server.num_classes = c.stream.num_classes;
       }},
      {"steady_fraction", set(c.stream.steady_fraction)},
      {"transient_fraction", set(c.stream.transient_fraction)},
      {"input_dim",
       [&c](const std::string& k, const std::string& v) {
         c.stream.input_dim = to_int(k, v);
         c.edge.encoder.input_dim = c.stream.input_dim;
       }},
      {"frame_ms", set(c.stream.frame_ms)},
      {"min_segment_frames", set(c.stream.min_segment_frames)},
      {"max_segment_frames", set(c.stream.max_segment_frames)},
      {"prototype_scale", set(c.stream.prototype_scale)},
      {"steady_noise", set(c.stream.steady_noise)},
      {"transient_noise", set(c.stream.transient_noise)},
      {"steady_correlation", set(c.stream.steady_correlation)},
      {"burst_probability", set(c.stream.burst_probability)},
      {"burst_amplitude", set(c.stream.burst_amplitude)},
      {"burst_width", set(c.stream.burst_width)},
  };
  t["encoder"] = {
      {"num_blocks", set(c.edge.encoder.num_blocks)},
      {"hidden_dim", set(c.edge.encoder.hidden_dim)},
      {"embed_dim",
       [&c](const std::string& k, const std::string& v) {
         c.edge.encoder.embed_dim = to_int(k, v);
         c.edge.gmm.dim = c.edge.encoder.embed_dim;
       }},
  };
  t["gmm"] = {
      {"num_components", set(c.edge.gmm.num_components)},
      {"decay", set(c.edge.gmm.decay)},
      {"variance_floor", set(c.edge.gmm.variance_floor)},
      {"initial_variance", set(c.edge.gmm.initial_variance)},
      {"warmup_frames", set(c.edge.gmm.warmup_frames)},
      {"novelty_threshold", set(c.edge.gmm.novelty_threshold)},
  };
  t["edge"] = {
      {"batch_size", set(c.edge.batch_size)},
      {"virtual_negatives", set(c.edge.virtual_negatives)},
      {"hardness", set(c.edge.hardness)},
      {"temperature", set(c.edge.temperature)},
      {"lr", set(c.edge.lr)},
      {"in_batch_negatives", set(c.edge.in_batch_negatives)},
      {"train", set(c.edge.train)},
      {"noise_std", set(c.edge.augment.noise_std)},
      {"mask_width", set(c.edge.augment.mask_width)},
  };
  t["control"] = {
      {"alpha", set(c.reward.alpha)},
      {"beta", set(c.reward.beta)},
      {"eta", set(c.reward.eta)},
      {"t_max_ms", set(c.reward.t_max_ms)},
      {"e_budget_mj", set(c.reward.e_budget_mj)},
      {"t_step", set(c.t_step)},
      {"cold_start_frames", set(c.cold_start_frames)},
      {"hidden", set(c.policy_hidden)},
      {"gamma", set(c.ppo.gamma)},
      {"clip", set(c.ppo.clip)},
      {"gae_lambda", set(c.ppo.gae_lambda)},
      {"epochs", set(c.ppo.epochs)},
      {"lr", set(c.ppo.lr)},
      {"train_episodes", set(c.train_episodes)},
      {"train_passes", set(c.train_passes)},
      {"episode_frames", set(c.episode_frames)},
      {"rule_bw_min", set(c.rule.bw_min)},
      {"rule_cpu_max", set(c.rule.cpu_max)},
      {"calibrate_rule", set(c.calibrate_rule)},
  };
  t["server"] = {
      {"lambda1", set(c.server.lambda1)},
      {"lambda2", set(c.server.lambda2)},
      {"temperature", set(c.server.temperature)},
      {"knn_k", set(c.server.knn_k)},
      {"num_projections", set(c.server.num_projections)},
      {"view_noise_std", set(c.server.view_noise_std)},
      {"task",
       [&c](const std::string& k, const std::string& v) {
         if (v == "infonce") {
           c.server.task = TaskLoss::kInfoNce;
         } else if (v == "cross-entropy") {
           c.server.task = TaskLoss::kCrossEntropy;
         } else {
           throw ConfigurationError("config: " + k + " must be infonce or cross-entropy");
         }
       }},
      {"buffer_capacity", set(c.buffer_capacity)},
      {"refine_every", set(c.refine_every)},
      {"lr", set(c.server_lr)},
      {"t_sync", set(c.t_sync)},
      {"high_bandwidth_mbps", set(c.high_bandwidth_mbps)},
  };
  return t;
}

void apply_scenario(ExperimentConfig& c, const std::string& scenario) {
  if (scenario == "default") return;
  if (scenario == "quick") {
    c.frames = 1200;
    c.pretrain_frames = 300;
    c.probe_frames = 300;
    c.probe_interval = 400;
    c.train_episodes = 4;
    c.train_passes = 4;
    c.episode_frames = 1000;
    return;
  }
  throw ConfigurationError("unknown scenario '" + scenario + "' (expected default or quick)");
}

// ------------------------------------------------------------------ csv ---

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(std::optional<double> v) { return v ? fmt(*v) : std::string("NA"); }

}  // namespace

PolicyKind parse_policy_kind(const std::string& name) {
  if (name == "rl") return PolicyKind::kRl;
  if (name == "rule") return PolicyKind::kRule;
  if (name == "static" || name == "static-k") return PolicyKind::kStatic;
  if (name == "edge-only") return PolicyKind::kEdgeOnly;
  if (name == "server-only") return PolicyKind::kServerOnly;
  throw ConfigurationError("unknown policy '" + name +
                           "' (expected rl, rule, static, edge-only or server-only)");
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kRl:
      return "rl";
    case PolicyKind::kRule:
      return "rule";
    case PolicyKind::kStatic:
      return "static";
    case PolicyKind::kEdgeOnly:
      return "edge-only";
    case PolicyKind::kServerOnly:
      return "server-only";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  if (!seed) throw ConfigurationError("config: a seed is required");
  {
    ExperimentConfig scratch;
    apply_scenario(scratch, scenario);
  }
  const int L = edge.encoder.num_blocks;
  platform_by_name(platform, L);
  parse_trace_kind(network);
  if (policy == PolicyKind::kStatic && (static_k < 0 || static_k > L)) {
    throw ConfigurationError("config: static_k must lie in [0, num_blocks]");
  }
  if (frames < 1 || pretrain_frames < 1) {
    throw ConfigurationError("config: frames and pretrain_frames must be >= 1");
  }
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw ConfigurationError("config: drop_rate must lie in [0, 1)");
  if (probe_interval < 1 || probe_frames < 10) {
    throw ConfigurationError("config: probe_interval must be >= 1 and probe_frames >= 10");
  }
  if (!(cpu_mean >= 0.0 && cpu_mean <= 1.0)) throw ConfigurationError("config: cpu_mean must lie in [0, 1]");
  if (!(max_bandwidth_mbps > 0.0) || !(high_bandwidth_mbps >= 0.0)) {
    throw ConfigurationError("config: bandwidth limits must be positive");
  }
  stream.validate();
  if (stream.input_dim != edge.encoder.input_dim) {
    throw ConfigurationError("config: stream and encoder input widths differ");
  }
  edge.validate();
  reward.validate();
  ppo.validate();
  if (t_step < 1 || cold_start_frames < 0 || policy_hidden < 1) {
    throw ConfigurationError("config: t_step and hidden must be >= 1, cold_start_frames >= 0");
  }
  if (train_episodes < 1 || train_passes < 1 || episode_frames < t_step) {
    throw ConfigurationError("config: training needs at least one episode of one decision block");
  }
  // Congested profiles need room for their collapse; training always uses them.
  const std::int64_t congested_ms = 10000;
  if (network == "congested" && static_cast<std::int64_t>(frames) * stream.frame_ms < congested_ms) {
    throw ConfigurationError("config: a congested run needs at least 10 s of frames");
  }
  if (static_cast<std::int64_t>(episode_frames) * stream.frame_ms < congested_ms) {
    throw ConfigurationError("config: training episodes need at least 10 s of frames");
  }
  if (!(rule.bw_min >= 0.0 && rule.bw_min <= 1.0 && rule.cpu_max >= 0.0 && rule.cpu_max <= 1.0)) {
    throw ConfigurationError("config: rule thresholds must lie in [0, 1]");
  }
  server.validate();
  if (server.task == TaskLoss::kCrossEntropy && server.num_classes != stream.num_classes) {
    throw ConfigurationError("config: server classifier width must equal the class count");
  }
  if (buffer_capacity < 2 * server.knn_k || refine_every < 1 || t_sync < 1 || !(server_lr >= 0.0)) {
    throw ConfigurationError(
        "config: buffer_capacity >= 2 knn_k, refine_every >= 1, t_sync >= 1, server lr >= 0");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigurationError(std::string("config: ") + e.what());
  }
  ExperimentConfig config;
  config.server.num_classes = config.stream.num_classes;
  if (const auto run = tree.get_child_optional("run")) {
    if (const auto scenario = run->get_optional<std::string>("scenario")) {
      config.scenario = *scenario;
      apply_scenario(config, config.scenario);
    }
  }
  auto table = key_table(config);
  for (const auto& [section, keys] : tree) {
    const auto sec = table.find(section);
    if (sec == table.end()) throw ConfigurationError("config: unknown section [" + section + "]");
    if (!keys.data().empty()) throw ConfigurationError("config: '" + section + "' must be a section");
    for (const auto& [key, value] : keys) {
      const auto it = sec->second.find(key);
      if (it == sec->second.end()) {
        throw ConfigurationError("config: unknown key '" + key + "' in [" + section + "]");
      }
      it->second(section + "." + key, value.data());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("config: cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

// ----------------------------------------------------------- environment ---

double AccuracyTable::lookup(bool on_server, bool transient) const {
  if (on_server) return transient ? server_transient : server_steady;
  return transient ? edge_transient : edge_steady;
}

SplitAction finalize_action(SplitAction action, const EnvironmentSpec& env, double ema_bandwidth_mbps,
                            const TracePoint& link) {
  const int L = env.platform.num_blocks();
  if (action.k >= L) return SplitAction{L, false};
  TracePoint estimate = link;
  estimate.bandwidth_mbps = ema_bandwidth_mbps;
  const std::size_t batch_bytes = payload_bytes(action.k, false, env.encoder) *
                                  static_cast<std::size_t>(env.platform.uplink_batch_frames);
  const double fp32_tx_ms = transmit_latency_ms(batch_bytes, estimate);
  return couple_quantization(action, L, fp32_tx_ms, env.reward.t_max_ms);
}

FrameOutcome simulate_frame(const EnvironmentSpec& env, const SplitAction& action,
                            const TracePoint& link, double cpu_util, bool transient, Rng& rng) {
  FrameOutcome out;
  out.action = action;
  out.cost = frame_cost(action.k, env.platform, link, action.quantize, env.encoder, cpu_util, &rng);
  const bool offloaded = action.k < env.platform.num_blocks();
  if (offloaded && !out.cost.dropped && env.extra_drop_rate > 0.0 &&
      rng.bernoulli(env.extra_drop_rate)) {
    out.cost.dropped = true;
    out.cost.server_ms = 0.0;
  }
  out.accuracy = out.cost.dropped ? 0.0 : env.accuracy.lookup(offloaded, transient);
  out.reward = compute_reward(out.accuracy, out.cost.latency_ms(), out.cost.energy_mj, env.reward);
  return out;
}

Decision decide(const Controller& controller, const SystemState& state, int num_blocks,
                std::int64_t frame_index, int cold_start_frames, Rng& rng) {
  Decision d;
  switch (controller.kind) {
    case PolicyKind::kRl: {
      if (controller.policy == nullptr) throw ConfigurationError("rl controller without a policy");
      const ActionChoice choice =
          select_action(*controller.policy, state, controller.mode, rng, frame_index, cold_start_frames);
      d.action = choice.action;
      d.action_index = choice.action.k;
      d.log_prob = choice.log_prob;
      d.value = choice.value;
      d.learnable = !choice.cold_start;
      return d;
    }
    case PolicyKind::kRule:
      d.action = frame_index < cold_start_frames
                     ? SplitAction{num_blocks, false}
                     : rule_based_action(state, controller.thresholds, num_blocks);
      break;
    case PolicyKind::kStatic:
      d.action = static_action(controller.static_k, num_blocks);
      break;
    case PolicyKind::kEdgeOnly:
      d.action = SplitAction{num_blocks, false};
      break;
    case PolicyKind::kServerOnly:
      d.action = SplitAction{0, false};
      break;
  }
  d.action_index = d.action.k;
  return d;
}

EpisodeResult run_episode(const EnvironmentSpec& env, const Controller& controller,
                          const EpisodeInputs& inputs, std::uint64_t seed) {
  const std::size_t n = inputs.frames.size();
  if (n == 0 || inputs.cpu.size() < n) throw ConfigurationError("run_episode: inputs too short");
  const int L = env.platform.num_blocks();
  Rng rng(seed);
  LinkState link;
  link.ema_bandwidth_mbps = inputs.trace.at(0).bandwidth_mbps;
  AtomicSwitch active(env.t_step, SplitAction{L, false});

  EpisodeResult result;
  result.outcomes.reserve(n);
  std::optional<Transition> open;
  double block_reward = 0.0;
  int block_frames = 0;
  auto close_block = [&]() {
    if (open && block_frames > 0) {
      open->reward = block_reward / block_frames;
      result.transitions.push_back(*open);
    }
    open.reset();
    block_reward = 0.0;
    block_frames = 0;
  };

  double total = 0.0;
  for (std::size_t f = 0; f < n; ++f) {
    const auto frame = static_cast<std::int64_t>(f);
    const TracePoint& point = inputs.trace.at(frame * env.frame_ms);
    ema_update(link, point.bandwidth_mbps);
    if (active.is_boundary(frame)) {
      close_block();
      const SystemState state = observe(inputs.frames[f].uncertainty, env.max_uncertainty,
                                        100.0 * inputs.cpu[f], link.ema_bandwidth_mbps,
                                        env.max_bandwidth_mbps);
      const Decision d = decide(controller, state, L, frame, env.cold_start_frames, rng);
      active.commit(frame, finalize_action(d.action, env, link.ema_bandwidth_mbps, point));
      if (d.learnable) open = Transition{state, d.action_index, d.log_prob, 0.0, d.value, false};
    }
    FrameOutcome out =
        simulate_frame(env, active.active(), point, inputs.cpu[f], inputs.frames[f].transient, rng);
    total += out.reward;
    block_reward += out.reward;
    ++block_frames;
    result.outcomes.push_back(std::move(out));
  }
  close_block();
  if (!result.transitions.empty()) result.transitions.back().done = true;
  result.mean_reward = total / static_cast<double>(n);
  return result;
}

PolicyParams train_policy(const EnvironmentSpec& env, const std::vector<EpisodeInputs>& episodes,
                          int hidden_width, const PpoConfig& ppo, int passes, std::uint64_t seed,
                          TrainingReport* report) {
  if (episodes.empty()) throw ConfigurationError("train_policy: no episodes");
  Rng rng(seed);
  PolicyParams params = make_policy(env.platform.num_blocks() + 1, hidden_width, rng);
  PpoOptimizer optimizer;
  Controller controller;
  controller.kind = PolicyKind::kRl;
  controller.policy = &params;
  controller.mode = SelectMode::kSample;
  std::uint64_t episode_seed = derive_seed(seed, 1);
  for (int pass = 0; pass < passes; ++pass) {
    for (const auto& inputs : episodes) {
      episode_seed = derive_seed(episode_seed, 2);
      const EpisodeResult r = run_episode(env, controller, inputs, episode_seed);
      if (report != nullptr) report->episode_rewards.push_back(r.mean_reward);
      if (!r.transitions.empty()) ppo_update(params, optimizer, r.transitions, ppo);
    }
  }
  return params;
}

RuleThresholds calibrate_rule_thresholds(const EnvironmentSpec& env,
                                         const std::vector<EpisodeInputs>& episodes,
                                         std::uint64_t seed) {
  if (episodes.empty()) throw ConfigurationError("calibrate_rule_thresholds: no episodes");
  Controller controller;
  controller.kind = PolicyKind::kRule;
  RuleThresholds best;
  double best_reward = -std::numeric_limits<double>::infinity();
  for (int b = 1; b <= 20; ++b) {
    for (int c = 1; c <= 20; ++c) {
      controller.thresholds = RuleThresholds{0.05 * b, 0.05 * c};
      double reward = 0.0;
      for (std::size_t e = 0; e < episodes.size(); ++e) {
        reward += run_episode(env, controller, episodes[e], derive_seed(seed, e)).mean_reward;
      }
      if (reward > best_reward) {
        best_reward = reward;
        best = controller.thresholds;
      }
    }
  }
  return best;
}

std::optional<double> adaptation_time_ms(const std::vector<double>& latency_ms,
                                         const NetworkTrace& trace, double t_max_ms,
                                         std::int64_t frame_ms, int hold_frames) {
  if (frame_ms < 1 || hold_frames < 1) throw ConfigurationError("adaptation_time_ms: bad units");
  const auto collapse = find_collapse(trace);
  if (!collapse) return std::nullopt;
  const auto start = static_cast<std::size_t>((collapse->start_ms + frame_ms - 1) / frame_ms);
  int run = 0;
  for (std::size_t f = start; f < latency_ms.size(); ++f) {
    run = latency_ms[f] <= t_max_ms ? run + 1 : 0;
    if (run == hold_frames) {
      const std::size_t settled = f + 1 - static_cast<std::size_t>(hold_frames);
      return static_cast<double>((settled - start) * static_cast<std::size_t>(frame_ms));
    }
  }
  return std::nullopt;
}

// ------------------------------------------------------------ prepared run ---

DenseMatrix server_path_embeddings(const EncoderState& edge, const LayerStack& server_blocks,
                                   const std::vector<StreamFrame>& frames, int k) {
  DenseMatrix z(frames.size(), static_cast<std::size_t>(edge.config.embed_dim));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Vector prefix = encode_prefix(edge, frames[i].features, k);
    const Vector e = trace_suffix(server_blocks, prefix, k).embedding;
    std::copy(e.begin(), e.end(), z.row(i).begin());
  }
  return z;
}

namespace {

std::vector<int> labels_of(const std::vector<StreamFrame>& frames) {
  std::vector<int> labels;
  labels.reserve(frames.size());
  for (const auto& f : frames) labels.push_back(f.label.value_or(0));
  return labels;
}

// Held-out accuracy split by regime; a regime without test rows falls back to
// the overall accuracy.
std::pair<double, double> regime_accuracy(const DenseMatrix& z, const std::vector<StreamFrame>& frames,
                                          const ProbeSplit& split) {
  const std::vector<int> labels = labels_of(frames);
  const ProbeModel model = fit_probe(z, labels, split.train);
  std::vector<std::size_t> steady, transient;
  for (std::size_t r : split.test) (frames[r].transient ? transient : steady).push_back(r);
  const double overall = probe_accuracy(model, z, labels, split.test);
  const double s = steady.empty() ? overall : probe_accuracy(model, z, labels, steady);
  const double t = transient.empty() ? overall : probe_accuracy(model, z, labels, transient);
  return {s, t};
}

void refine_on(const std::vector<StreamFrame>& frames, std::size_t first, int split,
               const EncoderState& edge, ServerModel& server, const ExperimentConfig& cfg, Rng& rng) {
  TemporalBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));
  for (std::size_t i = first; i < frames.size(); ++i) {
    buffer.insert(frames[i].timestamp_ms,
                  BufferEntry{encode_prefix(edge, frames[i].features, split), split, frames[i].label});
    if ((i + 1 - first) % static_cast<std::size_t>(cfg.refine_every) == 0 &&
        buffer.size() >= static_cast<std::size_t>(2 * cfg.server.knn_k)) {
      const DenseMatrix prior = sample_uniform_sphere(static_cast<int>(buffer.size()),
                                                      cfg.edge.encoder.embed_dim, rng);
      refine_step(buffer, server, prior, cfg.server, cfg.server_lr);
    }
  }
}

}  // namespace

PreparedRun prepare_run(const ExperimentConfig& config) {
  config.validate();
  PreparedRun p;
  p.config = config;
  p.seed = *config.seed;
  const std::uint64_t s = p.seed;
  p.pretrain_stream =
      generate_stream(config.stream, s, derive_seed(s, kPretrainStream), config.pretrain_frames);
  p.run_stream = generate_stream(config.stream, s, derive_seed(s, kRunStream), config.frames);
  p.probe_stream = generate_stream(config.stream, s, derive_seed(s, kProbeStream), config.probe_frames);

  EdgeLearner learner(config.edge, derive_seed(s, kPretrainLearner));
  for (const auto& f : p.pretrain_stream) learner.observe(f);
  p.encoder = learner.encoder();
  p.gmm = learner.gmm();

  Rng server_rng(derive_seed(s, kServerInit));
  p.server = make_server_model(p.encoder, config.server, server_rng);
  const std::size_t tail = std::min<std::size_t>(p.pretrain_stream.size(), 500);
  Rng prior_rng(derive_seed(s, kServerPrior));
  refine_on(p.pretrain_stream, p.pretrain_stream.size() - tail, 0, p.encoder, p.server, config,
            prior_rng);

  const int L = config.edge.encoder.num_blocks;
  const ProbeSplit split =
      make_probe_split(p.probe_stream.size(), ProbeConfig{}.train_fraction, derive_seed(s, kProbeSplit));
  const auto edge_acc =
      regime_accuracy(embed_frames(p.encoder, p.probe_stream), p.probe_stream, split);
  const auto server_acc = regime_accuracy(
      server_path_embeddings(p.encoder, p.server.blocks, p.probe_stream, 0), p.probe_stream, split);
  p.accuracy = AccuracyTable{edge_acc.first, edge_acc.second, server_acc.first, server_acc.second};

  p.env.platform = platform_by_name(config.platform, L);
  p.env.encoder = config.edge.encoder;
  p.env.reward = config.reward;
  p.env.accuracy = p.accuracy;
  p.env.t_step = config.t_step;
  p.env.cold_start_frames = config.cold_start_frames;
  p.env.max_bandwidth_mbps = config.max_bandwidth_mbps;
  p.env.max_uncertainty = std::log(static_cast<double>(config.edge.gmm.num_components));
  p.env.extra_drop_rate = config.drop_rate;
  p.env.frame_ms = config.stream.frame_ms;
  return p;
}

std::vector<EnvFrame> score_stream(const PreparedRun& prep, const std::vector<StreamFrame>& frames) {
  std::vector<EnvFrame> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    const Vector z = encode_full(prep.encoder, f.features);
    out.push_back(EnvFrame{prep.gmm.initialized ? uncertainty(prep.gmm, z) : prep.env.max_uncertainty,
                           f.transient});
  }
  return out;
}

std::vector<EpisodeInputs> make_training_episodes(const PreparedRun& prep, int count,
                                                  std::uint64_t seed) {
  const auto& cfg = prep.config;
  std::vector<EpisodeInputs> episodes;
  for (int i = 0; i < count; ++i) {
    const auto tag = static_cast<std::uint64_t>(3 * i);
    EpisodeInputs e;
    e.frames = score_stream(
        prep, generate_stream(cfg.stream, prep.seed, derive_seed(seed, tag), cfg.episode_frames));
    const TraceKind kind = i % 2 == 0 ? TraceKind::kCongested : TraceKind::kVariable;
    e.trace = make_profile(kind, derive_seed(seed, tag + 1),
                           static_cast<std::int64_t>(cfg.episode_frames) * cfg.stream.frame_ms);
    e.cpu = make_cpu_load(derive_seed(seed, tag + 2), static_cast<std::size_t>(cfg.episode_frames),
                          cfg.cpu_mean);
    episodes.push_back(std::move(e));
  }
  return episodes;
}

Controller make_controller(const PreparedRun& prep, PolicyParams& policy_storage) {
  const auto& cfg = prep.config;
  Controller c;
  c.kind = cfg.policy;
  c.static_k = cfg.static_k;
  c.thresholds = cfg.rule;
  c.mode = SelectMode::kGreedy;
  const bool needs_episodes =
      cfg.policy == PolicyKind::kRl || (cfg.policy == PolicyKind::kRule && cfg.calibrate_rule);
  if (!needs_episodes) return c;
  const auto episodes =
      make_training_episodes(prep, cfg.train_episodes, derive_seed(prep.seed, kEpisodePool));
  if (cfg.policy == PolicyKind::kRl) {
    policy_storage = train_policy(prep.env, episodes, cfg.policy_hidden, cfg.ppo, cfg.train_passes,
                                  derive_seed(prep.seed, kPolicyTraining));
    c.policy = &policy_storage;
  } else {
    c.thresholds = calibrate_rule_thresholds(prep.env, episodes, derive_seed(prep.seed, kRuleCalibration));
  }
  return c;
}

// ------------------------------------------------------------ full pipeline ---

RunResult run_prepared(const PreparedRun& prep, const Controller& controller) {
  const auto& cfg = prep.config;
  const auto& env = prep.env;
  const std::uint64_t s = prep.seed;
  const int L = cfg.edge.encoder.num_blocks;
  const int d = cfg.edge.encoder.embed_dim;
  const std::size_t n = prep.run_stream.size();
  const std::int64_t frame_ms = cfg.stream.frame_ms;

  EdgeLearner learner(cfg.edge, prep.encoder, prep.gmm, derive_seed(s, kRunLearner));
  ServerModel server = prep.server;
  TemporalBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));
  const NetworkTrace trace = make_profile(parse_trace_kind(cfg.network), derive_seed(s, kRunTrace),
                                          static_cast<std::int64_t>(n) * frame_ms);
  const std::vector<double> cpu = make_cpu_load(derive_seed(s, kRunCpu), n, cfg.cpu_mean);
  Rng rng(derive_seed(s, kRunDecisions));
  Rng prior_rng(derive_seed(s, kRunPriors));
  const ProjectionSet projections =
      make_projections(cfg.server.num_projections, d, cfg.server.projection_seed);
  const SyncSchedule schedule{cfg.t_sync};
  const std::vector<int> probe_labels = labels_of(prep.probe_stream);
  const std::size_t window_size = static_cast<std::size_t>(cfg.buffer_capacity);

  LinkState link;
  link.ema_bandwidth_mbps = trace.at(0).bandwidth_mbps;
  AtomicSwitch active(cfg.t_step, SplitAction{L, false});
  std::deque<Vector> window;
  double swd = 0.0;
  double dirichlet = 0.0;

  RunResult result;
  result.rows.reserve(n);
  for (std::size_t f = 0; f < n; ++f) {
    const auto frame = static_cast<std::int64_t>(f);
    const StreamFrame& sf = prep.run_stream[f];
    const EdgeObservation obs = learner.observe(sf);
    window.push_back(obs.embedding);
    if (window.size() > window_size) window.pop_front();

    const TracePoint& point = trace.at(frame * frame_ms);
    ema_update(link, point.bandwidth_mbps);
    if (active.is_boundary(frame)) {
      const SystemState state = observe(obs.uncertainty, env.max_uncertainty, 100.0 * cpu[f],
                                        link.ema_bandwidth_mbps, env.max_bandwidth_mbps);
      const Decision dec = decide(controller, state, L, frame, env.cold_start_frames, rng);
      active.commit(frame, finalize_action(dec.action, env, link.ema_bandwidth_mbps, point));
    }
    const SplitAction action = active.active();
    const FrameOutcome out = simulate_frame(env, action, point, cpu[f], sf.transient, rng);

    if (action.k < L && !out.cost.dropped) {
      Vector payload = encode_prefix(learner.encoder(), sf.features, action.k);
      if (action.quantize) payload = quantize_dequantize(payload, calibrate(payload));
      buffer.insert(sf.timestamp_ms, BufferEntry{std::move(payload), action.k, sf.label});
    }

    if ((f + 1) % static_cast<std::size_t>(cfg.refine_every) == 0) {
      if (buffer.size() >= static_cast<std::size_t>(2 * cfg.server.knn_k)) {
        const DenseMatrix prior = sample_uniform_sphere(static_cast<int>(buffer.size()), d, prior_rng);
        refine_step(buffer, server, prior, cfg.server, cfg.server_lr);
        const TemporalGraph graph =
            build_knn_temporal_graph(buffer.timestamps(), cfg.server.knn_k, cfg.server.graph_window_ms);
        dirichlet = dirichlet_energy(graph, server_embeddings(server, buffer));
      }
      if (window.size() >= 2) {
        const DenseMatrix z = DenseMatrix::from_rows({window.begin(), window.end()});
        swd = sliced_wasserstein(z, sample_uniform_sphere(static_cast<int>(z.rows()), d, prior_rng),
                                 projections);
      }
    }

    std::size_t sync_bytes = 0;
    if (const auto sync = lazy_sync(frame, schedule, learner.gmm(), server.blocks,
                                    LinkFlags{false, link.ema_bandwidth_mbps > cfg.high_bandwidth_mbps})) {
      sync_bytes = sync->total_bytes();
    }

    MetricsRow row;
    row.seed = static_cast<std::int64_t>(s);
    row.frame = frame;
    row.t_ms = frame * frame_ms;
    row.k = action.k;
    row.quantized = action.quantize;
    row.uncertainty = obs.uncertainty;
    row.cpu = cpu[f];
    row.bandwidth_mbps = point.bandwidth_mbps;
    row.ema_bandwidth_mbps = link.ema_bandwidth_mbps;
    row.edge_ms = out.cost.edge_ms;
    row.tx_ms = out.cost.tx_ms;
    row.server_ms = out.cost.server_ms;
    row.latency_ms = out.cost.latency_ms();
    row.energy_mj = out.cost.energy_mj;
    row.compute_mj = out.cost.compute_energy_mj;
    row.radio_mj = out.cost.radio_energy_mj;
    row.sync_mj = out.cost.sync_energy_mj;
    row.tx_bytes = out.cost.tx_bytes;
    row.sync_bytes = sync_bytes;
    row.dropped = out.cost.dropped;
    row.accuracy_proxy = out.accuracy;
    row.reward = out.reward;
    row.swd_to_uniform = swd;
    row.dirichlet_energy = dirichlet;
    if ((f + 1) % static_cast<std::size_t>(cfg.probe_interval) == 0 || f + 1 == n) {
      const DenseMatrix z =
          action.k < L ? server_path_embeddings(learner.encoder(), server.blocks, prep.probe_stream, action.k)
                       : embed_frames(learner.encoder(), prep.probe_stream);
      row.probe_accuracy = linear_probe(z, probe_labels, derive_seed(s, kProbeSplit));
    }
    result.rows.push_back(std::move(row));
  }

  RunSummary& sum = result.summary;
  sum.seed = s;
  sum.policy = to_string(cfg.policy);
  sum.network = cfg.network;
  sum.frames = static_cast<std::int64_t>(n);
  sum.accuracy = prep.accuracy;
  std::vector<double> latency;
  latency.reserve(n);
  double energy = 0.0, reward = 0.0, k_sum = 0.0, dropped = 0.0, quantized = 0.0;
  for (const auto& r : result.rows) {
    latency.push_back(r.latency_ms);
    energy += r.energy_mj;
    reward += r.reward;
    k_sum += r.k;
    dropped += r.dropped ? 1.0 : 0.0;
    quantized += r.quantized ? 1.0 : 0.0;
    sum.total_tx_bytes += r.tx_bytes;
    sum.total_sync_bytes += r.sync_bytes;
    if (r.probe_accuracy) sum.final_probe_accuracy = *r.probe_accuracy;
  }
  const double dn = static_cast<double>(n);
  sum.mean_latency_ms = mean(latency);
  std::vector<double> sorted = latency;
  std::sort(sorted.begin(), sorted.end());
  sum.p95_latency_ms = sorted[std::min(n - 1, static_cast<std::size_t>(std::ceil(0.95 * dn)) - 1)];
  sum.mean_energy_mj = energy / dn;
  sum.mean_reward = reward / dn;
  sum.mean_k = k_sum / dn;
  sum.drop_fraction = dropped / dn;
  sum.quantized_fraction = quantized / dn;
  sum.tx_bytes_per_batch = static_cast<double>(sum.total_tx_bytes) / dn *
                           static_cast<double>(env.platform.uplink_batch_frames);
  sum.battery_hours = battery_life_hours(sum.mean_energy_mj);
  const bool adaptive = cfg.policy == PolicyKind::kRl || cfg.policy == PolicyKind::kRule;
  if (adaptive) sum.adaptation_ms = adaptation_time_ms(latency, trace, cfg.reward.t_max_ms, frame_ms);
  sum.final_swd = swd;
  sum.final_dirichlet = dirichlet;
  return result;
}

RunResult run_experiment(const ExperimentConfig& config) {
  const PreparedRun prep = prepare_run(config);
  PolicyParams policy;
  const Controller controller = make_controller(prep, policy);
  return run_prepared(prep, controller);
}

// ------------------------------------------------------------------ output ---

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << "seed,frame,t_ms,k,quantized,uncertainty,cpu,bandwidth_mbps,ema_bandwidth_mbps,edge_ms,"
         "tx_ms,server_ms,latency_ms,energy_mj,compute_mj,radio_mj,sync_mj,tx_bytes,sync_bytes,"
         "dropped,accuracy_proxy,reward,swd_to_uniform,dirichlet_energy,probe_accuracy\n";
  for (const auto& r : rows) {
    out << r.seed << ',' << r.frame << ',' << r.t_ms << ',' << r.k << ',' << (r.quantized ? 1 : 0)
        << ',' << fmt(r.uncertainty) << ',' << fmt(r.cpu) << ',' << fmt(r.bandwidth_mbps) << ','
        << fmt(r.ema_bandwidth_mbps) << ',' << fmt(r.edge_ms) << ',' << fmt(r.tx_ms) << ','
        << fmt(r.server_ms) << ',' << fmt(r.latency_ms) << ',' << fmt(r.energy_mj) << ','
        << fmt(r.compute_mj) << ',' << fmt(r.radio_mj) << ',' << fmt(r.sync_mj) << ','
        << r.tx_bytes << ',' << r.sync_bytes << ',' << (r.dropped ? 1 : 0) << ','
        << fmt(r.accuracy_proxy) << ',' << fmt(r.reward) << ',' << fmt(r.swd_to_uniform) << ','
        << fmt(r.dirichlet_energy) << ',' << (r.probe_accuracy ? fmt(*r.probe_accuracy) : "") << '\n';
  }
  return out.str();
}

std::string summary_csv(const std::vector<RunSummary>& runs) {
  using Getter = std::function<std::optional<double>(const RunSummary&)>;
  const std::vector<std::pair<std::string, Getter>> columns = {
      {"frames", [](const RunSummary& r) { return static_cast<double>(r.frames); }},
      {"mean_latency_ms", [](const RunSummary& r) { return r.mean_latency_ms; }},
      {"p95_latency_ms", [](const RunSummary& r) { return r.p95_latency_ms; }},
      {"mean_energy_mj", [](const RunSummary& r) { return r.mean_energy_mj; }},
      {"mean_reward", [](const RunSummary& r) { return r.mean_reward; }},
      {"mean_k", [](const RunSummary& r) { return r.mean_k; }},
      {"drop_fraction", [](const RunSummary& r) { return r.drop_fraction; }},
      {"quantized_fraction", [](const RunSummary& r) { return r.quantized_fraction; }},
      {"total_tx_bytes", [](const RunSummary& r) { return static_cast<double>(r.total_tx_bytes); }},
      {"tx_bytes_per_batch", [](const RunSummary& r) { return r.tx_bytes_per_batch; }},
      {"total_sync_bytes", [](const RunSummary& r) { return static_cast<double>(r.total_sync_bytes); }},
      {"battery_hours", [](const RunSummary& r) { return r.battery_hours; }},
      {"adaptation_ms", [](const RunSummary& r) { return r.adaptation_ms; }},
      {"final_probe_accuracy", [](const RunSummary& r) { return r.final_probe_accuracy; }},
      {"final_swd", [](const RunSummary& r) { return r.final_swd; }},
      {"final_dirichlet", [](const RunSummary& r) { return r.final_dirichlet; }},
      {"acc_edge_steady", [](const RunSummary& r) { return r.accuracy.edge_steady; }},
      {"acc_edge_transient", [](const RunSummary& r) { return r.accuracy.edge_transient; }},
      {"acc_server_steady", [](const RunSummary& r) { return r.accuracy.server_steady; }},
      {"acc_server_transient", [](const RunSummary& r) { return r.accuracy.server_transient; }},
  };
  std::ostringstream out;
  out << "seed,policy,network";
  for (const auto& [name, get] : columns) out << ',' << name;
  out << '\n';
  for (const auto& r : runs) {
    out << r.seed << ',' << r.policy << ',' << r.network;
    for (const auto& [name, get] : columns) out << ',' << fmt(get(r));
    out << '\n';
  }
  if (runs.size() > 1) {
    for (const char* stat : {"mean", "std"}) {
      out << stat << ',' << runs.front().policy << ',' << runs.front().network;
      for (const auto& [name, get] : columns) {
        std::vector<double> values;
        for (const auto& r : runs) {
          if (const auto v = get(r)) values.push_back(*v);
        }
        if (values.empty()) {
          out << ",NA";
        } else {
          out << ',' << fmt(std::string(stat) == "mean" ? mean(values) : stddev(values));
        }
      }
      out << '\n';
    }
  }
  return out.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigurationError("cannot write " + tmp.string());
    out << text;
    if (!out) throw ConfigurationError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace edgesplit
