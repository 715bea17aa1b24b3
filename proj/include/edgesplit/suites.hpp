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

// Comparison suites behind `ablate`: controller strategies across traces,
// refinement-loss variants under uplink loss, uncertainty calibration, the
// representation-collapse comparison, graph interpolation and the
// finite-sample gap of the contrastive partition term.

#ifndef EDGESPLIT_SUITES_HPP_
#define EDGESPLIT_SUITES_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edgesplit/experiment.hpp"
#include "edgesplit/manifold.hpp"

namespace edgesplit {

// ---- controller strategies -------------------------------------------------

struct StrategyRow {
  std::uint64_t seed = 0;
  std::string trace;
  std::string strategy;  // static-k3, rule, rl, edge-only, server-only
  double mean_reward = 0.0;
  std::optional<double> adaptation_ms;  // empty: not applicable or never settled
  double mean_latency_ms = 0.0;
  double mean_energy_mj = 0.0;
  double accuracy_proxy = 0.0;
  double mean_k = 0.0;
  double tx_bytes_per_batch = 0.0;  // uplink bytes per 8-frame batch
};

struct StrategyOptions {
  std::vector<TraceKind> traces{TraceKind::kCongested, TraceKind::kVariable, TraceKind::kStable};
  int static_k = 3;
  int eval_frames = 3000;
};

/// Trains PPO and calibrates the rule on the prepared run's episode pool, then
/// evaluates static, rule, greedy RL and the two fixed placements on fresh
/// traces.
std::vector<StrategyRow> strategy_suite(const PreparedRun& prep, const StrategyOptions& options = {});

// ---- refinement loss under uplink loss ------------------------------------

struct LossVariant {
  std::string name;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

/// task-only, task+SW, task+Lap and hybrid, using the base weights.
std::vector<LossVariant> loss_variants(const HybridLossConfig& base);

struct LossRow {
  std::uint64_t seed = 0;
  std::string variant;
  double drop_rate = 0.0;
  double accuracy = 0.0;  // linear probe on the stitched sequence
  double dirichlet_energy = 0.0;
  double swd_to_uniform = 0.0;
  std::size_t received = 0;
};

struct LossOptions {
  std::vector<double> drop_rates{0.0, 0.2, 0.4};
  int frames = 600;
  int split = 1;
};

/// Streams the run frames at a fixed split, losing each uplink with the given
/// probability, refines a fresh server copy online and scores the final model
/// on the whole sequence with lost frames filled by their received temporal
/// neighbours. Drop patterns and initialisation are shared across variants.
std::vector<LossRow> loss_suite(const PreparedRun& prep, const std::vector<LossVariant>& variants,
                                const LossOptions& options = {});

/// accuracy(first drop rate) - accuracy(last drop rate) for `variant`.
double accuracy_degradation(const std::vector<LossRow>& rows, const std::string& variant);

// ---- uncertainty calibration ----------------------------------------------

struct CalibrationReport {
  std::uint64_t seed = 0;
  std::size_t frames = 0;
  std::optional<double> correlation;           // empty when undefined
  std::optional<double> inverted_correlation;  // against ln C - U
  double mean_u_steady = 0.0;
  double mean_u_transient = 0.0;
  double mean_reduction_steady = 0.0;
  double mean_reduction_transient = 0.0;
};

struct CalibrationOptions {
  int refine_frames = 1000;
  int split = 1;
};

/// Pearson correlation between per-frame posterior uncertainty and the
/// cross-entropy reduction from the refined server path over the edge path,
/// on the held-out rows of the probe stream.
CalibrationReport calibration_suite(const PreparedRun& prep, const CalibrationOptions& options = {});

// ---- representation collapse ----------------------------------------------

struct CollapseReport {
  double effective_rank = 0.0;
  double swd_to_uniform = 0.0;
  double probe_accuracy = 0.0;
};

/// Trains an edge learner on `frames` stream frames and measures held-out
/// embeddings of `eval_frames` fresh frames.
CollapseReport collapse_run(const SyntheticStreamSpec& stream, const EdgeLearnerConfig& edge,
                            std::uint64_t seed, int frames = 5000, int eval_frames = 1000);

// ---- interpolation and sampling-gap checks ---------------------------------

struct InterpolationSuiteReport {
  int graphs = 0;
  int violations = 0;
  double worst_ratio = 0.0;  // max error / bound over graphs with a positive bound
  InterpolationCheck worked_example;
};

/// Random 20-node path and k-NN temporal graphs with smooth embeddings, plus
/// the three-node path example.
InterpolationSuiteReport interpolation_suite(std::uint64_t seed, int graphs = 100, int nodes = 20);

GapExperimentResult sampling_gap_suite(std::uint64_t seed, int trials = 50,
                                       std::vector<int> n_values = {8, 32, 128, 512});

// ---- CSV ---------------------------------------------------------------------

std::string strategy_csv(const std::vector<StrategyRow>& rows);
std::string loss_csv(const std::vector<LossRow>& rows);
std::string calibration_csv(const std::vector<CalibrationReport>& rows);
std::string interpolation_csv(const InterpolationSuiteReport& report);
std::string sampling_gap_csv(const GapExperimentResult& result);

}  // namespace edgesplit

#endif  // EDGESPLIT_SUITES_HPP_
