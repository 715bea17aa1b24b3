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

#include "edgesplit/suites.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "edgesplit/error.hpp"
#include "edgesplit/probe.hpp"

namespace edgesplit {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string num(std::optional<double> v) { return v ? num(*v) : std::string("NA"); }

std::vector<int> frame_labels(const std::vector<StreamFrame>& frames) {
  std::vector<int> labels;
  labels.reserve(frames.size());
  for (const auto& f : frames) labels.push_back(f.label.value_or(0));
  return labels;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

std::optional<double> defined(double r) {
  return std::isnan(r) ? std::nullopt : std::optional<double>(r);
}

}  // namespace

// ---- controller strategies -------------------------------------------------

std::vector<StrategyRow> strategy_suite(const PreparedRun& prep, const StrategyOptions& options) {
  const auto& cfg = prep.config;
  const std::uint64_t seed = prep.seed;
  const auto episodes = make_training_episodes(prep, cfg.train_episodes, derive_seed(seed, 101));
  const PolicyParams policy = train_policy(prep.env, episodes, cfg.policy_hidden, cfg.ppo,
                                           cfg.train_passes, derive_seed(seed, 102));
  const RuleThresholds thresholds = calibrate_rule_thresholds(prep.env, episodes, derive_seed(seed, 103));

  EpisodeInputs inputs;
  inputs.frames = score_stream(
      prep, generate_stream(cfg.stream, seed, derive_seed(seed, 104), options.eval_frames));
  inputs.cpu = make_cpu_load(derive_seed(seed, 105), static_cast<std::size_t>(options.eval_frames),
                             cfg.cpu_mean);

  std::vector<std::pair<std::string, Controller>> strategies;
  Controller fixed{PolicyKind::kStatic, nullptr, {}, options.static_k, SelectMode::kGreedy};
  strategies.emplace_back("static-k" + std::to_string(options.static_k), fixed);
  strategies.emplace_back("rule", Controller{PolicyKind::kRule, nullptr, thresholds, 0, SelectMode::kGreedy});
  strategies.emplace_back("rl", Controller{PolicyKind::kRl, &policy, {}, 0, SelectMode::kGreedy});
  strategies.emplace_back("edge-only", Controller{PolicyKind::kEdgeOnly, nullptr, {}, 0, SelectMode::kGreedy});
  strategies.emplace_back("server-only", Controller{PolicyKind::kServerOnly, nullptr, {}, 0, SelectMode::kGreedy});

  std::vector<StrategyRow> rows;
  for (std::size_t ti = 0; ti < options.traces.size(); ++ti) {
    inputs.trace = make_profile(options.traces[ti], derive_seed(seed, 110 + ti),
                                static_cast<std::int64_t>(options.eval_frames) * cfg.stream.frame_ms);
    for (const auto& [name, controller] : strategies) {
      const EpisodeResult r = run_episode(prep.env, controller, inputs, derive_seed(seed, 120 + ti));
      StrategyRow row;
      row.seed = seed;
      row.trace = to_string(options.traces[ti]);
      row.strategy = name;
      row.mean_reward = r.mean_reward;
      std::vector<double> latency;
      for (const auto& o : r.outcomes) {
        latency.push_back(o.cost.latency_ms());
        row.mean_energy_mj += o.cost.energy_mj;
        row.accuracy_proxy += o.accuracy;
        row.mean_k += o.action.k;
        row.tx_bytes_per_batch += static_cast<double>(o.cost.tx_bytes);
      }
      const auto n = static_cast<double>(r.outcomes.size());
      row.mean_latency_ms = mean(latency);
      row.mean_energy_mj /= n;
      row.accuracy_proxy /= n;
      row.mean_k /= n;
      row.tx_bytes_per_batch *= prep.env.platform.uplink_batch_frames / n;
      if (controller.kind == PolicyKind::kRl || controller.kind == PolicyKind::kRule) {
        row.adaptation_ms =
            adaptation_time_ms(latency, inputs.trace, cfg.reward.t_max_ms, cfg.stream.frame_ms);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---- refinement loss under uplink loss ------------------------------------

std::vector<LossVariant> loss_variants(const HybridLossConfig& base) {
  return {{"task-only", 0.0, 0.0},
          {"task+sw", base.lambda1, 0.0},
          {"task+lap", 0.0, base.lambda2},
          {"hybrid", base.lambda1, base.lambda2}};
}

std::vector<LossRow> loss_suite(const PreparedRun& prep, const std::vector<LossVariant>& variants,
                                const LossOptions& options) {
  const auto& cfg = prep.config;
  const std::uint64_t seed = prep.seed;
  const int d = cfg.edge.encoder.embed_dim;
  const std::size_t n = std::min<std::size_t>(prep.run_stream.size(), static_cast<std::size_t>(options.frames));
  if (n < 2) throw ConfigurationError("loss_suite: need at least two frames");
  if (options.split < 0 || options.split >= cfg.edge.encoder.num_blocks) {
    throw ConfigurationError("loss_suite: split must offload");
  }
  std::vector<Vector> payloads(n);
  for (std::size_t f = 0; f < n; ++f) {
    payloads[f] = encode_prefix(prep.encoder, prep.run_stream[f].features, options.split);
  }
  std::vector<int> run_labels = frame_labels(prep.run_stream);
  run_labels.resize(n);
  const std::vector<int> probe_labels = frame_labels(prep.probe_stream);
  const ProjectionSet projections =
      make_projections(cfg.server.num_projections, d, cfg.server.projection_seed);

  std::vector<LossRow> rows;
  for (std::size_t di = 0; di < options.drop_rates.size(); ++di) {
    const double p = options.drop_rates[di];
    if (!(p >= 0.0 && p < 1.0)) throw ConfigurationError("loss_suite: drop rates must lie in [0, 1)");
    Rng drop_rng(derive_seed(seed, 200 + di));
    std::vector<bool> received(n);
    for (std::size_t f = 0; f < n; ++f) received[f] = !drop_rng.bernoulli(p);

    for (const auto& variant : variants) {
      HybridLossConfig loss = cfg.server;
      loss.lambda1 = variant.lambda1;
      loss.lambda2 = variant.lambda2;
      Rng init_rng(derive_seed(seed, 210));
      ServerModel server = make_server_model(prep.encoder, loss, init_rng);
      Rng prior_rng(derive_seed(seed, 211));
      TemporalBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));
      for (std::size_t f = 0; f < n; ++f) {
        if (received[f]) {
          buffer.insert(prep.run_stream[f].timestamp_ms,
                        BufferEntry{payloads[f], options.split, prep.run_stream[f].label});
        }
        if ((f + 1) % static_cast<std::size_t>(cfg.refine_every) == 0 &&
            buffer.size() >= static_cast<std::size_t>(2 * loss.knn_k)) {
          const DenseMatrix prior = sample_uniform_sphere(static_cast<int>(buffer.size()), d, prior_rng);
          refine_step(buffer, server, prior, loss, cfg.server_lr);
        }
      }

      // Received frames use their own embedding, lost ones the mean of the
      // nearest received frame on each side.
      std::vector<std::optional<Vector>> own(n);
      for (std::size_t f = 0; f < n; ++f) {
        if (received[f]) own[f] = trace_suffix(server.blocks, payloads[f], options.split).embedding;
      }
      DenseMatrix stitched(n, static_cast<std::size_t>(d));
      std::vector<std::size_t> scored;
      for (std::size_t f = 0; f < n; ++f) {
        Vector z;
        if (own[f]) {
          z = *own[f];
        } else {
          std::optional<std::size_t> before, after;
          for (std::size_t b = f; b-- > 0;) {
            if (own[b]) {
              before = b;
              break;
            }
          }
          for (std::size_t a = f + 1; a < n; ++a) {
            if (own[a]) {
              after = a;
              break;
            }
          }
          if (!before && !after) continue;
          z.assign(static_cast<std::size_t>(d), 0.0);
          double w = 0.0;
          for (const auto& idx : {before, after}) {
            if (!idx) continue;
            for (int c = 0; c < d; ++c) z[static_cast<std::size_t>(c)] += (*own[*idx])[static_cast<std::size_t>(c)];
            w += 1.0;
          }
          for (double& v : z) v /= w;
        }
        std::copy(z.begin(), z.end(), stitched.row(f).begin());
        scored.push_back(f);
      }

      const DenseMatrix reference =
          server_path_embeddings(prep.encoder, server.blocks, prep.probe_stream, options.split);
      const ProbeModel probe = fit_probe(reference, probe_labels, all_rows(reference.rows()));

      LossRow row;
      row.seed = seed;
      row.variant = variant.name;
      row.drop_rate = p;
      row.accuracy = probe_accuracy(probe, stitched, run_labels, scored);
      row.received = static_cast<std::size_t>(std::count(received.begin(), received.end(), true));
      if (buffer.size() >= static_cast<std::size_t>(2 * loss.knn_k)) {
        const DenseMatrix z = server_embeddings(server, buffer);
        const TemporalGraph graph =
            build_knn_temporal_graph(buffer.timestamps(), loss.knn_k, loss.graph_window_ms);
        row.dirichlet_energy = dirichlet_energy(graph, z);
        Rng swd_rng(derive_seed(seed, 212));
        row.swd_to_uniform = sliced_wasserstein(
            z, sample_uniform_sphere(static_cast<int>(z.rows()), d, swd_rng), projections);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

double accuracy_degradation(const std::vector<LossRow>& rows, const std::string& variant) {
  std::optional<double> first, last;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : rows) {
    if (r.variant != variant) continue;
    if (r.drop_rate < lo) {
      lo = r.drop_rate;
      first = r.accuracy;
    }
    if (r.drop_rate > hi) {
      hi = r.drop_rate;
      last = r.accuracy;
    }
  }
  if (!first || !last) throw ConfigurationError("accuracy_degradation: no rows for " + variant);
  return *first - *last;
}

// ---- uncertainty calibration ----------------------------------------------

CalibrationReport calibration_suite(const PreparedRun& prep, const CalibrationOptions& options) {
  const auto& cfg = prep.config;
  const std::uint64_t seed = prep.seed;
  const int d = cfg.edge.encoder.embed_dim;
  HybridLossConfig loss = cfg.server;
  loss.task = TaskLoss::kCrossEntropy;
  loss.num_classes = cfg.stream.num_classes;
  Rng init_rng(derive_seed(seed, 300));
  ServerModel server = make_server_model(prep.encoder, loss, init_rng);
  Rng prior_rng(derive_seed(seed, 301));
  TemporalBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));
  const std::size_t n = std::min<std::size_t>(prep.run_stream.size(),
                                              static_cast<std::size_t>(options.refine_frames));
  for (std::size_t f = 0; f < n; ++f) {
    const auto& frame = prep.run_stream[f];
    buffer.insert(frame.timestamp_ms,
                  BufferEntry{encode_prefix(prep.encoder, frame.features, options.split), options.split,
                              frame.label});
    if ((f + 1) % static_cast<std::size_t>(cfg.refine_every) == 0 &&
        buffer.size() >= static_cast<std::size_t>(2 * loss.knn_k)) {
      const DenseMatrix prior = sample_uniform_sphere(static_cast<int>(buffer.size()), d, prior_rng);
      refine_step(buffer, server, prior, loss, cfg.server_lr);
    }
  }

  const auto& frames = prep.probe_stream;
  const std::vector<int> labels = frame_labels(frames);
  const DenseMatrix edge_z = embed_frames(prep.encoder, frames);
  const DenseMatrix server_z = server_path_embeddings(prep.encoder, server.blocks, frames, options.split);
  const ProbeSplit split = make_probe_split(frames.size(), ProbeConfig{}.train_fraction, derive_seed(seed, 302));
  const ProbeModel edge_probe = fit_probe(edge_z, labels, split.train);
  const ProbeModel server_probe = fit_probe(server_z, labels, split.train);

  const double max_u = std::log(static_cast<double>(prep.gmm.num_components()));
  std::vector<double> u, inverted, reduction;
  std::vector<double> u_s, u_t, r_s, r_t;
  for (std::size_t row : split.test) {
    const double ut = prep.gmm.initialized ? uncertainty(prep.gmm, edge_z.row(row)) : max_u;
    const double gain = edge_probe.loss(edge_z.row(row), labels[row]) -
                        server_probe.loss(server_z.row(row), labels[row]);
    u.push_back(ut);
    inverted.push_back(max_u - ut);
    reduction.push_back(gain);
    (frames[row].transient ? u_t : u_s).push_back(ut);
    (frames[row].transient ? r_t : r_s).push_back(gain);
  }
  CalibrationReport report;
  report.seed = seed;
  report.frames = u.size();
  report.correlation = defined(pearson(u, reduction));
  report.inverted_correlation = defined(pearson(inverted, reduction));
  report.mean_u_steady = u_s.empty() ? 0.0 : mean(u_s);
  report.mean_u_transient = u_t.empty() ? 0.0 : mean(u_t);
  report.mean_reduction_steady = r_s.empty() ? 0.0 : mean(r_s);
  report.mean_reduction_transient = r_t.empty() ? 0.0 : mean(r_t);
  return report;
}

// ---- representation collapse ----------------------------------------------

CollapseReport collapse_run(const SyntheticStreamSpec& stream, const EdgeLearnerConfig& edge,
                            std::uint64_t seed, int frames, int eval_frames) {
  EdgeLearner learner(edge, derive_seed(seed, 2));
  for (const auto& f : generate_stream(stream, seed, derive_seed(seed, 1), frames)) learner.observe(f);
  const auto held_out = generate_stream(stream, seed, derive_seed(seed, 3), eval_frames);
  const DenseMatrix z = embed_frames(learner.encoder(), held_out);
  Rng prior_rng(derive_seed(seed, 4));
  const int d = edge.encoder.embed_dim;
  CollapseReport report;
  report.effective_rank = effective_rank(z);
  report.swd_to_uniform = sliced_wasserstein(
      z, sample_uniform_sphere(static_cast<int>(z.rows()), d, prior_rng), make_projections(50, d, 17));
  report.probe_accuracy = linear_probe(z, frame_labels(held_out), derive_seed(seed, 5));
  return report;
}

// ---- interpolation and sampling-gap checks ---------------------------------

InterpolationSuiteReport interpolation_suite(std::uint64_t seed, int graphs, int nodes) {
  if (graphs < 1 || nodes < 3) throw ConfigurationError("interpolation_suite: need >= 1 graph of >= 3 nodes");
  InterpolationSuiteReport report;
  const auto p3 = build_knn_temporal_graph({0, 10, 20}, 1, 1000);
  report.worked_example = check_interpolation(p3, DenseMatrix(3, 1, {0.0, 1.0, 2.0}), 1);

  Rng rng(seed);
  constexpr std::size_t kDim = 4;
  for (int g = 0; g < graphs; ++g) {
    std::vector<std::int64_t> ts;
    std::int64_t t = 0;
    for (int i = 0; i < nodes; ++i) {
      ts.push_back(t);
      t += rng.uniform_int(5, 30);
    }
    const int k = g % 2 == 0 ? 1 : static_cast<int>(rng.uniform_int(2, 6));
    const TemporalGraph graph = build_knn_temporal_graph(ts, k, 1'000'000);
    DenseMatrix z(static_cast<std::size_t>(nodes), kDim);
    const double freq = rng.uniform(0.05, 0.4);
    for (std::size_t c = 0; c < kDim; ++c) {
      const double amp = rng.normal();
      const double phase = rng.uniform(0.0, 6.283185307179586);
      for (int i = 0; i < nodes; ++i) {
        z(static_cast<std::size_t>(i), c) = amp * std::sin(freq * i + phase) + 0.05 * rng.normal();
      }
    }
    const int node = static_cast<int>(rng.uniform_int(0, nodes - 1));
    const InterpolationCheck check = check_interpolation(graph, z, node);
    ++report.graphs;
    if (check.violated()) ++report.violations;
    if (check.bound > 0.0) report.worst_ratio = std::max(report.worst_ratio, check.error / check.bound);
  }
  return report;
}

GapExperimentResult sampling_gap_suite(std::uint64_t seed, int trials, std::vector<int> n_values) {
  Rng rng(seed);
  constexpr int kDim = 16;
  const EmbeddingSampler sampler = [](Rng& r) { return sample_unit_sphere(r, kDim); };
  return contrastive_gap_experiment(sampler, kDim, n_values, trials, rng);
}

// ---- CSV ---------------------------------------------------------------------

std::string strategy_csv(const std::vector<StrategyRow>& rows) {
  std::ostringstream out;
  out << "seed,trace,strategy,mean_reward,adaptation_ms,mean_latency_ms,mean_energy_mj,accuracy_proxy,mean_k,tx_bytes_per_batch\n";
  for (const auto& r : rows) {
    out << r.seed << ',' << r.trace << ',' << r.strategy << ',' << num(r.mean_reward) << ','
        << num(r.adaptation_ms) << ',' << num(r.mean_latency_ms) << ',' << num(r.mean_energy_mj) << ','
        << num(r.accuracy_proxy) << ',' << num(r.mean_k) << ',' << num(r.tx_bytes_per_batch) << '\n';
  }
  return out.str();
}

std::string loss_csv(const std::vector<LossRow>& rows) {
  std::ostringstream out;
  out << "seed,variant,drop_rate,accuracy,dirichlet_energy,swd_to_uniform,received\n";
  for (const auto& r : rows) {
    out << r.seed << ',' << r.variant << ',' << num(r.drop_rate) << ',' << num(r.accuracy) << ','
        << num(r.dirichlet_energy) << ',' << num(r.swd_to_uniform) << ',' << r.received << '\n';
  }
  return out.str();
}

std::string calibration_csv(const std::vector<CalibrationReport>& rows) {
  std::ostringstream out;
  out << "seed,frames,correlation,inverted_correlation,mean_u_steady,mean_u_transient,"
         "mean_reduction_steady,mean_reduction_transient\n";
  for (const auto& r : rows) {
    out << r.seed << ',' << r.frames << ',' << (r.correlation ? num(*r.correlation) : "undefined") << ','
        << (r.inverted_correlation ? num(*r.inverted_correlation) : "undefined") << ','
        << num(r.mean_u_steady) << ',' << num(r.mean_u_transient) << ',' << num(r.mean_reduction_steady)
        << ',' << num(r.mean_reduction_transient) << '\n';
  }
  return out.str();
}

std::string interpolation_csv(const InterpolationSuiteReport& r) {
  std::ostringstream out;
  out << "graphs,violations,worst_ratio,example_error,example_bound,example_alpha,example_lambda2\n"
      << r.graphs << ',' << r.violations << ',' << num(r.worst_ratio) << ','
      << num(r.worked_example.error) << ',' << num(r.worked_example.bound) << ','
      << num(r.worked_example.alpha) << ',' << num(r.worked_example.lambda2) << '\n';
  return out.str();
}

std::string sampling_gap_csv(const GapExperimentResult& result) {
  std::ostringstream out;
  out << "n,mean_gap,median_gap\n";
  for (const auto& row : result.rows) {
    out << row.n << ',' << num(row.mean_gap) << ',' << num(row.median_gap) << '\n';
  }
  out << "# log_log_slope," << num(result.log_log_slope) << '\n';
  return out.str();
}

}  // namespace edgesplit
