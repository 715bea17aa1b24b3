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

#include "edgesplit/server.hpp"

#include <cmath>
#include <string>

#include "edgesplit/error.hpp"

namespace edgesplit {

TemporalBuffer::TemporalBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigurationError("temporal buffer capacity must be >= 1");
}

void TemporalBuffer::insert(std::int64_t timestamp_ms, BufferEntry entry) {
  auto [it, inserted] = slots_.insert_or_assign(timestamp_ms, std::move(entry));
  if (!inserted) ++replaced_;
  while (slots_.size() > capacity_) slots_.erase(slots_.begin());
}

std::vector<std::int64_t> TemporalBuffer::timestamps() const {
  std::vector<std::int64_t> ts;
  ts.reserve(slots_.size());
  for (const auto& [t, e] : slots_) ts.push_back(t);
  return ts;
}

void HybridLossConfig::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigurationError("loss weights must be non-negative");
  if (!(temperature > 0.0)) throw ConfigurationError("temperature must be positive");
  if (knn_k < 1) throw ConfigurationError("knn_k must be >= 1");
  if (num_projections < 1) throw ConfigurationError("need at least one projection");
  if (task == TaskLoss::kCrossEntropy && num_classes < 2) {
    throw ConfigurationError("cross-entropy task needs num_classes >= 2");
  }
}

ServerModel make_server_model(const EncoderState& encoder, const HybridLossConfig& config,
                              Rng& rng) {
  config.validate();
  ServerModel model;
  model.blocks = encoder.blocks;
  model.velocity = zero_gradient(model.blocks);
  if (config.task == TaskLoss::kCrossEntropy) {
    model.classifier = make_dense_layer(static_cast<std::size_t>(encoder.config.embed_dim),
                                        static_cast<std::size_t>(config.num_classes),
                                        Activation::kLinear, rng);
    model.classifier_velocity = zero_gradient(std::span(&*model.classifier, 1));
  }
  return model;
}

namespace {

std::uint64_t mix(std::uint64_t seed, std::int64_t t) {
  std::uint64_t x = seed ^ (static_cast<std::uint64_t>(t) + 0x9E3779B97F4A7C15ULL);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

SuffixTrace entry_trace(const LayerStack& blocks, std::span<const double> input, int split) {
  SuffixTrace trace = trace_suffix(blocks, input, split);
  // Entries uplinked after the last block carry an embedding already; keep it on the sphere.
  if (split == static_cast<int>(blocks.size())) trace.embedding = l2_normalize(trace.raw);
  return trace;
}

}  // namespace

DenseMatrix server_embeddings(const ServerModel& model, const TemporalBuffer& buffer) {
  if (model.blocks.empty()) throw ConfigurationError("server model has no blocks");
  DenseMatrix z(buffer.size(), model.blocks.back().out_dim());
  std::size_t i = 0;
  for (const auto& [t, e] : buffer.slots()) {
    const auto trace = entry_trace(model.blocks, e.payload, e.split);
    std::copy(trace.embedding.begin(), trace.embedding.end(), z.row(i++).begin());
  }
  return z;
}

std::optional<HybridLossResult> hybrid_loss_and_grad(const TemporalBuffer& buffer,
                                                     const ServerModel& model,
                                                     const DenseMatrix& prior,
                                                     const HybridLossConfig& config) {
  config.validate();
  const std::size_t n = buffer.size();
  if (n < static_cast<std::size_t>(2 * config.knn_k)) return std::nullopt;
  const std::size_t d = model.blocks.back().out_dim();
  if (prior.rows() != n || prior.cols() != d) {
    throw ConfigurationError("prior sample panel must be " + std::to_string(n) + " x " +
                             std::to_string(d));
  }

  std::vector<std::int64_t> ts;
  std::vector<SuffixTrace> clean;
  DenseMatrix z(n, d);
  for (const auto& [t, e] : buffer.slots()) {
    ts.push_back(t);
    clean.push_back(entry_trace(model.blocks, e.payload, e.split));
    std::copy(clean.back().embedding.begin(), clean.back().embedding.end(),
              z.row(clean.size() - 1).begin());
  }

  HybridLossResult res;
  res.task_grad = zero_gradient(model.blocks);
  res.swd_grad = zero_gradient(model.blocks);
  res.laplacian_grad = zero_gradient(model.blocks);

  if (config.task == TaskLoss::kInfoNce) {
    std::vector<SuffixTrace> ta, tb;
    std::vector<Vector> za, zb;
    for (const auto& [t, e] : buffer.slots()) {
      Rng rng(mix(config.view_seed, t));
      Vector va = e.payload, vb = e.payload;
      for (double& x : va) x += config.view_noise_std * rng.normal();
      for (double& x : vb) x += config.view_noise_std * rng.normal();
      ta.push_back(entry_trace(model.blocks, va, e.split));
      tb.push_back(entry_trace(model.blocks, vb, e.split));
      za.push_back(ta.back().embedding);
      zb.push_back(tb.back().embedding);
    }
    const ContrastiveResult nce = info_nce(za, zb, {}, config.temperature, true);
    res.task = nce.loss;
    for (std::size_t i = 0; i < n; ++i) {
      backprop_suffix(model.blocks, ta[i], nce.anchor_grads[i], res.task_grad);
      backprop_suffix(model.blocks, tb[i], nce.positive_grads[i], res.task_grad);
    }
  } else {
    if (!model.classifier) throw ConfigurationError("cross-entropy task needs a classifier head");
    const DenseLayer& head = *model.classifier;
    LayerGradient head_grad{DenseMatrix(head.out_dim(), head.in_dim()), Vector(head.out_dim(), 0.0)};
    std::size_t labelled = 0;
    for (const auto& [t, e] : buffer.slots()) labelled += e.label.has_value();
    if (labelled == 0) throw DegenerateInputError("cross-entropy task: buffer has no labels");
    std::size_t i = 0;
    for (const auto& [t, e] : buffer.slots()) {
      const std::size_t row = i++;
      if (!e.label) continue;
      const auto y = static_cast<std::size_t>(*e.label);
      if (y >= head.out_dim()) throw ConfigurationError("label outside the classifier range");
      const Vector logits = head.weights.multiply(z.row(row));
      Vector scores(logits.size());
      for (std::size_t c = 0; c < scores.size(); ++c) scores[c] = logits[c] + head.bias[c];
      const double lse = log_sum_exp(scores);
      res.task += (lse - scores[y]) / static_cast<double>(labelled);
      Vector delta(scores.size());
      for (std::size_t c = 0; c < scores.size(); ++c) {
        delta[c] = (std::exp(scores[c] - lse) - (c == y ? 1.0 : 0.0)) / static_cast<double>(labelled);
        head_grad.bias[c] += delta[c];
        for (std::size_t j = 0; j < d; ++j) head_grad.weights(c, j) += delta[c] * z(row, j);
      }
      backprop_suffix(model.blocks, clean[row], head.weights.multiply_transposed(delta), res.task_grad);
    }
    res.classifier_grad = std::move(head_grad);
  }

  const ProjectionSet proj = make_projections(config.num_projections, static_cast<int>(d),
                                              config.projection_seed);
  res.swd = sliced_wasserstein(z, prior, proj);
  const DenseMatrix dz_swd = swd_gradient(z, prior, proj);
  const TemporalGraph graph = build_knn_temporal_graph(ts, config.knn_k, config.graph_window_ms);
  res.laplacian = dirichlet_energy(graph, z);
  const DenseMatrix dz_lap = dirichlet_gradient(graph, z);
  for (std::size_t i = 0; i < n; ++i) {
    backprop_suffix(model.blocks, clean[i], dz_swd.row(i), res.swd_grad);
    backprop_suffix(model.blocks, clean[i], dz_lap.row(i), res.laplacian_grad);
  }

  res.total = res.task + config.lambda1 * res.swd + config.lambda2 * res.laplacian;
  res.total_grad = res.task_grad;
  accumulate(res.total_grad, res.swd_grad, config.lambda1);
  accumulate(res.total_grad, res.laplacian_grad, config.lambda2);
  return res;
}

RefineResult refine_step(const TemporalBuffer& buffer, ServerModel& model, const DenseMatrix& prior,
                         const HybridLossConfig& config, double lr, double momentum) {
  RefineResult out;
  const auto res = hybrid_loss_and_grad(buffer, model, prior, config);
  if (!res) return out;
  out.loss = res->total;
  if (!std::isfinite(res->total)) {
    out.status = RefineStatus::kDiverged;
    return out;
  }
  if (!model.initial_loss) model.initial_loss = res->total;
  if (*model.initial_loss > 0.0 && res->total > 10.0 * *model.initial_loss) {
    out.status = RefineStatus::kDiverged;
    return out;
  }
  if (model.velocity.size() != model.blocks.size()) model.velocity = zero_gradient(model.blocks);
  auto sgd = [&](std::vector<double>& param, std::vector<double>& vel, const std::vector<double>& g) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      vel[i] = momentum * vel[i] + g[i];
      param[i] -= lr * vel[i];
    }
  };
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    sgd(model.blocks[l].weights.values(), model.velocity[l].weights.values(),
        res->total_grad[l].weights.values());
    sgd(model.blocks[l].bias, model.velocity[l].bias, res->total_grad[l].bias);
  }
  if (model.classifier && res->classifier_grad) {
    if (model.classifier_velocity.empty()) {
      model.classifier_velocity = zero_gradient(std::span(&*model.classifier, 1));
    }
    sgd(model.classifier->weights.values(), model.classifier_velocity[0].weights.values(),
        res->classifier_grad->weights.values());
    sgd(model.classifier->bias, model.classifier_velocity[0].bias, res->classifier_grad->bias);
  }
  ++model.steps;
  out.status = RefineStatus::kUpdated;
  return out;
}

StitchResult stitch_metric(const std::vector<std::int64_t>& timestamps, const DenseMatrix& before,
                           const DenseMatrix& after, int knn_k, std::int64_t window_ms,
                           std::int64_t frame_ms) {
  if (before.rows() != timestamps.size() || after.rows() != timestamps.size()) {
    throw ConfigurationError("stitch_metric: embeddings must match the timestamps");
  }
  const TemporalGraph graph = build_knn_temporal_graph(timestamps, knn_k, window_ms);
  std::vector<GraphEdge> boundary;
  for (const auto& e : graph.edges) {
    const auto ti = timestamps[static_cast<std::size_t>(e.i)];
    const auto tj = timestamps[static_cast<std::size_t>(e.j)];
    const std::int64_t span_frames = std::llabs(tj - ti) / frame_ms;
    if (span_frames > std::abs(e.j - e.i)) boundary.push_back(e);
  }
  StitchResult r;
  const auto& edges = boundary.empty() ? graph.edges : boundary;
  r.boundary_edges = boundary.size();
  for (const auto& e : edges) {
    const auto i = static_cast<std::size_t>(e.i), j = static_cast<std::size_t>(e.j);
    r.energy_before += e.weight * squared_distance(before.row(i), before.row(j));
    r.energy_after += e.weight * squared_distance(after.row(i), after.row(j));
  }
  if (!edges.empty()) {
    r.energy_before /= static_cast<double>(edges.size());
    r.energy_after /= static_cast<double>(edges.size());
  }
  return r;
}

void SyncSchedule::validate() const {
  if (t_sync < 1) throw ConfigurationError("T_sync must be >= 1 frame");
}

std::optional<SyncPayload> lazy_sync(std::int64_t frame_index, const SyncSchedule& schedule,
                                     const GmmState& gmm, const LayerStack& encoder_blocks,
                                     const LinkFlags& flags) {
  schedule.validate();
  if (frame_index <= 0 || frame_index % schedule.t_sync != 0) return std::nullopt;
  SyncPayload p;
  p.gmm_bytes = serialized_size_bytes(gmm, 2);
  p.gmm_message = serialize_gmm(gmm, 2);
  if (flags.charging || flags.high_bandwidth) p.encoder_bytes = 2 * parameter_count(encoder_blocks);
  return p;
}

}  // namespace edgesplit
