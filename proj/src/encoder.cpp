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

#include "edgesplit/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "edgesplit/error.hpp"

namespace edgesplit {

void EncoderConfig::validate() const {
  if (num_blocks < 1) throw ConfigurationError("encoder: num_blocks must be >= 1");
  if (input_dim < 1 || hidden_dim < 1 || embed_dim < 1) {
    throw ConfigurationError("encoder: all dimensions must be >= 1");
  }
}

int EncoderConfig::width_at(int k) const {
  if (k < 0 || k > num_blocks) {
    throw ConfigurationError("split index " + std::to_string(k) + " outside [0, " +
                             std::to_string(num_blocks) + "]");
  }
  if (k == 0) return input_dim;
  if (k == num_blocks) return embed_dim;
  return hidden_dim;
}

EncoderState make_encoder(const EncoderConfig& config, Rng& rng) {
  config.validate();
  EncoderState state;
  state.config = config;
  const int L = config.num_blocks;
  for (int i = 0; i < L; ++i) {
    const int in = config.width_at(i);
    const bool last = i == L - 1;
    const int out = last ? config.embed_dim : config.hidden_dim;
    state.blocks.push_back(make_dense_layer(static_cast<std::size_t>(in),
                                            static_cast<std::size_t>(out),
                                            last ? Activation::kLinear : Activation::kTanh, rng));
  }
  state.first_moment = zero_gradient(state.blocks);
  state.second_moment = zero_gradient(state.blocks);
  return state;
}

Vector augment_view(std::span<const double> features, const AugmentConfig& config, Rng& rng) {
  Vector view(features.begin(), features.end());
  if (config.noise_std > 0.0) {
    for (double& x : view) x += config.noise_std * rng.normal();
  }
  const int dim = static_cast<int>(view.size());
  const int width = std::clamp(config.mask_width, 0, dim);
  if (width > 0) {
    const auto start = static_cast<int>(rng.uniform_int(0, dim - width));
    std::fill(view.begin() + start, view.begin() + start + width, 0.0);
  }
  return view;
}

AugmentedPair augment(std::span<const double> features, const AugmentConfig& config, Rng& rng) {
  AugmentedPair pair;
  pair.view_a = augment_view(features, config, rng);
  pair.view_b = augment_view(features, config, rng);
  return pair;
}

namespace {

void check_split(const EncoderState& state, int k) {
  if (k < 0 || k > state.config.num_blocks) {
    throw ConfigurationError("split index " + std::to_string(k) + " outside [0, " +
                             std::to_string(state.config.num_blocks) + "]");
  }
}

}  // namespace

Vector encode_prefix(const EncoderState& state, std::span<const double> features, int k) {
  check_split(state, k);
  if (features.size() != static_cast<std::size_t>(state.config.input_dim)) {
    throw ConfigurationError("encode_prefix: feature dimension mismatch");
  }
  if (k == 0) return {features.begin(), features.end()};
  auto pass = mlp_forward(std::span(state.blocks).first(static_cast<std::size_t>(k)), features);
  if (k == state.config.num_blocks) return l2_normalize(pass.output);
  return std::move(pass.output);
}

Vector encode_suffix(const EncoderState& state, std::span<const double> intermediate, int k) {
  check_split(state, k);
  if (intermediate.size() != static_cast<std::size_t>(state.config.width_at(k))) {
    throw ConfigurationError("encode_suffix: intermediate has width " +
                             std::to_string(intermediate.size()) + ", expected " +
                             std::to_string(state.config.width_at(k)));
  }
  if (k == state.config.num_blocks) return {intermediate.begin(), intermediate.end()};
  auto pass = mlp_forward(std::span(state.blocks).subspan(static_cast<std::size_t>(k)),
                          intermediate);
  return l2_normalize(pass.output);
}

Vector encode_full(const EncoderState& state, std::span<const double> features) {
  return encode_prefix(state, features, state.config.num_blocks);
}

SuffixTrace trace_suffix(std::span<const DenseLayer> blocks, std::span<const double> input,
                         int split) {
  SuffixTrace trace;
  trace.split = split;
  const auto L = static_cast<int>(blocks.size());
  if (split < 0 || split > L) throw ConfigurationError("trace_suffix: split out of range");
  if (split == L) {
    trace.raw.assign(input.begin(), input.end());
    trace.embedding = trace.raw;
    return trace;
  }
  trace.pass = mlp_forward(blocks.subspan(static_cast<std::size_t>(split)), input);
  trace.raw = trace.pass.output;
  trace.embedding = l2_normalize(trace.raw);
  return trace;
}

void backprop_suffix(std::span<const DenseLayer> blocks, const SuffixTrace& trace,
                     std::span<const double> upstream, std::vector<LayerGradient>& into) {
  const auto L = static_cast<int>(blocks.size());
  if (trace.split == L) return;
  const Vector d_raw = l2_normalize_backward(trace.raw, trace.embedding, upstream);
  auto suffix = blocks.subspan(static_cast<std::size_t>(trace.split));
  MlpGradient g = mlp_backward(suffix, trace.pass.cache, d_raw);
  accumulate_tail(into, g.layers);
}

ContrastiveResult info_nce(const std::vector<Vector>& anchors, const std::vector<Vector>& positives,
                           const std::vector<std::vector<Vector>>& virtual_negatives,
                           double temperature, bool in_batch_negatives) {
  const std::size_t n = anchors.size();
  if (n == 0 || positives.size() != n) {
    throw ConfigurationError("info_nce: anchors and positives must be non-empty and paired");
  }
  if (!(temperature > 0.0)) throw ConfigurationError("info_nce: temperature must be positive");
  if (!virtual_negatives.empty() && virtual_negatives.size() != n) {
    throw ConfigurationError("info_nce: one negative set per anchor expected");
  }
  const std::size_t dim = anchors.front().size();
  ContrastiveResult result;
  result.anchor_grads.assign(n, Vector(dim, 0.0));
  result.positive_grads.assign(n, Vector(dim, 0.0));
  const double inv_t = 1.0 / temperature;
  const double inv_n = 1.0 / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    static const std::vector<Vector> kNone;
    const auto& virt = virtual_negatives.empty() ? kNone : virtual_negatives[i];
    const std::size_t in_batch = in_batch_negatives ? n - 1 : 0;
    if (virt.empty() && in_batch == 0) {
      throw DegenerateInputError("info_nce: anchor has no negatives");
    }
    const Vector& z = anchors[i];
    Vector logits;
    logits.reserve(1 + virt.size() + in_batch);
    logits.push_back(dot(z, positives[i]) * inv_t);
    for (const auto& neg : virt) logits.push_back(dot(z, neg) * inv_t);
    if (in_batch_negatives) {
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) logits.push_back(dot(z, positives[j]) * inv_t);
    }
    const double lse = log_sum_exp(logits);
    result.loss += (lse - logits[0]) * inv_n;

    Vector& gz = result.anchor_grads[i];
    std::size_t pos = 0;
    auto push = [&](const Vector& other, Vector& other_grad, double target) {
      const double p = std::exp(logits[pos++] - lse);
      const double coeff = (p - target) * inv_t * inv_n;
      for (std::size_t c = 0; c < dim; ++c) {
        gz[c] += coeff * other[c];
        other_grad[c] += coeff * z[c];
      }
    };
    push(positives[i], result.positive_grads[i], 1.0);
    Vector discard(dim, 0.0);
    for (const auto& neg : virt) push(neg, discard, 0.0);
    if (in_batch_negatives) {
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) push(positives[j], result.positive_grads[j], 0.0);
    }
  }
  return result;
}

EdgeLossResult edge_batch_loss_and_grad(const EncoderState& state,
                                        const std::vector<AugmentedPair>& pairs,
                                        const std::vector<std::vector<Vector>>& negatives,
                                        double temperature, bool in_batch_negatives) {
  std::vector<SuffixTrace> traces_a, traces_b;
  std::vector<Vector> za, zb;
  traces_a.reserve(pairs.size());
  traces_b.reserve(pairs.size());
  for (const auto& pair : pairs) {
    traces_a.push_back(trace_suffix(state.blocks, pair.view_a, 0));
    traces_b.push_back(trace_suffix(state.blocks, pair.view_b, 0));
    za.push_back(traces_a.back().embedding);
    zb.push_back(traces_b.back().embedding);
  }
  for (const auto& set : negatives)
    for (const auto& v : set)
      if (std::abs(norm(v) - 1.0) > 1e-6) {
        throw ConfigurationError("edge loss: negatives must be unit vectors");
      }
  ContrastiveResult nce = info_nce(za, zb, negatives, temperature, in_batch_negatives);
  EdgeLossResult result;
  result.loss = nce.loss;
  result.gradients = zero_gradient(state.blocks);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    backprop_suffix(state.blocks, traces_a[i], nce.anchor_grads[i], result.gradients);
    backprop_suffix(state.blocks, traces_b[i], nce.positive_grads[i], result.gradients);
  }
  return result;
}

EdgeLossResult edge_loss_and_grad(const EncoderState& state, const AugmentedPair& pair,
                                  const std::vector<Vector>& negatives, double temperature) {
  if (negatives.empty()) throw DegenerateInputError("edge loss: no virtual negatives");
  return edge_batch_loss_and_grad(state, {pair}, {negatives}, temperature, false);
}

void adam_step(EncoderState& state, const std::vector<LayerGradient>& gradients, double lr,
               const AdamConfig& adam) {
  if (gradients.size() != state.blocks.size()) {
    throw ConfigurationError("adam_step: gradient layer count mismatch");
  }
  for (const auto& g : gradients) {
    for (double v : g.weights.values())
      if (!std::isfinite(v)) throw TrainingDivergenceError("adam_step: non-finite gradient");
    for (double v : g.bias)
      if (!std::isfinite(v)) throw TrainingDivergenceError("adam_step: non-finite gradient");
  }
  if (state.first_moment.size() != state.blocks.size()) {
    state.first_moment = zero_gradient(state.blocks);
    state.second_moment = zero_gradient(state.blocks);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);

  auto update = [&](std::vector<double>& param, const std::vector<double>& grad,
                    std::vector<double>& m, std::vector<double>& v) {
    if (param.size() != grad.size()) throw ConfigurationError("adam_step: shape mismatch");
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * grad[i];
      v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      param[i] -= lr * mhat / (std::sqrt(vhat) + adam.epsilon);
    }
  };
  for (std::size_t l = 0; l < state.blocks.size(); ++l) {
    update(state.blocks[l].weights.values(), gradients[l].weights.values(),
           state.first_moment[l].weights.values(), state.second_moment[l].weights.values());
    update(state.blocks[l].bias, gradients[l].bias, state.first_moment[l].bias,
           state.second_moment[l].bias);
  }
}

}  // namespace edgesplit
