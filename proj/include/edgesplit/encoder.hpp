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

// Splitable block encoder. Block i is a dense layer; all blocks but the last
// use tanh, the last is linear and its output is l2-normalised. Evaluating the
// first k blocks on the device and the remaining L-k on the server yields the
// same embedding as a single pass.

#ifndef EDGESPLIT_ENCODER_HPP_
#define EDGESPLIT_ENCODER_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "edgesplit/numerics.hpp"

namespace edgesplit {

struct EncoderConfig {
  int num_blocks = 8;
  int input_dim = 128;
  int hidden_dim = 128;
  int embed_dim = 128;

  void validate() const;
  /// Width of the activation handed over at split index k.
  int width_at(int k) const;
};

struct EncoderState {
  EncoderConfig config;
  LayerStack blocks;
  std::int64_t step = 0;
  std::vector<LayerGradient> first_moment;
  std::vector<LayerGradient> second_moment;
};

EncoderState make_encoder(const EncoderConfig& config, Rng& rng);

struct StreamFrame {
  std::int64_t timestamp_ms = 0;
  Vector features;
  std::optional<int> label;
  bool transient = false;
};

struct AugmentConfig {
  double noise_std = 0.05;
  int mask_width = 16;
};

struct AugmentedPair {
  Vector view_a;
  Vector view_b;
};

/// Two independent views: additive Gaussian noise, then a zeroed contiguous band.
AugmentedPair augment(std::span<const double> features, const AugmentConfig& config, Rng& rng);
Vector augment_view(std::span<const double> features, const AugmentConfig& config, Rng& rng);

Vector encode_prefix(const EncoderState& state, std::span<const double> features, int k);
Vector encode_suffix(const EncoderState& state, std::span<const double> intermediate, int k);
Vector encode_full(const EncoderState& state, std::span<const double> features);

/// Forward pass through blocks [k, L) followed by normalisation, keeping what
/// backprop needs.
struct SuffixTrace {
  int split = 0;
  MlpResult pass;
  Vector raw;        // pre-normalisation output
  Vector embedding;  // unit norm
};
SuffixTrace trace_suffix(std::span<const DenseLayer> blocks, std::span<const double> input,
                         int split);
/// Gradient of <upstream, embedding> w.r.t. blocks [split, L), as a full-size
/// gradient (prefix blocks zero).
void backprop_suffix(std::span<const DenseLayer> blocks, const SuffixTrace& trace,
                     std::span<const double> upstream, std::vector<LayerGradient>& into);

/// InfoNCE over unit vectors. Anchor i is paired with positive i; its negatives
/// are `virtual_negatives[i]` plus, if `in_batch_negatives`, every other
/// positive in the batch. The loss is averaged over anchors.
struct ContrastiveResult {
  double loss = 0.0;
  std::vector<Vector> anchor_grads;
  std::vector<Vector> positive_grads;
};
ContrastiveResult info_nce(const std::vector<Vector>& anchors, const std::vector<Vector>& positives,
                           const std::vector<std::vector<Vector>>& virtual_negatives,
                           double temperature, bool in_batch_negatives);

struct EdgeLossResult {
  double loss = 0.0;
  std::vector<LayerGradient> gradients;
};

/// Streaming InfoNCE for one positive pair against virtual negatives.
EdgeLossResult edge_loss_and_grad(const EncoderState& state, const AugmentedPair& pair,
                                  const std::vector<Vector>& negatives, double temperature);

/// Mini-batch version; `negatives[i]` belongs to pair i and may be empty when
/// in-batch negatives are enabled.
EdgeLossResult edge_batch_loss_and_grad(const EncoderState& state,
                                        const std::vector<AugmentedPair>& pairs,
                                        const std::vector<std::vector<Vector>>& negatives,
                                        double temperature, bool in_batch_negatives);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

void adam_step(EncoderState& state, const std::vector<LayerGradient>& gradients, double lr,
               const AdamConfig& adam = {});

}  // namespace edgesplit

#endif  // EDGESPLIT_ENCODER_HPP_
