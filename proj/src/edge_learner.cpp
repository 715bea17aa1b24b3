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

#include "edgesplit/edge_learner.hpp"

#include <cmath>

#include "edgesplit/error.hpp"

namespace edgesplit {

void EdgeLearnerConfig::validate() const {
  encoder.validate();
  gmm.validate();
  if (gmm.dim != encoder.embed_dim) {
    throw ConfigurationError("edge learner: GMM dimension must equal the embedding dimension");
  }
  if (batch_size < 1) throw ConfigurationError("edge learner: batch_size must be >= 1");
  if (virtual_negatives < 0) throw ConfigurationError("edge learner: virtual_negatives must be >= 0");
  if (batch_size == 1 && virtual_negatives == 0 && train) {
    throw ConfigurationError("edge learner: a batch of one needs virtual negatives");
  }
  if (!(temperature > 0.0) || !(hardness > 0.0)) {
    throw ConfigurationError("edge learner: temperatures must be positive");
  }
  if (!(lr >= 0.0)) throw ConfigurationError("edge learner: lr must be non-negative");
  if (augment.mask_width < 0 || augment.mask_width >= encoder.input_dim || augment.noise_std < 0.0) {
    throw ConfigurationError("edge learner: the mask must leave part of the input visible");
  }
}

EdgeLearner::EdgeLearner(const EdgeLearnerConfig& config, std::uint64_t seed)
    : config_(config), gmm_(make_gmm(config.gmm)), rng_(seed) {
  config_.validate();
  encoder_ = make_encoder(config_.encoder, rng_);
}

EdgeLearner::EdgeLearner(const EdgeLearnerConfig& config, EncoderState encoder, std::uint64_t seed)
    : config_(config), encoder_(std::move(encoder)), gmm_(make_gmm(config.gmm)), rng_(seed) {
  config_.validate();
  if (encoder_.config.input_dim != config_.encoder.input_dim ||
      encoder_.config.embed_dim != config_.encoder.embed_dim ||
      encoder_.config.num_blocks != config_.encoder.num_blocks) {
    throw ConfigurationError("edge learner: supplied encoder does not match the configuration");
  }
}

EdgeLearner::EdgeLearner(const EdgeLearnerConfig& config, EncoderState encoder, GmmState gmm,
                         std::uint64_t seed)
    : EdgeLearner(config, std::move(encoder), seed) {
  if (gmm.config.dim != config_.gmm.dim || gmm.config.num_components != config_.gmm.num_components) {
    throw ConfigurationError("edge learner: supplied mixture does not match the configuration");
  }
  gmm_ = std::move(gmm);
}

EdgeObservation EdgeLearner::observe(const StreamFrame& frame) {
  EdgeObservation obs;
  obs.embedding = encode_full(encoder_, frame.features);
  // Until the mixture exists every frame is treated as maximally uncertain.
  obs.uncertainty = gmm_.initialized ? uncertainty(gmm_, obs.embedding)
                                     : std::log(static_cast<double>(gmm_.num_components()));
  em_update(gmm_, obs.embedding);
  if (!config_.train) return obs;

  pending_.push_back(augment(frame.features, config_.augment, rng_));
  if (static_cast<int>(pending_.size()) < config_.batch_size) return obs;

  const bool use_virtual =
      config_.virtual_negatives > 0 && gmm_.initialized && gmm_.num_components() >= 2;
  if (!use_virtual && config_.batch_size < 2) {
    pending_.clear();
    return obs;
  }
  std::vector<std::vector<Vector>> negatives;
  if (use_virtual) {
    negatives.reserve(pending_.size());
    for (const auto& pair : pending_) {
      const Vector anchor = encode_full(encoder_, pair.view_a);
      negatives.push_back(sample_virtual_negatives(gmm_, anchor, assign_component(gmm_, anchor),
                                                   config_.virtual_negatives, config_.hardness,
                                                   rng_));
    }
  }
  const bool in_batch = config_.batch_size > 1 && (config_.in_batch_negatives || !use_virtual);
  const EdgeLossResult res =
      edge_batch_loss_and_grad(encoder_, pending_, negatives, config_.temperature, in_batch);
  adam_step(encoder_, res.gradients, config_.lr);
  ++updates_;
  obs.loss = res.loss;
  pending_.clear();
  return obs;
}

DenseMatrix embed_frames(const EncoderState& encoder, const std::vector<StreamFrame>& frames) {
  DenseMatrix out(frames.size(), static_cast<std::size_t>(encoder.config.embed_dim));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Vector z = encode_full(encoder, frames[i].features);
    std::copy(z.begin(), z.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace edgesplit
