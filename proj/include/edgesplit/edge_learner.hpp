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

// On-device learning loop: embeds each frame, tracks it in the GMM memory,
// reports posterior uncertainty and takes an Adam step on streaming InfoNCE
// every `batch_size` frames, with negatives synthesised from the mixture.

#ifndef EDGESPLIT_EDGE_LEARNER_HPP_
#define EDGESPLIT_EDGE_LEARNER_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "edgesplit/encoder.hpp"
#include "edgesplit/gmm.hpp"

namespace edgesplit {

struct EdgeLearnerConfig {
  EncoderConfig encoder;
  GmmConfig gmm;
  AugmentConfig augment;
  int batch_size = 8;
  int virtual_negatives = 256;
  double hardness = 0.1;
  double temperature = 0.1;
  double lr = 1e-3;
  /// Also contrast against the other pairs of the batch. Always on when
  /// virtual_negatives is zero (plain small-batch InfoNCE).
  bool in_batch_negatives = false;
  bool train = true;

  void validate() const;
};

struct EdgeObservation {
  Vector embedding;
  double uncertainty = 0.0;
  std::optional<double> loss;  // set on frames that completed a batch
};

class EdgeLearner {
 public:
  EdgeLearner(const EdgeLearnerConfig& config, std::uint64_t seed);
  /// Starts from an existing encoder (for example one pre-trained elsewhere).
  EdgeLearner(const EdgeLearnerConfig& config, EncoderState encoder, std::uint64_t seed);
  /// Resumes with both the encoder and the mixture memory of an earlier run.
  EdgeLearner(const EdgeLearnerConfig& config, EncoderState encoder, GmmState gmm,
              std::uint64_t seed);

  EdgeObservation observe(const StreamFrame& frame);

  const EncoderState& encoder() const { return encoder_; }
  const GmmState& gmm() const { return gmm_; }
  const EdgeLearnerConfig& config() const { return config_; }
  std::int64_t updates() const { return updates_; }

 private:
  EdgeLearnerConfig config_;
  EncoderState encoder_;
  GmmState gmm_;
  Rng rng_;
  std::vector<AugmentedPair> pending_;
  std::int64_t updates_ = 0;
};

/// Edge embeddings of `frames` under `encoder`, one row per frame.
DenseMatrix embed_frames(const EncoderState& encoder, const std::vector<StreamFrame>& frames);

}  // namespace edgesplit

#endif  // EDGESPLIT_EDGE_LEARNER_HPP_
