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

// Synthetic labelled feature stream standing in for an audio front end:
// steady segments drawn from low-noise, slowly drifting class prototypes and
// transient segments with heavier noise and sporadic bursts.

#ifndef EDGESPLIT_STREAM_HPP_
#define EDGESPLIT_STREAM_HPP_

#include <cstdint>
#include <vector>

#include "edgesplit/encoder.hpp"

namespace edgesplit {

struct SyntheticStreamSpec {
  int num_classes = 15;
  double steady_fraction = 0.6;
  double transient_fraction = 0.4;
  int input_dim = 128;
  std::int64_t frame_ms = 10;
  int min_segment_frames = 10;
  int max_segment_frames = 40;
  double prototype_scale = 1.0;
  /// Per-dimension noise standard deviation in each regime.
  double steady_noise = 0.3;
  double transient_noise = 0.9;
  /// AR(1) coefficient of the steady-state noise process.
  double steady_correlation = 0.9;
  double burst_probability = 0.2;
  double burst_amplitude = 2.5;
  int burst_width = 16;

  void validate() const;
  /// Classes [0, steady_classes()) are steady, the rest transient.
  int steady_classes() const;
};

/// Deterministic in (spec, seed). Frame f has timestamp f * frame_ms.
std::vector<StreamFrame> generate_stream(const SyntheticStreamSpec& spec, std::uint64_t seed,
                                         int num_frames);

/// Frames sampled with `sample_seed` around the prototypes of
/// `prototype_seed`, so independent streams can share one set of classes.
std::vector<StreamFrame> generate_stream(const SyntheticStreamSpec& spec,
                                         std::uint64_t prototype_seed, std::uint64_t sample_seed,
                                         int num_frames);

/// Class prototypes used by generate_stream for `seed` (rows = classes).
DenseMatrix stream_prototypes(const SyntheticStreamSpec& spec, std::uint64_t seed);

}  // namespace edgesplit

#endif  // EDGESPLIT_STREAM_HPP_
