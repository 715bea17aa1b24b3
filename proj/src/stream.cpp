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

#include "edgesplit/stream.hpp"

#include <algorithm>
#include <cmath>

#include "edgesplit/error.hpp"

namespace edgesplit {

void SyntheticStreamSpec::validate() const {
  if (num_classes < 1) throw ConfigurationError("stream: num_classes must be >= 1");
  if (steady_fraction < 0.0 || transient_fraction < 0.0 ||
      std::abs(steady_fraction + transient_fraction - 1.0) > 1e-9) {
    throw ConfigurationError("stream: regime fractions must be non-negative and sum to 1");
  }
  if (steady_fraction > 0.0 && transient_fraction > 0.0 && num_classes < 2) {
    throw ConfigurationError("stream: two regimes need at least two classes");
  }
  if (input_dim < 1) throw ConfigurationError("stream: input_dim must be >= 1");
  if (frame_ms < 1) throw ConfigurationError("stream: frame_ms must be >= 1");
  if (min_segment_frames < 1 || max_segment_frames < min_segment_frames) {
    throw ConfigurationError("stream: invalid segment length range");
  }
  if (steady_noise < 0.0 || transient_noise < 0.0 || burst_amplitude < 0.0) {
    throw ConfigurationError("stream: noise levels must be non-negative");
  }
  if (steady_correlation < 0.0 || steady_correlation >= 1.0) {
    throw ConfigurationError("stream: steady_correlation must lie in [0, 1)");
  }
  if (burst_probability < 0.0 || burst_probability > 1.0) {
    throw ConfigurationError("stream: burst_probability must lie in [0, 1]");
  }
}

int SyntheticStreamSpec::steady_classes() const {
  if (transient_fraction == 0.0) return num_classes;
  if (steady_fraction == 0.0) return 0;
  const int n = static_cast<int>(std::lround(steady_fraction * num_classes));
  return std::clamp(n, 1, num_classes - 1);
}

DenseMatrix stream_prototypes(const SyntheticStreamSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  DenseMatrix protos(static_cast<std::size_t>(spec.num_classes),
                     static_cast<std::size_t>(spec.input_dim));
  for (double& v : protos.values()) v = spec.prototype_scale * rng.normal();
  return protos;
}

std::vector<StreamFrame> generate_stream(const SyntheticStreamSpec& spec, std::uint64_t seed,
                                         int num_frames) {
  return generate_stream(spec, seed, seed, num_frames);
}

std::vector<StreamFrame> generate_stream(const SyntheticStreamSpec& spec,
                                         std::uint64_t prototype_seed, std::uint64_t sample_seed,
                                         int num_frames) {
  spec.validate();
  if (num_frames < 1) throw ConfigurationError("generate_stream: num_frames must be >= 1");
  const DenseMatrix protos = stream_prototypes(spec, prototype_seed);
  const auto dim = static_cast<std::size_t>(spec.input_dim);
  const int steady = spec.steady_classes();
  const int transient = spec.num_classes - steady;
  const double innovation = std::sqrt(1.0 - spec.steady_correlation * spec.steady_correlation);

  Rng rng(sample_seed);
  std::vector<StreamFrame> frames;
  frames.reserve(static_cast<std::size_t>(num_frames));
  Vector ar(dim, 0.0);
  while (static_cast<int>(frames.size()) < num_frames) {
    const bool is_transient = transient > 0 && (steady == 0 || !rng.bernoulli(spec.steady_fraction));
    const int label = is_transient ? steady + static_cast<int>(rng.uniform_int(0, transient - 1))
                                   : static_cast<int>(rng.uniform_int(0, steady - 1));
    const auto length = rng.uniform_int(spec.min_segment_frames, spec.max_segment_frames);
    for (double& v : ar) v = spec.steady_noise * rng.normal();
    for (std::int64_t s = 0; s < length && static_cast<int>(frames.size()) < num_frames; ++s) {
      StreamFrame f;
      f.timestamp_ms = static_cast<std::int64_t>(frames.size()) * spec.frame_ms;
      f.label = label;
      f.transient = is_transient;
      f.features = protos.row_vector(static_cast<std::size_t>(label));
      if (is_transient) {
        for (double& v : f.features) v += spec.transient_noise * rng.normal();
        if (rng.bernoulli(spec.burst_probability)) {
          const int width = std::min(spec.burst_width, spec.input_dim);
          const auto start = static_cast<std::size_t>(rng.uniform_int(0, spec.input_dim - width));
          const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
          for (int j = 0; j < width; ++j) f.features[start + static_cast<std::size_t>(j)] += sign * spec.burst_amplitude;
        }
      } else {
        for (std::size_t j = 0; j < dim; ++j) {
          ar[j] = spec.steady_correlation * ar[j] + innovation * spec.steady_noise * rng.normal();
          f.features[j] += ar[j];
        }
      }
      frames.push_back(std::move(f));
    }
  }
  return frames;
}

}  // namespace edgesplit
