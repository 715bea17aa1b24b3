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

// Diagonal-covariance Gaussian mixture used as the edge's distributional
// memory: streaming EM, posteriors, boundary-aware virtual negatives and the
// downlink byte layout.

#ifndef EDGESPLIT_GMM_HPP_
#define EDGESPLIT_GMM_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "edgesplit/numerics.hpp"

namespace edgesplit {

struct GmmConfig {
  int num_components = 64;
  int dim = 128;
  /// Per-frame decay of the sufficient statistics.
  double decay = 0.995;
  double variance_floor = 1e-4;
  double initial_variance = 0.1;
  /// Components whose effective count falls below this are re-seeded.
  double dead_count = 1e-3;
  /// Frames buffered before the mixture is initialised.
  int warmup_frames = 50;
  /// An embedding whose mean per-dimension squared Mahalanobis distance to
  /// every live component exceeds this replaces the lightest component.
  /// Zero disables the check.
  double novelty_threshold = 9.0;

  void validate() const;
};

struct GmmState {
  GmmConfig config;
  Vector weights;         // C
  DenseMatrix means;      // C x d
  DenseMatrix variances;  // C x d
  Vector counts;          // decayed soft counts
  DenseMatrix sums;       // decayed sum of r * z
  DenseMatrix sum_squares;
  std::int64_t frames_seen = 0;
  std::int64_t reseeds = 0;
  bool initialized = false;
  std::vector<Vector> warmup;

  int num_components() const { return config.num_components; }
  int dim() const { return config.dim; }
};

GmmState make_gmm(const GmmConfig& config);

/// Directly installs parameters (tests, deserialised payloads). Counts are set
/// to `weights * pseudo_count` so streaming updates continue from here.
GmmState make_gmm(const GmmConfig& config, Vector weights, DenseMatrix means,
                  DenseMatrix variances, double pseudo_count = 1.0);

/// Log of pi_c N(z; mu_c, Sigma_c) for every component.
Vector component_log_densities(const GmmState& gmm, std::span<const double> z);

/// p(c | z) via Bayes' rule in the log domain.
Vector posterior(const GmmState& gmm, std::span<const double> z);

/// log p(z) under the mixture.
double log_likelihood(const GmmState& gmm, std::span<const double> z);

/// Shannon entropy of the posterior, in nats; bounded by ln C.
double entropy(std::span<const double> probabilities);
double uncertainty(const GmmState& gmm, std::span<const double> z);

/// One streaming EM step. Before initialisation the embedding is buffered;
/// once the warm-up window holds enough distinct points the means are seeded
/// by farthest-point selection and the buffer is replayed through EM.
void em_update(GmmState& gmm, std::span<const double> z);

/// Index of the most responsible component.
int assign_component(const GmmState& gmm, std::span<const double> z);

/// Boundary-aware selection probabilities over components for anchor
/// component `anchor`; entry `anchor` is zero.
Vector boundary_selection_probabilities(const GmmState& gmm, int anchor, double hardness);

std::vector<Vector> sample_virtual_negatives(const GmmState& gmm, std::span<const double> anchor_z,
                                             int anchor_component, int count, double hardness,
                                             Rng& rng, std::vector<int>* chosen = nullptr);

/// Storage of (weights, means, variances) at `precision` bytes per scalar.
std::size_t serialized_size_bytes(const GmmState& gmm, int precision);
std::size_t serialized_size_bytes(int num_components, int dim, int precision);

/// Downlink payload: 8-byte little-endian header (u16 C, u16 d, u16 precision,
/// u16 reserved) followed by [weights | means row-major | variances row-major]
/// as little-endian IEEE scalars of `precision` bytes (2, 4 or 8).
std::vector<std::uint8_t> serialize_gmm(const GmmState& gmm, int precision);
GmmState deserialize_gmm(std::span<const std::uint8_t> payload, const GmmConfig& base = {});

}  // namespace edgesplit

#endif  // EDGESPLIT_GMM_HPP_
