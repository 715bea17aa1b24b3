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

// Server side of the split: the timestamp-ordered buffer of uplinked
// activations, the refinement objective that combines a task loss with
// distribution and smoothness penalties, and the scheduled downlink.

#ifndef EDGESPLIT_SERVER_HPP_
#define EDGESPLIT_SERVER_HPP_

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "edgesplit/encoder.hpp"
#include "edgesplit/gmm.hpp"
#include "edgesplit/manifold.hpp"
#include "edgesplit/numerics.hpp"

namespace edgesplit {

struct BufferEntry {
  Vector payload;  // activation at the split, as received
  int split = 0;
  std::optional<int> label;
};

/// Bounded map from timestamp to uplinked activation. Iteration is in
/// timestamp order; the oldest timestamp is evicted once over capacity.
class TemporalBuffer {
 public:
  explicit TemporalBuffer(std::size_t capacity = 100);

  void insert(std::int64_t timestamp_ms, BufferEntry entry);
  std::size_t size() const { return slots_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t replaced() const { return replaced_; }
  bool contains(std::int64_t timestamp_ms) const { return slots_.count(timestamp_ms) > 0; }
  void clear() { slots_.clear(); }

  std::vector<std::int64_t> timestamps() const;
  const std::map<std::int64_t, BufferEntry>& slots() const { return slots_; }

 private:
  std::size_t capacity_;
  std::size_t replaced_ = 0;
  std::map<std::int64_t, BufferEntry> slots_;
};

enum class TaskLoss { kInfoNce, kCrossEntropy };

struct HybridLossConfig {
  double lambda1 = 0.1;  // sliced Wasserstein weight
  double lambda2 = 0.01;  // Laplacian weight
  double temperature = 0.1;
  int knn_k = 5;
  std::int64_t graph_window_ms = std::numeric_limits<std::int64_t>::max();
  int num_projections = 50;
  std::uint64_t projection_seed = 17;
  /// Noise added to each buffered activation to form the two task views.
  double view_noise_std = 0.05;
  std::uint64_t view_seed = 29;
  TaskLoss task = TaskLoss::kInfoNce;
  int num_classes = 0;  // cross-entropy mode only

  void validate() const;
};

/// Server copy of the encoder refined on buffered activations, with an
/// optional linear classifier for the cross-entropy task.
struct ServerModel {
  LayerStack blocks;
  std::optional<DenseLayer> classifier;
  std::vector<LayerGradient> velocity;
  std::vector<LayerGradient> classifier_velocity;
  std::optional<double> initial_loss;
  std::int64_t steps = 0;
};

ServerModel make_server_model(const EncoderState& encoder, const HybridLossConfig& config,
                              Rng& rng);

struct HybridLossResult {
  double task = 0.0;
  double swd = 0.0;
  double laplacian = 0.0;
  double total = 0.0;
  std::vector<LayerGradient> task_grad;
  std::vector<LayerGradient> swd_grad;
  std::vector<LayerGradient> laplacian_grad;
  std::vector<LayerGradient> total_grad;
  std::optional<LayerGradient> classifier_grad;
};

/// Server embeddings of every buffered entry, in timestamp order.
DenseMatrix server_embeddings(const ServerModel& model, const TemporalBuffer& buffer);

/// task + lambda1 * SWD(Z, prior) + lambda2 * Dirichlet(Z) over the buffer.
/// Returns nothing while the buffer holds fewer than 2 * knn_k entries.
/// `prior` must have one row per buffered entry.
std::optional<HybridLossResult> hybrid_loss_and_grad(const TemporalBuffer& buffer,
                                                     const ServerModel& model,
                                                     const DenseMatrix& prior,
                                                     const HybridLossConfig& config);

enum class RefineStatus { kNotReady, kUpdated, kDiverged };

struct RefineResult {
  RefineStatus status = RefineStatus::kNotReady;
  double loss = 0.0;
};

/// One SGD-with-momentum step. A loss above ten times the first recorded loss
/// aborts without touching the parameters.
RefineResult refine_step(const TemporalBuffer& buffer, ServerModel& model, const DenseMatrix& prior,
                         const HybridLossConfig& config, double lr, double momentum = 0.9);

struct StitchResult {
  double energy_before = 0.0;
  double energy_after = 0.0;
  std::size_t boundary_edges = 0;
};

/// Dirichlet energy over the k-NN edges that jump across missing frames
/// (consecutive timestamps further apart than `frame_ms`), or over all edges
/// when nothing is missing.
StitchResult stitch_metric(const std::vector<std::int64_t>& timestamps, const DenseMatrix& before,
                           const DenseMatrix& after, int knn_k, std::int64_t window_ms,
                           std::int64_t frame_ms = 10);

struct SyncSchedule {
  int t_sync = 100;
  void validate() const;
};

struct LinkFlags {
  bool charging = false;
  bool high_bandwidth = false;
};

struct SyncPayload {
  std::size_t gmm_bytes = 0;  // parameter block, excluding the 8-byte header
  std::vector<std::uint8_t> gmm_message;
  std::size_t encoder_bytes = 0;  // fp16 weights, only when flags allow
  std::size_t total_bytes() const { return gmm_bytes + encoder_bytes; }
};

/// GMM parameters go down every t_sync frames (from frame t_sync on); encoder
/// weights ride along only when the device is charging or on a fast link.
std::optional<SyncPayload> lazy_sync(std::int64_t frame_index, const SyncSchedule& schedule,
                                     const GmmState& gmm, const LayerStack& encoder_blocks,
                                     const LinkFlags& flags);

}  // namespace edgesplit

#endif  // EDGESPLIT_SERVER_HPP_
