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

// Trace-driven cost model for a split deployment: platform profiles, network
// traces, the INT8 payload codec, link estimation and per-frame latency,
// energy and byte accounting.

#ifndef EDGESPLIT_SYSTEM_SIM_HPP_
#define EDGESPLIT_SYSTEM_SIM_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "edgesplit/encoder.hpp"
#include "edgesplit/numerics.hpp"

namespace edgesplit {

/// Raw 1 s clip: 16 kHz, 16-bit mono.
inline constexpr std::size_t kRawClipBytes = 32768;
inline constexpr std::size_t kQuantHeaderBytes = 8;

struct PlatformProfile {
  std::string name;
  std::vector<double> edge_block_ms;    // one entry per encoder block
  std::vector<double> server_block_ms;  // one entry per encoder block
  double edge_power_mw = 0.0;
  double radio_mj_per_kb = 0.0;
  /// Fixed radio cost paid whenever a frame sends any uplink bytes.
  double radio_wake_mj = 0.0;
  /// Amortised downlink synchronisation cost per frame.
  double sync_overhead_mj = 0.4;
  /// Edge compute slows by (1 + cpu_sensitivity * cpu) under background load.
  double cpu_sensitivity = 0.2;
  /// Frames sent together per uplink transmission.
  int uplink_batch_frames = 8;

  int num_blocks() const { return static_cast<int>(edge_block_ms.size()); }
  void validate() const;
};

/// Raspberry-Pi-class device (the default).
PlatformProfile pi_like_profile(int num_blocks = 8);
/// Laptop-class device with a faster CPU and a cheaper radio.
PlatformProfile m2_like_profile(int num_blocks = 8);
PlatformProfile platform_by_name(const std::string& name, int num_blocks = 8);

struct TracePoint {
  std::int64_t t_ms = 0;
  double bandwidth_mbps = 0.0;
  double rtt_ms = 0.0;
  double loss = 0.0;

  bool operator==(const TracePoint&) const = default;
};

struct NetworkTrace {
  std::vector<TracePoint> points;

  /// Piecewise-constant lookup: the last point with t_ms <= t.
  const TracePoint& at(std::int64_t t_ms) const;
  std::int64_t duration_ms() const;
  void validate() const;
};

enum class TraceKind { kStable, kVariable, kCongested };

TraceKind parse_trace_kind(const std::string& name);
std::string to_string(TraceKind kind);

/// Deterministic synthetic link conditions. The congested profile holds a
/// contiguous collapse to at most 2 Mbps and 150 ms RTT lasting at least 5 s.
NetworkTrace make_profile(TraceKind kind, std::uint64_t seed, std::int64_t duration_ms);

struct CollapseWindow {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
};
/// Longest contiguous stretch with bandwidth <= threshold that follows a
/// point above it.
std::optional<CollapseWindow> find_collapse(const NetworkTrace& trace, double threshold_mbps = 2.0);

/// CSV with header `t_ms,bandwidth_mbps,rtt_ms,loss`; values are written with
/// enough digits to read back bit-identical.
void write_trace_csv(const NetworkTrace& trace, const std::filesystem::path& path);
std::string trace_to_csv(const NetworkTrace& trace);
NetworkTrace read_trace_csv(const std::filesystem::path& path);
NetworkTrace trace_from_csv(const std::string& text);

struct QuantizationSpec {
  double scale = 1.0;
  int zero_point = 0;
  double min = 0.0;
  double max = 0.0;
  /// Calibration range was a single value; round trips return it exactly.
  bool constant = false;
};

/// Asymmetric per-tensor INT8 calibration from min/max.
QuantizationSpec calibrate(std::span<const double> values);
std::vector<std::uint8_t> quantize(std::span<const double> values, const QuantizationSpec& spec);
Vector dequantize(std::span<const std::uint8_t> codes, const QuantizationSpec& spec);
Vector quantize_dequantize(std::span<const double> values, const QuantizationSpec& spec);

/// Uplink bytes for one frame at split k.
std::size_t payload_bytes(int k, bool quantized, const EncoderConfig& config,
                          bool upload_embedding_at_l = false);

struct TransmitResult {
  double latency_ms = 0.0;
  bool dropped = false;
};
/// rtt/2 + serialisation delay; dropped with the trace's loss probability.
TransmitResult transmit(std::size_t bytes, const TracePoint& link, Rng& rng);
double transmit_latency_ms(std::size_t bytes, const TracePoint& link);

struct LinkState {
  double ema_bandwidth_mbps = 0.0;
  double ema_coefficient = 0.9;
};
void ema_update(LinkState& link, double observed_mbps);

struct FrameCost {
  double edge_ms = 0.0;
  double tx_ms = 0.0;
  double server_ms = 0.0;
  double energy_mj = 0.0;
  double compute_energy_mj = 0.0;
  double radio_energy_mj = 0.0;
  double sync_energy_mj = 0.0;
  std::size_t tx_bytes = 0;
  bool dropped = false;

  double latency_ms() const { return edge_ms + tx_ms + server_ms; }
};

/// Latency and energy of processing one frame at split k. Frames are sent in
/// uplink batches, so the serialisation delay covers the whole batch. When
/// `rng` is given, the frame may be lost according to the trace; a lost frame
/// pays for its uplink but gets no server time.
FrameCost frame_cost(int k, const PlatformProfile& platform, const TracePoint& link, bool quantized,
                     const EncoderConfig& config, double cpu_util = 0.0, Rng* rng = nullptr);

/// Battery life in hours for a per-frame energy.
struct BatteryModel {
  double capacity_mah = 10000.0;
  double voltage = 3.7;
  double frames_per_hour = 133200.0;

  double capacity_mj() const { return capacity_mah * voltage * 3600.0; }
};
double battery_life_hours(double energy_per_frame_mj, const BatteryModel& battery = {});

/// Background CPU load in [0, 1] per frame: a mean-reverting process with
/// occasional bursts.
std::vector<double> make_cpu_load(std::uint64_t seed, std::size_t frames, double mean_load = 0.3);

}  // namespace edgesplit

#endif  // EDGESPLIT_SYSTEM_SIM_HPP_
