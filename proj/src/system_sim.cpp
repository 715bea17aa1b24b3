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

#include "edgesplit/system_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "edgesplit/error.hpp"

namespace edgesplit {

void PlatformProfile::validate() const {
  if (edge_block_ms.empty() || edge_block_ms.size() != server_block_ms.size()) {
    throw ConfigurationError("platform '" + name + "': latency tables must have one entry per block");
  }
  auto non_negative = [](double v) { return v >= 0.0 && std::isfinite(v); };
  if (!std::all_of(edge_block_ms.begin(), edge_block_ms.end(), non_negative) ||
      !std::all_of(server_block_ms.begin(), server_block_ms.end(), non_negative) ||
      !non_negative(edge_power_mw) || !non_negative(radio_mj_per_kb) ||
      !non_negative(radio_wake_mj) || !non_negative(sync_overhead_mj) ||
      !non_negative(cpu_sensitivity)) {
    throw ConfigurationError("platform '" + name + "': coefficients must be non-negative");
  }
  if (uplink_batch_frames < 1) throw ConfigurationError("uplink batch must be >= 1 frame");
}

PlatformProfile pi_like_profile(int num_blocks) {
  PlatformProfile p;
  p.name = "pi4";
  // Full on-device encoding: 400 ms at 167.5 mW = 67.0 mJ.
  p.edge_block_ms.assign(static_cast<std::size_t>(num_blocks), 400.0 / num_blocks);
  p.server_block_ms.assign(static_cast<std::size_t>(num_blocks), 16.0 / num_blocks);
  p.edge_power_mw = 167.5;
  // A raw clip (32 KB) costs 126.8 mJ of transfer plus the 60 mJ wake-up.
  p.radio_mj_per_kb = 126.8 / 32.0;
  p.radio_wake_mj = 60.0;
  return p;
}

PlatformProfile m2_like_profile(int num_blocks) {
  PlatformProfile p;
  p.name = "m2";
  p.edge_block_ms.assign(static_cast<std::size_t>(num_blocks), 64.0 / num_blocks);
  p.server_block_ms.assign(static_cast<std::size_t>(num_blocks), 16.0 / num_blocks);
  p.edge_power_mw = 1200.0;
  p.radio_mj_per_kb = 1.5;
  p.radio_wake_mj = 20.0;
  p.cpu_sensitivity = 0.1;
  return p;
}

PlatformProfile platform_by_name(const std::string& name, int num_blocks) {
  if (name == "pi4") return pi_like_profile(num_blocks);
  if (name == "m2") return m2_like_profile(num_blocks);
  throw ConfigurationError("unknown platform profile '" + name + "' (expected pi4 or m2)");
}

const TracePoint& NetworkTrace::at(std::int64_t t_ms) const {
  if (points.empty()) throw ConfigurationError("empty network trace");
  auto it = std::upper_bound(points.begin(), points.end(), t_ms,
                             [](std::int64_t t, const TracePoint& p) { return t < p.t_ms; });
  return it == points.begin() ? points.front() : *std::prev(it);
}

std::int64_t NetworkTrace::duration_ms() const {
  return points.empty() ? 0 : points.back().t_ms;
}

void NetworkTrace::validate() const {
  if (points.empty()) throw ConfigurationError("network trace has no points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (i > 0 && p.t_ms <= points[i - 1].t_ms) {
      throw ConfigurationError("trace timestamps must be strictly increasing");
    }
    if (!(p.bandwidth_mbps > 0.0) || p.rtt_ms < 0.0 || p.loss < 0.0 || p.loss > 1.0) {
      throw ConfigurationError("trace point at t=" + std::to_string(p.t_ms) + " out of range");
    }
  }
}

TraceKind parse_trace_kind(const std::string& name) {
  if (name == "stable") return TraceKind::kStable;
  if (name == "variable") return TraceKind::kVariable;
  if (name == "congested") return TraceKind::kCongested;
  throw ConfigurationError("unknown trace kind '" + name + "'");
}

std::string to_string(TraceKind kind) {
  switch (kind) {
    case TraceKind::kStable:
      return "stable";
    case TraceKind::kVariable:
      return "variable";
    default:
      return "congested";
  }
}

namespace {

constexpr std::int64_t kTraceStepMs = 500;

}  // namespace

NetworkTrace make_profile(TraceKind kind, std::uint64_t seed, std::int64_t duration_ms) {
  if (duration_ms <= 0) throw ConfigurationError("trace duration must be positive");
  if (kind == TraceKind::kCongested && duration_ms < 10000) {
    throw ConfigurationError("congested traces need at least 10 s to hold a 5 s collapse");
  }
  Rng rng(seed);
  NetworkTrace trace;
  double log_bw = std::log(25.0);
  std::int64_t collapse_start = 0, collapse_end = 0;
  if (kind == TraceKind::kCongested) {
    const auto steps = duration_ms / kTraceStepMs;
    collapse_start = kTraceStepMs * static_cast<std::int64_t>(steps * rng.uniform(0.3, 0.4));
    const std::int64_t length = std::max<std::int64_t>(5000, duration_ms / 5);
    collapse_end = std::min(duration_ms, collapse_start + length);
  }
  for (std::int64_t t = 0; t < duration_ms; t += kTraceStepMs) {
    TracePoint p;
    p.t_ms = t;
    switch (kind) {
      case TraceKind::kStable:
        p.bandwidth_mbps = 25.0;
        p.rtt_ms = 40.0;
        p.loss = 0.0;
        break;
      case TraceKind::kVariable:
        log_bw = std::clamp(log_bw + 0.25 * rng.normal(), std::log(5.0), std::log(50.0));
        p.bandwidth_mbps = std::exp(log_bw);
        p.rtt_ms = rng.uniform(20.0, 120.0);
        p.loss = rng.uniform(0.0, 0.02);
        break;
      case TraceKind::kCongested:
        if (t >= collapse_start && t < collapse_end) {
          p.bandwidth_mbps = rng.uniform(1.0, 2.0);
          p.rtt_ms = 150.0;
          p.loss = rng.uniform(0.02, 0.05);
        } else {
          log_bw = std::clamp(log_bw + 0.15 * rng.normal(), std::log(15.0), std::log(45.0));
          p.bandwidth_mbps = std::exp(log_bw);
          p.rtt_ms = rng.uniform(30.0, 60.0);
          p.loss = rng.uniform(0.0, 0.01);
        }
        break;
    }
    trace.points.push_back(p);
  }
  return trace;
}

std::optional<CollapseWindow> find_collapse(const NetworkTrace& trace, double threshold_mbps) {
  std::optional<CollapseWindow> best;
  const auto& pts = trace.points;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (!(pts[i].bandwidth_mbps <= threshold_mbps && pts[i - 1].bandwidth_mbps > threshold_mbps)) {
      continue;
    }
    std::size_t j = i;
    while (j < pts.size() && pts[j].bandwidth_mbps <= threshold_mbps) ++j;
    const std::int64_t end =
        j < pts.size() ? pts[j].t_ms : pts.back().t_ms + (pts.size() > 1 ? pts[1].t_ms - pts[0].t_ms : 0);
    CollapseWindow w{pts[i].t_ms, end};
    if (!best || w.end_ms - w.start_ms > best->end_ms - best->start_ms) best = w;
  }
  return best;
}

std::string trace_to_csv(const NetworkTrace& trace) {
  std::string out = "t_ms,bandwidth_mbps,rtt_ms,loss\n";
  char line[160];
  for (const auto& p : trace.points) {
    std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(p.t_ms),
                  p.bandwidth_mbps, p.rtt_ms, p.loss);
    out += line;
  }
  return out;
}

void write_trace_csv(const NetworkTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("cannot write trace to " + path.string());
  out << trace_to_csv(trace);
}

NetworkTrace trace_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t_ms,bandwidth_mbps,rtt_ms,loss", 0) != 0) {
    throw ConfigurationError("trace CSV must start with the header t_ms,bandwidth_mbps,rtt_ms,loss");
  }
  NetworkTrace trace;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    TracePoint p;
    long long t = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf", &t, &p.bandwidth_mbps, &p.rtt_ms, &p.loss) != 4) {
      throw ConfigurationError("malformed trace CSV line " + std::to_string(line_no));
    }
    p.t_ms = t;
    trace.points.push_back(p);
  }
  trace.validate();
  return trace;
}

NetworkTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("cannot read trace " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return trace_from_csv(buffer.str());
}

QuantizationSpec calibrate(std::span<const double> values) {
  if (values.empty()) throw DegenerateInputError("calibrate: no values");
  QuantizationSpec spec;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  spec.min = *lo_it;
  spec.max = *hi_it;
  if (!std::isfinite(spec.min) || !std::isfinite(spec.max)) {
    throw DegenerateInputError("calibrate: non-finite values");
  }
  spec.constant = spec.max == spec.min;
  // The integer grid must contain zero for the zero point to be representable.
  const double lo = spec.constant ? spec.min : std::min(spec.min, 0.0);
  const double hi = spec.constant ? spec.max : std::max(spec.max, 0.0);
  spec.scale = std::max((hi - lo) / 255.0, 1e-8);
  spec.zero_point = static_cast<int>(std::clamp(std::round(-lo / spec.scale), 0.0, 255.0));
  return spec;
}

std::vector<std::uint8_t> quantize(std::span<const double> values, const QuantizationSpec& spec) {
  std::vector<std::uint8_t> codes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double q = std::round(values[i] / spec.scale) + spec.zero_point;
    codes[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
  }
  return codes;
}

Vector dequantize(std::span<const std::uint8_t> codes, const QuantizationSpec& spec) {
  Vector out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out[i] = spec.constant ? spec.min : (static_cast<int>(codes[i]) - spec.zero_point) * spec.scale;
  }
  return out;
}

Vector quantize_dequantize(std::span<const double> values, const QuantizationSpec& spec) {
  return dequantize(quantize(values, spec), spec);
}

std::size_t payload_bytes(int k, bool quantized, const EncoderConfig& config,
                          bool upload_embedding_at_l) {
  const int L = config.num_blocks;
  if (k < 0 || k > L) throw ConfigurationError("payload_bytes: split out of range");
  if (k == 0) return kRawClipBytes;
  if (k == L && !upload_embedding_at_l) return 0;
  const auto width = static_cast<std::size_t>(config.width_at(k));
  return quantized ? width + kQuantHeaderBytes : width * 4;
}

double transmit_latency_ms(std::size_t bytes, const TracePoint& link) {
  if (!(link.bandwidth_mbps > 0.0)) throw ConfigurationError("transmit: bandwidth must be positive");
  return link.rtt_ms / 2.0 + static_cast<double>(bytes) * 8.0 / (link.bandwidth_mbps * 1e6) * 1e3;
}

TransmitResult transmit(std::size_t bytes, const TracePoint& link, Rng& rng) {
  TransmitResult r;
  r.latency_ms = transmit_latency_ms(bytes, link);
  r.dropped = link.loss > 0.0 && rng.bernoulli(link.loss);
  return r;
}

void ema_update(LinkState& link, double observed_mbps) {
  if (observed_mbps < 0.0) throw ConfigurationError("ema_update: negative bandwidth");
  const double c = link.ema_coefficient;
  link.ema_bandwidth_mbps = c * link.ema_bandwidth_mbps + (1.0 - c) * observed_mbps;
}

FrameCost frame_cost(int k, const PlatformProfile& platform, const TracePoint& link, bool quantized,
                     const EncoderConfig& config, double cpu_util, Rng* rng) {
  const int L = platform.num_blocks();
  if (L != config.num_blocks) throw ConfigurationError("platform and encoder block counts differ");
  if (k < 0 || k > L) throw ConfigurationError("frame_cost: split out of range");
  FrameCost c;
  double nominal_edge_ms = 0.0;
  for (int i = 0; i < k; ++i) nominal_edge_ms += platform.edge_block_ms[static_cast<std::size_t>(i)];
  for (int i = k; i < L; ++i) c.server_ms += platform.server_block_ms[static_cast<std::size_t>(i)];
  c.edge_ms = nominal_edge_ms * (1.0 + platform.cpu_sensitivity * std::clamp(cpu_util, 0.0, 1.0));
  c.tx_bytes = payload_bytes(k, quantized, config);
  if (c.tx_bytes > 0) {
    c.tx_ms = transmit_latency_ms(c.tx_bytes * static_cast<std::size_t>(platform.uplink_batch_frames), link);
    c.radio_energy_mj =
        static_cast<double>(c.tx_bytes) * platform.radio_mj_per_kb / 1024.0 + platform.radio_wake_mj;
    if (rng != nullptr && link.loss > 0.0) c.dropped = rng->bernoulli(link.loss);
  }
  if (c.dropped) c.server_ms = 0.0;
  c.compute_energy_mj = nominal_edge_ms * platform.edge_power_mw / 1000.0;
  c.sync_energy_mj = platform.sync_overhead_mj;
  c.energy_mj = c.compute_energy_mj + c.radio_energy_mj + c.sync_energy_mj;
  return c;
}

double battery_life_hours(double energy_per_frame_mj, const BatteryModel& battery) {
  if (!(energy_per_frame_mj > 0.0)) throw ConfigurationError("energy per frame must be positive");
  return battery.capacity_mj() / (energy_per_frame_mj * battery.frames_per_hour);
}

std::vector<double> make_cpu_load(std::uint64_t seed, std::size_t frames, double mean_load) {
  Rng rng(seed);
  std::vector<double> load(frames);
  double x = mean_load;
  int burst_left = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    x = mean_load + 0.95 * (x - mean_load) + 0.03 * rng.normal();
    if (burst_left == 0 && rng.bernoulli(0.005)) burst_left = static_cast<int>(rng.uniform_int(50, 200));
    double v = x;
    if (burst_left > 0) {
      v += 0.45;
      --burst_left;
    }
    load[f] = std::clamp(v, 0.0, 1.0);
  }
  return load;
}

}  // namespace edgesplit
