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

#include "edgesplit/gmm.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <string>

#include "edgesplit/bytes.hpp"
#include "edgesplit/error.hpp"

namespace edgesplit {

void GmmConfig::validate() const {
  if (num_components < 1) throw ConfigurationError("gmm: num_components must be >= 1");
  if (dim < 1) throw ConfigurationError("gmm: dim must be >= 1");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigurationError("gmm: decay must be in (0, 1]");
  if (!(variance_floor > 0.0)) throw ConfigurationError("gmm: variance_floor must be positive");
  if (initial_variance < variance_floor) {
    throw ConfigurationError("gmm: initial_variance below variance_floor");
  }
  if (!(novelty_threshold >= 0.0)) throw ConfigurationError("gmm: novelty_threshold must be >= 0");
}

GmmState make_gmm(const GmmConfig& config) {
  config.validate();
  GmmState gmm;
  gmm.config = config;
  const auto C = static_cast<std::size_t>(config.num_components);
  const auto d = static_cast<std::size_t>(config.dim);
  gmm.weights.assign(C, 1.0 / static_cast<double>(C));
  gmm.means = DenseMatrix(C, d);
  gmm.variances = DenseMatrix(C, d, config.initial_variance);
  gmm.counts.assign(C, 0.0);
  gmm.sums = DenseMatrix(C, d);
  gmm.sum_squares = DenseMatrix(C, d);
  return gmm;
}

GmmState make_gmm(const GmmConfig& config, Vector weights, DenseMatrix means,
                  DenseMatrix variances, double pseudo_count) {
  GmmState gmm = make_gmm(config);
  const auto C = static_cast<std::size_t>(config.num_components);
  const auto d = static_cast<std::size_t>(config.dim);
  if (weights.size() != C || means.rows() != C || means.cols() != d || variances.rows() != C ||
      variances.cols() != d) {
    throw ConfigurationError("make_gmm: parameter shapes do not match the configuration");
  }
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) throw ConfigurationError("make_gmm: invalid weight");
    total += w;
  }
  gmm.weights = std::move(weights);
  if (total > 0.0)
    for (double& w : gmm.weights) w /= total;
  gmm.means = std::move(means);
  gmm.variances = std::move(variances);
  for (double& v : gmm.variances.values()) v = std::max(v, config.variance_floor);
  for (std::size_t c = 0; c < C; ++c) {
    gmm.counts[c] = gmm.weights[c] * pseudo_count * static_cast<double>(C);
    for (std::size_t j = 0; j < d; ++j) {
      const double mu = gmm.means(c, j);
      gmm.sums(c, j) = gmm.counts[c] * mu;
      gmm.sum_squares(c, j) = gmm.counts[c] * (mu * mu + gmm.variances(c, j));
    }
  }
  gmm.initialized = true;
  return gmm;
}

namespace {

void require_ready(const GmmState& gmm, std::span<const double> z) {
  if (!gmm.initialized) throw InvalidStateError("gmm: mixture not initialised yet");
  if (z.size() != static_cast<std::size_t>(gmm.dim())) {
    throw ConfigurationError("gmm: embedding has dimension " + std::to_string(z.size()) +
                             ", expected " + std::to_string(gmm.dim()));
  }
}

void seed_component(GmmState& gmm, std::size_t c, std::span<const double> z, double count,
                    std::span<const double> var) {
  gmm.counts[c] = count;
  for (std::size_t j = 0; j < z.size(); ++j) {
    gmm.means(c, j) = z[j];
    gmm.variances(c, j) = var[j];
    gmm.sums(c, j) = count * z[j];
    gmm.sum_squares(c, j) = count * (z[j] * z[j] + var[j]);
  }
}

// Weight-averaged variance of the current components, so a re-seeded
// component starts as tight as the ones it competes with.
Vector typical_variance(const GmmState& gmm) {
  const std::size_t d = static_cast<std::size_t>(gmm.dim());
  Vector var(d, 0.0);
  for (std::size_t c = 0; c < gmm.weights.size(); ++c)
    for (std::size_t j = 0; j < d; ++j) var[j] += gmm.weights[c] * gmm.variances(c, j);
  for (double& v : var) v = std::clamp(v, gmm.config.variance_floor, gmm.config.initial_variance);
  return var;
}

bool is_novel(const GmmState& gmm, std::span<const double> z) {
  const double threshold = gmm.config.novelty_threshold;
  if (!(threshold > 0.0) || gmm.weights.size() < 2) return false;
  const std::size_t d = z.size();
  for (std::size_t c = 0; c < gmm.weights.size(); ++c) {
    if (!(gmm.weights[c] > 0.0)) continue;
    double m = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = z[j] - gmm.means(c, j);
      m += diff * diff / gmm.variances(c, j);
    }
    if (m / static_cast<double>(d) <= threshold) return false;
  }
  return true;
}

void refresh_weights(GmmState& gmm) {
  double total = 0.0;
  for (double n : gmm.counts) total += n;
  for (std::size_t c = 0; c < gmm.counts.size(); ++c) gmm.weights[c] = gmm.counts[c] / total;
}

void em_step(GmmState& gmm, std::span<const double> z) {
  if (is_novel(gmm, z)) {
    const auto lightest = static_cast<std::size_t>(
        std::min_element(gmm.counts.begin(), gmm.counts.end()) - gmm.counts.begin());
    seed_component(gmm, lightest, z, 1.0, typical_variance(gmm));
    ++gmm.reseeds;
    refresh_weights(gmm);
  }
  const Vector resp = posterior(gmm, z);
  const double rho = gmm.config.decay;
  const double floor = gmm.config.variance_floor;
  const std::size_t d = z.size();
  for (std::size_t c = 0; c < resp.size(); ++c) {
    const double r = resp[c];
    gmm.counts[c] = rho * gmm.counts[c] + r;
    auto s = gmm.sums.row(c);
    auto q = gmm.sum_squares.row(c);
    for (std::size_t j = 0; j < d; ++j) {
      s[j] = rho * s[j] + r * z[j];
      q[j] = rho * q[j] + r * z[j] * z[j];
    }
  }
  // Re-seed at most one dead component per frame, at the current embedding.
  for (std::size_t c = 0; c < resp.size(); ++c) {
    if (gmm.counts[c] < gmm.config.dead_count) {
      seed_component(gmm, c, z, 1.0, typical_variance(gmm));
      ++gmm.reseeds;
      break;
    }
  }
  for (std::size_t c = 0; c < resp.size(); ++c) {
    const double n = gmm.counts[c];
    auto s = gmm.sums.row(c);
    auto q = gmm.sum_squares.row(c);
    for (std::size_t j = 0; j < d; ++j) {
      const double mu = s[j] / n;
      gmm.means(c, j) = mu;
      gmm.variances(c, j) = std::max(q[j] / n - mu * mu, floor);
    }
  }
  refresh_weights(gmm);
}

std::size_t count_distinct(const std::vector<Vector>& points) {
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool seen = false;
    for (std::size_t j = 0; j < i && !seen; ++j) seen = points[i] == points[j];
    if (!seen) ++distinct;
  }
  return distinct;
}

void initialise_from_warmup(GmmState& gmm) {
  const auto C = static_cast<std::size_t>(gmm.num_components());
  const auto& pts = gmm.warmup;
  std::vector<std::size_t> chosen{0};
  std::vector<double> nearest(pts.size(), std::numeric_limits<double>::infinity());
  while (chosen.size() < C) {
    const Vector& last = pts[chosen.back()];
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(pts[i], last));
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    chosen.push_back(best);
  }
  // Start no broader than the warm-up data itself.
  const std::size_t d = static_cast<std::size_t>(gmm.dim());
  const double n = static_cast<double>(pts.size());
  Vector mean(d, 0.0), var(d, 0.0);
  for (const auto& z : pts)
    for (std::size_t j = 0; j < d; ++j) mean[j] += z[j] / n;
  for (const auto& z : pts)
    for (std::size_t j = 0; j < d; ++j) var[j] += (z[j] - mean[j]) * (z[j] - mean[j]) / n;
  for (double& v : var) v = std::clamp(v, gmm.config.variance_floor, gmm.config.initial_variance);
  for (std::size_t c = 0; c < C; ++c) seed_component(gmm, c, pts[chosen[c]], 1.0, var);
  refresh_weights(gmm);
  gmm.initialized = true;
  for (const auto& z : pts) em_step(gmm, z);
  gmm.warmup.clear();
  gmm.warmup.shrink_to_fit();
}

}  // namespace

Vector component_log_densities(const GmmState& gmm, std::span<const double> z) {
  require_ready(gmm, z);
  const auto C = static_cast<std::size_t>(gmm.num_components());
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  Vector out(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (!(gmm.weights[c] > 0.0)) {
      out[c] = -std::numeric_limits<double>::infinity();
      continue;
    }
    auto mu = gmm.means.row(c);
    auto var = gmm.variances.row(c);
    double acc = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double diff = z[j] - mu[j];
      acc += diff * diff / var[j] + std::log(var[j]) + log_two_pi;
    }
    out[c] = std::log(gmm.weights[c]) - 0.5 * acc;
  }
  return out;
}

Vector posterior(const GmmState& gmm, std::span<const double> z) {
  const Vector logp = component_log_densities(gmm, z);
  const double lse = log_sum_exp(logp);
  if (!std::isfinite(lse)) throw InvalidStateError("posterior: mixture weights are all zero");
  Vector p(logp.size());
  for (std::size_t c = 0; c < p.size(); ++c) p[c] = std::exp(logp[c] - lse);
  return p;
}

double log_likelihood(const GmmState& gmm, std::span<const double> z) {
  return log_sum_exp(component_log_densities(gmm, z));
}

double entropy(std::span<const double> probabilities) {
  double h = 0.0;
  for (double p : probabilities)
    if (p > 0.0) h -= p * std::log(p);
  return std::max(h, 0.0);
}

double uncertainty(const GmmState& gmm, std::span<const double> z) {
  const double h = entropy(posterior(gmm, z));
  return std::min(h, std::log(static_cast<double>(gmm.num_components())));
}

void em_update(GmmState& gmm, std::span<const double> z) {
  if (z.size() != static_cast<std::size_t>(gmm.dim())) {
    throw ConfigurationError("em_update: embedding dimension mismatch");
  }
  ++gmm.frames_seen;
  if (!gmm.initialized) {
    gmm.warmup.emplace_back(z.begin(), z.end());
    const auto needed = static_cast<std::size_t>(std::max(gmm.config.warmup_frames, 1));
    if (gmm.warmup.size() >= needed &&
        count_distinct(gmm.warmup) >= static_cast<std::size_t>(gmm.num_components())) {
      initialise_from_warmup(gmm);
    }
    return;
  }
  em_step(gmm, z);
}

int assign_component(const GmmState& gmm, std::span<const double> z) {
  const Vector p = posterior(gmm, z);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

Vector boundary_selection_probabilities(const GmmState& gmm, int anchor, double hardness) {
  const int C = gmm.num_components();
  if (C < 2) throw DegenerateInputError("virtual negatives need at least two components");
  if (anchor < 0 || anchor >= C) throw ConfigurationError("anchor component out of range");
  if (!(hardness > 0.0)) throw ConfigurationError("hardness temperature must be positive");
  Vector logw(static_cast<std::size_t>(C), -std::numeric_limits<double>::infinity());
  auto mu_star = gmm.means.row(static_cast<std::size_t>(anchor));
  const double denom = 2.0 * hardness * hardness;
  for (int c = 0; c < C; ++c) {
    if (c == anchor || !(gmm.weights[static_cast<std::size_t>(c)] > 0.0)) continue;
    const double d2 = squared_distance(mu_star, gmm.means.row(static_cast<std::size_t>(c)));
    logw[static_cast<std::size_t>(c)] =
        std::log(gmm.weights[static_cast<std::size_t>(c)]) - (std::isinf(denom) ? 0.0 : d2 / denom);
  }
  const double lse = log_sum_exp(logw);
  if (!std::isfinite(lse)) {
    throw DegenerateInputError("virtual negatives: no non-anchor component has weight");
  }
  Vector p(logw.size());
  for (std::size_t c = 0; c < p.size(); ++c) p[c] = std::exp(logw[c] - lse);
  return p;
}

std::vector<Vector> sample_virtual_negatives(const GmmState& gmm, std::span<const double> anchor_z,
                                             int anchor_component, int count, double hardness,
                                             Rng& rng, std::vector<int>* chosen) {
  if (count < 1) throw ConfigurationError("virtual negatives: count must be >= 1");
  if (!gmm.initialized) throw InvalidStateError("virtual negatives: mixture not initialised");
  if (anchor_z.size() != static_cast<std::size_t>(gmm.dim())) {
    throw ConfigurationError("virtual negatives: anchor dimension mismatch");
  }
  const Vector probs = boundary_selection_probabilities(gmm, anchor_component, hardness);
  const auto d = static_cast<std::size_t>(gmm.dim());
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(count));
  if (chosen) chosen->clear();
  DenseMatrix stddev = gmm.variances;
  for (double& v : stddev.values()) v = std::sqrt(v);
  Vector sample(d);
  for (int n = 0; n < count; ++n) {
    const std::size_t c = rng.categorical(probs);
    if (chosen) chosen->push_back(static_cast<int>(c));
    auto mu = gmm.means.row(c);
    auto sd = stddev.row(c);
    for (std::size_t j = 0; j < d; ++j) sample[j] = mu[j] + sd[j] * rng.normal();
    out.push_back(l2_normalize(sample));
  }
  return out;
}

std::size_t serialized_size_bytes(int num_components, int dim, int precision) {
  if (precision != 2 && precision != 4 && precision != 8) {
    throw ConfigurationError("precision must be 2, 4 or 8 bytes");
  }
  const auto C = static_cast<std::size_t>(num_components);
  const auto d = static_cast<std::size_t>(dim);
  const auto p = static_cast<std::size_t>(precision);
  return 2 * C * d * p + C * p;
}

std::size_t serialized_size_bytes(const GmmState& gmm, int precision) {
  return serialized_size_bytes(gmm.num_components(), gmm.dim(), precision);
}

namespace {

using bytes::get_le;
using bytes::put_le;

void put_scalar(std::vector<std::uint8_t>& out, double v, int precision) {
  switch (precision) {
    case 2: {
      const Eigen::half h(static_cast<float>(v));
      put_le<std::uint16_t>(out, std::bit_cast<std::uint16_t>(h));
      break;
    }
    case 4:
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      break;
    default:
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
}

double get_scalar(std::span<const std::uint8_t> in, std::size_t& pos, int precision) {
  switch (precision) {
    case 2:
      return static_cast<double>(
          static_cast<float>(std::bit_cast<Eigen::half>(get_le<std::uint16_t>(in, pos))));
    case 4:
      return static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in, pos)));
    default:
      return std::bit_cast<double>(get_le<std::uint64_t>(in, pos));
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_gmm(const GmmState& gmm, int precision) {
  const std::size_t body = serialized_size_bytes(gmm, precision);
  if (gmm.num_components() > 0xFFFF || gmm.dim() > 0xFFFF) {
    throw ConfigurationError("serialize_gmm: dimensions exceed the 16-bit header fields");
  }
  std::vector<std::uint8_t> out;
  out.reserve(8 + body);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(gmm.num_components()));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(gmm.dim()));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(precision));
  put_le<std::uint16_t>(out, 0);
  for (double w : gmm.weights) put_scalar(out, w, precision);
  for (double m : gmm.means.values()) put_scalar(out, m, precision);
  for (double v : gmm.variances.values()) put_scalar(out, v, precision);
  return out;
}

GmmState deserialize_gmm(std::span<const std::uint8_t> payload, const GmmConfig& base) {
  std::size_t pos = 0;
  const int C = get_le<std::uint16_t>(payload, pos);
  const int d = get_le<std::uint16_t>(payload, pos);
  const int precision = get_le<std::uint16_t>(payload, pos);
  get_le<std::uint16_t>(payload, pos);
  if (payload.size() != 8 + serialized_size_bytes(C, d, precision)) {
    throw ConfigurationError("gmm payload has the wrong length for its header");
  }
  GmmConfig config = base;
  config.num_components = C;
  config.dim = d;
  const auto Cs = static_cast<std::size_t>(C);
  const auto ds = static_cast<std::size_t>(d);
  Vector weights(Cs);
  DenseMatrix means(Cs, ds), variances(Cs, ds);
  for (double& w : weights) w = get_scalar(payload, pos, precision);
  for (double& m : means.values()) m = get_scalar(payload, pos, precision);
  for (double& v : variances.values()) v = get_scalar(payload, pos, precision);
  return make_gmm(config, std::move(weights), std::move(means), std::move(variances));
}

}  // namespace edgesplit
