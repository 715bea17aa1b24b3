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

#include "edgesplit/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <string>

#include "edgesplit/error.hpp"

namespace edgesplit {

ProjectionSet make_projections(int count, int dim, std::uint64_t seed) {
  if (count < 1) throw ConfigurationError("make_projections: need at least one projection");
  ProjectionSet set;
  set.seed = seed;
  Rng rng(seed);
  for (int m = 0; m < count; ++m)
    set.directions.push_back(sample_unit_sphere(rng, static_cast<std::size_t>(dim)));
  return set;
}

DenseMatrix sample_uniform_sphere(int count, int dim, Rng& rng) {
  DenseMatrix out(static_cast<std::size_t>(count), static_cast<std::size_t>(dim));
  for (int i = 0; i < count; ++i) {
    Vector v = sample_unit_sphere(rng, static_cast<std::size_t>(dim));
    std::copy(v.begin(), v.end(), out.row(static_cast<std::size_t>(i)).begin());
  }
  return out;
}

namespace {

void check_swd_inputs(const DenseMatrix& a, const DenseMatrix& b, const ProjectionSet& proj) {
  if (a.rows() != b.rows()) {
    throw ConfigurationError("sliced_wasserstein: sample counts differ (" +
                             std::to_string(a.rows()) + " vs " + std::to_string(b.rows()) + ")");
  }
  if (a.rows() < 2) throw ConfigurationError("sliced_wasserstein: need at least two samples");
  if (a.cols() != b.cols()) throw ConfigurationError("sliced_wasserstein: dimension mismatch");
  if (proj.directions.empty()) throw ConfigurationError("sliced_wasserstein: no projections");
  for (const auto& w : proj.directions)
    if (w.size() != a.cols()) throw ConfigurationError("sliced_wasserstein: projection dimension");
}

struct SortedProjection {
  std::vector<double> values;
  std::vector<std::size_t> order;  // order[r] = row holding the r-th smallest value
};

SortedProjection project_sorted(const DenseMatrix& m, const Vector& direction) {
  SortedProjection sp;
  const std::size_t n = m.rows();
  std::vector<double> proj(n);
  for (std::size_t i = 0; i < n; ++i) proj[i] = dot(m.row(i), direction);
  sp.order.resize(n);
  std::iota(sp.order.begin(), sp.order.end(), 0);
  std::stable_sort(sp.order.begin(), sp.order.end(),
                   [&](std::size_t x, std::size_t y) { return proj[x] < proj[y]; });
  sp.values.resize(n);
  for (std::size_t r = 0; r < n; ++r) sp.values[r] = proj[sp.order[r]];
  return sp;
}

}  // namespace

double sliced_wasserstein(const DenseMatrix& a, const DenseMatrix& b,
                          const ProjectionSet& projections) {
  check_swd_inputs(a, b, projections);
  const double n = static_cast<double>(a.rows());
  double total = 0.0;
  for (const auto& w : projections.directions) {
    const auto pa = project_sorted(a, w);
    const auto pb = project_sorted(b, w);
    double acc = 0.0;
    for (std::size_t r = 0; r < pa.values.size(); ++r) {
      const double d = pa.values[r] - pb.values[r];
      acc += d * d;
    }
    total += acc / n;
  }
  return total / static_cast<double>(projections.directions.size());
}

DenseMatrix swd_gradient(const DenseMatrix& a, const DenseMatrix& prior,
                         const ProjectionSet& projections) {
  check_swd_inputs(a, prior, projections);
  const std::size_t n = a.rows();
  const double scale =
      2.0 / (static_cast<double>(n) * static_cast<double>(projections.directions.size()));
  DenseMatrix grad(n, a.cols());
  for (const auto& w : projections.directions) {
    const auto pa = project_sorted(a, w);
    const auto pb = project_sorted(prior, w);
    for (std::size_t r = 0; r < n; ++r) {
      const double coeff = scale * (pa.values[r] - pb.values[r]);
      auto g = grad.row(pa.order[r]);
      for (std::size_t c = 0; c < g.size(); ++c) g[c] += coeff * w[c];
    }
  }
  return grad;
}

std::vector<std::pair<int, double>> TemporalGraph::neighbours(int n) const {
  std::vector<std::pair<int, double>> out;
  for (const auto& e : edges) {
    if (e.i == n) out.emplace_back(e.j, e.weight);
    if (e.j == n) out.emplace_back(e.i, e.weight);
  }
  return out;
}

TemporalGraph make_graph(std::vector<std::int64_t> node_ids, std::vector<GraphEdge> edges) {
  TemporalGraph g;
  g.node_ids = std::move(node_ids);
  const auto n = static_cast<std::size_t>(g.node_ids.size());
  std::set<std::pair<int, int>> seen;
  for (auto e : edges) {
    if (e.i == e.j) throw ConfigurationError("make_graph: self loop");
    if (e.i > e.j) std::swap(e.i, e.j);
    if (e.i < 0 || static_cast<std::size_t>(e.j) >= n) {
      throw ConfigurationError("make_graph: edge endpoint out of range");
    }
    if (!(e.weight > 0.0)) throw ConfigurationError("make_graph: weights must be positive");
    if (!seen.insert({e.i, e.j}).second) continue;
    g.edges.push_back(e);
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const GraphEdge& x, const GraphEdge& y) {
    return std::tie(x.i, x.j) < std::tie(y.i, y.j);
  });
  g.laplacian = DenseMatrix(n, n);
  for (const auto& e : g.edges) {
    const auto i = static_cast<std::size_t>(e.i);
    const auto j = static_cast<std::size_t>(e.j);
    g.laplacian(i, i) += e.weight;
    g.laplacian(j, j) += e.weight;
    g.laplacian(i, j) -= e.weight;
    g.laplacian(j, i) -= e.weight;
  }
  return g;
}

TemporalGraph build_knn_temporal_graph(const std::vector<std::int64_t>& timestamps_ms, int k,
                                       std::int64_t window_ms) {
  const int n = static_cast<int>(timestamps_ms.size());
  if (n < 2) throw DegenerateGraphError("temporal graph needs at least two nodes");
  if (k < 1) throw ConfigurationError("temporal graph: k must be >= 1");
  std::vector<GraphEdge> edges;
  std::vector<int> candidates;
  for (int i = 0; i < n; ++i) {
    candidates.clear();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const std::int64_t gap = std::llabs(timestamps_ms[static_cast<std::size_t>(i)] -
                                          timestamps_ms[static_cast<std::size_t>(j)]);
      if (gap <= window_ms) candidates.push_back(j);
    }
    auto dist = [&](int j) {
      return std::llabs(timestamps_ms[static_cast<std::size_t>(i)] -
                        timestamps_ms[static_cast<std::size_t>(j)]);
    };
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](int x, int y) { return dist(x) < dist(y); });
    const int take = std::min<int>(k, static_cast<int>(candidates.size()));
    for (int t = 0; t < take; ++t) edges.push_back({i, candidates[static_cast<std::size_t>(t)], 1.0});
  }
  // Temporal predecessor/successor links keep the two sides of a dropout
  // connected whenever the gap fits inside the window.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return timestamps_ms[static_cast<std::size_t>(x)] < timestamps_ms[static_cast<std::size_t>(y)];
  });
  for (std::size_t r = 0; r + 1 < order.size(); ++r) {
    const int a = order[r], b = order[r + 1];
    if (timestamps_ms[static_cast<std::size_t>(b)] - timestamps_ms[static_cast<std::size_t>(a)] <= window_ms) {
      edges.push_back({a, b, 1.0});
    }
  }
  return make_graph(timestamps_ms, std::move(edges));
}

int connected_components(const TemporalGraph& graph) {
  const int n = graph.num_nodes();
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const auto& e : graph.edges) {
    adj[static_cast<std::size_t>(e.i)].push_back(e.j);
    adj[static_cast<std::size_t>(e.j)].push_back(e.i);
  }
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  int components = 0;
  for (int s = 0; s < n; ++s) {
    if (seen[static_cast<std::size_t>(s)]) continue;
    ++components;
    std::queue<int> q;
    q.push(s);
    seen[static_cast<std::size_t>(s)] = true;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : adj[static_cast<std::size_t>(u)]) {
        if (!seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = true;
          q.push(v);
        }
      }
    }
  }
  return components;
}

namespace {

void check_embeddings(const TemporalGraph& graph, const DenseMatrix& z) {
  if (z.rows() != static_cast<std::size_t>(graph.num_nodes())) {
    throw ConfigurationError("embedding count " + std::to_string(z.rows()) +
                             " does not match node count " + std::to_string(graph.num_nodes()));
  }
}

}  // namespace

double dirichlet_energy(const TemporalGraph& graph, const DenseMatrix& embeddings) {
  check_embeddings(graph, embeddings);
  if (graph.edges.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& e : graph.edges) {
    acc += e.weight * squared_distance(embeddings.row(static_cast<std::size_t>(e.i)),
                                       embeddings.row(static_cast<std::size_t>(e.j)));
  }
  return acc / static_cast<double>(graph.edges.size());
}

double dirichlet_energy_trace(const TemporalGraph& graph, const DenseMatrix& embeddings) {
  check_embeddings(graph, embeddings);
  if (graph.edges.empty()) return 0.0;
  const std::size_t n = embeddings.rows();
  const std::size_t d = embeddings.cols();
  double trace = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double lz = 0.0;
      for (std::size_t j = 0; j < n; ++j) lz += graph.laplacian(i, j) * embeddings(j, c);
      trace += embeddings(i, c) * lz;
    }
  }
  return trace / static_cast<double>(graph.edges.size());
}

DenseMatrix dirichlet_gradient(const TemporalGraph& graph, const DenseMatrix& embeddings) {
  check_embeddings(graph, embeddings);
  DenseMatrix grad(embeddings.rows(), embeddings.cols());
  if (graph.edges.empty()) return grad;
  const double scale = 2.0 / static_cast<double>(graph.edges.size());
  for (const auto& e : graph.edges) {
    const auto i = static_cast<std::size_t>(e.i);
    const auto j = static_cast<std::size_t>(e.j);
    auto gi = grad.row(i);
    auto gj = grad.row(j);
    auto zi = embeddings.row(i);
    auto zj = embeddings.row(j);
    for (std::size_t c = 0; c < embeddings.cols(); ++c) {
      const double diff = scale * e.weight * (zi[c] - zj[c]);
      gi[c] += diff;
      gj[c] -= diff;
    }
  }
  return grad;
}

double spectral_gap(const TemporalGraph& graph) {
  if (graph.num_nodes() < 2) return 0.0;
  const Vector eig = dense_symmetric_eigenvalues(graph.laplacian);
  const double lambda2 = eig[1];
  return std::abs(lambda2) < 1e-10 ? 0.0 : std::max(lambda2, 0.0);
}

Vector reconstruct_missing(const TemporalGraph& graph, const DenseMatrix& embeddings, int node) {
  check_embeddings(graph, embeddings);
  if (node < 0 || node >= graph.num_nodes()) throw ConfigurationError("node out of range");
  const auto nbrs = graph.neighbours(node);
  if (nbrs.empty()) throw DegenerateGraphError("node has no neighbours to reconstruct from");
  Vector est(embeddings.cols(), 0.0);
  double degree = 0.0;
  for (const auto& [j, w] : nbrs) {
    degree += w;
    auto zj = embeddings.row(static_cast<std::size_t>(j));
    for (std::size_t c = 0; c < est.size(); ++c) est[c] += w * zj[c];
  }
  for (double& x : est) x /= degree;
  return est;
}

double interpolation_bound(double alpha, std::size_t edge_count, double lambda2,
                      std::size_t neighbour_count) {
  if (!(lambda2 > 0.0)) {
    throw DisconnectedGraphError("interpolation bound undefined: spectral gap is zero");
  }
  if (neighbour_count == 0) throw DegenerateGraphError("interpolation bound needs neighbours");
  return 2.0 * alpha * static_cast<double>(edge_count) /
         (lambda2 * static_cast<double>(neighbour_count));
}

InterpolationCheck check_interpolation(const TemporalGraph& graph, const DenseMatrix& embeddings,
                                       int node) {
  InterpolationCheck check;
  const Vector est = reconstruct_missing(graph, embeddings, node);
  check.error = squared_distance(embeddings.row(static_cast<std::size_t>(node)), est);
  check.alpha = dirichlet_energy(graph, embeddings);
  check.lambda2 = spectral_gap(graph);
  check.bound = interpolation_bound(check.alpha, graph.edge_count(), check.lambda2,
                               graph.neighbours(node).size());
  return check;
}

double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

GapExperimentResult contrastive_gap_experiment(const EmbeddingSampler& sampler, int dim,
                                            const std::vector<int>& n_values, int trials,
                                            Rng& rng, int reference_size) {
  if (n_values.empty() || trials < 1) throw ConfigurationError("gap experiment: empty design");
  if (!std::is_sorted(n_values.begin(), n_values.end()) || n_values.back() > reference_size) {
    throw ConfigurationError("gap experiment: N values must be ascending and <= reference size");
  }
  std::vector<std::vector<double>> gaps(n_values.size());
  std::vector<double> critic(static_cast<std::size_t>(reference_size));
  for (int t = 0; t < trials; ++t) {
    const Vector anchor = sample_unit_sphere(rng, static_cast<std::size_t>(dim));
    for (auto& h : critic) h = dot(anchor, sampler(rng));
    auto log_mean_exp = [&](int n) {
      std::span<const double> head(critic.data(), static_cast<std::size_t>(n));
      return log_sum_exp(head) - std::log(static_cast<double>(n));
    };
    const double reference = log_mean_exp(reference_size);
    for (std::size_t i = 0; i < n_values.size(); ++i) {
      gaps[i].push_back(std::abs(log_mean_exp(n_values[i]) - reference));
    }
  }
  GapExperimentResult result;
  result.reference_size = reference_size;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    GapRow row{n_values[i], mean(gaps[i]), median(gaps[i])};
    result.rows.push_back(row);
    if (row.mean_gap > 0.0) {
      lx.push_back(std::log(static_cast<double>(row.n)));
      ly.push_back(std::log(row.mean_gap));
    }
  }
  result.log_log_slope = lx.size() >= 2 ? least_squares_slope(lx, ly) : 0.0;
  return result;
}

double effective_rank(const DenseMatrix& embeddings) {
  const std::size_t n = embeddings.rows();
  const std::size_t d = embeddings.cols();
  if (n < 2) throw DegenerateInputError("effective_rank: need at least two embeddings");
  Vector mu(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) mu[c] += embeddings(i, c);
  for (double& m : mu) m /= static_cast<double>(n);
  DenseMatrix cov(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto z = embeddings.row(i);
    for (std::size_t a = 0; a < d; ++a) {
      const double za = z[a] - mu[a];
      for (std::size_t b = a; b < d; ++b) cov(a, b) += za * (z[b] - mu[b]);
    }
  }
  double trace = 0.0, frob = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    trace += cov(a, a);
    for (std::size_t b = a; b < d; ++b) frob += (a == b ? 1.0 : 2.0) * cov(a, b) * cov(a, b);
  }
  if (!(frob > 0.0)) return 0.0;
  return trace * trace / frob;
}

}  // namespace edgesplit
