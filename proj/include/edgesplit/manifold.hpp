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

// Distribution-quality metrics over embedding sets: sliced Wasserstein
// distance to a prior, temporal k-NN graphs and their Dirichlet energy,
// spectral gap, neighbour-average reconstruction and the associated
// interpolation and finite-sample checks.

#ifndef EDGESPLIT_MANIFOLD_HPP_
#define EDGESPLIT_MANIFOLD_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "edgesplit/numerics.hpp"

namespace edgesplit {

/// Embeddings as rows, with their timestamps.
struct EmbeddingBatch {
  std::vector<std::int64_t> timestamps_ms;
  DenseMatrix embeddings;
};

struct ProjectionSet {
  std::vector<Vector> directions;
  std::uint64_t seed = 0;
};

ProjectionSet make_projections(int count, int dim, std::uint64_t seed);

/// Rows drawn uniformly from the unit sphere.
DenseMatrix sample_uniform_sphere(int count, int dim, Rng& rng);

/// Average over projections of the mean squared difference between sorted
/// 1-D projections (equal-size empirical measures).
double sliced_wasserstein(const DenseMatrix& a, const DenseMatrix& b,
                          const ProjectionSet& projections);

/// Gradient of sliced_wasserstein w.r.t. the rows of `a`, holding the sort
/// permutations fixed.
DenseMatrix swd_gradient(const DenseMatrix& a, const DenseMatrix& prior,
                         const ProjectionSet& projections);

struct GraphEdge {
  int i = 0;
  int j = 0;
  double weight = 1.0;
};

struct TemporalGraph {
  std::vector<std::int64_t> node_ids;
  std::vector<GraphEdge> edges;  // undirected, i < j, no duplicates
  DenseMatrix laplacian;

  int num_nodes() const { return static_cast<int>(node_ids.size()); }
  std::size_t edge_count() const { return edges.size(); }
  /// Neighbour list with weights for node `n`.
  std::vector<std::pair<int, double>> neighbours(int n) const;
};

/// Builds a graph from an explicit edge list (weights > 0).
TemporalGraph make_graph(std::vector<std::int64_t> node_ids, std::vector<GraphEdge> edges);

/// Each node links to its k nearest-in-time nodes within `window_ms`
/// (ties broken by index), plus its temporal predecessor and successor when
/// they fall inside the window. Edges are symmetrised with unit weight.
TemporalGraph build_knn_temporal_graph(const std::vector<std::int64_t>& timestamps_ms, int k,
                                       std::int64_t window_ms);

int connected_components(const TemporalGraph& graph);

/// (1/|E|) sum_edges w_ij ||z_i - z_j||^2; zero for an edgeless graph.
double dirichlet_energy(const TemporalGraph& graph, const DenseMatrix& embeddings);
/// Same quantity computed as Tr(Z^T L Z) / |E|.
double dirichlet_energy_trace(const TemporalGraph& graph, const DenseMatrix& embeddings);
/// (2/|E|) L Z
DenseMatrix dirichlet_gradient(const TemporalGraph& graph, const DenseMatrix& embeddings);

double spectral_gap(const TemporalGraph& graph);

/// Weighted neighbour average at node `node`.
Vector reconstruct_missing(const TemporalGraph& graph, const DenseMatrix& embeddings, int node);

/// 2 alpha |E| / (lambda2 |N|)
double interpolation_bound(double alpha, std::size_t edge_count, double lambda2,
                      std::size_t neighbour_count);

struct InterpolationCheck {
  double error = 0.0;  // ||z - z_hat||^2
  double bound = 0.0;
  double alpha = 0.0;
  double lambda2 = 0.0;
  bool violated() const { return error > bound * (1.0 + 1e-12) + 1e-15; }
};
/// Evaluates both sides of the interpolation bound for one held-out node.
InterpolationCheck check_interpolation(const TemporalGraph& graph, const DenseMatrix& embeddings,
                                       int node);

struct GapRow {
  int n = 0;
  double mean_gap = 0.0;
  double median_gap = 0.0;
};

struct GapExperimentResult {
  std::vector<GapRow> rows;
  int reference_size = 0;
  double log_log_slope = 0.0;  // least squares of log(mean gap) on log N
};

using EmbeddingSampler = std::function<Vector(Rng&)>;

/// Empirical |L_N - L_ref| of the contrastive partition term for an anchor
/// drawn per trial. The reference uses `reference_size` samples and each N
/// uses the first N of them, so N == reference_size gives a zero gap.
GapExperimentResult contrastive_gap_experiment(const EmbeddingSampler& sampler, int dim,
                                            const std::vector<int>& n_values, int trials,
                                            Rng& rng, int reference_size = 8192);

/// Participation ratio (tr C)^2 / tr(C^2) of the sample covariance.
double effective_rank(const DenseMatrix& embeddings);

/// Least-squares slope of y on x.
double least_squares_slope(std::span<const double> x, std::span<const double> y);

}  // namespace edgesplit

#endif  // EDGESPLIT_MANIFOLD_HPP_
