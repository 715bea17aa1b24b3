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

#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "edgesplit/error.hpp"
#include "edgesplit/manifold.hpp"
#include "support.hpp"

using namespace edgesplit;
using edgesplit::testing::max_fd_error;
using edgesplit::testing::random_matrix;
using edgesplit::testing::random_vector;

namespace {

DenseMatrix from_flat(const Vector& flat, std::size_t rows, std::size_t cols) {
  return DenseMatrix(rows, cols, flat);
}

TemporalGraph random_graph(Rng& rng, int n, double p) {
  std::vector<GraphEdge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) edges.push_back({i, j, rng.uniform(0.5, 2.0)});
  std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  return make_graph(ids, edges);
}

DenseMatrix p3_embeddings() { return DenseMatrix::from_rows({{0, 0}, {1, 0}, {2, 0}}); }

// Brute-force component count: union-find over every pair within the window
// that the k-NN rule would have linked.
int brute_components(const std::vector<std::int64_t>& ts, std::int64_t window) {
  const int n = static_cast<int>(ts.size());
  std::vector<int> parent(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
  std::function<int(int)> find = [&](int x) {
    return parent[static_cast<std::size_t>(x)] == x ? x : parent[static_cast<std::size_t>(x)] = find(parent[static_cast<std::size_t>(x)]);
  };
  for (int i = 0; i + 1 < n; ++i)
    if (std::llabs(ts[static_cast<std::size_t>(i + 1)] - ts[static_cast<std::size_t>(i)]) <= window)
      parent[static_cast<std::size_t>(find(i))] = find(i + 1);
  std::set<int> roots;
  for (int i = 0; i < n; ++i) roots.insert(find(i));
  return static_cast<int>(roots.size());
}

}  // namespace

TEST_CASE("sliced_wasserstein: basics") {
  Rng rng(1);
  const auto proj = make_projections(50, 4, 7);
  for (const auto& w : proj.directions) CHECK(std::abs(norm(w) - 1.0) < 1e-12);
  for (int t = 0; t < 100; ++t) {
    const DenseMatrix a = random_matrix(rng, 12, 4);
    const DenseMatrix b = random_matrix(rng, 12, 4);
    CHECK(sliced_wasserstein(a, a, proj) == 0.0);
    const double ab = sliced_wasserstein(a, b, proj);
    CHECK(ab >= 0.0);
    CHECK(ab == doctest::Approx(sliced_wasserstein(b, a, proj)).epsilon(1e-12));
  }
  ProjectionSet one;
  one.directions = {Vector{1.0}};
  const auto a = DenseMatrix::from_rows({{2}, {0}});
  const auto b = DenseMatrix::from_rows({{1}, {3}});
  CHECK(sliced_wasserstein(a, b, one) == doctest::Approx(1.0));
  one.directions = {Vector{-1.0}};
  CHECK(sliced_wasserstein(a, b, one) == doctest::Approx(1.0));
  CHECK_THROWS_AS(sliced_wasserstein(a, DenseMatrix::from_rows({{1}, {2}, {3}}), one),
                  ConfigurationError);
}

TEST_CASE("sliced_wasserstein: collapsed batch is far from the sphere prior") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto proj = make_projections(50, 8, seed + 100);
    const DenseMatrix prior = sample_uniform_sphere(128, 8, rng);
    const DenseMatrix other = sample_uniform_sphere(128, 8, rng);
    const Vector point = sample_unit_sphere(rng, 8);
    DenseMatrix collapsed(128, 8);
    for (std::size_t i = 0; i < 128; ++i) std::copy(point.begin(), point.end(), collapsed.row(i).begin());
    CHECK(sliced_wasserstein(collapsed, prior, proj) > sliced_wasserstein(other, prior, proj));
  }
}

TEST_CASE("swd_gradient") {
  Rng rng(2);
  const auto proj = make_projections(10, 3, 5);
  const DenseMatrix a = random_matrix(rng, 6, 3);
  const DenseMatrix zero_grad = swd_gradient(a, a, proj);
  for (double v : zero_grad.values()) CHECK(v == 0.0);

  for (int t = 0; t < 20; ++t) {
    const DenseMatrix x = random_matrix(rng, 6, 3);
    const DenseMatrix prior = random_matrix(rng, 6, 3);
    const DenseMatrix g = swd_gradient(x, prior, proj);
    auto f = [&](const Vector& flat) { return sliced_wasserstein(from_flat(flat, 6, 3), prior, proj); };
    CHECK(max_fd_error(f, x.values(), g.values(), 1e-7) < 1e-4);
  }

  // A shared shift of both batches leaves every matched difference unchanged.
  const DenseMatrix x = random_matrix(rng, 6, 3);
  const DenseMatrix prior = random_matrix(rng, 6, 3);
  DenseMatrix xs = x, ps = prior;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      xs(i, c) += 0.7 * (c + 1);
      ps(i, c) += 0.7 * (c + 1);
    }
  CHECK(sliced_wasserstein(xs, ps, proj) == doctest::Approx(sliced_wasserstein(x, prior, proj)).epsilon(1e-10));
  const DenseMatrix g1 = swd_gradient(x, prior, proj), g2 = swd_gradient(xs, ps, proj);
  for (std::size_t i = 0; i < g1.values().size(); ++i) CHECK(g1.values()[i] == doctest::Approx(g2.values()[i]).epsilon(1e-9));
}

TEST_CASE("build_knn_temporal_graph") {
  const auto p3 = build_knn_temporal_graph({0, 10, 20}, 1, 1000);
  REQUIRE(p3.edge_count() == 2);
  CHECK(p3.edges[0].i == 0);
  CHECK(p3.edges[0].j == 1);
  CHECK(p3.edges[1].i == 1);
  CHECK(p3.edges[1].j == 2);

  const auto complete = build_knn_temporal_graph({0, 10, 20, 35, 50}, 4, 1000);
  CHECK(complete.edge_count() == 10);

  Rng rng(3);
  for (int t = 0; t < 30; ++t) {
    std::vector<std::int64_t> ts;
    std::int64_t now = 0;
    for (int i = 0; i < 25; ++i) {
      now += rng.bernoulli(0.1) ? 500 + rng.uniform_int(0, 500) : 10;
      ts.push_back(now);
    }
    const auto g = build_knn_temporal_graph(ts, 2, 200);
    CHECK(connected_components(g) == brute_components(ts, 200));
    for (std::size_t i = 0; i < g.laplacian.rows(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < g.laplacian.cols(); ++j) row += g.laplacian(i, j);
      CHECK(std::abs(row) < 1e-9);
    }
    CHECK(g.laplacian.is_symmetric());
  }
  CHECK_THROWS_AS(build_knn_temporal_graph({5}, 1, 100), DegenerateGraphError);
}

TEST_CASE("dirichlet_energy") {
  const auto p3 = build_knn_temporal_graph({0, 10, 20}, 1, 1000);
  CHECK(dirichlet_energy(p3, p3_embeddings()) == doctest::Approx(1.0));
  CHECK(dirichlet_energy(p3, DenseMatrix(3, 2, 0.4)) == 0.0);
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    const auto g = random_graph(rng, 12, 0.3);
    const DenseMatrix z = random_matrix(rng, 12, 5);
    CHECK(std::abs(dirichlet_energy(g, z) - dirichlet_energy_trace(g, z)) < 1e-9);
  }
  CHECK_THROWS_AS(dirichlet_energy(p3, DenseMatrix(4, 2)), ConfigurationError);
}

TEST_CASE("dirichlet_gradient") {
  const auto p3 = build_knn_temporal_graph({0, 10, 20}, 1, 1000);
  const DenseMatrix zero_grad = dirichlet_gradient(p3, DenseMatrix(3, 2, 0.3));
  for (double v : zero_grad.values()) CHECK(v == 0.0);
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    auto g = random_graph(rng, 8, 0.4);
    if (g.edges.empty()) continue;
    const DenseMatrix z = random_matrix(rng, 8, 3);
    const DenseMatrix grad = dirichlet_gradient(g, z);
    auto f = [&](const Vector& flat) { return dirichlet_energy(g, from_flat(flat, 8, 3)); };
    CHECK(max_fd_error(f, z.values(), grad.values()) < 1e-4);
    for (std::size_t c = 0; c < 3; ++c) {
      double col = 0.0;
      for (std::size_t i = 0; i < 8; ++i) col += grad(i, c);
      CHECK(std::abs(col) < 1e-12);
    }
  }
}

TEST_CASE("spectral_gap") {
  CHECK(spectral_gap(build_knn_temporal_graph({0, 10, 20}, 1, 1000)) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(spectral_gap(make_graph({0, 1}, {})) == 0.0);
  Rng rng(6);
  for (int t = 0; t < 40; ++t) {
    const auto g = random_graph(rng, static_cast<int>(rng.uniform_int(3, 30)), rng.uniform(0.05, 0.4));
    const double gap = spectral_gap(g);
    CHECK((gap == 0.0) == (connected_components(g) > 1));
    if (gap > 0.0) {
      const auto eig = dense_symmetric_eigen(g.laplacian);
      CHECK(gap == doctest::Approx(eig.values[1]).epsilon(1e-9));
    }
  }
}

TEST_CASE("reconstruct_missing") {
  auto g = make_graph({0, 1, 2}, {{0, 1, 1.0}, {1, 2, 1.0}});
  const auto same = DenseMatrix::from_rows({{0.3, 0.4}, {9, 9}, {0.3, 0.4}});
  const Vector est = reconstruct_missing(g, same, 1);
  CHECK(est[0] == doctest::Approx(0.3));
  CHECK(est[1] == doctest::Approx(0.4));
  const auto opposite = DenseMatrix::from_rows({{1, 0}, {5, 5}, {-1, 0}});
  const Vector zero = reconstruct_missing(g, opposite, 1);
  CHECK(std::abs(zero[0]) < 1e-15);
  CHECK(std::abs(zero[1]) < 1e-15);

  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    auto rg = random_graph(rng, 10, 0.5);
    const DenseMatrix z = random_matrix(rng, 10, 3);
    const int node = static_cast<int>(rng.uniform_int(0, 9));
    double degree = 0.0;
    Vector ref(3, 0.0);
    for (const auto& e : rg.edges) {
      int other = e.i == node ? e.j : (e.j == node ? e.i : -1);
      if (other < 0) continue;
      degree += e.weight;
      for (std::size_t c = 0; c < 3; ++c) ref[c] += e.weight * z(static_cast<std::size_t>(other), c);
    }
    if (degree == 0.0) {
      CHECK_THROWS_AS(reconstruct_missing(rg, z, node), DegenerateGraphError);
      continue;
    }
    const Vector got = reconstruct_missing(rg, z, node);
    for (std::size_t c = 0; c < 3; ++c) CHECK(got[c] == doctest::Approx(ref[c] / degree).epsilon(1e-12));
  }
}

TEST_CASE("interpolation bound") {
  const auto p3 = build_knn_temporal_graph({0, 10, 20}, 1, 1000);
  const auto check = check_interpolation(p3, p3_embeddings(), 1);
  CHECK(check.alpha == doctest::Approx(1.0));
  CHECK(check.lambda2 == doctest::Approx(1.0));
  CHECK(check.bound == doctest::Approx(2.0));
  CHECK(check.error == doctest::Approx(0.0));
  const auto flat = check_interpolation(p3, DenseMatrix(3, 2, 0.5), 1);
  CHECK(flat.bound == 0.0);
  CHECK(flat.error == 0.0);
  CHECK_THROWS_AS(interpolation_bound(1.0, 3, 0.0, 2), DisconnectedGraphError);

  Rng rng(8);
  int violations = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = 20;
    std::vector<std::int64_t> ts;
    for (int i = 0; i < n; ++i) ts.push_back(10 * i);
    const auto g = build_knn_temporal_graph(ts, t % 2 == 0 ? 1 : 5, 10000);
    DenseMatrix z(n, 4);
    const Vector dir = random_vector(rng, 4);
    for (int i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 4; ++c)
        z(static_cast<std::size_t>(i), c) = std::sin(0.2 * i + c) * dir[c] + 0.05 * rng.normal();
    const int node = static_cast<int>(rng.uniform_int(0, n - 1));
    violations += check_interpolation(g, z, node).violated();
  }
  CHECK(violations == 0);
}

TEST_CASE("finite-sample gap shrinks with N") {
  Rng rng(9);
  const int dim = 16;
  EmbeddingSampler sampler = [dim](Rng& r) { return sample_unit_sphere(r, static_cast<std::size_t>(dim)); };
  const auto res = contrastive_gap_experiment(sampler, dim, {8, 32, 128, 512, 8192}, 50, rng, 8192);
  CHECK(res.rows.back().mean_gap == 0.0);
  CHECK(res.rows.back().median_gap == 0.0);
  for (std::size_t i = 1; i + 1 < res.rows.size(); ++i) CHECK(res.rows[i].median_gap < res.rows[i - 1].median_gap);

  const auto trend = contrastive_gap_experiment(sampler, dim, {8, 32, 128, 512}, 50, rng, 8192);
  CHECK(trend.log_log_slope >= -0.7);
  CHECK(trend.log_log_slope <= -0.3);
}

TEST_CASE("effective_rank") {
  Rng rng(10);
  DenseMatrix line(200, 4);
  for (std::size_t i = 0; i < 200; ++i) line(i, 0) = rng.normal();
  CHECK(effective_rank(line) == doctest::Approx(1.0));
  const DenseMatrix iso = random_matrix(rng, 4000, 4);
  CHECK(effective_rank(iso) > 3.8);
}
