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

#ifndef EDGESPLIT_NUMERICS_HPP_
#define EDGESPLIT_NUMERICS_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace edgesplit {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix from_rows(const std::vector<Vector>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }
  Vector row_vector(std::size_t r) const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool all_finite() const;
  bool is_symmetric(double tol = 1e-12) const;

  /// y = M x
  Vector multiply(std::span<const double> x) const;
  /// y = M^T x
  Vector multiply_transposed(std::span<const double> x) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Seeded 64-bit Mersenne twister; identical seeds give identical streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }
  /// Draw an index proportionally to non-negative weights.
  std::size_t categorical(std::span<const double> weights);
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

enum class Activation { kLinear, kTanh };

struct DenseLayer {
  DenseMatrix weights;  // out x in
  Vector bias;          // out
  Activation activation = Activation::kTanh;

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }
};

using LayerStack = std::vector<DenseLayer>;

/// Xavier-uniform weights, zero biases.
DenseLayer make_dense_layer(std::size_t in_dim, std::size_t out_dim, Activation activation,
                            Rng& rng);

/// Everything backprop needs: the input of every layer and its activation output.
struct MlpCache {
  std::vector<Vector> inputs;
  std::vector<Vector> outputs;
};

struct MlpResult {
  Vector output;
  MlpCache cache;
};

struct LayerGradient {
  DenseMatrix weights;
  Vector bias;
};

struct MlpGradient {
  std::vector<LayerGradient> layers;
  Vector input;
};

MlpResult mlp_forward(std::span<const DenseLayer> layers, std::span<const double> x);

/// Exact gradient of <upstream, mlp(x)> with respect to every layer and the input.
MlpGradient mlp_backward(std::span<const DenseLayer> layers, const MlpCache& cache,
                         std::span<const double> upstream);

/// Zero-filled gradient shaped like `layers`.
std::vector<LayerGradient> zero_gradient(std::span<const DenseLayer> layers);
void accumulate(std::vector<LayerGradient>& into, const std::vector<LayerGradient>& grad,
                double scale = 1.0);
/// Adds `grad` to the trailing layers of `into` (for suffix-only gradients).
void accumulate_tail(std::vector<LayerGradient>& into, const std::vector<LayerGradient>& grad,
                     double scale = 1.0);

std::size_t parameter_count(std::span<const DenseLayer> layers);
Vector flatten_parameters(std::span<const DenseLayer> layers);
void assign_parameters(std::span<DenseLayer> layers, std::span<const double> flat);
Vector flatten_gradient(const std::vector<LayerGradient>& grad);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
double squared_distance(std::span<const double> a, std::span<const double> b);

Vector l2_normalize(std::span<const double> v);
/// Vector-Jacobian product of l2_normalize at `v` given the normalised output.
Vector l2_normalize_backward(std::span<const double> v, std::span<const double> normalized,
                             std::span<const double> upstream);

double log_sum_exp(std::span<const double> values);
/// Numerically stable softmax.
Vector softmax(std::span<const double> logits);

Vector sample_unit_sphere(Rng& rng, std::size_t dim);

/// Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
Vector dense_symmetric_eigenvalues(const DenseMatrix& m);

struct EigenDecomposition {
  Vector values;        // ascending
  DenseMatrix vectors;  // column j is the eigenvector for values[j]
};
EigenDecomposition dense_symmetric_eigen(const DenseMatrix& m);

double mean(std::span<const double> v);
double stddev(std::span<const double> v);
double median(std::vector<double> v);
/// Pearson correlation; returns NaN when either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace edgesplit

#endif  // EDGESPLIT_NUMERICS_HPP_
