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

#include "edgesplit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "edgesplit/error.hpp"

namespace edgesplit {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ConfigurationError("DenseMatrix: " + std::to_string(values_.size()) +
                             " values for a " + std::to_string(rows_) + "x" +
                             std::to_string(cols_) + " matrix");
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::from_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return {};
  DenseMatrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw ConfigurationError("from_rows: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Vector DenseMatrix::row_vector(std::size_t r) const {
  auto s = row(r);
  return {s.begin(), s.end()};
}

bool DenseMatrix::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool DenseMatrix::is_symmetric(double tol) const {
  if (rows_ != cols_) return false;
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = i + 1; j < cols_; ++j)
      if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
  return true;
}

Vector DenseMatrix::multiply(std::span<const double> x) const {
  if (x.size() != cols_) {
    throw ConfigurationError("multiply: expected input of size " + std::to_string(cols_) +
                             ", got " + std::to_string(x.size()));
  }
  Vector y(rows_);
  const auto rows = static_cast<Eigen::Index>(rows_), cols = static_cast<Eigen::Index>(cols_);
  Eigen::Map<Eigen::VectorXd>(y.data(), rows).noalias() =
      ConstMatrixMap(values_.data(), rows, cols) * Eigen::Map<const Eigen::VectorXd>(x.data(), cols);
  return y;
}

Vector DenseMatrix::multiply_transposed(std::span<const double> x) const {
  if (x.size() != rows_) {
    throw ConfigurationError("multiply_transposed: expected input of size " +
                             std::to_string(rows_) + ", got " + std::to_string(x.size()));
  }
  Vector y(cols_);
  const auto rows = static_cast<Eigen::Index>(rows_), cols = static_cast<Eigen::Index>(cols_);
  Eigen::Map<Eigen::VectorXd>(y.data(), cols).noalias() =
      ConstMatrixMap(values_.data(), rows, cols).transpose() * Eigen::Map<const Eigen::VectorXd>(x.data(), rows);
  return y;
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw DegenerateInputError("categorical: weights sum to zero");
  double u = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  // Rounding left a sliver of mass; return the last index with positive weight.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return weights.size() - 1;
}

DenseLayer make_dense_layer(std::size_t in_dim, std::size_t out_dim, Activation activation,
                            Rng& rng) {
  if (in_dim == 0 || out_dim == 0) throw ConfigurationError("make_dense_layer: zero dimension");
  DenseLayer layer{DenseMatrix(out_dim, in_dim), Vector(out_dim, 0.0), activation};
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  for (double& w : layer.weights.values()) w = rng.uniform(-limit, limit);
  return layer;
}

MlpResult mlp_forward(std::span<const DenseLayer> layers, std::span<const double> x) {
  MlpResult result;
  result.cache.inputs.reserve(layers.size());
  result.cache.outputs.reserve(layers.size());
  Vector current(x.begin(), x.end());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const DenseLayer& layer = layers[i];
    if (current.size() != layer.in_dim() || layer.bias.size() != layer.out_dim()) {
      throw ConfigurationError("mlp_forward: layer " + std::to_string(i) + " expects input " +
                               std::to_string(layer.in_dim()) + ", got " +
                               std::to_string(current.size()));
    }
    Vector out = layer.weights.multiply(current);
    for (std::size_t j = 0; j < out.size(); ++j) {
      out[j] += layer.bias[j];
      if (layer.activation == Activation::kTanh) out[j] = std::tanh(out[j]);
    }
    result.cache.inputs.push_back(std::move(current));
    result.cache.outputs.push_back(out);
    current = std::move(out);
  }
  result.output = std::move(current);
  return result;
}

MlpGradient mlp_backward(std::span<const DenseLayer> layers, const MlpCache& cache,
                         std::span<const double> upstream) {
  if (cache.inputs.size() != layers.size() || cache.outputs.size() != layers.size()) {
    throw ConfigurationError("mlp_backward: cache does not match the layer stack");
  }
  MlpGradient grad;
  grad.layers.resize(layers.size());
  Vector delta(upstream.begin(), upstream.end());
  if (!layers.empty() && delta.size() != layers.back().out_dim()) {
    throw ConfigurationError("mlp_backward: upstream gradient has wrong size");
  }
  for (std::size_t i = layers.size(); i-- > 0;) {
    const DenseLayer& layer = layers[i];
    const Vector& out = cache.outputs[i];
    const Vector& in = cache.inputs[i];
    if (layer.activation == Activation::kTanh) {
      for (std::size_t j = 0; j < delta.size(); ++j) delta[j] *= 1.0 - out[j] * out[j];
    }
    LayerGradient& g = grad.layers[i];
    g.weights = DenseMatrix(layer.out_dim(), layer.in_dim());
    g.bias = delta;
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      auto row = g.weights.row(r);
      for (std::size_t c = 0; c < layer.in_dim(); ++c) row[c] = d * in[c];
    }
    delta = layer.weights.multiply_transposed(delta);
  }
  grad.input = std::move(delta);
  return grad;
}

std::vector<LayerGradient> zero_gradient(std::span<const DenseLayer> layers) {
  std::vector<LayerGradient> grad;
  grad.reserve(layers.size());
  for (const auto& layer : layers) {
    grad.push_back({DenseMatrix(layer.out_dim(), layer.in_dim()), Vector(layer.out_dim(), 0.0)});
  }
  return grad;
}

void accumulate(std::vector<LayerGradient>& into, const std::vector<LayerGradient>& grad,
                double scale) {
  if (into.size() != grad.size()) throw ConfigurationError("accumulate: layer count mismatch");
  accumulate_tail(into, grad, scale);
}

void accumulate_tail(std::vector<LayerGradient>& into, const std::vector<LayerGradient>& grad,
                     double scale) {
  if (grad.size() > into.size()) throw ConfigurationError("accumulate: too many layers");
  const std::size_t offset = into.size() - grad.size();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    auto& dst = into[offset + i];
    const auto& src = grad[i];
    if (dst.weights.values().size() != src.weights.values().size() ||
        dst.bias.size() != src.bias.size()) {
      throw ConfigurationError("accumulate: layer shape mismatch");
    }
    auto& dw = dst.weights.values();
    const auto& sw = src.weights.values();
    for (std::size_t j = 0; j < dw.size(); ++j) dw[j] += scale * sw[j];
    for (std::size_t j = 0; j < dst.bias.size(); ++j) dst.bias[j] += scale * src.bias[j];
  }
}

std::size_t parameter_count(std::span<const DenseLayer> layers) {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weights.values().size() + layer.bias.size();
  return n;
}

Vector flatten_parameters(std::span<const DenseLayer> layers) {
  Vector flat;
  flat.reserve(parameter_count(layers));
  for (const auto& layer : layers) {
    flat.insert(flat.end(), layer.weights.values().begin(), layer.weights.values().end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

void assign_parameters(std::span<DenseLayer> layers, std::span<const double> flat) {
  std::size_t pos = 0;
  for (auto& layer : layers) {
    auto& w = layer.weights.values();
    if (pos + w.size() + layer.bias.size() > flat.size()) {
      throw ConfigurationError("assign_parameters: flat vector too short");
    }
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), w.size(), w.begin());
    pos += w.size();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), layer.bias.size(),
                layer.bias.begin());
    pos += layer.bias.size();
  }
  if (pos != flat.size()) throw ConfigurationError("assign_parameters: flat vector too long");
}

Vector flatten_gradient(const std::vector<LayerGradient>& grad) {
  Vector flat;
  for (const auto& g : grad) {
    flat.insert(flat.end(), g.weights.values().begin(), g.weights.values().end());
    flat.insert(flat.end(), g.bias.begin(), g.bias.end());
  }
  return flat;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigurationError("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigurationError("squared_distance: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

Vector l2_normalize(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw DegenerateInputError("l2_normalize: vector has zero or non-finite norm");
  }
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

Vector l2_normalize_backward(std::span<const double> v, std::span<const double> normalized,
                             std::span<const double> upstream) {
  const double n = norm(v);
  const double proj = dot(normalized, upstream);
  Vector grad(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) grad[i] = (upstream[i] - normalized[i] * proj) / n;
  return grad;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw DegenerateInputError("log_sum_exp: empty input");
  const double m = *std::max_element(values.begin(), values.end());
  if (std::isinf(m)) return m;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

Vector softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  Vector p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

Vector sample_unit_sphere(Rng& rng, std::size_t dim) {
  if (dim == 0) throw ConfigurationError("sample_unit_sphere: dimension must be >= 1");
  Vector v(dim);
  double n2 = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n2 = dot(v, v);
  } while (n2 < 1e-300);
  const double n = std::sqrt(n2);
  for (double& x : v) x /= n;
  return v;
}

EigenDecomposition dense_symmetric_eigen(const DenseMatrix& m) {
  if (m.rows() != m.cols()) throw ConfigurationError("eigen: matrix is not square");
  double scale = 0.0;
  for (double v : m.values()) scale = std::max(scale, std::abs(v));
  if (!m.is_symmetric(1e-12 * std::max(1.0, scale))) {
    throw ConfigurationError("eigen: matrix is not symmetric");
  }
  const auto n = static_cast<Eigen::Index>(m.rows());
  const Eigen::SelfAdjointEigenSolver<RowMajorMatrix> solver(ConstMatrixMap(m.values().data(), n, n));
  if (solver.info() != Eigen::Success) throw DegenerateInputError("eigen: decomposition did not converge");
  // Eigenvalues come back in ascending order.
  EigenDecomposition out{Vector(static_cast<std::size_t>(n)), DenseMatrix(m.rows(), m.cols())};
  Eigen::Map<Eigen::VectorXd>(out.values.data(), n) = solver.eigenvalues();
  MatrixMap(out.vectors.values().data(), n, n) = solver.eigenvectors();
  return out;
}

Vector dense_symmetric_eigenvalues(const DenseMatrix& m) {
  return dense_symmetric_eigen(m).values;
}

double mean(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

}  // namespace edgesplit
