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

#include "edgesplit/probe.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "edgesplit/error.hpp"

namespace edgesplit {

namespace {

using Mat = Eigen::MatrixXd;

Mat design_matrix(const ProbeModel& m, const DenseMatrix& x, const std::vector<std::size_t>& rows) {
  const auto d = x.cols();
  Mat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d + 1));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          (x(rows[r], j) - m.feature_mean[j]) / m.feature_scale[j];
    }
    out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = 1.0;
  }
  return out;
}

void softmax_rows(Mat& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - mx).exp();
    logits.row(r) /= logits.row(r).sum();
  }
}

}  // namespace

ProbeSplit make_probe_split(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (n < 2) throw DegenerateInputError("probe needs at least two samples");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigurationError("probe train_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(n))), 1, n - 1);
  ProbeSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return split;
}

Vector ProbeModel::probabilities(std::span<const double> z) const {
  const std::size_t d = feature_mean.size();
  if (z.size() != d) throw ConfigurationError("probe: embedding dimension mismatch");
  Vector logits(classes.size(), 0.0);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    double s = weights(d, c);
    for (std::size_t j = 0; j < d; ++j) s += (z[j] - feature_mean[j]) / feature_scale[j] * weights(j, c);
    logits[c] = s;
  }
  return softmax(logits);
}

int ProbeModel::predict(std::span<const double> z) const {
  const Vector p = probabilities(z);
  return classes[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())];
}

double ProbeModel::loss(std::span<const double> z, int label) const {
  const Vector p = probabilities(z);
  const auto it = std::lower_bound(classes.begin(), classes.end(), label);
  const double prob = it != classes.end() && *it == label
                          ? p[static_cast<std::size_t>(it - classes.begin())]
                          : 0.0;
  return -std::log(std::max(prob, 1e-12));
}

ProbeModel fit_probe(const DenseMatrix& x, const std::vector<int>& labels,
                     const std::vector<std::size_t>& train, const ProbeConfig& config) {
  if (labels.size() != x.rows()) throw ConfigurationError("probe: one label per row required");
  if (train.empty()) throw DegenerateInputError("probe: empty training split");
  ProbeModel m;
  for (std::size_t r : train) m.classes.push_back(labels[r]);
  std::sort(m.classes.begin(), m.classes.end());
  m.classes.erase(std::unique(m.classes.begin(), m.classes.end()), m.classes.end());
  if (m.classes.size() < 2) throw DegenerateInputError("probe: fewer than two classes present");

  const std::size_t d = x.cols();
  const double n = static_cast<double>(train.size());
  m.feature_mean.assign(d, 0.0);
  m.feature_scale.assign(d, 0.0);
  for (std::size_t r : train)
    for (std::size_t j = 0; j < d; ++j) m.feature_mean[j] += x(r, j) / n;
  for (std::size_t r : train)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(r, j) - m.feature_mean[j];
      m.feature_scale[j] += c * c / n;
    }
  for (double& s : m.feature_scale) s = std::max(std::sqrt(s), 1e-8);

  const Mat X = design_matrix(m, x, train);
  const auto k = static_cast<Eigen::Index>(m.classes.size());
  Mat Y = Mat::Zero(X.rows(), k);
  for (std::size_t r = 0; r < train.size(); ++r) {
    const auto c = std::lower_bound(m.classes.begin(), m.classes.end(), labels[train[r]]) - m.classes.begin();
    Y(static_cast<Eigen::Index>(r), c) = 1.0;
  }
  Mat W = Mat::Zero(X.cols(), k);
  Mat velocity = Mat::Zero(X.cols(), k);
  for (m.iterations = 0; m.iterations < config.max_iterations; ++m.iterations) {
    Mat P = X * W;
    softmax_rows(P);
    Mat grad = X.transpose() * (P - Y) / n;
    grad.topRows(X.cols() - 1) += config.l2 * W.topRows(X.cols() - 1);
    if (grad.cwiseAbs().maxCoeff() < config.tolerance) break;
    velocity = config.momentum * velocity - config.lr * grad;
    W += velocity;
  }
  m.weights = DenseMatrix(static_cast<std::size_t>(W.rows()), static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < W.rows(); ++i)
    for (Eigen::Index c = 0; c < k; ++c)
      m.weights(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) = W(i, c);
  return m;
}

double probe_accuracy(const ProbeModel& model, const DenseMatrix& x, const std::vector<int>& labels,
                      const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw DegenerateInputError("probe: empty evaluation split");
  std::size_t correct = 0;
  for (std::size_t r : rows) {
    const auto row = std::span<const double>(x.values()).subspan(r * x.cols(), x.cols());
    correct += model.predict(row) == labels[r];
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

double linear_probe(const DenseMatrix& x, const std::vector<int>& labels, std::uint64_t split_seed,
                    const ProbeConfig& config) {
  if (labels.size() != x.rows()) throw ConfigurationError("probe: one label per row required");
  std::vector<int> distinct(labels);
  std::sort(distinct.begin(), distinct.end());
  if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 2) {
    throw DegenerateInputError("probe: fewer than two classes present");
  }
  const ProbeSplit split = make_probe_split(x.rows(), config.train_fraction, split_seed);
  return probe_accuracy(fit_probe(x, labels, split.train, config), x, labels, split.test);
}

}  // namespace edgesplit
