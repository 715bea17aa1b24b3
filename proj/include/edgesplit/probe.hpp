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

// Linear probe: multinomial logistic regression on frozen embeddings, trained
// by full-batch gradient descent with momentum on a seeded 80/20 split.

#ifndef EDGESPLIT_PROBE_HPP_
#define EDGESPLIT_PROBE_HPP_

#include <cstdint>
#include <vector>

#include "edgesplit/numerics.hpp"

namespace edgesplit {

struct ProbeConfig {
  double train_fraction = 0.8;
  int max_iterations = 400;
  double lr = 0.5;
  double momentum = 0.9;
  double l2 = 1e-4;
  /// Stop once the gradient's max-abs entry falls below this.
  double tolerance = 1e-6;
};

struct ProbeSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

ProbeSplit make_probe_split(std::size_t n, double train_fraction, std::uint64_t seed);

struct ProbeModel {
  std::vector<int> classes;  // sorted distinct labels; column c predicts classes[c]
  Vector feature_mean;
  Vector feature_scale;
  DenseMatrix weights;  // (dim + 1) x classes, last row is the bias
  int iterations = 0;

  Vector probabilities(std::span<const double> embedding) const;
  int predict(std::span<const double> embedding) const;
  /// Cross-entropy of the true label; labels unseen in training count as
  /// probability zero, clamped to 1e-12.
  double loss(std::span<const double> embedding, int label) const;
};

/// Fits on the rows listed in `train`. Throws DegenerateInputError when the
/// training rows carry fewer than two classes.
ProbeModel fit_probe(const DenseMatrix& embeddings, const std::vector<int>& labels,
                     const std::vector<std::size_t>& train, const ProbeConfig& config = {});

double probe_accuracy(const ProbeModel& model, const DenseMatrix& embeddings,
                      const std::vector<int>& labels, const std::vector<std::size_t>& rows);

/// Held-out accuracy in [0, 1].
double linear_probe(const DenseMatrix& embeddings, const std::vector<int>& labels,
                    std::uint64_t split_seed, const ProbeConfig& config = {});

}  // namespace edgesplit

#endif  // EDGESPLIT_PROBE_HPP_
