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

// Shared helpers for the unit tests: central finite differences and random
// fixtures.

#ifndef EDGESPLIT_TESTS_SUPPORT_HPP_
#define EDGESPLIT_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "edgesplit/numerics.hpp"

namespace edgesplit::testing {

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

/// Worst relative error between `analytic` and the central-difference gradient
/// of `f` at `x`, over all coordinates.
inline double max_fd_error(const std::function<double(const Vector&)>& f, Vector x,
                           const Vector& analytic, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    // Absolute slack for coordinates whose derivative is essentially zero.
    if (std::abs(numeric) < 1e-7 && std::abs(analytic[i]) < 1e-7) continue;
    worst = std::max(worst, relative_error(numeric, analytic[i]));
  }
  return worst;
}

inline Vector random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  Vector v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline DenseMatrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  DenseMatrix m(r, c);
  for (double& x : m.values()) x = scale * rng.normal();
  return m;
}

}  // namespace edgesplit::testing

#endif  // EDGESPLIT_TESTS_SUPPORT_HPP_
