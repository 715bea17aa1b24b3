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

#ifndef EDGESPLIT_ERROR_HPP_
#define EDGESPLIT_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace edgesplit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes, indices or settings that do not fit together.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Input that is mathematically degenerate for the requested operation
/// (zero vectors, empty sequences, single classes).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Graph too small or a node without neighbours.
class DegenerateGraphError : public Error {
 public:
  using Error::Error;
};

/// Graph with zero spectral gap where a connected graph is required.
class DisconnectedGraphError : public Error {
 public:
  using Error::Error;
};

/// Model state that cannot support the query (e.g. all-zero mixture weights).
class InvalidStateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite gradients or losses during optimisation.
class TrainingDivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace edgesplit

#endif  // EDGESPLIT_ERROR_HPP_
