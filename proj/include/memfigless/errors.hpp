/*
 * Copyright (c) The MemFigLess Authors.
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

#pragma once

#include <stdexcept>
#include <string>

namespace memfigless {

// Base class for every error raised by the toolkit. Each subclass names the
// condition it reports; messages carry the offending value or path.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A record or configuration object violates a structural invariant. The
// message names the first violated field.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// An operation that needs at least one (successful) record received none.
class EmptyDataset : public Error {
 public:
  using Error::Error;
};

// A payload vector's dimensionality does not match the function model.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// A memory size lies outside the configurable platform range.
class MemoryOutOfRange : public Error {
 public:
  using Error::Error;
};

// The requested function name is not hosted by the backend.
class UnknownFunction : public Error {
 public:
  using Error::Error;
};

// A profiling plan expands to zero cells, or a tuning grid has no points.
class EmptyGrid : public Error {
 public:
  using Error::Error;
};

// A training set with zero rows was passed to a fit operation.
class EmptySamples : public Error {
 public:
  using Error::Error;
};

// Fewer samples than cross-validation folds (or another lower bound).
class TooFewSamples : public Error {
 public:
  using Error::Error;
};

// R^2 was requested against actuals whose variance is zero.
class DegenerateVariance : public Error {
 public:
  using Error::Error;
};

// A persisted model declares an unsupported format version.
class VersionMismatch : public Error {
 public:
  using Error::Error;
};

// A persisted model fails to parse or is structurally inconsistent.
class CorruptModel : public Error {
 public:
  using Error::Error;
};

// A command needs a trained model that was not provided or does not exist.
class ModelMissing : public Error {
 public:
  using Error::Error;
};

}  // namespace memfigless
