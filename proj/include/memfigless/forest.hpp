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

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memfigless/profiler.hpp"
#include "memfigless/rng.hpp"

namespace memfigless::forest {

/// Output slots of every model: billed duration in ms, memory used in MB,
/// and success as a rate in [0, 1].
inline constexpr int kNumOutputs = 3;
inline constexpr int kOutputDuration = 0;
inline constexpr int kOutputMemory = 1;
inline constexpr int kOutputSuccess = 2;
inline constexpr const char* kOutputNames[kNumOutputs] = {
    "billed_duration", "memory_used", "success"};

using Prediction = std::array<double, kNumOutputs>;

/// Row-major training matrix. Feature order is [memory_mb, payload...];
/// target order matches the output slots above.
struct TrainingSet {
  std::size_t n_features = 0;
  std::vector<double> features;  // size() * n_features
  std::vector<double> targets;   // size() * kNumOutputs

  std::size_t size() const {
    return n_features == 0 ? 0 : features.size() / n_features;
  }
  const double* row(std::size_t i) const {
    return features.data() + i * n_features;
  }
  const double* target(std::size_t i) const {
    return targets.data() + i * kNumOutputs;
  }
  void add(std::span<const double> x, std::span<const double> y);

  /// Failed invocations are kept: they carry success = 0 and teach the
  /// model where the failure region is.
  static TrainingSet from_dataset(const profiler::Dataset& dataset);
};

/// Tree and forest knobs. -1 means unlimited depth / all features.
struct Hyperparams {
  int n_estimators = 100;
  int max_depth = -1;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  int max_features = -1;
  bool bootstrap = true;
};

bool operator==(const Hyperparams& a, const Hyperparams& b);

/// One tree node. Internal nodes carry a split (feature, threshold) with
/// x[feature] <= threshold routed left; leaves have feature == -1. Children
/// are indices into the owning tree's node array.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int count = 0;
};

/// Binary regression tree stored preorder, node 0 the root. `means` holds
/// the per-output mean target of every node (internal ones included; they
/// are the per-step values of the contribution decomposition).
struct RegressionTree {
  std::vector<TreeNode> nodes;
  std::vector<double> means;  // nodes.size() * kNumOutputs

  const double* node_mean(int node) const {
    return means.data() + static_cast<std::size_t>(node) * kNumOutputs;
  }
};

struct Forest {
  std::size_t n_features = 0;
  Hyperparams params;
  std::uint64_t seed = 0;
  std::vector<RegressionTree> trees;
};

/// Greedy top-down CART on all rows of `train`. At each node the split
/// minimizes the summed child squared error over outputs, each output
/// scaled by its variance over the tree's own training rows so no output
/// dominates on unit size alone. Thresholds are midpoints of consecutive
/// distinct sorted values; equal-quality splits resolve to the lowest
/// feature index, then the lowest threshold. `rng` is consumed only when
/// max_features restricts the per-node feature sample.
RegressionTree fit_tree(const TrainingSet& train, const Hyperparams& params,
                        Rng& rng);

/// Trains params.n_estimators trees. Tree s draws all of its randomness
/// (bootstrap rows first, then per-node feature samples) from the substream
/// keyed by (seed, s), so results are identical for any n_threads.
Forest fit_forest(const TrainingSet& train, const Hyperparams& params,
                  std::uint64_t seed, int n_threads = 1);

/// Leaf value reached by routing x through one tree.
Prediction predict_tree(const RegressionTree& tree, std::span<const double> x);

/// Arithmetic mean of per-tree predictions, summed in tree order.
Prediction predict(const Forest& forest, std::span<const double> x);

/// Decomposition of a prediction into a bias (mean of root means) plus one
/// additive term per feature. bias + sum(per_feature) reproduces the
/// prediction to within floating-point accumulation error.
struct Contributions {
  Prediction bias{};
  std::vector<Prediction> per_feature;
  Prediction prediction{};
};

Contributions predict_with_contributions(const Forest& forest,
                                         std::span<const double> x);

/// Fit quality for one output. r2 is empty when the actuals have zero
/// variance; r2_value() then raises DegenerateVariance. MAE is always set.
struct OutputScore {
  std::optional<double> r2;
  double mae = 0.0;

  double r2_value() const {
    if (!r2) throw DegenerateVariance("R^2 undefined: actuals have zero variance");
    return *r2;
  }
};

std::array<OutputScore, kNumOutputs> score(
    const std::vector<Prediction>& predictions,
    const std::vector<Prediction>& actuals);

/// Candidate lists for grid_search, one per hyperparameter. The leaf
/// candidates span two regimes: small leaves track fine payload structure,
/// large leaves average measurement noise within a payload cell.
struct HyperGrid {
  std::vector<int> n_estimators{50, 100, 200};
  std::vector<int> max_depth{8, 16, -1};
  std::vector<int> min_samples_split{2, 8};
  std::vector<int> min_samples_leaf{4, 34};
};

HyperGrid grid_from_json(const nlohmann::json& j);
HyperGrid read_grid(const std::string& path);

struct TrainReport {
  Hyperparams chosen;
  /// Winner's validation score per fold: mean over outputs of MAE divided
  /// by the output's standard deviation over the full training set.
  std::vector<double> fold_scores;
  /// Cross-validated quality: each row scored by the fold model that did
  /// not train on it, pooled across folds.
  std::array<OutputScore, kNumOutputs> outputs{};
};

std::string format_report(const TrainReport& report);

struct GridSearchResult {
  Hyperparams best;
  TrainReport report;
  Forest forest;  // refit on the full data with the winning hyperparams
};

/// Exhaustive search over the grid with k-fold cross validation. The fold
/// assignment is a seeded shuffle shared by every grid point; per-fold
/// training seeds are likewise shared, so equal grid points score equal and
/// ties resolve toward fewer trees, then shallower depth, then smaller
/// min_samples_split and min_samples_leaf.
GridSearchResult grid_search(const TrainingSet& train, const HyperGrid& grid,
                             int k_folds, std::uint64_t seed);

/// A trained model plus everything the online path needs to use it: which
/// payload region was profiled, the anchor payload for below-range inputs,
/// and training-set means that seed default constraints.
struct ModelArtifact {
  std::string function;
  int payload_dims = 1;
  std::vector<double> payload_min;
  std::vector<double> payload_max;
  domain::PayloadVector smallest_payload;
  double train_mean_billed_ms = 0.0;
  double train_mean_cost_usd = 0.0;
  std::uint64_t dataset_provenance = 0;
  TrainReport report;
  Forest forest;
};

ModelArtifact make_artifact(const profiler::Dataset& dataset,
                            GridSearchResult result);

/// Model files use a versioned little-endian binary layout (documented at
/// the writer); doubles are stored as raw IEEE-754 bits, so a saved and
/// reloaded forest predicts bit-identically.
void save_model(const ModelArtifact& artifact, const std::string& path);
ModelArtifact load_model(const std::string& path);

}  // namespace memfigless::forest
