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

#include "memfigless/forest.hpp"

#include <algorithm>
#include <bit>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <sstream>
#include <thread>

#include "memfigless/io.hpp"

namespace memfigless::forest {

void TrainingSet::add(std::span<const double> x, std::span<const double> y) {
  if (n_features == 0) n_features = x.size();
  if (x.size() != n_features) {
    throw DimensionMismatch("training row has " + std::to_string(x.size()) +
                            " features, expected " +
                            std::to_string(n_features));
  }
  if (y.size() != kNumOutputs) {
    throw DimensionMismatch("training row has " + std::to_string(y.size()) +
                            " targets, expected " +
                            std::to_string(kNumOutputs));
  }
  features.insert(features.end(), x.begin(), x.end());
  targets.insert(targets.end(), y.begin(), y.end());
}

TrainingSet TrainingSet::from_dataset(const profiler::Dataset& dataset) {
  if (dataset.records.empty()) {
    throw EmptySamples("dataset has no records to train on");
  }
  TrainingSet train;
  train.n_features = 1 + dataset.records.front().payload.values.size();
  for (const domain::InvocationRecord& record : dataset.records) {
    std::vector<double> x;
    x.reserve(train.n_features);
    x.push_back(static_cast<double>(record.memory_size.value));
    x.insert(x.end(), record.payload.values.begin(),
             record.payload.values.end());
    const double y[kNumOutputs] = {
        static_cast<double>(record.billed_duration_ms), record.memory_used_mb,
        record.success() ? 1.0 : 0.0};
    train.add(x, y);
  }
  return train;
}

bool operator==(const Hyperparams& a, const Hyperparams& b) {
  return a.n_estimators == b.n_estimators && a.max_depth == b.max_depth &&
         a.min_samples_split == b.min_samples_split &&
         a.min_samples_leaf == b.min_samples_leaf &&
         a.max_features == b.max_features && a.bootstrap == b.bootstrap;
}

namespace {

void validate_params(const Hyperparams& p) {
  if (p.n_estimators < 1) throw SchemaError("n_estimators must be >= 1");
  if (p.max_depth < -1) throw SchemaError("max_depth must be -1 or >= 0");
  if (p.min_samples_split < 2) {
    throw SchemaError("min_samples_split must be >= 2");
  }
  if (p.min_samples_leaf < 1) throw SchemaError("min_samples_leaf must be >= 1");
  if (p.max_features < -1 || p.max_features == 0) {
    throw SchemaError("max_features must be -1 or >= 1");
  }
}

// Grows one tree over a fixed multiset of training rows.
//
// All row-order sensitivity is removed up front: the rows are materialized
// in a canonical order (sorted by the full feature-then-target tuple), and
// every per-feature traversal order is derived from that by a stable sort
// on the feature value. Sums are therefore accumulated in the same order
// no matter how the caller's rows were arranged, which makes fitting
// invariant under permutation of the input and bitwise reproducible.
class TreeBuilder {
 public:
  TreeBuilder(const TrainingSet& train, std::span<const int> rows,
              const Hyperparams& params, Rng& rng)
      : params_(params),
        rng_(rng),
        kf_(static_cast<int>(train.n_features)),
        m_(static_cast<int>(rows.size())) {
    const int m = m_;
    // Canonical order: sort row slots by (features, targets) tuples.
    std::vector<int> canon(rows.begin(), rows.end());
    std::sort(canon.begin(), canon.end(), [&](int a, int b) {
      const double* xa = train.row(a);
      const double* xb = train.row(b);
      for (int f = 0; f < kf_; ++f) {
        if (xa[f] != xb[f]) return xa[f] < xb[f];
      }
      const double* ya = train.target(a);
      const double* yb = train.target(b);
      for (int o = 0; o < kNumOutputs; ++o) {
        if (ya[o] != yb[o]) return ya[o] < yb[o];
      }
      return false;
    });
    x_.resize(static_cast<std::size_t>(kf_) * m);
    y_.resize(static_cast<std::size_t>(kNumOutputs) * m);
    for (int i = 0; i < m; ++i) {
      const double* xr = train.row(canon[i]);
      const double* yr = train.target(canon[i]);
      for (int f = 0; f < kf_; ++f) x_[static_cast<std::size_t>(f) * m + i] = xr[f];
      for (int o = 0; o < kNumOutputs; ++o) {
        y_[static_cast<std::size_t>(o) * m + i] = yr[o];
      }
    }
    // order_[0] walks slots canonically; order_[1+f] walks them by feature
    // f ascending with canonical order breaking ties (stable sort).
    order_.resize(static_cast<std::size_t>(kf_ + 1) * m);
    for (int i = 0; i < m; ++i) order_[i] = i;
    for (int f = 0; f < kf_; ++f) {
      int* ord = &order_[static_cast<std::size_t>(1 + f) * m];
      for (int i = 0; i < m; ++i) ord[i] = i;
      const double* xf = &x_[static_cast<std::size_t>(f) * m];
      std::stable_sort(ord, ord + m,
                       [xf](int a, int b) { return xf[a] < xf[b]; });
    }
    // Impurity weights: inverse variance of each output over these rows, so
    // outputs compete on explained fraction rather than raw magnitude.
    for (int o = 0; o < kNumOutputs; ++o) {
      const double* yo = &y_[static_cast<std::size_t>(o) * m];
      double sum = 0.0;
      for (int i = 0; i < m; ++i) sum += yo[i];
      const double mean = sum / m;
      double ss = 0.0;
      for (int i = 0; i < m; ++i) {
        const double z = yo[i] - mean;
        ss += z * z;
      }
      const double var = ss / m;
      weight_[o] = var > 0.0 ? 1.0 / var : 0.0;
    }
    scratch_.reserve(m);
    all_features_.resize(kf_);
    std::iota(all_features_.begin(), all_features_.end(), 0);
    feature_buf_ = all_features_;
  }

  RegressionTree build() {
    build_node(0, m_, 0);
    RegressionTree tree;
    tree.nodes = std::move(nodes_);
    tree.means = std::move(means_);
    return tree;
  }

 private:
  struct NodeStats {
    double mean[kNumOutputs];
    double zsum[kNumOutputs];   // residual sums (≈0, kept for exactness)
    double zsq[kNumOutputs];    // residual squared sums
    double weighted_sse;
  };

  NodeStats segment_stats(int lo, int hi) const {
    NodeStats s{};
    const int count = hi - lo;
    const int* ord = order_.data();
    for (int o = 0; o < kNumOutputs; ++o) {
      const double* yo = &y_[static_cast<std::size_t>(o) * m_];
      double sum = 0.0;
      for (int i = lo; i < hi; ++i) sum += yo[ord[i]];
      s.mean[o] = sum / count;
      double zs = 0.0;
      double zq = 0.0;
      for (int i = lo; i < hi; ++i) {
        const double z = yo[ord[i]] - s.mean[o];
        zs += z;
        zq += z * z;
      }
      s.zsum[o] = zs;
      s.zsq[o] = zq;
    }
    s.weighted_sse = 0.0;
    for (int o = 0; o < kNumOutputs; ++o) {
      s.weighted_sse +=
          weight_[o] * (s.zsq[o] - s.zsum[o] * s.zsum[o] / count);
    }
    return s;
  }

  int alloc_node(const NodeStats& stats, int count) {
    const int id = static_cast<int>(nodes_.size());
    TreeNode node;
    node.count = count;
    nodes_.push_back(node);
    for (int o = 0; o < kNumOutputs; ++o) means_.push_back(stats.mean[o]);
    return id;
  }

  int build_node(int lo, int hi, int depth) {
    const int count = hi - lo;
    const NodeStats stats = segment_stats(lo, hi);
    const int id = alloc_node(stats, count);
    const bool depth_ok = params_.max_depth < 0 || depth < params_.max_depth;
    if (!depth_ok || count < params_.min_samples_split ||
        count < 2 * params_.min_samples_leaf || stats.weighted_sse <= 0.0) {
      return id;
    }

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_cost = 0.0;
    bool found = false;
    for (int f : sampled_features()) {
      scan_feature(f, lo, hi, stats, found, best_feature, best_threshold,
                   best_cost);
    }
    if (!found) return id;

    const int nl = partition(lo, hi, best_feature, best_threshold);
    nodes_[id].feature = best_feature;
    nodes_[id].threshold = best_threshold;
    const int left = build_node(lo, lo + nl, depth + 1);
    const int right = build_node(lo + nl, hi, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  std::span<const int> sampled_features() {
    int mf = params_.max_features;
    if (mf < 0 || mf >= kf_) return all_features_;
    // Partial Fisher-Yates, then ascending so the lowest-index tie rule
    // applies within the sample.
    for (int i = 0; i < mf; ++i) {
      const int j =
          i + static_cast<int>(rng_.bounded(static_cast<std::uint64_t>(kf_ - i)));
      std::swap(feature_buf_[i], feature_buf_[j]);
    }
    std::sort(feature_buf_.begin(), feature_buf_.begin() + mf);
    return std::span<const int>(feature_buf_.data(), static_cast<std::size_t>(mf));
  }

  void scan_feature(int f, int lo, int hi, const NodeStats& stats, bool& found,
                    int& best_feature, double& best_threshold,
                    double& best_cost) {
    const int count = hi - lo;
    const int msl = params_.min_samples_leaf;
    const double* xf = &x_[static_cast<std::size_t>(f) * m_];
    const double* y0 = &y_[0 * static_cast<std::size_t>(m_)];
    const double* y1 = &y_[1 * static_cast<std::size_t>(m_)];
    const double* y2 = &y_[2 * static_cast<std::size_t>(m_)];
    const int* ord = &order_[static_cast<std::size_t>(1 + f) * m_];
    const double mu0 = stats.mean[0];
    const double mu1 = stats.mean[1];
    const double mu2 = stats.mean[2];
    const double w0 = weight_[0];
    const double w1 = weight_[1];
    const double w2 = weight_[2];
    double l1_0 = 0.0, l1_1 = 0.0, l1_2 = 0.0;
    double l2_0 = 0.0, l2_1 = 0.0, l2_2 = 0.0;
    double prev = 0.0;
    for (int j = lo; j < hi; ++j) {
      const int s = ord[j];
      const double xv = xf[s];
      const int nl = j - lo;
      if (nl > 0 && xv > prev && nl >= msl && count - nl >= msl) {
        double thr = prev + (xv - prev) * 0.5;
        if (thr >= xv) thr = prev;  // adjacent representable values
        const int nr = count - nl;
        const double r1_0 = stats.zsum[0] - l1_0;
        const double r1_1 = stats.zsum[1] - l1_1;
        const double r1_2 = stats.zsum[2] - l1_2;
        const double cost =
            w0 * ((l2_0 - l1_0 * l1_0 / nl) +
                  (stats.zsq[0] - l2_0 - r1_0 * r1_0 / nr)) +
            w1 * ((l2_1 - l1_1 * l1_1 / nl) +
                  (stats.zsq[1] - l2_1 - r1_1 * r1_1 / nr)) +
            w2 * ((l2_2 - l1_2 * l1_2 / nl) +
                  (stats.zsq[2] - l2_2 - r1_2 * r1_2 / nr));
        const bool better =
            !found || cost < best_cost ||
            (cost == best_cost &&
             (f < best_feature ||
              (f == best_feature && thr < best_threshold)));
        if (better) {
          found = true;
          best_cost = cost;
          best_feature = f;
          best_threshold = thr;
        }
      }
      const double z0 = y0[s] - mu0;
      const double z1 = y1[s] - mu1;
      const double z2 = y2[s] - mu2;
      l1_0 += z0;
      l2_0 += z0 * z0;
      l1_1 += z1;
      l2_1 += z1 * z1;
      l1_2 += z2;
      l2_2 += z2 * z2;
      prev = xv;
    }
  }

  // Stable two-way partition of every traversal order; returns the left
  // child's size.
  int partition(int lo, int hi, int feature, double threshold) {
    const double* xs = &x_[static_cast<std::size_t>(feature) * m_];
    int nl = 0;
    for (int a = 0; a <= kf_; ++a) {
      int* arr = &order_[static_cast<std::size_t>(a) * m_];
      scratch_.clear();
      int w = lo;
      for (int j = lo; j < hi; ++j) {
        const int s = arr[j];
        if (xs[s] <= threshold) {
          arr[w++] = s;
        } else {
          scratch_.push_back(s);
        }
      }
      nl = w - lo;
      std::copy(scratch_.begin(), scratch_.end(), arr + w);
    }
    return nl;
  }

  const Hyperparams& params_;
  Rng& rng_;
  const int kf_;
  const int m_;
  std::vector<double> x_;        // feature-major local copies
  std::vector<double> y_;        // output-major local copies
  std::vector<int> order_;       // (kf_+1) traversal orders over slots
  std::vector<int> scratch_;
  std::vector<int> all_features_;
  std::vector<int> feature_buf_;
  double weight_[kNumOutputs] = {0, 0, 0};
  std::vector<TreeNode> nodes_;
  std::vector<double> means_;
};

}  // namespace

RegressionTree fit_tree(const TrainingSet& train, const Hyperparams& params,
                        Rng& rng) {
  validate_params(params);
  const std::size_t n = train.size();
  if (n == 0) throw EmptySamples("fit_tree: no samples");
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  TreeBuilder builder(train, rows, params, rng);
  return builder.build();
}

namespace {

RegressionTree fit_one_tree(const TrainingSet& train, const Hyperparams& params,
                            std::uint64_t tree_seed) {
  Rng rng(tree_seed);
  const int n = static_cast<int>(train.size());
  std::vector<int> rows;
  rows.reserve(n);
  if (params.bootstrap) {
    // Bootstrap draws come before any per-node randomness so the row
    // multiset depends only on the tree's substream.
    for (int i = 0; i < n; ++i) {
      rows.push_back(
          static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n))));
    }
  } else {
    for (int i = 0; i < n; ++i) rows.push_back(i);
  }
  TreeBuilder builder(train, rows, params, rng);
  return builder.build();
}

}  // namespace

Forest fit_forest(const TrainingSet& train, const Hyperparams& params,
                  std::uint64_t seed, int n_threads) {
  validate_params(params);
  if (train.size() == 0) throw EmptySamples("fit_forest: no samples");
  Forest forest;
  forest.n_features = train.n_features;
  forest.params = params;
  forest.seed = seed;
  forest.trees.resize(static_cast<std::size_t>(params.n_estimators));
  const int s_count = params.n_estimators;
  auto fit_range = [&](int first, int stride) {
    for (int s = first; s < s_count; s += stride) {
      forest.trees[static_cast<std::size_t>(s)] = fit_one_tree(
          train, params, substream_seed(seed, static_cast<std::uint64_t>(s)));
    }
  };
  if (n_threads <= 1) {
    fit_range(0, 1);
  } else {
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(n_threads));
    for (int w = 0; w < n_threads; ++w) {
      workers.emplace_back(fit_range, w, n_threads);
    }
    for (std::thread& worker : workers) worker.join();
  }
  return forest;
}

Prediction predict_tree(const RegressionTree& tree, std::span<const double> x) {
  int node = 0;
  while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
    node = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left
                                                                   : nd.right;
  }
  const double* mean = tree.node_mean(node);
  return {mean[0], mean[1], mean[2]};
}

Prediction predict(const Forest& forest, std::span<const double> x) {
  if (x.size() != forest.n_features) {
    throw DimensionMismatch("predict: feature vector has " +
                            std::to_string(x.size()) + " entries, expected " +
                            std::to_string(forest.n_features));
  }
  Prediction acc{0.0, 0.0, 0.0};
  for (const RegressionTree& tree : forest.trees) {
    const Prediction leaf = predict_tree(tree, x);
    for (int o = 0; o < kNumOutputs; ++o) acc[o] += leaf[o];
  }
  const double s = static_cast<double>(forest.trees.size());
  for (int o = 0; o < kNumOutputs; ++o) acc[o] /= s;
  return acc;
}

Contributions predict_with_contributions(const Forest& forest,
                                         std::span<const double> x) {
  if (x.size() != forest.n_features) {
    throw DimensionMismatch("predict: feature vector has " +
                            std::to_string(x.size()) + " entries, expected " +
                            std::to_string(forest.n_features));
  }
  Contributions result;
  result.per_feature.assign(forest.n_features, Prediction{0.0, 0.0, 0.0});
  for (const RegressionTree& tree : forest.trees) {
    const double* root_mean = tree.node_mean(0);
    for (int o = 0; o < kNumOutputs; ++o) result.bias[o] += root_mean[o];
    int node = 0;
    while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
      const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
      const int child = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold
                            ? nd.left
                            : nd.right;
      const double* parent_mean = tree.node_mean(node);
      const double* child_mean = tree.node_mean(child);
      auto& slot = result.per_feature[static_cast<std::size_t>(nd.feature)];
      for (int o = 0; o < kNumOutputs; ++o) {
        slot[o] += child_mean[o] - parent_mean[o];
      }
      node = child;
    }
    const double* leaf_mean = tree.node_mean(node);
    for (int o = 0; o < kNumOutputs; ++o) result.prediction[o] += leaf_mean[o];
  }
  const double s = static_cast<double>(forest.trees.size());
  for (int o = 0; o < kNumOutputs; ++o) {
    result.bias[o] /= s;
    result.prediction[o] /= s;
  }
  for (auto& slot : result.per_feature) {
    for (int o = 0; o < kNumOutputs; ++o) slot[o] /= s;
  }
  return result;
}

std::array<OutputScore, kNumOutputs> score(
    const std::vector<Prediction>& predictions,
    const std::vector<Prediction>& actuals) {
  if (predictions.size() != actuals.size()) {
    throw DimensionMismatch("score: prediction and actual counts differ");
  }
  if (predictions.size() < 2) {
    throw TooFewSamples("score: need at least 2 samples");
  }
  const double n = static_cast<double>(actuals.size());
  std::array<OutputScore, kNumOutputs> result;
  for (int o = 0; o < kNumOutputs; ++o) {
    double abs_sum = 0.0;
    double mean = 0.0;
    for (const Prediction& y : actuals) mean += y[o];
    mean /= n;
    double ss_tot = 0.0;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < actuals.size(); ++i) {
      const double err = predictions[i][o] - actuals[i][o];
      abs_sum += std::abs(err);
      ss_res += err * err;
      const double dev = actuals[i][o] - mean;
      ss_tot += dev * dev;
    }
    result[o].mae = abs_sum / n;
    if (ss_tot > 0.0) {
      result[o].r2 = 1.0 - ss_res / ss_tot;
    }
  }
  return result;
}

HyperGrid grid_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("grid: expected an object");
  static constexpr const char* kKeys[] = {"n_estimators", "max_depth",
                                          "min_samples_split",
                                          "min_samples_leaf"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) {
          return key == k;
        }) == std::end(kKeys)) {
      throw SchemaError("grid: unknown field '" + key + "'");
    }
  }
  HyperGrid grid;
  try {
    if (j.contains("n_estimators")) {
      grid.n_estimators = j.at("n_estimators").get<std::vector<int>>();
    }
    if (j.contains("max_depth")) {
      grid.max_depth = j.at("max_depth").get<std::vector<int>>();
    }
    if (j.contains("min_samples_split")) {
      grid.min_samples_split =
          j.at("min_samples_split").get<std::vector<int>>();
    }
    if (j.contains("min_samples_leaf")) {
      grid.min_samples_leaf = j.at("min_samples_leaf").get<std::vector<int>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("grid: ") + e.what());
  }
  return grid;
}

HyperGrid read_grid(const std::string& path) {
  std::ifstream in = open_input(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("grid '" + path + "': " + e.what());
  }
  return grid_from_json(j);
}

namespace {

std::array<long long, 4> tie_key(const Hyperparams& p) {
  return {static_cast<long long>(p.n_estimators),
          p.max_depth < 0 ? LLONG_MAX : static_cast<long long>(p.max_depth),
          static_cast<long long>(p.min_samples_split),
          static_cast<long long>(p.min_samples_leaf)};
}

struct FoldSplit {
  std::vector<TrainingSet> train;        // per fold: all rows outside it
  std::vector<std::vector<int>> valid;   // per fold: row ids inside it
};

FoldSplit make_folds(const TrainingSet& train, int k, std::uint64_t seed) {
  const int n = static_cast<int>(train.size());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(substream_seed(seed, 0xF01D));
  for (int i = n - 1; i > 0; --i) {
    const int j =
        static_cast<int>(rng.bounded(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(j)]);
  }
  std::vector<int> fold_of(n);
  for (int f = 0; f < k; ++f) {
    const int begin = static_cast<int>(static_cast<long long>(f) * n / k);
    const int end = static_cast<int>(static_cast<long long>(f + 1) * n / k);
    for (int i = begin; i < end; ++i) {
      fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = f;
    }
  }
  FoldSplit split;
  split.train.resize(static_cast<std::size_t>(k));
  split.valid.resize(static_cast<std::size_t>(k));
  for (TrainingSet& sub : split.train) sub.n_features = train.n_features;
  for (int i = 0; i < n; ++i) {
    const std::span<const double> x(train.row(static_cast<std::size_t>(i)),
                                    train.n_features);
    const std::span<const double> y(train.target(static_cast<std::size_t>(i)),
                                    kNumOutputs);
    for (int f = 0; f < k; ++f) {
      if (fold_of[static_cast<std::size_t>(i)] == f) {
        split.valid[static_cast<std::size_t>(f)].push_back(i);
      } else {
        split.train[static_cast<std::size_t>(f)].add(x, y);
      }
    }
  }
  return split;
}

std::array<double, kNumOutputs> global_std_denoms(const TrainingSet& train) {
  const std::size_t n = train.size();
  std::array<double, kNumOutputs> denom;
  for (int o = 0; o < kNumOutputs; ++o) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += train.target(i)[o];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = train.target(i)[o] - mean;
      ss += z * z;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    denom[o] = sd > 0.0 ? sd : 1.0;
  }
  return denom;
}

}  // namespace

GridSearchResult grid_search(const TrainingSet& train, const HyperGrid& grid,
                             int k_folds, std::uint64_t seed) {
  if (grid.n_estimators.empty() || grid.max_depth.empty() ||
      grid.min_samples_split.empty() || grid.min_samples_leaf.empty()) {
    throw EmptyGrid("grid_search: every hyperparameter list must be non-empty");
  }
  if (k_folds < 2) throw TooFewSamples("grid_search: k_folds must be >= 2");
  const std::size_t n = train.size();
  if (n < static_cast<std::size_t>(k_folds)) {
    throw TooFewSamples("grid_search: " + std::to_string(n) +
                        " samples for " + std::to_string(k_folds) + " folds");
  }

  const FoldSplit folds = make_folds(train, k_folds, seed);
  const std::array<double, kNumOutputs> denom = global_std_denoms(train);
  std::vector<std::uint64_t> fold_seed(static_cast<std::size_t>(k_folds));
  for (int f = 0; f < k_folds; ++f) {
    fold_seed[static_cast<std::size_t>(f)] =
        substream_seed(seed, 1000 + static_cast<std::uint64_t>(f));
  }

  // Ascending tree-count checkpoints: a forest's tree s depends only on
  // (seed, s), so every requested n_estimators value is a prefix of one
  // fit with the largest value, evaluated via running prediction sums.
  std::vector<int> checkpoints = grid.n_estimators;
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()),
                    checkpoints.end());
  const int s_max = checkpoints.back();

  struct Scored {
    Hyperparams params;
    double score;
  };
  std::vector<Scored> scored;

  for (int depth : grid.max_depth) {
    for (int split : grid.min_samples_split) {
      for (int leaf : grid.min_samples_leaf) {
        Hyperparams params;
        params.n_estimators = s_max;
        params.max_depth = depth;
        params.min_samples_split = split;
        params.min_samples_leaf = leaf;
        std::vector<double> score_sum(checkpoints.size(), 0.0);
        for (int f = 0; f < k_folds; ++f) {
          const Forest forest =
              fit_forest(folds.train[static_cast<std::size_t>(f)], params,
                         fold_seed[static_cast<std::size_t>(f)]);
          const std::vector<int>& valid =
              folds.valid[static_cast<std::size_t>(f)];
          std::vector<Prediction> running(valid.size(),
                                          Prediction{0.0, 0.0, 0.0});
          std::size_t next = 0;
          for (int s = 0; s < s_max; ++s) {
            for (std::size_t v = 0; v < valid.size(); ++v) {
              const std::span<const double> x(
                  train.row(static_cast<std::size_t>(valid[v])),
                  train.n_features);
              const Prediction leaf_mean =
                  predict_tree(forest.trees[static_cast<std::size_t>(s)], x);
              for (int o = 0; o < kNumOutputs; ++o) {
                running[v][o] += leaf_mean[o];
              }
            }
            if (next < checkpoints.size() && s + 1 == checkpoints[next]) {
              double abs_sum[kNumOutputs] = {0.0, 0.0, 0.0};
              for (std::size_t v = 0; v < valid.size(); ++v) {
                const double* actual =
                    train.target(static_cast<std::size_t>(valid[v]));
                for (int o = 0; o < kNumOutputs; ++o) {
                  abs_sum[o] +=
                      std::abs(running[v][o] / (s + 1) - actual[o]);
                }
              }
              double fold_score = 0.0;
              for (int o = 0; o < kNumOutputs; ++o) {
                fold_score += (abs_sum[o] /
                               static_cast<double>(valid.size())) /
                              denom[o];
              }
              score_sum[next] += fold_score / kNumOutputs;
              ++next;
            }
          }
        }
        for (std::size_t c = 0; c < checkpoints.size(); ++c) {
          Hyperparams p = params;
          p.n_estimators = checkpoints[c];
          scored.push_back(Scored{p, score_sum[c] / k_folds});
        }
      }
    }
  }

  const Scored* best = &scored.front();
  for (const Scored& candidate : scored) {
    if (candidate.score < best->score ||
        (candidate.score == best->score &&
         tie_key(candidate.params) < tie_key(best->params))) {
      best = &candidate;
    }
  }
  const Hyperparams winner = best->params;

  // Winner's per-fold scores and pooled out-of-fold predictions.
  TrainReport report;
  report.chosen = winner;
  std::vector<Prediction> pooled(n, Prediction{0.0, 0.0, 0.0});
  for (int f = 0; f < k_folds; ++f) {
    const Forest forest =
        fit_forest(folds.train[static_cast<std::size_t>(f)], winner,
                   fold_seed[static_cast<std::size_t>(f)]);
    double abs_sum[kNumOutputs] = {0.0, 0.0, 0.0};
    const std::vector<int>& valid = folds.valid[static_cast<std::size_t>(f)];
    for (int v : valid) {
      const std::span<const double> x(train.row(static_cast<std::size_t>(v)),
                                      train.n_features);
      const Prediction pred = predict(forest, x);
      pooled[static_cast<std::size_t>(v)] = pred;
      const double* actual = train.target(static_cast<std::size_t>(v));
      for (int o = 0; o < kNumOutputs; ++o) {
        abs_sum[o] += std::abs(pred[o] - actual[o]);
      }
    }
    double fold_score = 0.0;
    for (int o = 0; o < kNumOutputs; ++o) {
      fold_score += (abs_sum[o] / static_cast<double>(valid.size())) / denom[o];
    }
    report.fold_scores.push_back(fold_score / kNumOutputs);
  }
  std::vector<Prediction> actuals(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int o = 0; o < kNumOutputs; ++o) actuals[i][o] = train.target(i)[o];
  }
  report.outputs = score(pooled, actuals);

  GridSearchResult result;
  result.best = winner;
  result.report = report;
  result.forest = fit_forest(train, winner, substream_seed(seed, 2));
  return result;
}

std::string format_report(const TrainReport& report) {
  std::ostringstream out;
  char line[200];
  const Hyperparams& p = report.chosen;
  std::snprintf(line, sizeof(line),
                "chosen: n_estimators=%d max_depth=%s min_samples_split=%d "
                "min_samples_leaf=%d\n",
                p.n_estimators,
                p.max_depth < 0 ? "unlimited"
                                : std::to_string(p.max_depth).c_str(),
                p.min_samples_split, p.min_samples_leaf);
  out << line;
  out << "cv fold scores:";
  for (double s : report.fold_scores) {
    std::snprintf(line, sizeof(line), " %.4f", s);
    out << line;
  }
  out << '\n';
  for (int o = 0; o < kNumOutputs; ++o) {
    const OutputScore& os = report.outputs[static_cast<std::size_t>(o)];
    if (os.r2) {
      std::snprintf(line, sizeof(line), "%-15s R2=%.4f MAE=%.4g\n",
                    kOutputNames[o], *os.r2, os.mae);
    } else {
      std::snprintf(line, sizeof(line), "%-15s R2=n/a MAE=%.4g\n",
                    kOutputNames[o], os.mae);
    }
    out << line;
  }
  return out.str();
}

ModelArtifact make_artifact(const profiler::Dataset& dataset,
                            GridSearchResult result) {
  if (dataset.records.empty()) {
    throw EmptyDataset("dataset has no records");
  }
  ModelArtifact artifact;
  artifact.function = dataset.function;
  const std::size_t dims = dataset.records.front().payload.values.size();
  artifact.payload_dims = static_cast<int>(dims);
  artifact.payload_min.assign(dims, std::numeric_limits<double>::infinity());
  artifact.payload_max.assign(dims, -std::numeric_limits<double>::infinity());
  double best_sum = std::numeric_limits<double>::infinity();
  double billed_sum = 0.0;
  double cost_sum = 0.0;
  std::size_t successes = 0;
  for (const domain::InvocationRecord& record : dataset.records) {
    const std::vector<double>& p = record.payload.values;
    for (std::size_t d = 0; d < dims; ++d) {
      artifact.payload_min[d] = std::min(artifact.payload_min[d], p[d]);
      artifact.payload_max[d] = std::max(artifact.payload_max[d], p[d]);
    }
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    if (sum < best_sum ||
        (sum == best_sum &&
         p < artifact.smallest_payload.values)) {
      best_sum = sum;
      artifact.smallest_payload.values = p;
    }
    if (record.success()) {
      ++successes;
      billed_sum += static_cast<double>(record.billed_duration_ms);
      cost_sum += record.cost_usd;
    }
  }
  if (successes == 0) {
    throw EmptyDataset("dataset has no successful records");
  }
  artifact.train_mean_billed_ms = billed_sum / static_cast<double>(successes);
  artifact.train_mean_cost_usd = cost_sum / static_cast<double>(successes);
  artifact.dataset_provenance = dataset.provenance;
  artifact.report = std::move(result.report);
  artifact.forest = std::move(result.forest);
  return artifact;
}

// Model file layout (little-endian): magic "MEMFIGML", u32 version, then the
// artifact fields in declaration order. Strings are u32 length + bytes;
// arrays are u32 count + elements; doubles are IEEE-754 bit patterns, so a
// round-trip is exact. Per tree: u32 node count, nodes as (i32 feature,
// f64 threshold, i32 left, i32 right, i32 count), then 3 f64 means per node.
namespace {

constexpr char kMagic[8] = {'M', 'E', 'M', 'F', 'I', 'G', 'M', 'L'};
constexpr std::uint32_t kModelVersion = 1;

struct Writer {
  std::string buf;

  void u8(std::uint8_t v) { buf.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf.append(s);
  }
  void doubles(const std::vector<double>& v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (double d : v) f64(d);
  }
};

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) {
      throw CorruptModel("model file truncated");
    }
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++]))
           << (8 * i);
    }
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++]))
           << (8 * i);
    }
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  std::vector<double> doubles() {
    const std::uint32_t n = u32();
    need(static_cast<std::size_t>(n) * 8);
    std::vector<double> v(n);
    for (std::uint32_t i = 0; i < n; ++i) v[i] = f64();
    return v;
  }
};

void check_tree(const RegressionTree& tree, std::size_t n_features) {
  const int count = static_cast<int>(tree.nodes.size());
  if (count == 0) throw CorruptModel("model tree has no nodes");
  if (tree.means.size() != tree.nodes.size() * kNumOutputs) {
    throw CorruptModel("model tree mean table size mismatch");
  }
  for (const TreeNode& node : tree.nodes) {
    if (node.feature < -1 ||
        node.feature >= static_cast<int>(n_features)) {
      throw CorruptModel("model tree split feature out of range");
    }
    if (node.feature >= 0) {
      if (node.left < 0 || node.left >= count || node.right < 0 ||
          node.right >= count) {
        throw CorruptModel("model tree child index out of range");
      }
    }
  }
}

}  // namespace

void save_model(const ModelArtifact& artifact, const std::string& path) {
  Writer w;
  w.buf.append(kMagic, sizeof(kMagic));
  w.u32(kModelVersion);
  w.str(artifact.function);
  w.u32(static_cast<std::uint32_t>(artifact.payload_dims));
  w.doubles(artifact.payload_min);
  w.doubles(artifact.payload_max);
  w.doubles(artifact.smallest_payload.values);
  w.f64(artifact.train_mean_billed_ms);
  w.f64(artifact.train_mean_cost_usd);
  w.u64(artifact.dataset_provenance);
  const Hyperparams& p = artifact.forest.params;
  w.i32(p.n_estimators);
  w.i32(p.max_depth);
  w.i32(p.min_samples_split);
  w.i32(p.min_samples_leaf);
  w.i32(p.max_features);
  w.u8(p.bootstrap ? 1 : 0);
  w.doubles(artifact.report.fold_scores);
  for (int o = 0; o < kNumOutputs; ++o) {
    const OutputScore& os = artifact.report.outputs[static_cast<std::size_t>(o)];
    w.u8(os.r2 ? 1 : 0);
    w.f64(os.r2 ? *os.r2 : 0.0);
    w.f64(os.mae);
  }
  w.u64(artifact.forest.seed);
  w.u32(static_cast<std::uint32_t>(artifact.forest.n_features));
  w.u32(static_cast<std::uint32_t>(artifact.forest.trees.size()));
  for (const RegressionTree& tree : artifact.forest.trees) {
    w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const TreeNode& node : tree.nodes) {
      w.i32(node.feature);
      w.f64(node.threshold);
      w.i32(node.left);
      w.i32(node.right);
      w.i32(node.count);
    }
    for (double mean : tree.means) w.f64(mean);
  }
  std::ofstream out = open_output(path);
  out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

ModelArtifact load_model(const std::string& path) {
  std::ifstream in = open_input(path);
  std::ostringstream slurp;
  slurp << in.rdbuf();
  const std::string buf = slurp.str();
  Reader r{buf};
  r.need(sizeof(kMagic));
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CorruptModel("'" + path + "' is not a model file");
  }
  r.pos = sizeof(kMagic);
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) {
    throw VersionMismatch("model '" + path + "' has version " +
                          std::to_string(version) + ", expected " +
                          std::to_string(kModelVersion));
  }
  ModelArtifact artifact;
  artifact.function = r.str();
  artifact.payload_dims = static_cast<int>(r.u32());
  artifact.payload_min = r.doubles();
  artifact.payload_max = r.doubles();
  artifact.smallest_payload.values = r.doubles();
  artifact.train_mean_billed_ms = r.f64();
  artifact.train_mean_cost_usd = r.f64();
  artifact.dataset_provenance = r.u64();
  Hyperparams params;
  params.n_estimators = r.i32();
  params.max_depth = r.i32();
  params.min_samples_split = r.i32();
  params.min_samples_leaf = r.i32();
  params.max_features = r.i32();
  params.bootstrap = r.u8() != 0;
  artifact.report.chosen = params;
  artifact.report.fold_scores = r.doubles();
  for (int o = 0; o < kNumOutputs; ++o) {
    OutputScore& os = artifact.report.outputs[static_cast<std::size_t>(o)];
    const bool has_r2 = r.u8() != 0;
    const double r2 = r.f64();
    if (has_r2) os.r2 = r2;
    os.mae = r.f64();
  }
  artifact.forest.params = params;
  artifact.forest.seed = r.u64();
  artifact.forest.n_features = r.u32();
  const std::uint32_t n_trees = r.u32();
  // A node costs 24 bytes plus its means; reject counts the file cannot hold.
  artifact.forest.trees.reserve(n_trees);
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    const std::uint32_t n_nodes = r.u32();
    r.need(static_cast<std::size_t>(n_nodes) * 24);
    RegressionTree tree;
    tree.nodes.resize(n_nodes);
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
      TreeNode& node = tree.nodes[i];
      node.feature = r.i32();
      node.threshold = r.f64();
      node.left = r.i32();
      node.right = r.i32();
      node.count = r.i32();
    }
    r.need(static_cast<std::size_t>(n_nodes) * kNumOutputs * 8);
    tree.means.resize(static_cast<std::size_t>(n_nodes) * kNumOutputs);
    for (double& mean : tree.means) mean = r.f64();
    check_tree(tree, artifact.forest.n_features);
    artifact.forest.trees.push_back(std::move(tree));
  }
  if (r.pos != buf.size()) {
    throw CorruptModel("model '" + path + "' has trailing bytes");
  }
  if (artifact.forest.trees.size() !=
      static_cast<std::size_t>(params.n_estimators)) {
    throw CorruptModel("model '" + path + "' tree count disagrees with params");
  }
  return artifact;
}

}  // namespace memfigless::forest
