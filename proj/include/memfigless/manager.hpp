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

#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "memfigless/forest.hpp"
#include "memfigless/optimizer.hpp"
#include "memfigless/sim.hpp"

namespace memfigless::manager {

/// Append-only invocation log with a recency query. Appends and reads are
/// individually locked; timestamps arrive monotone because the backend
/// serializes invocations.
class MetricsStore {
 public:
  void append(domain::InvocationRecord record);
  std::size_t size() const;
  /// The last `window` records in append order (all of them if fewer).
  std::vector<domain::InvocationRecord> last(std::size_t window) const;
  std::vector<domain::InvocationRecord> snapshot() const;

 private:
  mutable std::mutex mu_;
  std::vector<domain::InvocationRecord> records_;
};

struct ManagerConfig {
  /// Appended records between retraining checks.
  int monitoring_window = 200;
  /// Most-recent records fed to each retraining pass.
  int retrain_window = 1000;
  domain::MemoryMb fallback_memory{domain::kMaxMemoryMb};
  double success_threshold = 0.5;
  domain::SLOConstraints constraints;
  /// Candidate grid for the per-request optimization.
  int mem_min_mb = domain::kMinMemoryMb;
  int mem_max_mb = domain::kMaxMemoryMb;
  int mem_step_mb = 1;
  std::uint64_t retrain_seed = 0;
  bool retrain_enabled = true;
  /// When set, retraining repeats the hyperparameter search instead of
  /// reusing the tuned values.
  bool retune_on_retrain = false;
};

void validate_config(const ManagerConfig& config);

struct ExecutionResult {
  domain::InvocationRecord record;
  optimizer::SelectionResult selection;
  int selected_memory_mb = 0;
  /// True when the payload fell outside the profiled range or no candidate
  /// was feasible.
  bool fallback = false;
  bool payload_above_range = false;
  bool payload_below_range = false;
  /// A warm instance existed at the selected memory before this call.
  bool warm_available = false;
  /// This invocation's append crossed the monitoring window and triggered
  /// retraining.
  bool retrained = false;
};

/// Per-function online loop: predict, optimize, invoke, log, periodically
/// refit the model on a sliding window of its own observations.
class Manager {
 public:
  Manager(sim::SimBackend& backend, forest::ModelArtifact artifact,
          ManagerConfig config);

  ExecutionResult handle_invocation(const domain::PayloadVector& payload);

  bool above_profiled_range(const domain::PayloadVector& payload) const;
  bool below_profiled_range(const domain::PayloadVector& payload) const;

  /// Memory for an out-of-range payload: above the profiled region in any
  /// dimension falls back to fallback_memory; below it reuses the
  /// selection for the smallest profiled payload. In-range payloads do not
  /// reach this path.
  int fallback_config(const domain::PayloadVector& payload);

  const MetricsStore& metrics() const { return metrics_; }
  const forest::ModelArtifact& artifact() const { return artifact_; }
  const ManagerConfig& config() const { return config_; }
  std::shared_ptr<const forest::Forest> current_forest() const;
  std::uint64_t retrain_count() const { return retrain_count_; }
  std::uint64_t retrain_failures() const { return retrain_failures_; }

 private:
  optimizer::SelectionResult select_for(const domain::PayloadVector& payload);
  void maybe_retrain();

  sim::SimBackend& backend_;
  forest::ModelArtifact artifact_;  // forest inside is the initial model
  ManagerConfig config_;
  MetricsStore metrics_;
  mutable std::mutex forest_mu_;
  std::shared_ptr<const forest::Forest> forest_;
  int appended_since_check_ = 0;
  std::uint64_t retrain_count_ = 0;
  std::uint64_t retrain_failures_ = 0;
};

}  // namespace memfigless::manager
