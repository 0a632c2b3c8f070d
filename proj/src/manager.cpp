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

#include "memfigless/manager.hpp"

#include <algorithm>
#include <utility>

namespace memfigless::manager {

void MetricsStore::append(domain::InvocationRecord record) {
  std::lock_guard<std::mutex> lock(mu_);
  records_.push_back(std::move(record));
}

std::size_t MetricsStore::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return records_.size();
}

std::vector<domain::InvocationRecord> MetricsStore::last(
    std::size_t window) const {
  std::lock_guard<std::mutex> lock(mu_);
  const std::size_t take = std::min(window, records_.size());
  return std::vector<domain::InvocationRecord>(records_.end() - take,
                                               records_.end());
}

std::vector<domain::InvocationRecord> MetricsStore::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return records_;
}

void validate_config(const ManagerConfig& config) {
  if (config.monitoring_window < 1) {
    throw SchemaError("monitoring_window: must be >= 1");
  }
  if (config.retrain_window < 1) {
    throw SchemaError("retrain_window: must be >= 1");
  }
  domain::make_memory(config.fallback_memory.value);
  if (!(config.success_threshold >= 0.0 && config.success_threshold <= 1.0)) {
    throw SchemaError("success_threshold: must lie in [0, 1]");
  }
  domain::validate_constraints(config.constraints);
  if (config.mem_step_mb < 1) throw SchemaError("mem_step_mb: must be >= 1");
  if (config.mem_min_mb > config.mem_max_mb) {
    throw SchemaError("memory range: min exceeds max");
  }
}

Manager::Manager(sim::SimBackend& backend, forest::ModelArtifact artifact,
                 ManagerConfig config)
    : backend_(backend),
      artifact_(std::move(artifact)),
      config_(std::move(config)) {
  validate_config(config_);
  if (artifact_.forest.trees.empty()) {
    throw ModelMissing("manager: model for '" + artifact_.function +
                       "' has no trees");
  }
  forest_ = std::make_shared<const forest::Forest>(artifact_.forest);
}

std::shared_ptr<const forest::Forest> Manager::current_forest() const {
  std::lock_guard<std::mutex> lock(forest_mu_);
  return forest_;
}

bool Manager::above_profiled_range(
    const domain::PayloadVector& payload) const {
  for (std::size_t d = 0; d < payload.values.size(); ++d) {
    if (payload.values[d] > artifact_.payload_max[d]) return true;
  }
  return false;
}

bool Manager::below_profiled_range(
    const domain::PayloadVector& payload) const {
  for (std::size_t d = 0; d < payload.values.size(); ++d) {
    if (payload.values[d] < artifact_.payload_min[d]) return true;
  }
  return false;
}

optimizer::SelectionResult Manager::select_for(
    const domain::PayloadVector& payload) {
  const std::shared_ptr<const forest::Forest> model = current_forest();
  const std::vector<optimizer::Candidate> candidates =
      optimizer::enumerate_candidates(*model, payload, config_.mem_min_mb,
                                      config_.mem_max_mb, config_.mem_step_mb,
                                      backend_.cost_model());
  return optimizer::select_configuration(
      candidates, config_.constraints, config_.constraints.weights,
      config_.success_threshold);
}

int Manager::fallback_config(const domain::PayloadVector& payload) {
  if (above_profiled_range(payload)) return config_.fallback_memory.value;
  // Below the profiled region: a configuration good for a larger payload is
  // good for a smaller one, so reuse the smallest profiled payload's choice.
  const optimizer::SelectionResult anchor =
      select_for(artifact_.smallest_payload);
  if (anchor.chosen) return anchor.chosen->memory_mb;
  return config_.fallback_memory.value;
}

ExecutionResult Manager::handle_invocation(
    const domain::PayloadVector& payload) {
  if (payload.values.size() != static_cast<std::size_t>(artifact_.payload_dims)) {
    throw DimensionMismatch("manager: payload has " +
                            std::to_string(payload.values.size()) +
                            " dimensions, model expects " +
                            std::to_string(artifact_.payload_dims));
  }
  ExecutionResult result;
  result.payload_above_range = above_profiled_range(payload);
  result.payload_below_range =
      !result.payload_above_range && below_profiled_range(payload);
  if (result.payload_above_range || result.payload_below_range) {
    result.fallback = true;
    result.selected_memory_mb = fallback_config(payload);
  } else {
    result.selection = select_for(payload);
    if (result.selection.chosen) {
      result.selected_memory_mb = result.selection.chosen->memory_mb;
    } else {
      result.fallback = true;
      result.selected_memory_mb = config_.fallback_memory.value;
    }
  }
  result.warm_available =
      backend_.warm_count(artifact_.function, result.selected_memory_mb) > 0;
  result.record = backend_.invoke(artifact_.function, payload,
                                  domain::make_memory(result.selected_memory_mb));
  metrics_.append(result.record);
  ++appended_since_check_;
  if (config_.retrain_enabled &&
      appended_since_check_ >= config_.monitoring_window) {
    appended_since_check_ = 0;
    result.retrained = true;
    maybe_retrain();
  }
  return result;
}

void Manager::maybe_retrain() {
  ++retrain_count_;
  const std::uint64_t seed =
      substream_seed(config_.retrain_seed, retrain_count_);
  try {
    profiler::Dataset window;
    window.function = artifact_.function;
    window.provenance = artifact_.dataset_provenance;
    window.records =
        metrics_.last(static_cast<std::size_t>(config_.retrain_window));
    const forest::TrainingSet train = forest::TrainingSet::from_dataset(window);
    forest::Forest next;
    if (config_.retune_on_retrain) {
      next = forest::grid_search(train, forest::HyperGrid{}, 5, seed).forest;
    } else {
      next = forest::fit_forest(train, artifact_.forest.params, seed);
    }
    auto fresh = std::make_shared<const forest::Forest>(std::move(next));
    std::lock_guard<std::mutex> lock(forest_mu_);
    forest_ = std::move(fresh);
  } catch (const Error&) {
    // The previous model stays active; the failure is only counted.
    ++retrain_failures_;
  }
}

}  // namespace memfigless::manager
