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

// Deterministic serverless platform simulator. Functions are parametric
// models with a payload-dependent memory floor and a duration curve that
// speeds up with allocated memory until a cap, plus multiplicative lognormal
// noise, cold starts drawn from per-memory warm pools, OOM kills below the
// floor, and timeouts.

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "memfigless/domain.hpp"

namespace memfigless::sim {

struct FunctionModel {
  std::string name;
  int payload_dims = 1;

  // Memory floor: mem_base + mem_per_unit * magnitude^mem_exp, where
  // magnitude is the geometric mean of the payload components.
  double mem_base_mb = 0.0;
  double mem_per_unit_mb = 0.0;
  double mem_exp = 1.0;

  // Noise-free work: work_base * magnitude^work_exp, divided by the speedup
  // min(memory / ref_memory, max_speedup). The speedup is linear in memory up
  // to the cap, mirroring vCPU allocation proportional to memory.
  double work_base_ms = 0.0;
  double work_exp = 1.0;
  double ref_memory_mb = 1769.0;
  double max_speedup = 1.0;

  double noise_sigma = 0.05;
  double cold_start_mean_ms = 150.0;
  double cold_start_jitter_ms = 0.0;
  double timeout_ms = 30000.0;
};

// Throws SchemaError naming the first invalid field.
void validate_model(const FunctionModel& model);

// Geometric mean of the payload components; zero if any component is zero.
double payload_magnitude(const domain::PayloadVector& payload);

// Payload-dependent memory floor in MB. Throws DimensionMismatch if the
// payload does not match the model.
double required_memory_mb(const FunctionModel& model,
                          const domain::PayloadVector& payload);

// Noise-free warm duration in ms at the given allocation.
double ground_truth_duration_ms(const FunctionModel& model,
                                const domain::PayloadVector& payload,
                                int memory_mb);

// Warm instances per memory size. An instance stays warm for keep_alive
// invocation ticks after its last use.
class InstancePool {
 public:
  explicit InstancePool(std::uint64_t keep_alive_ticks = 100)
      : keep_alive_(keep_alive_ticks) {}

  // Drops instances whose last use is more than keep_alive ticks ago.
  void expire(std::uint64_t now);

  // Takes one warm instance at the given size, if any. The taken instance is
  // removed; the caller re-adds it on completion if the sandbox survives.
  bool take(int memory_mb, std::uint64_t now);

  void add(int memory_mb, std::uint64_t now);

  std::size_t warm_count(int memory_mb) const;

 private:
  std::uint64_t keep_alive_;
  std::map<int, std::vector<std::uint64_t>> instances_;
};

// Hosts a set of function models behind a serialized invocation interface.
// Given the same seed and the same call sequence, the produced record stream
// is bit-identical.
class SimBackend {
 public:
  SimBackend(std::vector<FunctionModel> models, domain::CostModel cost_model,
             std::uint64_t seed);

  const FunctionModel& model(const std::string& name) const;
  const std::vector<FunctionModel>& models() const { return models_; }
  const domain::CostModel& cost_model() const { return cost_model_; }

  // Runs one invocation and returns its record. Outcome order per request:
  // OOM if memory is below the floor (billed a flat 10 ms abort); otherwise
  // the noise-scaled duration runs, a cold start adds sampled init time to
  // the bill, and executions beyond timeout_ms are cut off and billed at the
  // timeout. memory_used reports the floor, or the full allocation on OOM.
  domain::InvocationRecord invoke(const std::string& function,
                                  const domain::PayloadVector& payload,
                                  domain::MemoryMb memory);

  std::size_t warm_count(const std::string& function, int memory_mb) const;
  std::uint64_t ticks() const { return tick_; }

 private:
  std::vector<FunctionModel> models_;
  domain::CostModel cost_model_;
  std::uint64_t seed_;
  std::uint64_t tick_ = 0;
  std::map<std::string, InstancePool> pools_;
  mutable std::mutex mutex_;
};

// Noise-free exhaustive scan: the lowest memory on the step grid within
// [mem_min, mem_max] that clears the floor, meets the deadline with its warm
// duration, and fits the budget with its billed warm cost. Empty if no grid
// point qualifies.
std::optional<int> optimal_config_oracle(const FunctionModel& model,
                                         const domain::PayloadVector& payload,
                                         const domain::SLOConstraints& constraints,
                                         int memory_step_mb,
                                         const domain::CostModel& cost_model,
                                         int mem_min = domain::kMinMemoryMb,
                                         int mem_max = domain::kMaxMemoryMb);

// Eight bundled workload fixtures covering compute-, memory- and
// graph-centric functions plus two with two-dimensional payloads.
std::vector<FunctionModel> preset_models();

// Looks up one preset by name. Throws UnknownFunction.
FunctionModel preset_model(const std::string& name);

// Parses an array of function models from JSON. Fields without defaults are
// required; ref_memory, max_speedup, noise_sigma, cold start and timeout fall
// back to the type defaults.
std::vector<FunctionModel> models_from_json(const nlohmann::json& array);

}  // namespace memfigless::sim
