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

#include "memfigless/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "memfigless/rng.hpp"

namespace memfigless::sim {

namespace {

// Billed time of an invocation killed below its memory floor.
constexpr double kOomAbortMs = 10.0;

void require_positive(double v, const char* field) {
  if (!(std::isfinite(v) && v > 0.0)) {
    throw SchemaError(std::string(field) + ": must be positive");
  }
}

void require_non_negative(double v, const char* field) {
  if (!(std::isfinite(v) && v >= 0.0)) {
    throw SchemaError(std::string(field) + ": must be finite and >= 0");
  }
}

}  // namespace

void validate_model(const FunctionModel& model) {
  if (model.name.empty()) throw SchemaError("name: must be non-empty");
  if (model.payload_dims < 1) throw SchemaError("payload_dims: must be >= 1");
  require_non_negative(model.mem_base_mb, "mem_base_mb");
  require_non_negative(model.mem_per_unit_mb, "mem_per_unit_mb");
  require_non_negative(model.mem_exp, "mem_exp");
  require_non_negative(model.work_base_ms, "work_base_ms");
  require_non_negative(model.work_exp, "work_exp");
  require_positive(model.ref_memory_mb, "ref_memory_mb");
  if (!(std::isfinite(model.max_speedup) && model.max_speedup >= 1.0)) {
    throw SchemaError("max_speedup: must be >= 1");
  }
  require_non_negative(model.noise_sigma, "noise_sigma");
  require_non_negative(model.cold_start_mean_ms, "cold_start_mean_ms");
  require_non_negative(model.cold_start_jitter_ms, "cold_start_jitter_ms");
  if (model.cold_start_jitter_ms > model.cold_start_mean_ms) {
    throw SchemaError("cold_start_jitter_ms: must not exceed the mean");
  }
  require_positive(model.timeout_ms, "timeout_ms");
}

double payload_magnitude(const domain::PayloadVector& payload) {
  double log_sum = 0.0;
  for (double v : payload.values) {
    if (v == 0.0) return 0.0;
    log_sum += std::log(v);
  }
  return std::exp(log_sum / static_cast<double>(payload.values.size()));
}

namespace {

void check_dims(const FunctionModel& model, const domain::PayloadVector& payload) {
  domain::validate_payload(payload);
  if (payload.dims() != static_cast<std::size_t>(model.payload_dims)) {
    throw DimensionMismatch("payload: expected " +
                            std::to_string(model.payload_dims) +
                            " dimensions, got " + std::to_string(payload.dims()));
  }
}

}  // namespace

double required_memory_mb(const FunctionModel& model,
                          const domain::PayloadVector& payload) {
  check_dims(model, payload);
  const double magnitude = payload_magnitude(payload);
  return model.mem_base_mb +
         model.mem_per_unit_mb * std::pow(magnitude, model.mem_exp);
}

double ground_truth_duration_ms(const FunctionModel& model,
                                const domain::PayloadVector& payload,
                                int memory_mb) {
  check_dims(model, payload);
  const double magnitude = payload_magnitude(payload);
  const double work = model.work_base_ms * std::pow(magnitude, model.work_exp);
  const double speedup =
      std::min(static_cast<double>(memory_mb) / model.ref_memory_mb,
               model.max_speedup);
  return work / speedup;
}

void InstancePool::expire(std::uint64_t now) {
  for (auto it = instances_.begin(); it != instances_.end();) {
    auto& slots = it->second;
    slots.erase(std::remove_if(slots.begin(), slots.end(),
                               [&](std::uint64_t last_used) {
                                 return now - last_used > keep_alive_;
                               }),
                slots.end());
    if (slots.empty()) {
      it = instances_.erase(it);
    } else {
      ++it;
    }
  }
}

bool InstancePool::take(int memory_mb, std::uint64_t /*now*/) {
  auto it = instances_.find(memory_mb);
  if (it == instances_.end() || it->second.empty()) return false;
  it->second.pop_back();
  if (it->second.empty()) instances_.erase(it);
  return true;
}

void InstancePool::add(int memory_mb, std::uint64_t now) {
  instances_[memory_mb].push_back(now);
}

std::size_t InstancePool::warm_count(int memory_mb) const {
  auto it = instances_.find(memory_mb);
  return it == instances_.end() ? 0 : it->second.size();
}

SimBackend::SimBackend(std::vector<FunctionModel> models,
                       domain::CostModel cost_model, std::uint64_t seed)
    : models_(std::move(models)), cost_model_(cost_model), seed_(seed) {
  if (models_.empty()) {
    throw SchemaError("models: backend needs at least one function");
  }
  for (const FunctionModel& model : models_) {
    validate_model(model);
    pools_.emplace(model.name, InstancePool{});
  }
}

const FunctionModel& SimBackend::model(const std::string& name) const {
  for (const FunctionModel& model : models_) {
    if (model.name == name) return model;
  }
  throw UnknownFunction("function '" + name + "' is not hosted");
}

std::size_t SimBackend::warm_count(const std::string& function,
                                   int memory_mb) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = pools_.find(function);
  if (it == pools_.end()) {
    throw UnknownFunction("function '" + function + "' is not hosted");
  }
  return it->second.warm_count(memory_mb);
}

domain::InvocationRecord SimBackend::invoke(const std::string& function,
                                            const domain::PayloadVector& payload,
                                            domain::MemoryMb memory) {
  std::lock_guard<std::mutex> lock(mutex_);
  const FunctionModel& fn = model(function);
  check_dims(fn, payload);
  if (memory.value < domain::kMinMemoryMb || memory.value > domain::kMaxMemoryMb) {
    throw MemoryOutOfRange("memory_size: " + std::to_string(memory.value) +
                           " MB outside platform range");
  }

  const std::uint64_t tick = ++tick_;
  InstancePool& pool = pools_.at(function);
  pool.expire(tick);

  // Per-request substream: replaying the same call sequence with the same
  // seed reproduces every draw no matter what happened in between.
  Rng rng(substream_seed(seed_, tick));
  const double noise_factor = std::exp(fn.noise_sigma * rng.normal());
  const bool warm_hit = pool.take(memory.value, tick);
  const bool cold = !warm_hit;
  const double init_ms =
      cold ? rng.uniform(fn.cold_start_mean_ms - fn.cold_start_jitter_ms,
                         fn.cold_start_mean_ms + fn.cold_start_jitter_ms)
           : 0.0;

  domain::InvocationRecord record;
  {
    std::ostringstream id;
    id << function << '-' << tick;
    record.request_id = id.str();
  }
  record.payload = payload;
  record.memory_size = memory;
  record.cold_start = cold;
  record.init_duration_ms = init_ms;
  record.timestamp = tick;

  const double required = required_memory_mb(fn, payload);
  if (static_cast<double>(memory.value) < required) {
    // Killed below the floor: the sandbox does not survive, so nothing goes
    // back into the pool.
    record.function_error = domain::FunctionError::kOom;
    record.memory_used_mb = static_cast<double>(memory.value);
    record.billed_duration_ms =
        static_cast<std::int64_t>(std::ceil(kOomAbortMs));
  } else {
    const double exec_ms =
        ground_truth_duration_ms(fn, payload, memory.value) * noise_factor;
    double billed_raw;
    if (exec_ms > fn.timeout_ms) {
      record.function_error = domain::FunctionError::kTimeout;
      billed_raw = fn.timeout_ms;
    } else {
      record.function_error = domain::FunctionError::kNone;
      billed_raw = exec_ms;
    }
    if (cold) billed_raw += init_ms;
    record.memory_used_mb = required;
    record.billed_duration_ms = static_cast<std::int64_t>(std::ceil(billed_raw));
    pool.add(memory.value, tick);
  }

  const domain::CostBreakdown breakdown = domain::compute_cost(
      static_cast<double>(record.billed_duration_ms), memory.value, cost_model_);
  record.billed_gb_s = breakdown.billed_gb_s;
  record.cost_usd = breakdown.cost_usd;
  record.memory_utilisation =
      record.memory_used_mb / static_cast<double>(memory.value);
  return record;
}

std::optional<int> optimal_config_oracle(const FunctionModel& model,
                                         const domain::PayloadVector& payload,
                                         const domain::SLOConstraints& constraints,
                                         int memory_step_mb,
                                         const domain::CostModel& cost_model,
                                         int mem_min, int mem_max) {
  if (memory_step_mb < 1) throw SchemaError("memory_step: must be >= 1");
  domain::validate_constraints(constraints);
  const double required = required_memory_mb(model, payload);
  for (int m = mem_min; m <= mem_max; m += memory_step_mb) {
    if (static_cast<double>(m) < required) continue;
    const double duration = ground_truth_duration_ms(model, payload, m);
    if (duration > constraints.deadline_ms) continue;
    const double billed = std::ceil(duration);
    if (domain::compute_cost(billed, m, cost_model).cost_usd >
        constraints.budget_usd) {
      continue;
    }
    return m;
  }
  return std::nullopt;
}

std::vector<FunctionModel> models_from_json(const nlohmann::json& array) {
  if (!array.is_array() || array.empty()) {
    throw SchemaError("models: expected a non-empty JSON array");
  }
  std::vector<FunctionModel> models;
  for (const auto& object : array) {
    FunctionModel model;
    try {
      model.name = object.at("name").get<std::string>();
      model.payload_dims = object.at("payload_dims").get<int>();
      model.mem_base_mb = object.at("mem_base_mb").get<double>();
      model.mem_per_unit_mb = object.at("mem_per_unit_mb").get<double>();
      model.mem_exp = object.at("mem_exp").get<double>();
      model.work_base_ms = object.at("work_base_ms").get<double>();
      model.work_exp = object.at("work_exp").get<double>();
      model.ref_memory_mb = object.value("ref_memory_mb", model.ref_memory_mb);
      model.max_speedup = object.value("max_speedup", model.max_speedup);
      model.noise_sigma = object.value("noise_sigma", model.noise_sigma);
      model.cold_start_mean_ms =
          object.value("cold_start_mean_ms", model.cold_start_mean_ms);
      model.cold_start_jitter_ms =
          object.value("cold_start_jitter_ms", model.cold_start_jitter_ms);
      model.timeout_ms = object.value("timeout_ms", model.timeout_ms);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("models: ") + e.what());
    }
    validate_model(model);
    models.push_back(std::move(model));
  }
  return models;
}

}  // namespace memfigless::sim
