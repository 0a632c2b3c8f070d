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
#include <map>
#include <string>
#include <vector>

#include "memfigless/domain.hpp"
#include "memfigless/sim.hpp"

namespace memfigless::profiler {

/// Memory sweep bounds in MB. points() yields min, min+step, ... up to max.
struct MemoryGrid {
  int min_mb = domain::kMinMemoryMb;
  int max_mb = domain::kMaxMemoryMb;
  int step_mb = 128;

  std::vector<int> points() const;
};

/// Inclusive arithmetic payload range for one dimension.
struct PayloadRange {
  double min = 0.0;
  double max = 0.0;
  double step = 0.0;
};

/// Sweep description: which function, which payloads, which memory sizes,
/// how many repeats per cell. Payloads come either as an explicit list or
/// as per-dimension ranges expanded to a full grid; exactly one of the two
/// must be present.
struct ProfilePlan {
  std::string function;
  std::vector<domain::PayloadVector> payloads;
  std::vector<PayloadRange> payload_ranges;
  MemoryGrid memory;
  int iterations = 3;
  std::uint64_t seed = 0;
};

/// One unit of profiling work: invoke `function` with this payload at this
/// memory size. `iteration` numbers the repeat within the cell, from 0.
struct ProfileCell {
  domain::PayloadVector payload;
  int memory_mb = 0;
  int iteration = 0;
};

/// Collected sweep output. `provenance` is the hash of the generating plan
/// so a dataset can be traced back to its exact sweep parameters.
struct Dataset {
  std::string function;
  std::uint64_t provenance = 0;
  std::vector<domain::InvocationRecord> records;
};

/// Aggregates over a dataset. Duration and cost statistics cover successful
/// records only; oom_rate_per_memory maps each profiled memory size to the
/// fraction of its records that failed with an out-of-memory error.
struct ProfileSummary {
  std::string function;
  std::size_t total_records = 0;
  std::size_t success_count = 0;
  std::size_t oom_count = 0;
  std::size_t timeout_count = 0;
  double mean_billed_ms = 0.0;
  double min_billed_ms = 0.0;
  double max_billed_ms = 0.0;
  double mean_cost_usd = 0.0;
  double min_cost_usd = 0.0;
  double max_cost_usd = 0.0;
  std::map<int, double> oom_rate_per_memory;
};

/// Throws EmptyGrid or SchemaError when the plan violates its invariants.
void validate_plan(const ProfilePlan& plan);

/// The payload list the plan describes: the explicit list verbatim, or the
/// Cartesian product of the per-dimension ranges in row-major order.
std::vector<domain::PayloadVector> payload_points(const ProfilePlan& plan);

/// Full work list: payloads outermost, then memory sizes, then iterations.
std::vector<ProfileCell> expand_plan(const ProfilePlan& plan);

/// Stable 64-bit fingerprint of every plan field, including the seed.
std::uint64_t plan_hash(const ProfilePlan& plan);

/// Runs every cell of the plan against the backend. Failed invocations
/// (out-of-memory, timeout) are recorded like any other; the sweep never
/// stops early.
Dataset run_profile(const ProfilePlan& plan, sim::SimBackend& backend);

/// Throws EmptyDataset when the dataset is empty or has no successful
/// records to aggregate.
ProfileSummary summarize(const Dataset& dataset);

/// Human-readable table of a summary, one statistic per line.
std::string format_summary(const ProfileSummary& summary);

nlohmann::ordered_json plan_to_json(const ProfilePlan& plan);
ProfilePlan plan_from_json(const nlohmann::json& j);
ProfilePlan read_plan(const std::string& path);
void write_plan(const ProfilePlan& plan, const std::string& path);

/// Dataset file layout: one header object line, then one record per line.
void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

/// The default sweep for a simulated function: 50 payload points spanning
/// [10, 10000) in steps of 200 (two-dimensional functions pair each point v
/// with a second component 0.5*v + 5), the full 128..3008 step-128 memory
/// grid, and 3 iterations per cell.
ProfilePlan standard_plan(const sim::FunctionModel& model, std::uint64_t seed);

}  // namespace memfigless::profiler
