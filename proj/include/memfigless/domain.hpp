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

// Core vocabulary of the toolkit: payloads, memory sizes, invocation records,
// the billing model and service-level constraints, together with their
// validation rules and line-delimited serialization.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "memfigless/errors.hpp"

namespace memfigless::domain {

// Platform memory bounds in MB. Allocations are validated against these at
// every entry point that accepts a memory size.
inline constexpr int kMinMemoryMb = 128;
inline constexpr int kMaxMemoryMb = 3008;

// Input size descriptor of one invocation. Every component is finite and
// non-negative; the dimension is fixed per function and is at least 1.
struct PayloadVector {
  std::vector<double> values;

  std::size_t dims() const { return values.size(); }
};

// Throws SchemaError if the payload violates its invariants.
void validate_payload(const PayloadVector& payload);

// Memory allocation in MB, validated against [kMinMemoryMb, kMaxMemoryMb].
struct MemoryMb {
  int value = kMinMemoryMb;
};

// Throws MemoryOutOfRange unless mb lies within the platform range.
MemoryMb make_memory(int mb);

enum class FunctionError { kNone, kOom, kTimeout };

std::string to_string(FunctionError error);
FunctionError function_error_from_string(const std::string& text);

// One completed invocation. `memory_utilisation` and `billed_gb_s` are
// derived from the primary fields and are recomputed during validation.
struct InvocationRecord {
  std::string request_id;
  PayloadVector payload;
  MemoryMb memory_size;
  double memory_used_mb = 0.0;
  double memory_utilisation = 0.0;
  std::int64_t billed_duration_ms = 0;
  double billed_gb_s = 0.0;
  double cost_usd = 0.0;
  bool cold_start = false;
  double init_duration_ms = 0.0;
  FunctionError function_error = FunctionError::kNone;
  std::uint64_t timestamp = 0;

  bool success() const { return function_error == FunctionError::kNone; }
};

// Provider billing model: a price per GB-second plus a flat per-request fee.
struct CostModel {
  double price_per_gb_s = 0.0000166667;
  double beta_usd = 0.0000002;
};

struct Weights {
  double cost = 0.5;
  double time = 0.5;
};

// Service-level constraints used by the configuration optimizer: a deadline
// on billed duration, a per-invocation budget, and the objective weights.
struct SLOConstraints {
  double deadline_ms = 0.0;
  double budget_usd = 0.0;
  Weights weights;
};

// Throws SchemaError unless both weights are finite, non-negative, and sum
// to 1 within 1e-9.
void validate_weights(const Weights& weights);

// Throws SchemaError naming the first violated field: positive deadline,
// positive budget (either may be infinite), valid weights.
void validate_constraints(const SLOConstraints& constraints);

struct CostBreakdown {
  double billed_gb_s = 0.0;
  double cost_usd = 0.0;
};

// Billing: GB-seconds are billed_duration_ms/1000 * memory_mb/1024; the cost
// is GB-seconds times the unit price plus the flat request fee.
CostBreakdown compute_cost(double billed_duration_ms, int memory_mb,
                           const CostModel& model);

// Derives default constraints from observed behaviour: deadline and budget
// are `slack` times the mean billed duration and mean cost over successful
// records; weights are split evenly. Throws EmptyDataset if no record
// succeeded.
SLOConstraints derive_default_constraints(
    std::span<const InvocationRecord> records, double slack);

// Checks every record invariant and recomputes the derived fields. Throws
// SchemaError naming the first violated invariant. A utilisation above 1 is
// only admissible for out-of-memory records.
InvocationRecord validate_record(const InvocationRecord& raw);

// JSON object form of a record, with a fixed field order so that serialized
// streams are byte-stable.
nlohmann::ordered_json record_to_json(const InvocationRecord& record);

// Strict parse: unknown fields and missing fields are SchemaErrors, and the
// result is passed through validate_record.
InvocationRecord record_from_json(const nlohmann::json& object);

// Line-delimited records: one JSON object per line.
void write_records_jsonl(std::ostream& out,
                         std::span<const InvocationRecord> records);
std::vector<InvocationRecord> read_records_jsonl(std::istream& in);

// Tabular export with a header row using the record field names. The payload
// column joins components with ';' so that rows stay comma-safe.
void write_records_csv(std::ostream& out,
                       std::span<const InvocationRecord> records);

}  // namespace memfigless::domain
