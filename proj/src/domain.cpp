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

#include "memfigless/domain.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace memfigless::domain {

namespace {

constexpr double kDerivedTolerance = 1e-9;

bool finite_non_negative(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace

void validate_payload(const PayloadVector& payload) {
  if (payload.values.empty()) {
    throw SchemaError("payload: dimension must be at least 1");
  }
  for (double v : payload.values) {
    if (!finite_non_negative(v)) {
      throw SchemaError("payload: components must be finite and >= 0");
    }
  }
}

MemoryMb make_memory(int mb) {
  if (mb < kMinMemoryMb || mb > kMaxMemoryMb) {
    throw MemoryOutOfRange("memory_size: " + std::to_string(mb) +
                           " MB outside [" + std::to_string(kMinMemoryMb) +
                           ", " + std::to_string(kMaxMemoryMb) + "]");
  }
  return MemoryMb{mb};
}

std::string to_string(FunctionError error) {
  switch (error) {
    case FunctionError::kNone:
      return "none";
    case FunctionError::kOom:
      return "oom";
    case FunctionError::kTimeout:
      return "timeout";
  }
  return "none";
}

FunctionError function_error_from_string(const std::string& text) {
  if (text == "none") return FunctionError::kNone;
  if (text == "oom") return FunctionError::kOom;
  if (text == "timeout") return FunctionError::kTimeout;
  throw SchemaError("function_error: unknown value '" + text + "'");
}

CostBreakdown compute_cost(double billed_duration_ms, int memory_mb,
                           const CostModel& model) {
  CostBreakdown breakdown;
  breakdown.billed_gb_s =
      (billed_duration_ms / 1000.0) * (static_cast<double>(memory_mb) / 1024.0);
  breakdown.cost_usd = breakdown.billed_gb_s * model.price_per_gb_s + model.beta_usd;
  return breakdown;
}

void validate_weights(const Weights& weights) {
  if (!finite_non_negative(weights.cost) || !finite_non_negative(weights.time)) {
    throw SchemaError("weights: must be non-negative");
  }
  const double sum = weights.cost + weights.time;
  if (std::fabs(sum - 1.0) > kDerivedTolerance) {
    throw SchemaError("weights: must sum to 1");
  }
}

void validate_constraints(const SLOConstraints& constraints) {
  // An unbounded (infinite) deadline or budget is admissible; NaN and
  // non-positive values are not.
  if (!(constraints.deadline_ms > 0.0)) {
    throw SchemaError("deadline_ms: must be positive");
  }
  if (!(constraints.budget_usd > 0.0)) {
    throw SchemaError("budget_usd: must be positive");
  }
  validate_weights(constraints.weights);
}

SLOConstraints derive_default_constraints(
    std::span<const InvocationRecord> records, double slack) {
  if (!(std::isfinite(slack) && slack > 0.0)) {
    throw SchemaError("slack: must be positive");
  }
  double duration_sum = 0.0;
  double cost_sum = 0.0;
  std::size_t successes = 0;
  for (const InvocationRecord& record : records) {
    if (!record.success()) continue;
    duration_sum += static_cast<double>(record.billed_duration_ms);
    cost_sum += record.cost_usd;
    ++successes;
  }
  if (successes == 0) {
    throw EmptyDataset("derive_default_constraints: no successful records");
  }
  SLOConstraints constraints;
  constraints.deadline_ms = slack * duration_sum / static_cast<double>(successes);
  constraints.budget_usd = slack * cost_sum / static_cast<double>(successes);
  constraints.weights = Weights{0.5, 0.5};
  return constraints;
}

InvocationRecord validate_record(const InvocationRecord& raw) {
  InvocationRecord record = raw;
  validate_payload(record.payload);
  if (record.memory_size.value < kMinMemoryMb ||
      record.memory_size.value > kMaxMemoryMb) {
    throw SchemaError("memory_size: " + std::to_string(record.memory_size.value) +
                      " MB outside platform range");
  }
  if (record.billed_duration_ms < 0) {
    throw SchemaError("billed_duration: must be >= 0");
  }
  if (!finite_non_negative(record.memory_used_mb)) {
    throw SchemaError("memory_used: must be finite and >= 0");
  }
  const double utilisation =
      record.memory_used_mb / static_cast<double>(record.memory_size.value);
  if (utilisation > 1.0 + kDerivedTolerance &&
      record.function_error != FunctionError::kOom) {
    throw SchemaError("memory_utilisation: above 1 without an oom error");
  }
  record.memory_utilisation = utilisation;
  record.billed_gb_s = (static_cast<double>(record.billed_duration_ms) / 1000.0) *
                       (static_cast<double>(record.memory_size.value) / 1024.0);
  if (record.init_duration_ms < 0.0 || !std::isfinite(record.init_duration_ms)) {
    throw SchemaError("init_duration: must be finite and >= 0");
  }
  if (record.cold_start != (record.init_duration_ms > 0.0)) {
    throw SchemaError("init_duration: must be positive exactly when cold_start");
  }
  if (!finite_non_negative(record.cost_usd)) {
    throw SchemaError("cost_usd: must be finite and >= 0");
  }
  return record;
}

nlohmann::ordered_json record_to_json(const InvocationRecord& record) {
  nlohmann::ordered_json object;
  object["request_id"] = record.request_id;
  object["payload"] = record.payload.values;
  object["memory_size"] = record.memory_size.value;
  object["memory_used"] = record.memory_used_mb;
  object["memory_utilisation"] = record.memory_utilisation;
  object["billed_duration"] = record.billed_duration_ms;
  object["billed_gb_s"] = record.billed_gb_s;
  object["cost_usd"] = record.cost_usd;
  object["cold_start"] = record.cold_start;
  object["init_duration"] = record.init_duration_ms;
  object["function_error"] = to_string(record.function_error);
  object["timestamp"] = record.timestamp;
  return object;
}

InvocationRecord record_from_json(const nlohmann::json& object) {
  static const char* const kFields[] = {
      "request_id", "payload",       "memory_size",     "memory_used",
      "memory_utilisation", "billed_duration", "billed_gb_s", "cost_usd",
      "cold_start", "init_duration", "function_error",  "timestamp"};
  if (!object.is_object()) {
    throw SchemaError("record: expected a JSON object");
  }
  for (const auto& item : object.items()) {
    bool known = false;
    for (const char* field : kFields) {
      if (item.key() == field) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw SchemaError("record: unknown field '" + item.key() + "'");
    }
  }
  for (const char* field : kFields) {
    if (!object.contains(field)) {
      throw SchemaError("record: missing field '" + std::string(field) + "'");
    }
  }
  InvocationRecord record;
  try {
    record.request_id = object.at("request_id").get<std::string>();
    record.payload.values = object.at("payload").get<std::vector<double>>();
    record.memory_size.value = object.at("memory_size").get<int>();
    record.memory_used_mb = object.at("memory_used").get<double>();
    record.memory_utilisation = object.at("memory_utilisation").get<double>();
    record.billed_duration_ms = object.at("billed_duration").get<std::int64_t>();
    record.billed_gb_s = object.at("billed_gb_s").get<double>();
    record.cost_usd = object.at("cost_usd").get<double>();
    record.cold_start = object.at("cold_start").get<bool>();
    record.init_duration_ms = object.at("init_duration").get<double>();
    record.function_error =
        function_error_from_string(object.at("function_error").get<std::string>());
    record.timestamp = object.at("timestamp").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("record: ") + e.what());
  }
  return validate_record(record);
}

void write_records_jsonl(std::ostream& out,
                         std::span<const InvocationRecord> records) {
  for (const InvocationRecord& record : records) {
    out << record_to_json(record).dump() << '\n';
  }
}

std::vector<InvocationRecord> read_records_jsonl(std::istream& in) {
  std::vector<InvocationRecord> records;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    nlohmann::json object;
    try {
      object = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("line " + std::to_string(line_number) + ": " + e.what());
    }
    records.push_back(record_from_json(object));
  }
  return records;
}

void write_records_csv(std::ostream& out,
                       std::span<const InvocationRecord> records) {
  out << "request_id,payload,memory_size,memory_used,memory_utilisation,"
         "billed_duration,billed_gb_s,cost_usd,cold_start,init_duration,"
         "function_error,timestamp\n";
  for (const InvocationRecord& record : records) {
    std::ostringstream payload;
    for (std::size_t i = 0; i < record.payload.values.size(); ++i) {
      if (i > 0) payload << ';';
      payload << nlohmann::json(record.payload.values[i]).dump();
    }
    out << record.request_id << ',' << payload.str() << ','
        << record.memory_size.value << ','
        << nlohmann::json(record.memory_used_mb).dump() << ','
        << nlohmann::json(record.memory_utilisation).dump() << ','
        << record.billed_duration_ms << ','
        << nlohmann::json(record.billed_gb_s).dump() << ','
        << nlohmann::json(record.cost_usd).dump() << ','
        << (record.cold_start ? "true" : "false") << ','
        << nlohmann::json(record.init_duration_ms).dump() << ','
        << to_string(record.function_error) << ',' << record.timestamp << '\n';
  }
}

}  // namespace memfigless::domain
