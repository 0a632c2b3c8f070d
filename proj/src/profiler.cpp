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

#include "memfigless/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "memfigless/io.hpp"

namespace memfigless::profiler {

std::vector<int> MemoryGrid::points() const {
  std::vector<int> result;
  for (int m = min_mb; m <= max_mb; m += step_mb) result.push_back(m);
  return result;
}

void validate_plan(const ProfilePlan& plan) {
  if (plan.function.empty()) {
    throw SchemaError("plan: function must be non-empty");
  }
  if (plan.iterations < 1) {
    throw SchemaError("plan: iterations must be >= 1");
  }
  if (plan.memory.step_mb < 1) {
    throw SchemaError("plan: memory step must be >= 1");
  }
  if (plan.memory.min_mb < domain::kMinMemoryMb ||
      plan.memory.max_mb > domain::kMaxMemoryMb) {
    throw MemoryOutOfRange("plan: memory grid outside [" +
                           std::to_string(domain::kMinMemoryMb) + ", " +
                           std::to_string(domain::kMaxMemoryMb) + "] MB");
  }
  if (plan.memory.min_mb > plan.memory.max_mb) {
    throw EmptyGrid("plan: memory grid is empty (min > max)");
  }
  if (!plan.payloads.empty() && !plan.payload_ranges.empty()) {
    throw SchemaError(
        "plan: give either explicit payloads or payload ranges, not both");
  }
  if (plan.payloads.empty() && plan.payload_ranges.empty()) {
    throw EmptyGrid("plan: no payloads specified");
  }
  if (!plan.payloads.empty()) {
    const std::size_t dims = plan.payloads.front().values.size();
    for (const domain::PayloadVector& p : plan.payloads) {
      domain::validate_payload(p);
      if (p.values.size() != dims) {
        throw SchemaError("plan: payloads differ in dimension");
      }
    }
  }
  for (const PayloadRange& range : plan.payload_ranges) {
    if (!std::isfinite(range.min) || !std::isfinite(range.max) ||
        !std::isfinite(range.step)) {
      throw SchemaError("plan: payload range values must be finite");
    }
    if (range.step <= 0.0) {
      throw SchemaError("plan: payload range step must be positive");
    }
    if (range.min > range.max) {
      throw EmptyGrid("plan: payload range is empty (min > max)");
    }
  }
}

namespace {

// Point count with a drift guard so min + k*step == max lands inside.
std::size_t range_count(const PayloadRange& range) {
  return static_cast<std::size_t>(
             std::floor((range.max - range.min) / range.step + 1e-9)) +
         1;
}

}  // namespace

std::vector<domain::PayloadVector> payload_points(const ProfilePlan& plan) {
  if (!plan.payloads.empty()) return plan.payloads;
  std::vector<std::vector<double>> axes;
  for (const PayloadRange& range : plan.payload_ranges) {
    std::vector<double> axis;
    const std::size_t count = range_count(range);
    for (std::size_t i = 0; i < count; ++i) {
      axis.push_back(range.min + static_cast<double>(i) * range.step);
    }
    axes.push_back(std::move(axis));
  }
  std::vector<domain::PayloadVector> result;
  std::vector<std::size_t> index(axes.size(), 0);
  while (true) {
    domain::PayloadVector point;
    for (std::size_t d = 0; d < axes.size(); ++d) {
      point.values.push_back(axes[d][index[d]]);
    }
    result.push_back(std::move(point));
    // Row-major increment: last dimension varies fastest.
    std::size_t d = axes.size();
    while (d > 0) {
      --d;
      if (++index[d] < axes[d].size()) break;
      index[d] = 0;
      if (d == 0) return result;
    }
  }
}

std::vector<ProfileCell> expand_plan(const ProfilePlan& plan) {
  validate_plan(plan);
  const std::vector<domain::PayloadVector> payloads = payload_points(plan);
  const std::vector<int> memories = plan.memory.points();
  std::vector<ProfileCell> cells;
  cells.reserve(payloads.size() * memories.size() *
                static_cast<std::size_t>(plan.iterations));
  for (const domain::PayloadVector& payload : payloads) {
    for (int memory : memories) {
      for (int it = 0; it < plan.iterations; ++it) {
        cells.push_back(ProfileCell{payload, memory, it});
      }
    }
  }
  return cells;
}

std::uint64_t plan_hash(const ProfilePlan& plan) {
  const std::string canonical = plan_to_json(plan).dump();
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char byte : canonical) {
    hash ^= byte;
    hash *= 1099511628211ULL;
  }
  return hash;
}

Dataset run_profile(const ProfilePlan& plan, sim::SimBackend& backend) {
  const std::vector<ProfileCell> cells = expand_plan(plan);
  Dataset dataset;
  dataset.function = plan.function;
  dataset.provenance = plan_hash(plan);
  dataset.records.reserve(cells.size());
  for (const ProfileCell& cell : cells) {
    dataset.records.push_back(backend.invoke(
        plan.function, cell.payload, domain::make_memory(cell.memory_mb)));
  }
  return dataset;
}

ProfileSummary summarize(const Dataset& dataset) {
  if (dataset.records.empty()) {
    throw EmptyDataset("dataset has no records");
  }
  ProfileSummary summary;
  summary.function = dataset.function;
  summary.total_records = dataset.records.size();
  summary.min_billed_ms = std::numeric_limits<double>::infinity();
  summary.max_billed_ms = -std::numeric_limits<double>::infinity();
  summary.min_cost_usd = std::numeric_limits<double>::infinity();
  summary.max_cost_usd = -std::numeric_limits<double>::infinity();
  double billed_sum = 0.0;
  double cost_sum = 0.0;
  std::map<int, std::pair<std::size_t, std::size_t>> per_memory;  // total, oom
  for (const domain::InvocationRecord& record : dataset.records) {
    auto& bucket = per_memory[record.memory_size.value];
    ++bucket.first;
    switch (record.function_error) {
      case domain::FunctionError::kNone: {
        ++summary.success_count;
        const double billed = static_cast<double>(record.billed_duration_ms);
        billed_sum += billed;
        cost_sum += record.cost_usd;
        summary.min_billed_ms = std::min(summary.min_billed_ms, billed);
        summary.max_billed_ms = std::max(summary.max_billed_ms, billed);
        summary.min_cost_usd = std::min(summary.min_cost_usd, record.cost_usd);
        summary.max_cost_usd = std::max(summary.max_cost_usd, record.cost_usd);
        break;
      }
      case domain::FunctionError::kOom:
        ++summary.oom_count;
        ++bucket.second;
        break;
      case domain::FunctionError::kTimeout:
        ++summary.timeout_count;
        break;
    }
  }
  if (summary.success_count == 0) {
    throw EmptyDataset("dataset has no successful records");
  }
  summary.mean_billed_ms =
      billed_sum / static_cast<double>(summary.success_count);
  summary.mean_cost_usd = cost_sum / static_cast<double>(summary.success_count);
  for (const auto& [memory, counts] : per_memory) {
    summary.oom_rate_per_memory[memory] =
        static_cast<double>(counts.second) / static_cast<double>(counts.first);
  }
  return summary;
}

std::string format_summary(const ProfileSummary& summary) {
  std::ostringstream out;
  char line[160];
  out << "function:  " << summary.function << '\n';
  std::snprintf(line, sizeof(line), "records:   %zu (%zu ok, %zu oom, %zu timeout)\n",
                summary.total_records, summary.success_count, summary.oom_count,
                summary.timeout_count);
  out << line;
  std::snprintf(line, sizeof(line),
                "billed ms: mean %.2f  min %.2f  max %.2f\n",
                summary.mean_billed_ms, summary.min_billed_ms,
                summary.max_billed_ms);
  out << line;
  std::snprintf(line, sizeof(line),
                "cost usd:  mean %.3e  min %.3e  max %.3e\n",
                summary.mean_cost_usd, summary.min_cost_usd,
                summary.max_cost_usd);
  out << line;
  out << "oom rate by memory:\n";
  bool any = false;
  for (const auto& [memory, rate] : summary.oom_rate_per_memory) {
    if (rate <= 0.0) continue;
    any = true;
    std::snprintf(line, sizeof(line), "  %4d MB: %.1f%%\n", memory,
                  rate * 100.0);
    out << line;
  }
  if (!any) out << "  none\n";
  return out.str();
}

nlohmann::ordered_json plan_to_json(const ProfilePlan& plan) {
  nlohmann::ordered_json j;
  j["function"] = plan.function;
  nlohmann::ordered_json payloads = nlohmann::ordered_json::array();
  for (const domain::PayloadVector& p : plan.payloads) {
    payloads.push_back(p.values);
  }
  j["payloads"] = std::move(payloads);
  nlohmann::ordered_json ranges = nlohmann::ordered_json::array();
  for (const PayloadRange& range : plan.payload_ranges) {
    nlohmann::ordered_json r;
    r["min"] = range.min;
    r["max"] = range.max;
    r["step"] = range.step;
    ranges.push_back(std::move(r));
  }
  j["payload_ranges"] = std::move(ranges);
  j["memory"] = {{"min_mb", plan.memory.min_mb},
                 {"max_mb", plan.memory.max_mb},
                 {"step_mb", plan.memory.step_mb}};
  j["iterations"] = plan.iterations;
  j["seed"] = plan.seed;
  return j;
}

ProfilePlan plan_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("plan: expected an object");
  static constexpr const char* kKeys[] = {"function", "payloads",
                                          "payload_ranges", "memory",
                                          "iterations", "seed"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) {
          return key == k;
        }) == std::end(kKeys)) {
      throw SchemaError("plan: unknown field '" + key + "'");
    }
  }
  ProfilePlan plan;
  try {
    plan.function = j.at("function").get<std::string>();
    if (j.contains("payloads")) {
      for (const auto& entry : j.at("payloads")) {
        domain::PayloadVector p;
        p.values = entry.get<std::vector<double>>();
        plan.payloads.push_back(std::move(p));
      }
    }
    if (j.contains("payload_ranges")) {
      for (const auto& entry : j.at("payload_ranges")) {
        PayloadRange range;
        range.min = entry.at("min").get<double>();
        range.max = entry.at("max").get<double>();
        range.step = entry.at("step").get<double>();
        plan.payload_ranges.push_back(range);
      }
    }
    if (j.contains("memory")) {
      const auto& m = j.at("memory");
      plan.memory.min_mb = m.at("min_mb").get<int>();
      plan.memory.max_mb = m.at("max_mb").get<int>();
      plan.memory.step_mb = m.at("step_mb").get<int>();
    }
    if (j.contains("iterations")) {
      plan.iterations = j.at("iterations").get<int>();
    }
    if (j.contains("seed")) {
      plan.seed = j.at("seed").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("plan: ") + e.what());
  }
  validate_plan(plan);
  return plan;
}

ProfilePlan read_plan(const std::string& path) {
  std::ifstream in = open_input(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("plan '" + path + "': " + e.what());
  }
  return plan_from_json(j);
}

void write_plan(const ProfilePlan& plan, const std::string& path) {
  std::ofstream out = open_output(path);
  out << plan_to_json(plan).dump(2) << '\n';
}

void write_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out = open_output(path);
  nlohmann::ordered_json header;
  header["format"] = "memfigless-dataset";
  header["version"] = 1;
  header["function"] = dataset.function;
  header["provenance"] = dataset.provenance;
  header["records"] = dataset.records.size();
  out << header.dump() << '\n';
  domain::write_records_jsonl(out, dataset.records);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw SchemaError("dataset '" + path + "': missing header line");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("dataset '" + path + "': " + e.what());
  }
  Dataset dataset;
  try {
    if (header.at("format").get<std::string>() != "memfigless-dataset") {
      throw SchemaError("dataset '" + path + "': unrecognized format tag");
    }
    if (header.at("version").get<int>() != 1) {
      throw VersionMismatch("dataset '" + path + "': unsupported version");
    }
    dataset.function = header.at("function").get<std::string>();
    dataset.provenance = header.at("provenance").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("dataset '" + path + "': " + e.what());
  }
  const std::size_t expected = header.at("records").get<std::size_t>();
  dataset.records = domain::read_records_jsonl(in);
  if (dataset.records.size() != expected) {
    throw SchemaError("dataset '" + path + "': header promises " +
                      std::to_string(expected) + " records, file has " +
                      std::to_string(dataset.records.size()));
  }
  if (!dataset.records.empty()) {
    const std::size_t dims = dataset.records.front().payload.values.size();
    for (const domain::InvocationRecord& record : dataset.records) {
      if (record.payload.values.size() != dims) {
        throw SchemaError("dataset '" + path +
                          "': records differ in payload dimension");
      }
    }
  }
  return dataset;
}

ProfilePlan standard_plan(const sim::FunctionModel& model, std::uint64_t seed) {
  ProfilePlan plan;
  plan.function = model.name;
  plan.seed = seed;
  for (int v = 10; v < 10000; v += 200) {
    domain::PayloadVector payload;
    payload.values.push_back(static_cast<double>(v));
    for (int d = 1; d < model.payload_dims; ++d) {
      payload.values.push_back(0.5 * static_cast<double>(v) + 5.0);
    }
    plan.payloads.push_back(std::move(payload));
  }
  return plan;
}

}  // namespace memfigless::profiler
