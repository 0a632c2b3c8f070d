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

#include "memfigless/optimizer.hpp"

#include <algorithm>
#include <limits>
#include <tuple>

namespace memfigless::optimizer {

std::vector<Candidate> enumerate_candidates(
    const forest::Forest& model, const domain::PayloadVector& payload,
    int mem_min_mb, int mem_max_mb, int step_mb,
    const domain::CostModel& cost_model) {
  if (step_mb < 1) throw SchemaError("memory step must be >= 1");
  if (mem_min_mb > mem_max_mb) {
    throw EmptyGrid("memory range is empty (min > max)");
  }
  if (mem_min_mb < domain::kMinMemoryMb || mem_max_mb > domain::kMaxMemoryMb) {
    throw MemoryOutOfRange("candidate range outside [" +
                           std::to_string(domain::kMinMemoryMb) + ", " +
                           std::to_string(domain::kMaxMemoryMb) + "] MB");
  }
  std::vector<double> x(1 + payload.values.size());
  std::copy(payload.values.begin(), payload.values.end(), x.begin() + 1);
  std::vector<Candidate> candidates;
  candidates.reserve(
      static_cast<std::size_t>((mem_max_mb - mem_min_mb) / step_mb) + 1);
  for (int m = mem_min_mb; m <= mem_max_mb; m += step_mb) {
    x[0] = static_cast<double>(m);
    const forest::Prediction p = forest::predict(model, x);
    Candidate candidate;
    candidate.memory_mb = m;
    candidate.predicted_duration_ms = p[forest::kOutputDuration];
    candidate.predicted_memory_used_mb = p[forest::kOutputMemory];
    candidate.predicted_success = p[forest::kOutputSuccess];
    candidate.predicted_cost_usd =
        domain::compute_cost(candidate.predicted_duration_ms, m, cost_model)
            .cost_usd;
    candidates.push_back(candidate);
  }
  return candidates;
}

FilterResult filter_feasible(const std::vector<Candidate>& candidates,
                             const domain::SLOConstraints& constraints,
                             double success_threshold) {
  FilterResult result;
  result.verdicts.reserve(candidates.size());
  for (const Candidate& candidate : candidates) {
    CandidateVerdict verdict;
    verdict.violates_deadline =
        candidate.predicted_duration_ms > constraints.deadline_ms;
    verdict.violates_budget =
        candidate.predicted_cost_usd > constraints.budget_usd;
    verdict.violates_success =
        candidate.predicted_success < success_threshold;
    verdict.kept = !verdict.violates_deadline && !verdict.violates_budget &&
                   !verdict.violates_success;
    if (verdict.kept) {
      result.kept.push_back(candidate);
    } else {
      if (verdict.violates_deadline) ++result.rejected_deadline;
      if (verdict.violates_budget) ++result.rejected_budget;
      if (verdict.violates_success) ++result.rejected_success;
    }
    result.verdicts.push_back(verdict);
  }
  return result;
}

std::vector<Candidate> pareto_front(const std::vector<Candidate>& candidates) {
  std::vector<Candidate> sorted = candidates;
  std::sort(sorted.begin(), sorted.end(),
            [](const Candidate& a, const Candidate& b) {
              return std::tie(a.predicted_cost_usd, a.predicted_duration_ms,
                              a.memory_mb) <
                     std::tie(b.predicted_cost_usd, b.predicted_duration_ms,
                              b.memory_mb);
            });
  std::vector<Candidate> front;
  double best_duration = std::numeric_limits<double>::infinity();
  for (const Candidate& candidate : sorted) {
    if (candidate.predicted_duration_ms < best_duration) {
      best_duration = candidate.predicted_duration_ms;
      front.push_back(candidate);
    } else if (!front.empty() &&
               candidate.predicted_duration_ms ==
                   front.back().predicted_duration_ms &&
               candidate.predicted_cost_usd ==
                   front.back().predicted_cost_usd) {
      // Objective-space duplicate of the last kept point.
      front.push_back(candidate);
    }
  }
  return front;
}

std::vector<double> scalarize(const std::vector<Candidate>& front,
                              const domain::Weights& weights) {
  domain::validate_weights(weights);
  std::vector<double> z(front.size(), 0.0);
  if (front.empty()) return z;
  double cost_min = std::numeric_limits<double>::infinity();
  double cost_max = -std::numeric_limits<double>::infinity();
  double dur_min = std::numeric_limits<double>::infinity();
  double dur_max = -std::numeric_limits<double>::infinity();
  for (const Candidate& candidate : front) {
    cost_min = std::min(cost_min, candidate.predicted_cost_usd);
    cost_max = std::max(cost_max, candidate.predicted_cost_usd);
    dur_min = std::min(dur_min, candidate.predicted_duration_ms);
    dur_max = std::max(dur_max, candidate.predicted_duration_ms);
  }
  const double cost_span = cost_max - cost_min;
  const double dur_span = dur_max - dur_min;
  for (std::size_t i = 0; i < front.size(); ++i) {
    const double cost_norm =
        cost_span > 0.0
            ? (front[i].predicted_cost_usd - cost_min) / cost_span
            : 0.0;
    const double dur_norm =
        dur_span > 0.0
            ? (front[i].predicted_duration_ms - dur_min) / dur_span
            : 0.0;
    z[i] = weights.cost * cost_norm + weights.time * dur_norm;
  }
  return z;
}

SelectionResult select_configuration(const std::vector<Candidate>& candidates,
                                     const domain::SLOConstraints& constraints,
                                     const domain::Weights& weights,
                                     double success_threshold,
                                     double z_epsilon) {
  SelectionResult result;
  result.candidate_count = candidates.size();
  FilterResult filtered =
      filter_feasible(candidates, constraints, success_threshold);
  result.feasible_count = filtered.kept.size();
  result.rejected_deadline = filtered.rejected_deadline;
  result.rejected_budget = filtered.rejected_budget;
  result.rejected_success = filtered.rejected_success;
  if (filtered.kept.empty()) return result;
  result.front = pareto_front(filtered.kept);
  result.z = scalarize(result.front, weights);
  const double z_min = *std::min_element(result.z.begin(), result.z.end());
  const Candidate* chosen = nullptr;
  for (std::size_t i = 0; i < result.front.size(); ++i) {
    if (result.z[i] > z_min + z_epsilon) continue;
    if (chosen == nullptr || result.front[i].memory_mb < chosen->memory_mb) {
      chosen = &result.front[i];
    }
  }
  result.chosen = *chosen;
  return result;
}

namespace {

nlohmann::ordered_json candidate_to_json(const Candidate& candidate) {
  nlohmann::ordered_json j;
  j["memory_mb"] = candidate.memory_mb;
  j["predicted_duration_ms"] = candidate.predicted_duration_ms;
  j["predicted_memory_used_mb"] = candidate.predicted_memory_used_mb;
  j["predicted_cost_usd"] = candidate.predicted_cost_usd;
  j["predicted_success"] = candidate.predicted_success;
  return j;
}

}  // namespace

nlohmann::ordered_json selection_to_json(const SelectionResult& result) {
  nlohmann::ordered_json j;
  if (result.chosen) {
    j["chosen"] = candidate_to_json(*result.chosen);
  } else {
    j["chosen"] = nullptr;
  }
  j["candidate_count"] = result.candidate_count;
  j["feasible_count"] = result.feasible_count;
  nlohmann::ordered_json rejected;
  rejected["deadline"] = result.rejected_deadline;
  rejected["budget"] = result.rejected_budget;
  rejected["success"] = result.rejected_success;
  j["rejected"] = std::move(rejected);
  nlohmann::ordered_json front = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < result.front.size(); ++i) {
    nlohmann::ordered_json member = candidate_to_json(result.front[i]);
    member["z"] = result.z[i];
    front.push_back(std::move(member));
  }
  j["front"] = std::move(front);
  return j;
}

}  // namespace memfigless::optimizer
