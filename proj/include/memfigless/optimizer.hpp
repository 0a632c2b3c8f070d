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

#include <cstddef>
#include <optional>
#include <vector>

#include "memfigless/domain.hpp"
#include "memfigless/forest.hpp"

namespace memfigless::optimizer {

/// One memory size under consideration, with the model's outlook for it.
/// Cost always derives from the predicted duration at this memory via the
/// billing formula, never independently.
struct Candidate {
  int memory_mb = 0;
  double predicted_duration_ms = 0.0;
  double predicted_memory_used_mb = 0.0;
  double predicted_cost_usd = 0.0;
  double predicted_success = 0.0;
};

/// One candidate per memory size min, min+step, ..., up to max, predictions
/// taken from the forest at [memory, payload...].
std::vector<Candidate> enumerate_candidates(const forest::Forest& model,
                                            const domain::PayloadVector& payload,
                                            int mem_min_mb, int mem_max_mb,
                                            int step_mb,
                                            const domain::CostModel& cost_model);

/// Constraint check outcome for one candidate. A rejected candidate has at
/// least one violation flag set; multiple may be.
struct CandidateVerdict {
  bool kept = false;
  bool violates_deadline = false;
  bool violates_budget = false;
  bool violates_success = false;
};

struct FilterResult {
  std::vector<Candidate> kept;            // input order preserved
  std::vector<CandidateVerdict> verdicts; // parallel to the input
  std::size_t rejected_deadline = 0;
  std::size_t rejected_budget = 0;
  std::size_t rejected_success = 0;
};

/// Keeps candidates meeting the deadline, the budget, and the success
/// threshold; every rejection is attributed to each constraint it violates.
FilterResult filter_feasible(const std::vector<Candidate>& candidates,
                             const domain::SLOConstraints& constraints,
                             double success_threshold);

/// Non-dominated candidates under minimization of (cost, duration), sorted
/// by cost then duration. Candidates equal in both objectives are all
/// retained.
std::vector<Candidate> pareto_front(const std::vector<Candidate>& candidates);

/// Weighted aggregation scores over a front: each objective is min-max
/// normalized across the front (a flat objective contributes 0), then
/// combined as w_cost * cost~ + w_time * duration~. Lower is better.
std::vector<double> scalarize(const std::vector<Candidate>& front,
                              const domain::Weights& weights);

struct SelectionResult {
  std::optional<Candidate> chosen;  // empty when nothing is feasible
  std::vector<Candidate> front;
  std::vector<double> z;            // parallel to front
  std::size_t candidate_count = 0;
  std::size_t feasible_count = 0;
  std::size_t rejected_deadline = 0;
  std::size_t rejected_budget = 0;
  std::size_t rejected_success = 0;
};

inline constexpr double kZEpsilon = 1e-9;

/// Full pipeline: filter, front, scalarize, then the lowest memory among
/// front members whose score is within z_epsilon of the minimum. An empty
/// feasible set yields no chosen candidate; callers fall back.
SelectionResult select_configuration(const std::vector<Candidate>& candidates,
                                     const domain::SLOConstraints& constraints,
                                     const domain::Weights& weights,
                                     double success_threshold = 0.5,
                                     double z_epsilon = kZEpsilon);

nlohmann::ordered_json selection_to_json(const SelectionResult& result);

}  // namespace memfigless::optimizer
