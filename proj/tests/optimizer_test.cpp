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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <tuple>

#include "memfigless/optimizer.hpp"
#include "memfigless/rng.hpp"

using namespace memfigless;
using namespace memfigless::optimizer;

namespace {

Candidate cand(int memory, double cost, double duration,
               double success = 1.0) {
  Candidate c;
  c.memory_mb = memory;
  c.predicted_cost_usd = cost;
  c.predicted_duration_ms = duration;
  c.predicted_memory_used_mb = memory / 2.0;
  c.predicted_success = success;
  return c;
}

domain::SLOConstraints constraints(double deadline, double budget) {
  domain::SLOConstraints c;
  c.deadline_ms = deadline;
  c.budget_usd = budget;
  c.weights = domain::Weights{0.5, 0.5};
  return c;
}

// Definition-level dominance check used to cross-validate pareto_front.
bool dominates(const Candidate& a, const Candidate& b) {
  const bool no_worse = a.predicted_cost_usd <= b.predicted_cost_usd &&
                        a.predicted_duration_ms <= b.predicted_duration_ms;
  const bool better = a.predicted_cost_usd < b.predicted_cost_usd ||
                      a.predicted_duration_ms < b.predicted_duration_ms;
  return no_worse && better;
}

std::vector<std::tuple<double, double, int>> keyed(
    const std::vector<Candidate>& candidates) {
  std::vector<std::tuple<double, double, int>> keys;
  for (const Candidate& c : candidates) {
    keys.emplace_back(c.predicted_cost_usd, c.predicted_duration_ms,
                      c.memory_mb);
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace

TEST_CASE("candidate enumeration sweeps the grid and prices predictions") {
  // Train a small forest so predictions are well-defined but arbitrary.
  forest::TrainingSet train;
  for (int i = 0; i < 30; ++i) {
    const double x[] = {128.0 + 96.0 * i, static_cast<double>(i % 5)};
    const double y[] = {200.0 - 3.0 * i, 80.0 + i, i % 4 == 0 ? 0.0 : 1.0};
    train.add(x, y);
  }
  forest::Hyperparams params;
  params.n_estimators = 5;
  const forest::Forest model = forest::fit_forest(train, params, 21);

  domain::PayloadVector payload;
  payload.values = {3.0};
  const domain::CostModel pricing;
  const std::vector<Candidate> candidates =
      enumerate_candidates(model, payload, 256, 1024, 256, pricing);
  REQUIRE(candidates.size() == 4);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    CHECK(c.memory_mb == 256 + 256 * static_cast<int>(i));
    const double x[] = {static_cast<double>(c.memory_mb), 3.0};
    const forest::Prediction p = forest::predict(model, x);
    CHECK(c.predicted_duration_ms == p[forest::kOutputDuration]);
    CHECK(c.predicted_memory_used_mb == p[forest::kOutputMemory]);
    CHECK(c.predicted_success == p[forest::kOutputSuccess]);
    // Cost is derived from the predicted duration, not predicted anew.
    CHECK(c.predicted_cost_usd ==
          domain::compute_cost(c.predicted_duration_ms, c.memory_mb, pricing)
              .cost_usd);
  }

  CHECK_THROWS_AS(enumerate_candidates(model, payload, 256, 1024, 0, pricing),
                  SchemaError);
  CHECK_THROWS_AS(enumerate_candidates(model, payload, 1024, 256, 128, pricing),
                  EmptyGrid);
  CHECK_THROWS_AS(enumerate_candidates(model, payload, 64, 1024, 128, pricing),
                  MemoryOutOfRange);
  CHECK_THROWS_AS(
      enumerate_candidates(model, payload, 256, 4096, 128, pricing),
      MemoryOutOfRange);
}

TEST_CASE("the feasibility filter attributes every violation") {
  const std::vector<Candidate> candidates = {
      cand(256, 1e-6, 50.0, 0.9),   // feasible
      cand(512, 1e-6, 500.0, 0.9),  // too slow
      cand(768, 1e-2, 50.0, 0.9),   // too expensive
      cand(1024, 1e-6, 50.0, 0.3),  // too failure-prone
      cand(1280, 1e-2, 500.0, 0.3), // violates all three
  };
  const FilterResult result =
      filter_feasible(candidates, constraints(100.0, 1e-3), 0.5);
  REQUIRE(result.kept.size() == 1);
  CHECK(result.kept[0].memory_mb == 256);
  REQUIRE(result.verdicts.size() == candidates.size());
  CHECK(result.verdicts[0].kept);
  CHECK_FALSE(result.verdicts[0].violates_deadline);
  CHECK(result.verdicts[1].violates_deadline);
  CHECK_FALSE(result.verdicts[1].violates_budget);
  CHECK(result.verdicts[2].violates_budget);
  CHECK(result.verdicts[3].violates_success);
  CHECK(result.verdicts[4].violates_deadline);
  CHECK(result.verdicts[4].violates_budget);
  CHECK(result.verdicts[4].violates_success);
  CHECK_FALSE(result.verdicts[4].kept);
  CHECK(result.rejected_deadline == 2);
  CHECK(result.rejected_budget == 2);
  CHECK(result.rejected_success == 2);
}

TEST_CASE("constraint boundaries are inclusive") {
  const std::vector<Candidate> onEdge = {
      cand(256, 1e-3, 100.0, 0.5),  // all three exactly at the limit
  };
  const FilterResult result =
      filter_feasible(onEdge, constraints(100.0, 1e-3), 0.5);
  CHECK(result.kept.size() == 1);
  CHECK(result.rejected_deadline == 0);
  CHECK(result.rejected_budget == 0);
  CHECK(result.rejected_success == 0);
}

TEST_CASE("the front keeps non-dominated candidates including duplicates") {
  const std::vector<Candidate> candidates = {
      cand(512, 2.0, 6.0),   // on the front
      cand(256, 1.0, 10.0),  // on the front
      cand(640, 2.5, 7.0),   // dominated by (2, 6)
      cand(1024, 4.0, 5.0),  // on the front
      cand(384, 1.0, 10.0),  // duplicate objectives, retained
      cand(768, 2.0, 8.0),   // equal cost, worse duration: dominated
  };
  const std::vector<Candidate> front = pareto_front(candidates);
  REQUIRE(front.size() == 4);
  // Sorted by cost, then duration.
  CHECK(front[0].predicted_cost_usd == 1.0);
  CHECK(front[1].predicted_cost_usd == 1.0);
  CHECK(front[2].predicted_cost_usd == 2.0);
  CHECK(front[2].predicted_duration_ms == 6.0);
  CHECK(front[3].predicted_cost_usd == 4.0);
  // Both copies of the duplicate survive.
  std::vector<int> duplicate_memories;
  for (const Candidate& c : front) {
    if (c.predicted_cost_usd == 1.0) duplicate_memories.push_back(c.memory_mb);
  }
  std::sort(duplicate_memories.begin(), duplicate_memories.end());
  CHECK(duplicate_memories == std::vector<int>{256, 384});

  CHECK(pareto_front({}).empty());
}

TEST_CASE("the scan agrees with the quadratic dominance definition") {
  Rng rng(2024);
  for (int round = 0; round < 300; ++round) {
    std::vector<Candidate> candidates;
    const int n = 1 + static_cast<int>(rng.bounded(40));
    for (int i = 0; i < n; ++i) {
      // A small discrete value grid forces ties and exact duplicates.
      candidates.push_back(cand(128 + 64 * i,
                                static_cast<double>(rng.bounded(6)),
                                static_cast<double>(rng.bounded(6))));
    }
    std::vector<Candidate> brute;
    for (const Candidate& c : candidates) {
      bool dominated = false;
      for (const Candidate& other : candidates) {
        if (dominates(other, c)) {
          dominated = true;
          break;
        }
      }
      if (!dominated) brute.push_back(c);
    }
    CHECK(keyed(pareto_front(candidates)) == keyed(brute));
  }
}

TEST_CASE("scalarization normalizes each objective over the front") {
  const std::vector<Candidate> front = {
      cand(256, 1.0, 10.0), cand(512, 2.0, 6.0), cand(1024, 4.0, 5.0)};
  const std::vector<double> z = scalarize(front, domain::Weights{0.5, 0.5});
  REQUIRE(z.size() == 3);
  CHECK(z[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(z[1] == doctest::Approx(0.26666666666666667).epsilon(1e-12));
  CHECK(z[2] == doctest::Approx(0.5).epsilon(1e-12));

  // A flat objective contributes nothing rather than dividing by zero.
  const std::vector<Candidate> flat_duration = {cand(256, 1.0, 5.0),
                                                cand(512, 2.0, 5.0)};
  const std::vector<double> zf =
      scalarize(flat_duration, domain::Weights{0.5, 0.5});
  CHECK(zf[0] == 0.0);
  CHECK(zf[1] == 0.5);

  // Pure cost weighting reduces to normalized cost.
  const std::vector<double> zc = scalarize(front, domain::Weights{1.0, 0.0});
  CHECK(zc[0] == 0.0);
  CHECK(zc[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(zc[2] == 1.0);

  CHECK(scalarize({}, domain::Weights{0.5, 0.5}).empty());
}

TEST_CASE("selection takes the best score and break ties on lower memory") {
  // The middle candidate wins the weighted aggregate outright.
  const std::vector<Candidate> spread = {
      cand(256, 1.0, 10.0), cand(512, 2.0, 6.0), cand(1024, 4.0, 5.0)};
  SelectionResult r =
      select_configuration(spread, constraints(100.0, 10.0),
                           domain::Weights{0.5, 0.5});
  REQUIRE(r.chosen.has_value());
  CHECK(r.chosen->memory_mb == 512);
  CHECK(r.candidate_count == 3);
  CHECK(r.feasible_count == 3);
  CHECK(r.front.size() == 3);
  CHECK(r.z.size() == 3);

  // Identical objectives: scores tie at zero, the smaller memory wins even
  // when listed later.
  const std::vector<Candidate> tied = {cand(512, 1.0, 5.0),
                                       cand(256, 1.0, 5.0)};
  r = select_configuration(tied, constraints(100.0, 10.0),
                           domain::Weights{0.5, 0.5});
  REQUIRE(r.chosen.has_value());
  CHECK(r.chosen->memory_mb == 256);

  // On a two-point front with distinct objectives both ends score 0.5, so
  // the smaller memory wins even when it is the expensive one.
  const std::vector<Candidate> two_ends = {cand(512, 1.0, 10.0),
                                           cand(256, 2.0, 5.0)};
  r = select_configuration(two_ends, constraints(100.0, 10.0),
                           domain::Weights{0.5, 0.5});
  REQUIRE(r.chosen.has_value());
  CHECK(r.chosen->memory_mb == 256);

  // Scores within z_epsilon of the minimum count as tied: the third point
  // trails the true minimum by 4e-10 and takes the selection on memory.
  const std::vector<Candidate> nearly = {
      cand(512, 0.0, 1.0), cand(1024, 0.3, 0.6),
      cand(256, 0.7, 0.2 + 8e-10), cand(2048, 1.0, 0.0)};
  r = select_configuration(nearly, constraints(100.0, 10.0),
                           domain::Weights{0.5, 0.5});
  REQUIRE(r.chosen.has_value());
  CHECK(r.chosen->memory_mb == 256);
}

TEST_CASE("an infeasible pool yields no selection but full diagnostics") {
  const std::vector<Candidate> candidates = {cand(256, 1.0, 500.0, 0.9),
                                             cand(512, 2.0, 600.0, 0.2)};
  const SelectionResult r =
      select_configuration(candidates, constraints(100.0, 10.0),
                           domain::Weights{0.5, 0.5});
  CHECK_FALSE(r.chosen.has_value());
  CHECK(r.front.empty());
  CHECK(r.z.empty());
  CHECK(r.candidate_count == 2);
  CHECK(r.feasible_count == 0);
  CHECK(r.rejected_deadline == 2);
  CHECK(r.rejected_success == 1);
}

TEST_CASE("uniform cost rescaling leaves the selection unchanged") {
  Rng rng(7);
  for (int round = 0; round < 50; ++round) {
    std::vector<Candidate> base;
    const int n = 2 + static_cast<int>(rng.bounded(20));
    for (int i = 0; i < n; ++i) {
      base.push_back(cand(128 + 64 * i, rng.uniform(1e-7, 1e-5),
                          rng.uniform(10.0, 500.0), 1.0));
    }
    std::vector<Candidate> scaled = base;
    for (Candidate& c : scaled) c.predicted_cost_usd *= 1000.0;

    const domain::SLOConstraints loose = constraints(1e6, 1.0);
    const SelectionResult a =
        select_configuration(base, loose, domain::Weights{0.5, 0.5});
    const SelectionResult b =
        select_configuration(scaled, loose, domain::Weights{0.5, 0.5});
    REQUIRE(a.chosen.has_value());
    REQUIRE(b.chosen.has_value());
    CHECK(a.chosen->memory_mb == b.chosen->memory_mb);
  }
}

TEST_CASE("selection reports serialize with their diagnostics") {
  const std::vector<Candidate> candidates = {cand(256, 1.0, 10.0),
                                             cand(512, 2.0, 6.0)};
  const SelectionResult r =
      select_configuration(candidates, constraints(100.0, 10.0),
                           domain::Weights{0.5, 0.5});
  const nlohmann::ordered_json j = selection_to_json(r);
  CHECK(j.contains("chosen"));
  CHECK(j.contains("candidate_count"));
  CHECK(j.contains("feasible_count"));
  CHECK(j.at("rejected").contains("deadline"));
  CHECK(j.at("rejected").contains("budget"));
  CHECK(j.at("rejected").contains("success"));
  REQUIRE(j.at("front").is_array());
  CHECK(j.at("front").size() == r.front.size());
  CHECK(j.at("front").at(0).contains("z"));
  CHECK(j.at("chosen").at("memory_mb").get<int>() == r.chosen->memory_mb);

  SelectionResult empty;
  const nlohmann::ordered_json je = selection_to_json(empty);
  CHECK(je.at("chosen").is_null());
}
