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

// Release gate for the toolkit. Nine end-to-end checks, each with a pinned
// tolerance and a wall-clock budget, printed one PASS/FAIL line apiece. The
// binary exits nonzero if any check fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "memfigless/domain.hpp"
#include "memfigless/forest.hpp"
#include "memfigless/manager.hpp"
#include "memfigless/optimizer.hpp"
#include "memfigless/profiler.hpp"
#include "memfigless/rng.hpp"
#include "memfigless/sim.hpp"

namespace {

using namespace memfigless;
namespace fs = std::filesystem;

// Per-workload artifacts built once by the training-quality check and reused
// by the savings and fallback checks.
struct Bundle {
  sim::FunctionModel model;
  profiler::ProfilePlan plan;
  profiler::Dataset dataset;
  forest::ModelArtifact artifact;
};

std::vector<Bundle> g_bundles;

struct Check {
  const char* name;
  double budget_s;
  std::function<bool(std::ostringstream&)> run;
};

bool expect(std::ostringstream& out, bool ok, const std::string& what) {
  if (!ok) out << "    violated: " << what << "\n";
  return ok;
}

// ---------------------------------------------------------------------------
// 1. Additive contributions reproduce predictions; the forest prediction is
//    exactly the mean of its trees.

bool check_prediction_identities(std::ostringstream& out) {
  sim::SimBackend backend({sim::preset_model("matmul")}, {}, 42);
  profiler::ProfilePlan plan;
  plan.function = "matmul";
  for (int i = 0; i < 12; ++i) {
    plan.payloads.push_back({{10.0 + 800.0 * i}});
  }
  plan.memory = {128, 3008, 512};
  plan.iterations = 2;
  plan.seed = 42;
  const profiler::Dataset dataset = profiler::run_profile(plan, backend);
  const forest::TrainingSet train = forest::TrainingSet::from_dataset(dataset);
  forest::Hyperparams params;
  params.n_estimators = 40;
  const forest::Forest model = forest::fit_forest(train, params, 7);

  bool ok = true;
  Rng rng(2024);
  for (int probe = 0; probe < 1000; ++probe) {
    const std::vector<double> x = {rng.uniform(100.0, 3100.0),
                                   rng.uniform(0.0, 11000.0)};
    const forest::Prediction direct = forest::predict(model, x);
    const forest::Contributions c =
        forest::predict_with_contributions(model, x);

    forest::Prediction tree_sum{0.0, 0.0, 0.0};
    for (const forest::RegressionTree& tree : model.trees) {
      const forest::Prediction leaf = forest::predict_tree(tree, x);
      for (int o = 0; o < forest::kNumOutputs; ++o) tree_sum[o] += leaf[o];
    }
    for (int o = 0; o < forest::kNumOutputs; ++o) {
      const double mean =
          tree_sum[o] / static_cast<double>(model.trees.size());
      ok &= expect(out, direct[o] == mean,
                   "forest output differs from the mean of its trees");

      double reassembled = c.bias[o];
      for (const forest::Prediction& f : c.per_feature) reassembled += f[o];
      const double tol = 1e-9 * std::max(1.0, std::abs(direct[o]));
      ok &= expect(out, std::abs(reassembled - direct[o]) <= tol,
                   "bias + contributions drifts from the prediction");
      ok &= expect(out, c.prediction[o] == direct[o],
                   "contribution report disagrees with predict()");
    }
    if (!ok) break;
  }
  return ok;
}

// ---------------------------------------------------------------------------
// 2. With bootstrap off, one unlimited tree memorizes unique rows: training
//    R^2 is 1 within 1e-12 on every output.

bool check_memorization(std::ostringstream& out) {
  forest::TrainingSet train;
  train.n_features = 2;
  for (int i = 0; i < 200; ++i) {
    const double x0 = static_cast<double>(i);
    const double x1 = static_cast<double>((i * 13) % 97);
    const double duration = 50.0 + 3.0 * i + 10.0 * std::sin(0.1 * i);
    const double memory = 10.0 + static_cast<double>((i * 29) % 50);
    const double success = (i % 5 == 0) ? 0.0 : 1.0;
    train.add(std::vector<double>{x0, x1},
              std::vector<double>{duration, memory, success});
  }

  forest::Hyperparams params;
  params.n_estimators = 1;
  params.bootstrap = false;
  const forest::Forest model = forest::fit_forest(train, params, 3);

  std::vector<forest::Prediction> predicted;
  std::vector<forest::Prediction> actual;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::span<const double> x(train.row(i), train.n_features);
    predicted.push_back(forest::predict(model, x));
    const double* t = train.target(i);
    actual.push_back({t[0], t[1], t[2]});
  }
  const auto scores = forest::score(predicted, actual);

  bool ok = true;
  for (int o = 0; o < forest::kNumOutputs; ++o) {
    const double r2 = scores[static_cast<std::size_t>(o)].r2_value();
    out << "    " << forest::kOutputNames[o] << " R^2 = " << r2 << "\n";
    ok &= expect(out, std::abs(r2 - 1.0) <= 1e-12,
                 "training R^2 deviates from 1 beyond 1e-12");
  }
  return ok;
}

// ---------------------------------------------------------------------------
// 3. The sort-and-scan front equals quadratic dominance filtering on 1000
//    random candidate sets, duplicates included.

bool check_front_equivalence(std::ostringstream& out) {
  Rng rng(91);
  bool ok = true;
  for (int round = 0; round < 1000 && ok; ++round) {
    const std::size_t n = 1 + rng.bounded(200);
    std::vector<optimizer::Candidate> pool;
    const bool discrete = (round % 2 == 0);
    for (std::size_t i = 0; i < n; ++i) {
      optimizer::Candidate c;
      c.memory_mb = 128 + 64 * static_cast<int>(rng.bounded(46));
      if (discrete) {
        c.predicted_cost_usd = 0.25 * static_cast<double>(rng.bounded(6));
        c.predicted_duration_ms = 0.25 * static_cast<double>(rng.bounded(6));
      } else {
        c.predicted_cost_usd = rng.unit();
        c.predicted_duration_ms = rng.unit();
      }
      c.predicted_success = 1.0;
      pool.push_back(c);
    }

    std::vector<optimizer::Candidate> brute;
    for (const optimizer::Candidate& c : pool) {
      bool dominated = false;
      for (const optimizer::Candidate& d : pool) {
        if (d.predicted_cost_usd <= c.predicted_cost_usd &&
            d.predicted_duration_ms <= c.predicted_duration_ms &&
            (d.predicted_cost_usd < c.predicted_cost_usd ||
             d.predicted_duration_ms < c.predicted_duration_ms)) {
          dominated = true;
          break;
        }
      }
      if (!dominated) brute.push_back(c);
    }

    using Key = std::tuple<double, double, int>;
    const auto keys = [](const std::vector<optimizer::Candidate>& v) {
      std::vector<Key> k;
      for (const optimizer::Candidate& c : v) {
        k.emplace_back(c.predicted_cost_usd, c.predicted_duration_ms,
                       c.memory_mb);
      }
      std::sort(k.begin(), k.end());
      return k;
    };
    ok &= expect(out, keys(optimizer::pareto_front(pool)) == keys(brute),
                 "front differs from quadratic filtering in round " +
                     std::to_string(round));
  }
  return ok;
}

// ---------------------------------------------------------------------------
// 4. Constraint filtering: kept candidates satisfy every predicate; every
//    rejection flag corresponds to a truly violated constraint, both ways.

bool check_filter_attribution(std::ostringstream& out) {
  Rng rng(17);
  bool ok = true;
  std::size_t pairs = 0;
  while (pairs < 10000 && ok) {
    domain::SLOConstraints cons;
    cons.deadline_ms = (rng.bounded(4) == 0)
                           ? std::numeric_limits<double>::infinity()
                           : rng.uniform(0.0, 1000.0);
    cons.budget_usd = (rng.bounded(4) == 0)
                          ? std::numeric_limits<double>::infinity()
                          : rng.uniform(0.0, 10.0);
    const double threshold = rng.unit();

    const std::size_t n = 1 + rng.bounded(20);
    std::vector<optimizer::Candidate> pool;
    for (std::size_t i = 0; i < n; ++i) {
      optimizer::Candidate c;
      c.memory_mb = 128 + static_cast<int>(rng.bounded(2881));
      c.predicted_duration_ms = rng.uniform(0.0, 1000.0);
      c.predicted_cost_usd = rng.uniform(0.0, 10.0);
      c.predicted_success = rng.unit();
      pool.push_back(c);
    }
    pairs += n;

    const optimizer::FilterResult result =
        optimizer::filter_feasible(pool, cons, threshold);
    for (std::size_t i = 0; i < n; ++i) {
      const optimizer::Candidate& c = pool[i];
      const optimizer::CandidateVerdict& v = result.verdicts[i];
      const bool over_deadline = c.predicted_duration_ms > cons.deadline_ms;
      const bool over_budget = c.predicted_cost_usd > cons.budget_usd;
      const bool under_success = c.predicted_success < threshold;
      ok &= expect(out, v.violates_deadline == over_deadline,
                   "deadline flag disagrees with the deadline predicate");
      ok &= expect(out, v.violates_budget == over_budget,
                   "budget flag disagrees with the budget predicate");
      ok &= expect(out, v.violates_success == under_success,
                   "success flag disagrees with the threshold predicate");
      ok &= expect(out,
                   v.kept == !(over_deadline || over_budget || under_success),
                   "kept bit contradicts the violation flags");
    }
  }
  out << "    checked " << pairs << " candidate/constraint pairs\n";
  return ok;
}

// ---------------------------------------------------------------------------
// 5. Training quality: for every bundled workload, profile the standard
//    sweep, tune on the default grid with 5-fold CV, and require held-out
//    R^2 >= 0.90 for duration and >= 0.70 for memory used.

bool check_training_quality(std::ostringstream& out) {
  bool ok = true;
  for (const sim::FunctionModel& model : sim::preset_models()) {
    sim::SimBackend backend({model}, {}, 42);
    profiler::ProfilePlan plan = profiler::standard_plan(model, 42);
    profiler::Dataset dataset = profiler::run_profile(plan, backend);
    const forest::TrainingSet train =
        forest::TrainingSet::from_dataset(dataset);
    forest::GridSearchResult result =
        forest::grid_search(train, forest::HyperGrid{}, 5, 42);

    const double r2_duration =
        result.report.outputs[forest::kOutputDuration].r2_value();
    const double r2_memory =
        result.report.outputs[forest::kOutputMemory].r2_value();
    out << "    " << model.name << ": duration R^2 = " << r2_duration
        << ", memory R^2 = " << r2_memory << "\n";
    ok &= expect(out, r2_duration >= 0.90,
                 model.name + ": held-out duration R^2 below 0.90");
    ok &= expect(out, r2_memory >= 0.70,
                 model.name + ": held-out memory R^2 below 0.70");

    forest::ModelArtifact artifact =
        forest::make_artifact(dataset, std::move(result));
    g_bundles.push_back(Bundle{model, std::move(plan), std::move(dataset),
                               std::move(artifact)});
  }
  return ok;
}

// ---------------------------------------------------------------------------
// 6. Online value: replaying the profiled payloads through the manager uses
//    at least 40% less cumulative memory than always allocating the maximum,
//    keeps noise-free deadline satisfaction at 90%+, and stays within 15% of
//    the noise-free exhaustive oracle.

bool check_savings_and_satisfaction(std::ostringstream& out) {
  if (g_bundles.empty()) {
    out << "    training artifacts unavailable\n";
    return false;
  }
  bool ok = true;
  for (const Bundle& bundle : g_bundles) {
    const domain::SLOConstraints cons =
        domain::derive_default_constraints(bundle.dataset.records, 1.5);
    const std::vector<domain::PayloadVector> stream =
        profiler::payload_points(bundle.plan);

    sim::SimBackend live({bundle.model}, {}, 7);
    manager::ManagerConfig config;
    config.constraints = cons;
    config.retrain_seed = 7;
    manager::Manager mgr(live, bundle.artifact, config);

    long long managed_total = 0;
    long long oracle_total = 0;
    int satisfied = 0;
    for (const domain::PayloadVector& payload : stream) {
      const manager::ExecutionResult r = mgr.handle_invocation(payload);
      managed_total += r.selected_memory_mb;
      const bool fits =
          r.selected_memory_mb >=
          sim::required_memory_mb(bundle.model, payload);
      const bool in_time =
          sim::ground_truth_duration_ms(bundle.model, payload,
                                        r.selected_memory_mb) <=
          cons.deadline_ms;
      if (fits && in_time) ++satisfied;

      oracle_total +=
          sim::optimal_config_oracle(bundle.model, payload, cons, 128, {})
              .value_or(domain::kMaxMemoryMb);
    }
    const long long static_total =
        static_cast<long long>(domain::kMaxMemoryMb) *
        static_cast<long long>(stream.size());
    const double savings =
        1.0 - static_cast<double>(managed_total) /
                  static_cast<double>(static_total);
    const double satisfaction =
        static_cast<double>(satisfied) / static_cast<double>(stream.size());
    const double vs_oracle = static_cast<double>(managed_total) /
                             static_cast<double>(oracle_total);
    out << "    " << bundle.model.name << ": savings " << savings * 100.0
        << "%, satisfaction " << satisfaction * 100.0 << "%, oracle ratio "
        << vs_oracle << "\n";
    ok &= expect(out, savings >= 0.40,
                 bundle.model.name + ": memory savings below 40%");
    ok &= expect(out, satisfaction >= 0.90,
                 bundle.model.name + ": deadline satisfaction below 90%");
    ok &= expect(out, vs_oracle <= 1.15,
                 bundle.model.name + ": more than 15% above the oracle");
  }
  return ok;
}

// ---------------------------------------------------------------------------
// 7. Range guards: payloads above the profiled region get the fallback
//    memory; payloads below it get exactly the smallest profiled payload's
//    selection.

bool check_range_guards(std::ostringstream& out) {
  if (g_bundles.empty()) {
    out << "    training artifacts unavailable\n";
    return false;
  }
  const Bundle& bundle = g_bundles.front();
  const domain::SLOConstraints cons =
      domain::derive_default_constraints(bundle.dataset.records, 1.5);
  manager::ManagerConfig config;
  config.constraints = cons;
  config.retrain_seed = 7;

  bool ok = true;

  sim::SimBackend live_above({bundle.model}, {}, 7);
  manager::Manager above(live_above, bundle.artifact, config);
  const domain::PayloadVector big{{bundle.artifact.payload_max[0] + 1000.0}};
  const manager::ExecutionResult r_above = above.handle_invocation(big);
  ok &= expect(out, r_above.payload_above_range && r_above.fallback,
               "above-range payload not flagged as fallback");
  ok &= expect(out,
               r_above.selected_memory_mb == config.fallback_memory.value,
               "above-range payload did not get the fallback memory");

  sim::SimBackend live_small({bundle.model}, {}, 7);
  manager::Manager small(live_small, bundle.artifact, config);
  const manager::ExecutionResult r_anchor =
      small.handle_invocation(bundle.artifact.smallest_payload);
  ok &= expect(out, !r_anchor.fallback,
               "smallest profiled payload should be in range");

  sim::SimBackend live_below({bundle.model}, {}, 7);
  manager::Manager below(live_below, bundle.artifact, config);
  const domain::PayloadVector tiny{
      {bundle.artifact.smallest_payload.values[0] / 2.0}};
  const manager::ExecutionResult r_below = below.handle_invocation(tiny);
  ok &= expect(out, r_below.payload_below_range && r_below.fallback,
               "below-range payload not flagged as fallback");
  ok &= expect(out, r_below.selected_memory_mb == r_anchor.selected_memory_mb,
               "below-range selection differs from the smallest payload's");
  return ok;
}

// ---------------------------------------------------------------------------
// 8. Running the command-line pipeline twice with the same seeds produces
//    byte-identical datasets, models, run logs, and reports.

int shell(const fs::path& dir, const std::string& args) {
  const std::string command = "cd '" + dir.string() + "' && '" +
                              MEMFIGLESS_CLI_PATH + "' " + args +
                              " > /dev/null 2> shell-err.txt";
  const int status = std::system(command.c_str());
  return (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool check_pipeline_determinism(std::ostringstream& out) {
  const fs::path base =
      fs::temp_directory_path() /
      ("memfigless-accept-" + std::to_string(::getpid()));
  const fs::path dirs[2] = {base / "a", base / "b"};
  bool ok = true;
  for (const fs::path& dir : dirs) {
    fs::create_directories(dir);
    {
      std::ofstream plan(dir / "plan.json");
      plan << R"({"function":"matmul",)"
           << R"("payloads":[[100],[300],[500],[700]],)"
           << R"("memory":{"min_mb":1024,"max_mb":1280,"step_mb":128},)"
           << R"("iterations":2,"seed":9})";
      std::ofstream grid(dir / "grid.json");
      grid << R"({"n_estimators":[5],"max_depth":[-1],)"
           << R"("min_samples_split":[2],"min_samples_leaf":[1]})";
      std::ofstream pay(dir / "payloads.json");
      pay << "[150, 400, 650]";
    }
    ok &= expect(out, shell(dir, "profile --plan plan.json --out ds.jsonl") ==
                          0,
                 "profile step failed");
    ok &= expect(out,
                 shell(dir, "train --dataset ds.jsonl --grid grid.json "
                            "--folds 3 --seed 4 --out model.bin") == 0,
                 "train step failed");
    ok &= expect(out,
                 shell(dir, "run --model model.bin --payloads payloads.json "
                            "--mem-step 64 --seed 7 --out run.jsonl") == 0,
                 "run step failed");
    ok &= expect(out, shell(dir, "report run.jsonl --out rep") == 0,
                 "report step failed");
    if (!ok) break;
  }
  if (ok) {
    for (const char* name : {"ds.jsonl", "model.bin", "run.jsonl",
                             "rep-summary.csv", "rep-detail.csv"}) {
      ok &= expect(out, slurp(dirs[0] / name) == slurp(dirs[1] / name),
                   std::string(name) + " differs between identical runs");
    }
  }
  fs::remove_all(base);
  return ok;
}

// ---------------------------------------------------------------------------
// 9. Scaling every cost by 1000 (price and budget alike) never changes which
//    memory is selected: the normalization makes the choice scale-free.

bool check_scale_invariance(std::ostringstream& out) {
  Rng rng(58);
  bool ok = true;
  for (int round = 0; round < 100 && ok; ++round) {
    const std::size_t n = 2 + rng.bounded(30);
    std::vector<optimizer::Candidate> pool;
    for (std::size_t i = 0; i < n; ++i) {
      optimizer::Candidate c;
      c.memory_mb = 128 + 64 * static_cast<int>(i);
      c.predicted_duration_ms = rng.uniform(1.0, 1000.0);
      c.predicted_cost_usd = rng.uniform(1e-7, 1e-4);
      c.predicted_success = 1.0;
      pool.push_back(c);
    }
    domain::SLOConstraints cons;
    cons.deadline_ms = rng.uniform(400.0, 1200.0);
    cons.budget_usd = (round % 2 == 0)
                          ? std::numeric_limits<double>::infinity()
                          : rng.uniform(1e-5, 1e-4);

    std::vector<optimizer::Candidate> scaled = pool;
    for (optimizer::Candidate& c : scaled) c.predicted_cost_usd *= 1000.0;
    domain::SLOConstraints scaled_cons = cons;
    scaled_cons.budget_usd *= 1000.0;

    const optimizer::SelectionResult a =
        optimizer::select_configuration(pool, cons, cons.weights);
    const optimizer::SelectionResult b =
        optimizer::select_configuration(scaled, scaled_cons,
                                        scaled_cons.weights);
    ok &= expect(out, a.chosen.has_value() == b.chosen.has_value(),
                 "feasibility changed under cost scaling in round " +
                     std::to_string(round));
    if (a.chosen && b.chosen) {
      ok &= expect(out, a.chosen->memory_mb == b.chosen->memory_mb,
                   "selected memory changed under cost scaling in round " +
                       std::to_string(round));
    }
  }
  return ok;
}

}  // namespace

int main() {
  const std::vector<Check> checks = {
      {"additive contributions reproduce forest predictions", 10.0,
       check_prediction_identities},
      {"an unrestricted single tree memorizes unique rows", 1.0,
       check_memorization},
      {"pareto front matches quadratic dominance filtering", 10.0,
       check_front_equivalence},
      {"constraint filter attributes every rejection", 5.0,
       check_filter_attribution},
      {"cross-validated accuracy on every workload preset", 300.0,
       check_training_quality},
      {"memory savings and deadline satisfaction per preset", 120.0,
       check_savings_and_satisfaction},
      {"out-of-range payloads fall back predictably", 1.0,
       check_range_guards},
      {"command-line pipeline reproduces byte-identical artifacts", 300.0,
       check_pipeline_determinism},
      {"cost rescaling never changes the selected memory", 5.0,
       check_scale_invariance},
  };

  int failures = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const Check& check = checks[i];
    std::ostringstream detail;
    bool ok = false;
    std::string error;
    const auto start = std::chrono::steady_clock::now();
    try {
      ok = check.run(detail);
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      start)
            .count();
    const bool in_budget = elapsed < check.budget_s;
    const bool pass = ok && in_budget && error.empty();
    std::printf("[%zu] %-58s %s  %6.2fs (budget %.0fs)\n", i + 1, check.name,
                pass ? "PASS" : "FAIL", elapsed, check.budget_s);
    const std::string text = detail.str();
    if (!text.empty()) std::fputs(text.c_str(), stdout);
    if (!error.empty()) std::printf("    exception: %s\n", error.c_str());
    if (ok && !in_budget) std::printf("    exceeded the time budget\n");
    if (!pass) ++failures;
  }
  std::printf("acceptance: %zu/%zu passed\n", checks.size() - failures,
              checks.size());
  return failures == 0 ? 0 : 1;
}
