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

// Command line front end. Five subcommands cover the whole workflow:
//
//   profile   run a payload x memory measurement plan on the simulator
//   train     fit and tune the regression forest on a profiled dataset
//   run       replay a payload stream through the online manager
//   baseline  replay the same stream under a fixed or oracle strategy
//   report    join run logs into comparison tables and CSV files
//
// `run` and `baseline` write a shared JSONL run-log format: one header
// object followed by one object per invocation. All output is rendered
// through fixed-format snprintf or ordered JSON, so identical flags produce
// byte-identical files and stdout.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "memfigless/domain.hpp"
#include "memfigless/errors.hpp"
#include "memfigless/forest.hpp"
#include "memfigless/io.hpp"
#include "memfigless/manager.hpp"
#include "memfigless/optimizer.hpp"
#include "memfigless/profiler.hpp"
#include "memfigless/sim.hpp"

namespace {

using nlohmann::ordered_json;
namespace domain = memfigless::domain;
namespace sim = memfigless::sim;
namespace profiler = memfigless::profiler;
namespace forest = memfigless::forest;
namespace optimizer = memfigless::optimizer;
namespace manager = memfigless::manager;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string strf(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// profile

struct ProfileOpts {
  std::string plan_path;
  std::string preset;
  std::string out = "dataset.jsonl";
  std::uint64_t seed = 42;
  bool seed_given = false;
};

int cmd_profile(const ProfileOpts& opts) {
  profiler::ProfilePlan plan;
  if (!opts.plan_path.empty()) {
    plan = profiler::read_plan(opts.plan_path);
    if (opts.seed_given) plan.seed = opts.seed;
  } else {
    if (opts.preset.empty())
      throw memfigless::SchemaError("profile needs --preset or --plan");
    plan = profiler::standard_plan(sim::preset_model(opts.preset), opts.seed);
  }
  sim::SimBackend backend(sim::preset_models(), domain::CostModel{}, plan.seed);
  profiler::Dataset dataset = profiler::run_profile(plan, backend);
  profiler::write_dataset(dataset, opts.out);
  std::cout << profiler::format_summary(profiler::summarize(dataset));
  std::cout << "dataset:   " << opts.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string dataset;
  std::string grid_path;
  std::string out = "model.bin";
  int folds = 5;
  std::uint64_t seed = 42;
};

int cmd_train(const TrainOpts& opts) {
  profiler::Dataset dataset = profiler::read_dataset(opts.dataset);
  forest::TrainingSet train = forest::TrainingSet::from_dataset(dataset);
  forest::HyperGrid grid;
  if (!opts.grid_path.empty()) grid = forest::read_grid(opts.grid_path);
  forest::GridSearchResult result =
      forest::grid_search(train, grid, opts.folds, opts.seed);
  forest::ModelArtifact artifact =
      forest::make_artifact(dataset, std::move(result));
  forest::save_model(artifact, opts.out);
  std::cout << forest::format_report(artifact.report);
  std::cout << "model: " << opts.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// run / baseline

struct RunOpts {
  std::string strategy = "memfigless";
  std::string model_path;
  std::string preset;
  std::string payloads_path;
  std::string out;
  std::uint64_t seed = 42;
  double deadline_ms = 0.0;
  bool deadline_given = false;
  double budget_usd = 0.0;
  bool budget_given = false;
  double slack = 1.5;
  double w_cost = 0.5;
  bool w_cost_given = false;
  double w_time = 0.5;
  bool w_time_given = false;
  int mem_step = -1;  // -1 resolves per strategy
  int monitoring_window = 200;
  int retrain_window = 1000;
  double success_threshold = 0.5;
  bool no_retrain = false;
  bool retune = false;
};

std::vector<domain::PayloadVector> read_payload_file(const std::string& path) {
  std::ifstream in = memfigless::open_input(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw memfigless::SchemaError(std::string("payload file: ") + e.what());
  }
  if (!j.is_array())
    throw memfigless::SchemaError("payload file: expected a JSON array");
  std::vector<domain::PayloadVector> stream;
  for (const auto& item : j) {
    domain::PayloadVector p;
    if (item.is_number()) {
      p.values.push_back(item.get<double>());
    } else if (item.is_array() && !item.empty()) {
      for (const auto& v : item) {
        if (!v.is_number())
          throw memfigless::SchemaError(
              "payload file: payload components must be numbers");
        p.values.push_back(v.get<double>());
      }
    } else {
      throw memfigless::SchemaError(
          "payload file: each entry must be a number or a non-empty array");
    }
    stream.push_back(std::move(p));
  }
  return stream;
}

// Satisfaction is judged on what the platform observed: the invocation must
// have succeeded, met the deadline on billed time, and stayed in budget.
bool slo_ok(const domain::InvocationRecord& record, double deadline_ms,
            double budget_usd) {
  return record.success() &&
         static_cast<double>(record.billed_duration_ms) <= deadline_ms &&
         record.cost_usd <= budget_usd;
}

struct RunTotals {
  std::size_t invocations = 0;
  long long cumulative_memory_mb = 0;
  double cumulative_cost_usd = 0.0;
  std::size_t slo_ok_count = 0;
  std::size_t fallback_count = 0;
};

std::string format_totals(const std::string& strategy,
                          const std::string& function, const RunTotals& t) {
  std::string out;
  out += "strategy: " + strategy + "\n";
  out += "function: " + function + "\n";
  out += strf("invocations: %zu\n", t.invocations);
  out += strf("cumulative_memory_mb: %lld\n", t.cumulative_memory_mb);
  out += strf("cumulative_cost_usd: %.8f\n", t.cumulative_cost_usd);
  const double n = t.invocations > 0 ? static_cast<double>(t.invocations) : 1.0;
  out += strf("slo_satisfaction: %.2f%%\n",
              100.0 * static_cast<double>(t.slo_ok_count) / n);
  out += strf("fallback_rate: %.2f%%\n",
              100.0 * static_cast<double>(t.fallback_count) / n);
  return out;
}

int cmd_run(const RunOpts& opts) {
  const bool needs_model = opts.strategy == "memfigless";
  std::optional<forest::ModelArtifact> artifact;
  if (!opts.model_path.empty()) {
    if (!std::filesystem::exists(opts.model_path))
      throw memfigless::ModelMissing("model file '" + opts.model_path +
                                     "' does not exist");
    artifact = forest::load_model(opts.model_path);
  } else if (needs_model) {
    throw memfigless::ModelMissing("strategy 'memfigless' needs --model");
  }

  std::string function = opts.preset;
  if (function.empty()) {
    if (!artifact)
      throw memfigless::SchemaError("--preset is required without --model");
    function = artifact->function;
  }
  const sim::FunctionModel model = sim::preset_model(function);

  // Missing deadline or budget flags fall back to `slack` times the training
  // means when a model is at hand, and to "unconstrained" otherwise.
  double deadline = opts.deadline_given
                        ? opts.deadline_ms
                        : (artifact ? opts.slack * artifact->train_mean_billed_ms
                                    : kInf);
  double budget = opts.budget_given
                      ? opts.budget_usd
                      : (artifact ? opts.slack * artifact->train_mean_cost_usd
                                  : kInf);
  domain::Weights weights;
  if (opts.w_cost_given && opts.w_time_given) {
    weights = {opts.w_cost, opts.w_time};
  } else if (opts.w_cost_given) {
    weights = {opts.w_cost, 1.0 - opts.w_cost};
  } else if (opts.w_time_given) {
    weights = {1.0 - opts.w_time, opts.w_time};
  }
  domain::validate_weights(weights);
  const domain::SLOConstraints constraints{deadline, budget, weights};
  domain::validate_constraints(constraints);

  int mem_step = opts.mem_step;
  if (mem_step < 0)
    mem_step = opts.strategy == "exhaustive-oracle" ? 128 : 1;

  std::vector<domain::PayloadVector> stream;
  if (!opts.payloads_path.empty()) {
    stream = read_payload_file(opts.payloads_path);
  } else {
    stream = profiler::payload_points(profiler::standard_plan(model, opts.seed));
  }
  if (stream.empty())
    throw memfigless::EmptySamples("payload stream is empty");

  std::string out_path = opts.out;
  if (out_path.empty()) out_path = "run-" + opts.strategy + ".jsonl";

  sim::SimBackend backend(sim::preset_models(), domain::CostModel{}, opts.seed);
  std::ofstream log = memfigless::open_output(out_path);

  ordered_json header;
  header["format"] = "memfigless-runlog";
  header["version"] = 1;
  header["strategy"] = opts.strategy;
  header["function"] = function;
  header["seed"] = opts.seed;
  header["deadline_ms"] =
      std::isfinite(deadline) ? ordered_json(deadline) : ordered_json(nullptr);
  header["budget_usd"] =
      std::isfinite(budget) ? ordered_json(budget) : ordered_json(nullptr);
  header["w_cost"] = weights.cost;
  header["w_time"] = weights.time;
  header["mem_step"] = mem_step;
  header["invocations"] = stream.size();
  log << header.dump() << "\n";

  RunTotals totals;
  auto emit = [&](const domain::InvocationRecord& record, int memory_mb,
                  bool fallback, const optimizer::SelectionResult* selection) {
    const bool ok = slo_ok(record, deadline, budget);
    ordered_json line;
    line["payload"] = record.payload.values;
    line["selected_memory"] = memory_mb;
    line["fallback"] = fallback;
    line["slo_ok"] = ok;
    line["record"] = domain::record_to_json(record);
    line["selection"] = selection ? optimizer::selection_to_json(*selection)
                                  : ordered_json(nullptr);
    log << line.dump() << "\n";
    ++totals.invocations;
    totals.cumulative_memory_mb += memory_mb;
    totals.cumulative_cost_usd += record.cost_usd;
    if (ok) ++totals.slo_ok_count;
    if (fallback) ++totals.fallback_count;
  };

  if (opts.strategy == "static-max" || opts.strategy == "static-default") {
    const int memory = opts.strategy == "static-max" ? domain::kMaxMemoryMb
                                                     : domain::kMinMemoryMb;
    for (const auto& payload : stream) {
      domain::InvocationRecord record =
          backend.invoke(function, payload, domain::make_memory(memory));
      emit(record, memory, false, nullptr);
    }
  } else if (opts.strategy == "exhaustive-oracle") {
    for (const auto& payload : stream) {
      std::optional<int> best = sim::optimal_config_oracle(
          model, payload, constraints, mem_step, backend.cost_model());
      const int memory = best.value_or(domain::kMaxMemoryMb);
      domain::InvocationRecord record =
          backend.invoke(function, payload, domain::make_memory(memory));
      emit(record, memory, !best.has_value(), nullptr);
    }
  } else {  // memfigless
    manager::ManagerConfig config;
    config.monitoring_window = opts.monitoring_window;
    config.retrain_window = opts.retrain_window;
    config.success_threshold = opts.success_threshold;
    config.constraints = constraints;
    config.mem_step_mb = mem_step;
    config.retrain_seed = opts.seed;
    config.retrain_enabled = !opts.no_retrain;
    config.retune_on_retrain = opts.retune;
    manager::Manager mgr(backend, *artifact, config);
    for (const auto& payload : stream) {
      manager::ExecutionResult result = mgr.handle_invocation(payload);
      emit(result.record, result.selected_memory_mb, result.fallback,
           &result.selection);
    }
  }

  std::cout << format_totals(opts.strategy, function, totals);
  std::cout << "log: " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportOpts {
  std::vector<std::string> logs;
  std::string out_prefix = "report";
};

struct LogLine {
  std::vector<double> payload;
  int selected_memory = 0;
  bool fallback = false;
  bool slo = false;
  std::int64_t billed_duration_ms = 0;
  double cost_usd = 0.0;
};

struct RunLog {
  std::string path;
  std::string strategy;
  std::string function;
  std::vector<LogLine> lines;
};

RunLog read_runlog(const std::string& path) {
  std::ifstream in = memfigless::open_input(path);
  std::string text;
  if (!std::getline(in, text))
    throw memfigless::SchemaError("run log '" + path + "' is empty");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw memfigless::SchemaError("run log '" + path + "': " + e.what());
  }
  if (!header.is_object() || !header.contains("format") ||
      header["format"] != "memfigless-runlog")
    throw memfigless::SchemaError("run log '" + path +
                                  "': missing runlog format tag");
  if (!header.contains("version") || header["version"] != 1)
    throw memfigless::VersionMismatch("run log '" + path +
                                      "': unsupported version");
  RunLog log;
  log.path = path;
  log.strategy = header.at("strategy").get<std::string>();
  log.function = header.at("function").get<std::string>();
  const auto expected = header.at("invocations").get<std::size_t>();
  while (std::getline(in, text)) {
    if (text.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw memfigless::SchemaError("run log '" + path + "': " + e.what());
    }
    LogLine line;
    try {
      line.payload = j.at("payload").get<std::vector<double>>();
      line.selected_memory = j.at("selected_memory").get<int>();
      line.fallback = j.at("fallback").get<bool>();
      line.slo = j.at("slo_ok").get<bool>();
      const auto& record = j.at("record");
      line.billed_duration_ms = record.at("billed_duration").get<std::int64_t>();
      line.cost_usd = record.at("cost_usd").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw memfigless::SchemaError("run log '" + path + "': " + e.what());
    }
    log.lines.push_back(std::move(line));
  }
  if (log.lines.size() != expected)
    throw memfigless::SchemaError(
        "run log '" + path + "': header promises " + std::to_string(expected) +
        " invocations, found " + std::to_string(log.lines.size()));
  return log;
}

int cmd_report(const ReportOpts& opts) {
  std::vector<RunLog> logs;
  for (const auto& path : opts.logs) logs.push_back(read_runlog(path));

  // Logs are only comparable when they replay the same stream against the
  // same function; any disagreement is a hard error.
  for (std::size_t i = 1; i < logs.size(); ++i) {
    if (logs[i].function != logs[0].function)
      throw memfigless::SchemaError(
          "run logs disagree on the function: '" + logs[0].function +
          "' vs '" + logs[i].function + "'");
    if (logs[i].lines.size() != logs[0].lines.size())
      throw memfigless::SchemaError(
          "run logs disagree on the invocation count: " + logs[0].path +
          " has " + std::to_string(logs[0].lines.size()) + ", " +
          logs[i].path + " has " + std::to_string(logs[i].lines.size()));
    for (std::size_t r = 0; r < logs[0].lines.size(); ++r) {
      if (logs[i].lines[r].payload != logs[0].lines[r].payload)
        throw memfigless::SchemaError(
            "run logs disagree on payload " + std::to_string(r) + ": " +
            logs[0].path + " vs " + logs[i].path);
    }
  }

  // Duplicate strategy names are disambiguated with a positional suffix.
  std::map<std::string, int> name_count;
  for (const auto& log : logs) ++name_count[log.strategy];
  std::map<std::string, int> name_seen;
  std::vector<std::string> labels;
  for (const auto& log : logs) {
    std::string label = log.strategy;
    if (name_count[log.strategy] > 1)
      label += "#" + std::to_string(++name_seen[log.strategy]);
    labels.push_back(label);
  }

  std::vector<RunTotals> totals(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) {
    for (const auto& line : logs[i].lines) {
      ++totals[i].invocations;
      totals[i].cumulative_memory_mb += line.selected_memory;
      totals[i].cumulative_cost_usd += line.cost_usd;
      if (line.slo) ++totals[i].slo_ok_count;
      if (line.fallback) ++totals[i].fallback_count;
    }
  }

  std::size_t width = 12;
  for (const auto& label : labels) width = std::max(width, label.size());
  const int w = static_cast<int>(width);

  std::string text;
  text += strf("%-*s %12s %15s %14s %8s %10s\n", w, "strategy", "invocations",
               "cum_memory_mb", "cum_cost_usd", "slo_pct", "fallback");
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const RunTotals& t = totals[i];
    const double n =
        t.invocations > 0 ? static_cast<double>(t.invocations) : 1.0;
    text += strf("%-*s %12zu %15lld %14.8f %7.2f%% %9.2f%%\n", w,
                 labels[i].c_str(), t.invocations, t.cumulative_memory_mb,
                 t.cumulative_cost_usd,
                 100.0 * static_cast<double>(t.slo_ok_count) / n,
                 100.0 * static_cast<double>(t.fallback_count) / n);
  }

  if (logs.size() > 1) {
    text += "\nmemory savings, percent (row uses less than column):\n";
    text += strf("%-*s", w, "");
    for (const auto& label : labels) text += strf(" %*s", w, label.c_str());
    text += "\n";
    for (std::size_t a = 0; a < logs.size(); ++a) {
      text += strf("%-*s", w, labels[a].c_str());
      for (std::size_t b = 0; b < logs.size(); ++b) {
        if (totals[b].cumulative_memory_mb <= 0) {
          text += strf(" %*s", w, "n/a");
        } else {
          const double savings =
              100.0 * (1.0 - static_cast<double>(totals[a].cumulative_memory_mb) /
                                 static_cast<double>(totals[b].cumulative_memory_mb));
          text += strf(" %*.2f", w, savings);
        }
      }
      text += "\n";
    }
  }

  const std::size_t n_lines = logs[0].lines.size();
  if (n_lines <= 10) {
    text += "\nper-invocation detail:\n";
    for (std::size_t r = 0; r < n_lines; ++r) {
      std::string payload;
      for (double v : logs[0].lines[r].payload) {
        if (!payload.empty()) payload += " ";
        payload += strf("%.10g", v);
      }
      text += strf("  [%zu] payload %s\n", r, payload.c_str());
      for (std::size_t i = 0; i < logs.size(); ++i) {
        const LogLine& line = logs[i].lines[r];
        text += strf("    %-*s %4d MB  %6lld ms  $%.8f  %s%s\n", w,
                     labels[i].c_str(), line.selected_memory,
                     static_cast<long long>(line.billed_duration_ms),
                     line.cost_usd, line.slo ? "slo-ok" : "slo-miss",
                     line.fallback ? "  fallback" : "");
      }
    }
  }

  std::cout << text;

  const std::string summary_path = opts.out_prefix + "-summary.csv";
  {
    std::ofstream csv = memfigless::open_output(summary_path);
    csv << "strategy,invocations,cumulative_memory_mb,cumulative_cost_usd,"
           "slo_satisfaction_pct,fallback_rate_pct\n";
    for (std::size_t i = 0; i < logs.size(); ++i) {
      const RunTotals& t = totals[i];
      const double n =
          t.invocations > 0 ? static_cast<double>(t.invocations) : 1.0;
      csv << strf("%s,%zu,%lld,%.8f,%.2f,%.2f\n", labels[i].c_str(),
                  t.invocations, t.cumulative_memory_mb, t.cumulative_cost_usd,
                  100.0 * static_cast<double>(t.slo_ok_count) / n,
                  100.0 * static_cast<double>(t.fallback_count) / n);
    }
  }
  const std::string detail_path = opts.out_prefix + "-detail.csv";
  {
    std::ofstream csv = memfigless::open_output(detail_path);
    csv << "index,strategy,payload,selected_memory_mb,billed_duration_ms,"
           "cost_usd,slo_ok,fallback\n";
    for (std::size_t r = 0; r < n_lines; ++r) {
      for (std::size_t i = 0; i < logs.size(); ++i) {
        const LogLine& line = logs[i].lines[r];
        std::string payload;
        for (double v : line.payload) {
          if (!payload.empty()) payload += " ";
          payload += strf("%.10g", v);
        }
        csv << strf("%zu,%s,%s,%d,%lld,%.8f,%d,%d\n", r, labels[i].c_str(),
                    payload.c_str(), line.selected_memory,
                    static_cast<long long>(line.billed_duration_ms),
                    line.cost_usd, line.slo ? 1 : 0, line.fallback ? 1 : 0);
      }
    }
  }
  std::cout << "summary: " << summary_path << "\n";
  std::cout << "detail:  " << detail_path << "\n";
  return 0;
}

void add_run_options(CLI::App* cmd, RunOpts& opts, bool model_required) {
  auto* model = cmd->add_option("--model", opts.model_path,
                                "Trained model file");
  model->envname("MEMFIGLESS_MODEL");
  if (model_required) model->required();
  cmd->add_option("--preset", opts.preset,
                  "Workload preset (defaults to the model's function)")
      ->envname("MEMFIGLESS_PRESET");
  cmd->add_option("--payloads", opts.payloads_path,
                  "JSON array of payloads (defaults to the profiling grid)")
      ->envname("MEMFIGLESS_PAYLOADS");
  cmd->add_option("--seed", opts.seed, "Simulator and retraining seed")
      ->envname("MEMFIGLESS_SEED");
  cmd->add_option("--deadline-ms", opts.deadline_ms,
                  "Deadline on billed duration")
      ->envname("MEMFIGLESS_DEADLINE_MS");
  cmd->add_option("--budget-usd", opts.budget_usd, "Per-invocation budget")
      ->envname("MEMFIGLESS_BUDGET_USD");
  cmd->add_option("--slack", opts.slack,
                  "Default-constraint multiplier over training means")
      ->envname("MEMFIGLESS_SLACK");
  cmd->add_option("--w-cost", opts.w_cost, "Cost objective weight")
      ->envname("MEMFIGLESS_W_COST");
  cmd->add_option("--w-time", opts.w_time, "Duration objective weight")
      ->envname("MEMFIGLESS_W_TIME");
  cmd->add_option("--mem-step", opts.mem_step,
                  "Candidate memory step in MB (default: 1, oracle: 128)")
      ->envname("MEMFIGLESS_MEM_STEP");
  cmd->add_option("--monitoring-window", opts.monitoring_window,
                  "Invocations between retraining checks")
      ->envname("MEMFIGLESS_MONITORING_WINDOW");
  cmd->add_option("--retrain-window", opts.retrain_window,
                  "Recent records used for retraining")
      ->envname("MEMFIGLESS_RETRAIN_WINDOW");
  cmd->add_option("--success-threshold", opts.success_threshold,
                  "Minimum predicted success probability")
      ->envname("MEMFIGLESS_SUCCESS_THRESHOLD");
  cmd->add_flag("--no-retrain", opts.no_retrain, "Disable online retraining");
  cmd->add_flag("--retune", opts.retune,
                "Repeat the hyperparameter search when retraining");
  cmd->add_option("--out", opts.out,
                  "Run log path (default: run-<strategy>.jsonl)")
      ->envname("MEMFIGLESS_OUT");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory right-sizing for serverless functions"};
  app.require_subcommand(1);

  ProfileOpts profile_opts;
  CLI::App* profile =
      app.add_subcommand("profile", "Measure a function across payloads and "
                                    "memory sizes on the simulator");
  profile->add_option("--plan", profile_opts.plan_path, "Profiling plan JSON")
      ->envname("MEMFIGLESS_PLAN");
  profile->add_option("--preset", profile_opts.preset,
                      "Workload preset to profile with the standard plan")
      ->envname("MEMFIGLESS_PRESET");
  auto* profile_seed =
      profile->add_option("--seed", profile_opts.seed,
                          "Plan seed (overrides the seed in --plan)");
  profile_seed->envname("MEMFIGLESS_SEED");
  profile->add_option("--out", profile_opts.out, "Dataset output path")
      ->envname("MEMFIGLESS_OUT");

  TrainOpts train_opts;
  CLI::App* train = app.add_subcommand(
      "train", "Tune and fit the regression forest on a dataset");
  train->add_option("--dataset", train_opts.dataset, "Profiled dataset")
      ->required()
      ->envname("MEMFIGLESS_DATASET");
  train->add_option("--grid", train_opts.grid_path,
                    "Hyperparameter grid JSON (defaults to the built-in grid)")
      ->envname("MEMFIGLESS_GRID");
  train->add_option("--folds", train_opts.folds, "Cross-validation folds")
      ->envname("MEMFIGLESS_FOLDS");
  train->add_option("--seed", train_opts.seed, "Training seed")
      ->envname("MEMFIGLESS_SEED");
  train->add_option("--out", train_opts.out, "Model output path")
      ->envname("MEMFIGLESS_OUT");

  RunOpts run_opts;
  CLI::App* run = app.add_subcommand(
      "run", "Replay a payload stream through the online manager");
  add_run_options(run, run_opts, true);

  RunOpts baseline_opts;
  CLI::App* baseline = app.add_subcommand(
      "baseline", "Replay a payload stream under a comparison strategy");
  baseline
      ->add_option("--strategy", baseline_opts.strategy,
                   "static-max | static-default | exhaustive-oracle | "
                   "memfigless")
      ->required()
      ->check(CLI::IsMember({"static-max", "static-default",
                             "exhaustive-oracle", "memfigless"}))
      ->envname("MEMFIGLESS_STRATEGY");
  add_run_options(baseline, baseline_opts, false);

  ReportOpts report_opts;
  CLI::App* report = app.add_subcommand(
      "report", "Compare runs of the same stream and write CSV tables");
  report->add_option("logs", report_opts.logs, "Run log files")
      ->required()
      ->expected(-1);
  report->add_option("--out", report_opts.out_prefix, "CSV filename prefix")
      ->envname("MEMFIGLESS_OUT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  profile_opts.seed_given = profile_seed->count() > 0;
  auto mark_given = [](CLI::App* cmd, RunOpts& opts) {
    opts.deadline_given = cmd->count("--deadline-ms") > 0;
    opts.budget_given = cmd->count("--budget-usd") > 0;
    opts.w_cost_given = cmd->count("--w-cost") > 0;
    opts.w_time_given = cmd->count("--w-time") > 0;
  };
  mark_given(run, run_opts);
  mark_given(baseline, baseline_opts);

  try {
    if (profile->parsed()) return cmd_profile(profile_opts);
    if (train->parsed()) return cmd_train(train_opts);
    if (run->parsed()) return cmd_run(run_opts);
    if (baseline->parsed()) return cmd_run(baseline_opts);
    if (report->parsed()) return cmd_report(report_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
