// Copyright 2026 The ChaosLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// chaoslab: validate configs, run experiments, drive the scheduler, replay
// reports. Humans read standard error; standard output carries only
// machine-readable summaries. Exit codes: 0 upheld/ok, 1 hypothesis refuted,
// 2 aborted on guardrail, 3 config error, 4 internal error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chaoslab/chaoslab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUpheld = 0;
constexpr int kExitRefuted = 1;
constexpr int kExitAborted = 2;
constexpr int kExitConfig = 3;
constexpr int kExitInternal = 4;

std::string dir_of(const std::string& path) {
  fs::path p(path);
  auto parent = p.parent_path();
  return parent.empty() ? std::string(".") : parent.string();
}

std::string output_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("CHAOSLAB_OUT"); env && *env) return env;
  return ".";
}

int verdict_exit_code(chaoslab::experiment::VerdictStatus s) {
  switch (s) {
    case chaoslab::experiment::VerdictStatus::Upheld: return kExitUpheld;
    case chaoslab::experiment::VerdictStatus::Refuted: return kExitRefuted;
    case chaoslab::experiment::VerdictStatus::Aborted: return kExitAborted;
  }
  return kExitInternal;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw chaoslab::ConfigError(path, "cannot open for writing");
  out << content;
}

enum class DocKind { Topology, Experiment, Schedules, Report };

DocKind detect_kind(const json& doc, const std::string& path) {
  if (doc.contains("services") && doc.contains("regions")) return DocKind::Topology;
  if (doc.contains("spec_snapshot")) return DocKind::Report;
  if (doc.contains("schedules")) return DocKind::Schedules;
  if (doc.contains("topology")) return DocKind::Experiment;
  throw chaoslab::ConfigError(path, "unrecognized document type");
}

void print_verdict_summary(const chaoslab::experiment::ExperimentReport& report) {
  const auto& v = report.verdict;
  std::cerr << "experiment  : " << report.spec.name << "\n"
            << "verdict     : " << chaoslab::experiment::verdict_status_name(v.status)
            << "\n"
            << "mode        : "
            << (v.mode == chaoslab::experiment::EvalMode::GroupPermutation
                    ? "group permutation"
                    : "baseline deviation")
            << "\n"
            << "effect      : " << v.effect << "\n";
  if (std::isfinite(v.p_value)) std::cerr << "p-value     : " << v.p_value << "\n";
  std::cerr << "groups      : control " << report.control_size << ", experiment "
            << report.experiment_size << "\n"
            << "windows     : " << report.control_sps.samples.size() << " x "
            << report.spec.window_ms << " ms\n";
  if (v.abort) {
    std::cerr << "aborted at  : " << v.abort->at_ms << " ms\n";
    for (const auto& b : v.abort->breaches)
      std::cerr << "  breach    : " << b.metric_id << " observed " << b.observed
                << " vs threshold " << b.threshold << " (first window "
                << b.first_window_start << " ms)\n";
  }
}

json machine_summary(const chaoslab::experiment::ExperimentReport& report,
                     const std::string& report_path, const std::string& csv_path) {
  json out;
  out["name"] = report.spec.name;
  out["status"] = chaoslab::experiment::verdict_status_name(report.verdict.status);
  out["effect"] = report.verdict.effect;
  if (std::isfinite(report.verdict.p_value)) out["p_value"] = report.verdict.p_value;
  if (!report_path.empty()) out["report"] = report_path;
  if (!csv_path.empty()) out["csv"] = csv_path;
  return out;
}

void emit_summary(const json& summary, const std::string& format) {
  if (format == "csv") {
    std::cout << summary.value("name", "") << ","
              << summary.value("status", "") << ","
              << summary.value("effect", 0.0) << ","
              << (summary.contains("p_value")
                      ? std::to_string(summary["p_value"].get<double>())
                      : "")
              << "\n";
  } else {
    std::cout << summary.dump() << "\n";
  }
}

int cmd_validate(const std::vector<std::string>& paths) {
  for (const auto& path : paths) {
    json doc = chaoslab::load_json_file(path);
    switch (detect_kind(doc, path)) {
      case DocKind::Topology:
        (void)chaoslab::load_topology(doc);
        break;
      case DocKind::Experiment:
        (void)chaoslab::experiment::parse_experiment(doc, dir_of(path));
        break;
      case DocKind::Schedules: {
        auto schedules = chaoslab::sched::schedules_from_json(doc);
        for (const auto& s : schedules) {
          fs::path spec = fs::path(dir_of(path)) / s.spec_path;
          json sdoc = chaoslab::load_json_file(spec.string());
          (void)chaoslab::experiment::parse_experiment(sdoc, dir_of(spec.string()));
        }
        break;
      }
      case DocKind::Report:
        if (!doc.contains("spec_snapshot"))
          throw chaoslab::ConfigError(path, "report carries no spec snapshot");
        (void)chaoslab::experiment::parse_experiment(doc["spec_snapshot"]);
        break;
    }
    std::cerr << "ok: " << path << "\n";
    std::cout << json{{"path", path}, {"ok", true}}.dump() << "\n";
  }
  return kExitUpheld;
}

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<chaoslab::SimMillis> duration;
  std::optional<double> alpha;
  std::optional<double> delta;
  std::optional<double> fraction;
};

chaoslab::experiment::ExperimentSpec load_spec(const std::string& path,
                                               const RunOverrides& ov) {
  json doc = chaoslab::load_json_file(path);
  if (detect_kind(doc, path) != DocKind::Experiment)
    throw chaoslab::ConfigError(path, "not an experiment document");
  auto spec = chaoslab::experiment::parse_experiment(doc, dir_of(path));
  if (ov.seed) spec.seed = *ov.seed;
  if (ov.duration) spec.duration_ms = *ov.duration;
  if (ov.alpha) spec.alpha = *ov.alpha;
  if (ov.delta) spec.delta = *ov.delta;
  if (ov.fraction) {
    spec.group_fraction = *ov.fraction;
    for (auto& f : spec.fault_specs)
      if (f.scope.mode == chaoslab::faults::ScopeMode::Fraction)
        f.scope.fraction = *ov.fraction;
  }
  chaoslab::experiment::validate_experiment(spec);
  return spec;
}

struct RunPaths {
  std::string report;
  std::string csv;
};

RunPaths write_run_outputs(const chaoslab::experiment::RunResult& result,
                           const std::string& out_dir,
                           const std::string& basename) {
  fs::create_directories(out_dir);
  RunPaths paths;
  paths.report = (fs::path(out_dir) / (basename + ".report.json")).string();
  paths.csv = (fs::path(out_dir) / (basename + ".metrics.csv")).string();
  write_file(paths.report,
             chaoslab::experiment::report_to_json(result.report).dump(2) + "\n");
  write_file(paths.csv, result.world->sink().export_csv());
  return paths;
}

int cmd_run(const std::string& spec_path, const RunOverrides& ov,
            const std::string& out_flag, const std::string& format) {
  auto spec = load_spec(spec_path, ov);
  auto result = chaoslab::experiment::run_experiment(spec);
  auto paths = write_run_outputs(result, output_dir(out_flag), spec.name);
  print_verdict_summary(result.report);
  std::cerr << "report      : " << paths.report << "\n"
            << "metrics     : " << paths.csv << "\n";
  emit_summary(machine_summary(result.report, paths.report, paths.csv), format);
  return verdict_exit_code(result.report.verdict.status);
}

int cmd_replay(const std::string& report_path) {
  json doc = chaoslab::load_json_file(report_path);
  if (!doc.contains("spec_snapshot")) {
    std::cerr << "error: " << report_path << ": report carries no spec snapshot\n";
    return kExitConfig;
  }
  auto result = chaoslab::experiment::replay_report(doc);
  if (result.ok) {
    std::cerr << "replay matches stored report\n";
    std::cout << json{{"replay", "match"}, {"report", report_path}}.dump() << "\n";
    return kExitUpheld;
  }
  std::cerr << "replay diverged: " << result.detail << "\n";
  std::cout << json{{"replay", "diverged"}, {"detail", result.detail}}.dump() << "\n";
  return kExitInternal;
}

int cmd_report(const std::string& report_path, const std::string& format) {
  json doc = chaoslab::load_json_file(report_path);
  if (detect_kind(doc, report_path) != DocKind::Report)
    throw chaoslab::ConfigError(report_path, "not a report document");
  const auto& v = doc.at("verdict");
  std::string status = v.at("status").get<std::string>();
  std::cerr << "experiment  : " << doc.value("name", "") << "\n"
            << "produced at : " << doc.value("produced_at", "") << "\n"
            << "verdict     : " << status << "\n"
            << "effect      : " << v.value("effect", 0.0) << "\n";
  if (v.contains("p_value")) std::cerr << "p-value     : " << v["p_value"].get<double>() << "\n";
  if (v.contains("abort"))
    std::cerr << "aborted at  : " << v["abort"]["at_ms"].get<chaoslab::SimMillis>()
              << " ms\n";
  json summary;
  summary["name"] = doc.value("name", "");
  summary["status"] = status;
  summary["effect"] = v.value("effect", 0.0);
  if (v.contains("p_value")) summary["p_value"] = v["p_value"];
  emit_summary(summary, format);
  if (status == "refuted") return kExitRefuted;
  if (status == "aborted") return kExitAborted;
  return kExitUpheld;
}

int cmd_schedule(const std::string& schedules_path, const std::string& history_path,
                 const std::string& out_flag, bool once,
                 std::optional<chaoslab::sched::WallSeconds> now_override,
                 int max_runs, int poll_s) {
  json doc = chaoslab::load_json_file(schedules_path);
  auto schedules = chaoslab::sched::schedules_from_json(doc);
  auto history = chaoslab::sched::History::load(history_path);
  std::string base = dir_of(schedules_path);
  std::string out_dir = output_dir(out_flag);

  chaoslab::sched::Executor executor =
      [&](const chaoslab::sched::Schedule& s,
          chaoslab::sched::WallSeconds fire) -> chaoslab::sched::RunRecord {
    fs::path spec_path = fs::path(base) / s.spec_path;
    auto spec = load_spec(spec_path.string(), {});
    auto result = chaoslab::experiment::run_experiment(spec);
    auto paths = write_run_outputs(result, out_dir,
                                   s.name + "-" + std::to_string(fire));
    chaoslab::sched::RunRecord r;
    r.spec_name = spec.name;
    r.topology_version = result.report.topology_version;
    r.verdict =
        chaoslab::experiment::verdict_status_name(result.report.verdict.status);
    r.report_path = paths.report;
    history.mark_stale(result.report.topology_version);
    return r;
  };

  int executed = 0;
  for (;;) {
    chaoslab::sched::WallSeconds now =
        now_override ? *now_override
                     : static_cast<chaoslab::sched::WallSeconds>(std::time(nullptr));
    auto records = chaoslab::sched::execute_due(schedules, now, executor, history);
    for (const auto& r : records) {
      std::cerr << "run: " << r.spec_name << " verdict=" << r.verdict
                << (r.error.empty() ? "" : " error=" + r.error) << "\n";
      std::cout << chaoslab::sched::History::to_json(r).dump() << "\n";
      ++executed;
    }
    history.save(history_path);
    if (once || (max_runs > 0 && executed >= max_runs)) break;
    auto due = chaoslab::sched::next_due(schedules, now);
    chaoslab::sched::WallSeconds next = now + poll_s;
    for (const auto& d : due) next = std::min(next, d.fire_time);
    if (now_override) {
      now_override = std::max(next, *now_override + 1);
    } else {
      auto wait = std::max<chaoslab::sched::WallSeconds>(1, next - now);
      std::this_thread::sleep_for(std::chrono::seconds(std::min<chaoslab::sched::WallSeconds>(
          wait, poll_s)));
    }
  }
  return kExitUpheld;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chaoslab: steady-state chaos experiments on a simulated "
               "multi-region control plane"};
  app.require_subcommand(1);

  std::vector<std::string> validate_paths;
  auto* validate = app.add_subcommand("validate", "check config documents");
  validate->add_option("paths", validate_paths, "documents to validate")
      ->required()
      ->expected(-1);

  std::string run_spec, run_out, run_format = "json";
  RunOverrides ov;
  std::uint64_t ov_seed = 0;
  std::int64_t ov_duration = 0;
  double ov_alpha = 0, ov_delta = -1, ov_fraction = 0;
  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("spec", run_spec, "experiment document")->required();
  auto* seed_opt = run->add_option("--seed", ov_seed, "seed override");
  auto* dur_opt = run->add_option("--duration", ov_duration,
                                  "duration override, simulated ms");
  auto* alpha_opt = run->add_option("--alpha", ov_alpha, "significance override");
  auto* delta_opt = run->add_option("--delta", ov_delta, "tolerance override");
  auto* frac_opt = run->add_option("--fraction", ov_fraction,
                                   "group fraction override");
  run->add_option("--out", run_out, "output directory (or $CHAOSLAB_OUT)");
  run->add_option("--format", run_format, "stdout summary format")
      ->check(CLI::IsMember({"json", "csv"}));

  std::string replay_path;
  auto* replay = app.add_subcommand("replay", "re-run a report snapshot and compare");
  replay->add_option("report", replay_path, "report document")->required();

  std::string report_path, report_format = "json";
  auto* report = app.add_subcommand("report", "summarize a stored report");
  report->add_option("report", report_path, "report document")->required();
  report->add_option("--format", report_format, "stdout summary format")
      ->check(CLI::IsMember({"json", "csv"}));

  std::string sched_file, sched_history = "chaoslab-history.jsonl", sched_out;
  bool sched_once = false;
  std::int64_t sched_now = -1;
  int sched_max_runs = 0, sched_poll = 30;
  auto* schedule = app.add_subcommand("schedule", "run due experiments continuously");
  schedule->add_option("schedules", sched_file, "schedules document")->required();
  schedule->add_option("--history", sched_history, "run history (JSON lines)");
  schedule->add_option("--out", sched_out, "output directory (or $CHAOSLAB_OUT)");
  schedule->add_flag("--once", sched_once, "execute currently due runs and exit");
  schedule->add_option("--now", sched_now,
                       "fixed wall clock (epoch seconds) for deterministic runs");
  schedule->add_option("--max-runs", sched_max_runs, "stop after this many runs");
  schedule->add_option("--poll-s", sched_poll, "poll interval in seconds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitUpheld : kExitConfig;
  }

  try {
    if (*validate) return cmd_validate(validate_paths);
    if (*run) {
      if (*seed_opt) ov.seed = ov_seed;
      if (*dur_opt) ov.duration = ov_duration;
      if (*alpha_opt) ov.alpha = ov_alpha;
      if (*delta_opt) ov.delta = ov_delta;
      if (*frac_opt) ov.fraction = ov_fraction;
      return cmd_run(run_spec, ov, run_out, run_format);
    }
    if (*replay) return cmd_replay(replay_path);
    if (*report) return cmd_report(report_path, report_format);
    if (*schedule)
      return cmd_schedule(sched_file, sched_history, sched_out, sched_once,
                          sched_now >= 0
                              ? std::optional<chaoslab::sched::WallSeconds>(sched_now)
                              : std::nullopt,
                          sched_max_runs, sched_poll);
  } catch (const chaoslab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const chaoslab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitConfig;
}
