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

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chaoslab/faults.hpp"
#include "chaoslab/metrics.hpp"
#include "chaoslab/sim.hpp"
#include "chaoslab/topology.hpp"

namespace chaoslab::experiment {

// Control is the equal-size hash slice adjacent to the experiment slice:
// experiment = buckets [0, f), control = [f, 2f). Membership shares the
// bucket function with fault scoping, so "in scope" and "in the experimental
// group" coincide whenever salt and fraction match.
struct GroupAssignment {
  std::uint64_t population = 0;
  double fraction = 0;
  std::uint64_t salt = 0;

  metrics::GroupTag of(UserId user) const {
    std::uint64_t threshold = static_cast<std::uint64_t>(
        std::llround(fraction * static_cast<double>(kBucketSpace)));
    std::uint64_t bucket = user_bucket(user, salt);
    if (bucket < threshold) return metrics::GroupTag::Experiment;
    if (bucket < 2 * threshold) return metrics::GroupTag::Control;
    return metrics::GroupTag::Unassigned;
  }

  struct Sizes {
    std::uint64_t experiment = 0;
    std::uint64_t control = 0;
  };

  Sizes sizes() const {
    Sizes s;
    for (UserId u = 0; u < population; ++u) {
      switch (of(u)) {
        case metrics::GroupTag::Experiment: s.experiment++; break;
        case metrics::GroupTag::Control: s.control++; break;
        default: break;
      }
    }
    return s;
  }
};

inline GroupAssignment assign_groups(std::uint64_t population, double fraction,
                                     std::uint64_t salt) {
  if (!(fraction > 0))
    throw ConfigError("group.fraction", "must be > 0");
  if (fraction > 0.5)
    throw ConfigError("group.fraction",
                      "must be <= 0.5 so the control slice fits beside it");
  return GroupAssignment{population, fraction, salt};
}

enum class VerdictStatus { Upheld, Refuted, Aborted };
enum class EvalMode { GroupPermutation, BaselineDeviation };
enum class AbortPolicy { OnBreach, Never };

inline const char* verdict_status_name(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Upheld: return "upheld";
    case VerdictStatus::Refuted: return "refuted";
    case VerdictStatus::Aborted: return "aborted";
  }
  return "?";
}

struct AbortRecord {
  SimMillis at_ms = 0;
  std::vector<metrics::Breach> breaches;
};

struct Verdict {
  VerdictStatus status = VerdictStatus::Upheld;
  EvalMode mode = EvalMode::GroupPermutation;
  double effect = 0;  // relative difference of mean per-capita windowed SPS
  double p_value = std::numeric_limits<double>::quiet_NaN();
  std::optional<AbortRecord> abort;
};

struct ExperimentSpec {
  std::string name;
  std::string topology_ref;       // as written in the document, informational
  nlohmann::json topology_doc;    // resolved snapshot; replay source of truth
  std::uint64_t seed = 1;
  std::string metric = "sps";
  std::vector<faults::FaultSpec> fault_specs;
  double group_fraction = 0.05;
  std::uint64_t group_salt = 1;
  SimMillis duration_ms = 3'600'000;
  double delta = 0.01;
  double alpha = 0.05;
  int permutations = 999;
  std::vector<metrics::Guardrail> guardrails;
  AbortPolicy abort_policy = AbortPolicy::OnBreach;
  SimMillis window_ms = 10'000;
  SimMillis transient_ms = 60'000;  // settle allowance around physical drills
};

// pre: on-breach aborts on any non-empty report; never just keeps going.
inline bool should_abort(const std::vector<metrics::Breach>& breaches,
                         AbortPolicy policy) {
  return policy == AbortPolicy::OnBreach && !breaches.empty();
}

// Two-sided paired permutation test on per-capita windowed SPS. Group labels
// are shuffled within each window; the verdict needs both the statistical
// gate (p <= alpha) and the practical gate (|effect| > delta).
inline Verdict evaluate_hypothesis(const metrics::MetricSeries& control,
                                   const metrics::MetricSeries& experiment,
                                   double control_size, double experiment_size,
                                   double delta, double alpha, int permutations,
                                   std::uint64_t seed) {
  if (control.samples.size() != experiment.samples.size())
    throw ConfigError("series", "control and experiment window grids differ");
  for (std::size_t i = 0; i < control.samples.size(); ++i)
    if (control.samples[i].first != experiment.samples[i].first)
      throw ConfigError("series", "control and experiment window grids differ");
  std::size_t n = control.samples.size();
  if (n < 20)
    throw ConfigError("series",
                      "need at least 20 closed windows, have " + std::to_string(n));
  if (!(control_size > 0) || !(experiment_size > 0))
    throw ConfigError("group", "group sizes must be positive");
  if (permutations < 99)
    throw ConfigError("permutations", "must be >= 99");

  std::vector<double> ctl(n), exp(n);
  double mean_ctl = 0, mean_exp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ctl[i] = control.samples[i].second / control_size;
    exp[i] = experiment.samples[i].second / experiment_size;
    mean_ctl += ctl[i];
    mean_exp += exp[i];
  }
  mean_ctl /= static_cast<double>(n);
  mean_exp /= static_cast<double>(n);
  if (mean_ctl == 0) throw IndeterminateControlError();

  double effect = (mean_exp - mean_ctl) / mean_ctl;

  // Permuted copies of the statistic keep the observed control mean as the
  // denominator; only the numerator is exchangeable under the null.
  Rng rng(derive_seed(seed, "permutation"));
  int at_least_as_extreme = 0;
  for (int p = 0; p < permutations; ++p) {
    double pc = 0, pe = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.next_u64() & 1) {
        pc += exp[i];
        pe += ctl[i];
      } else {
        pc += ctl[i];
        pe += exp[i];
      }
    }
    pc /= static_cast<double>(n);
    pe /= static_cast<double>(n);
    if (std::abs((pe - pc) / mean_ctl) >= std::abs(effect)) at_least_as_extreme++;
  }
  double p_value = static_cast<double>(at_least_as_extreme + 1) /
                   static_cast<double>(permutations + 1);

  Verdict v;
  v.mode = EvalMode::GroupPermutation;
  v.effect = effect;
  v.p_value = p_value;
  v.status = (p_value <= alpha && std::abs(effect) > delta)
                 ? VerdictStatus::Refuted
                 : VerdictStatus::Upheld;
  return v;
}

struct GuardrailEvent {
  SimMillis window_end_ms = 0;
  metrics::Breach breach;
};

struct ExperimentReport {
  std::string produced_at;  // wall time, excluded from replay comparison
  ExperimentSpec spec;      // full snapshot, sufficient to replay
  std::int64_t topology_version = 1;
  std::uint64_t control_size = 0;
  std::uint64_t experiment_size = 0;
  Verdict verdict;
  metrics::MetricSeries control_sps;
  metrics::MetricSeries experiment_sps;
  metrics::MetricSeries global_sps;
  std::vector<GuardrailEvent> guardrail_timeline;
};

struct RunResult {
  ExperimentReport report;
  std::unique_ptr<sim::WorldState> world;  // sealed sink, traces for audit
};

namespace detail {

inline std::string iso8601_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Group mode when every fault is user-scoped; physical drills (scope all)
// are judged against a paired no-fault baseline instead of a user split.
inline bool is_physical(const ExperimentSpec& spec) {
  for (const auto& f : spec.fault_specs)
    if (f.scope.mode == faults::ScopeMode::All) return true;
  return false;
}

}  // namespace detail

inline std::vector<faults::CompiledFault> compile_experiment_faults(
    const ExperimentSpec& spec, const Topology& topo) {
  std::vector<faults::CompiledFault> compiled;
  bool any_all = false, any_fraction = false;
  for (std::size_t i = 0; i < spec.fault_specs.size(); ++i) {
    const auto& f = spec.fault_specs[i];
    std::string path = "faults[" + std::to_string(i) + "]";
    if (f.scope.mode == faults::ScopeMode::Fraction) {
      any_fraction = true;
      if (f.scope.salt != spec.group_salt)
        throw ConfigError(path + ".scope.salt",
                          "must equal group.salt so scoped users are exactly the "
                          "experimental group");
      if (f.scope.fraction != spec.group_fraction)
        throw ConfigError(path + ".scope.fraction", "must equal group.fraction");
    } else {
      any_all = true;
    }
    compiled.push_back(faults::compile_fault(f, topo, static_cast<int>(i), path));
  }
  if (any_all && any_fraction)
    throw ConfigError("faults",
                      "cannot mix user-scoped and physical (scope all) faults in "
                      "one experiment");
  return compiled;
}

inline void validate_experiment(const ExperimentSpec& spec) {
  if (spec.name.empty()) throw ConfigError("name", "must not be empty");
  if (spec.metric != "sps")
    throw ConfigError("metric", "only the sps steady-state metric is available");
  if (spec.delta < 0) throw ConfigError("delta", "must be >= 0");
  if (!(spec.alpha > 0) || !(spec.alpha < 1))
    throw ConfigError("alpha", "must be in (0,1)");
  if (spec.permutations < 99) throw ConfigError("permutations", "must be >= 99");
  if (spec.window_ms <= 0) throw ConfigError("window_ms", "must be > 0");
  if (spec.transient_ms < 0) throw ConfigError("transient_ms", "must be >= 0");
  if (spec.duration_ms < 20 * spec.window_ms)
    throw ConfigError("duration",
                      "must cover at least 20 windows; the permutation test has "
                      "no resolution below that");
  (void)assign_groups(1, spec.group_fraction, spec.group_salt);

  Topology topo = load_topology(spec.topology_doc);
  (void)compile_experiment_faults(spec, topo);

  static const char* kFamilies[] = {"p99_latency_ms", "busy_fraction",
                                    "queue_depth_max", "memory_proxy",
                                    "fallback_rate",   "error_rate"};
  for (std::size_t i = 0; i < spec.guardrails.size(); ++i) {
    const auto& g = spec.guardrails[i];
    std::string path = "guardrails[" + std::to_string(i) + "]";
    auto dot = g.metric_id.find('.');
    if (dot == std::string::npos)
      throw ConfigError(path + ".metric", "guardrails watch per-service metrics");
    std::string family = g.metric_id.substr(0, dot);
    std::string service = g.metric_id.substr(dot + 1);
    bool known = false;
    for (const char* f : kFamilies) known |= family == f;
    if (!known) throw ConfigError(path + ".metric", "unknown metric family: " + family);
    if (topo.service_index.find(service) == topo.service_index.end())
      throw ConfigError(path + ".service", "unknown service: " + service);
    if (g.consecutive_windows < 1)
      throw ConfigError(path + ".consecutive_windows", "must be >= 1");
    if (!std::isfinite(g.threshold))
      throw ConfigError(path + ".threshold", "must be finite");
  }
}

inline RunResult run_experiment(const ExperimentSpec& spec) {
  validate_experiment(spec);
  Topology topo = load_topology(spec.topology_doc);
  auto compiled = compile_experiment_faults(spec, topo);
  bool physical = detail::is_physical(spec);

  GroupAssignment groups =
      assign_groups(topo.traffic.population, spec.group_fraction, spec.group_salt);
  auto sizes = groups.sizes();

  auto world = std::make_unique<sim::WorldState>(topo, spec.seed, spec.window_ms,
                                                 compiled);
  world->set_event_horizon(spec.duration_ms);
  world->sink().set_group_fn([groups](UserId u) { return groups.of(u); });

  std::vector<GuardrailEvent> timeline;
  std::optional<AbortRecord> abort;
  sim::WorldState* w = world.get();
  const auto& guardrails = spec.guardrails;
  AbortPolicy policy = spec.abort_policy;
  world->set_window_callback([&, w](SimMillis boundary) {
    if (guardrails.empty()) return;
    auto breaches = metrics::guardrail_check(guardrails, w->sink());
    for (const auto& b : breaches) {
      bool seen = false;
      for (const auto& ev : timeline) seen |= ev.breach.metric_id == b.metric_id;
      if (!seen) timeline.push_back({boundary, b});
    }
    if (!abort && should_abort(breaches, policy)) {
      abort = AbortRecord{boundary, breaches};
      w->deactivate_faults(boundary);
      w->request_stop();
    }
  });

  world->run_until(spec.duration_ms);

  ExperimentReport report;
  report.produced_at = detail::iso8601_now();
  report.spec = spec;
  report.topology_version = topo.version;
  report.control_size = sizes.control;
  report.experiment_size = sizes.experiment;
  report.control_sps = world->sink().series("sps", metrics::GroupTag::Control);
  report.experiment_sps = world->sink().series("sps", metrics::GroupTag::Experiment);
  report.global_sps = world->sink().series("sps", metrics::GroupTag::Global);
  report.guardrail_timeline = timeline;

  if (abort) {
    Verdict v;
    v.status = VerdictStatus::Aborted;
    v.mode = physical ? EvalMode::BaselineDeviation : EvalMode::GroupPermutation;
    v.abort = abort;
    // Best-effort effect measured at abort time, so reports can show how far
    // the boundary metric had moved when the guardrail fired.
    if (!physical && sizes.control > 0 && !report.control_sps.samples.empty()) {
      double mc = 0, me = 0;
      for (const auto& [s, val] : report.control_sps.samples) mc += val;
      for (const auto& [s, val] : report.experiment_sps.samples) me += val;
      mc /= static_cast<double>(report.control_sps.samples.size()) *
            static_cast<double>(sizes.control);
      me /= static_cast<double>(report.experiment_sps.samples.size()) *
            static_cast<double>(sizes.experiment);
      if (mc > 0) v.effect = (me - mc) / mc;
    }
    report.verdict = v;
    return {std::move(report), std::move(world)};
  }

  if (!physical) {
    report.verdict = evaluate_hypothesis(
        report.control_sps, report.experiment_sps,
        static_cast<double>(sizes.control), static_cast<double>(sizes.experiment),
        spec.delta, spec.alpha, spec.permutations, spec.seed);
    return {std::move(report), std::move(world)};
  }

  // Physical drill: no user split to compare, so the hypothesis is judged
  // against a paired no-fault run of the same seed, outside a settle
  // transient around each fault edge.
  sim::WorldState reference(topo, spec.seed, spec.window_ms, {});
  reference.set_event_horizon(spec.duration_ms);
  reference.run_until(spec.duration_ms);
  metrics::BaselineModel model{reference.sink().series("sps"), spec.delta};
  auto rows = metrics::baseline_deviation(report.global_sps, model);

  auto in_transient = [&](SimMillis wstart) {
    SimMillis wend = wstart + spec.window_ms;
    for (const auto& f : spec.fault_specs) {
      SimMillis edges[2] = {f.window.start_ms, f.window.end_ms()};
      for (SimMillis edge : edges)
        if (wstart < edge + spec.transient_ms && wend > edge) return true;
    }
    return false;
  };

  Verdict v;
  v.mode = EvalMode::BaselineDeviation;
  double worst = 0;
  bool flagged = false;
  for (const auto& row : rows) {
    if (in_transient(row.window_start)) continue;
    double mag = row.infinite ? std::numeric_limits<double>::infinity()
                              : std::abs(row.deviation);
    if (mag > std::abs(worst)) worst = row.infinite ? mag : row.deviation;
    flagged |= row.flagged;
  }
  v.effect = worst;
  v.status = flagged ? VerdictStatus::Refuted : VerdictStatus::Upheld;
  report.verdict = v;
  return {std::move(report), std::move(world)};
}

// --- document serialization ---

inline metrics::Guardrail guardrail_from_json(const nlohmann::json& j,
                                              const std::string& path) {
  metrics::Guardrail g;
  std::string metric = chaoslab::detail::get_str(j, "metric", path);
  if (j.contains("service"))
    g.metric_id = metric + "." + j["service"].get<std::string>();
  else
    g.metric_id = metric;
  g.threshold = chaoslab::detail::get_num<double>(j, "threshold", path);
  std::string dir = j.value("direction", "above");
  if (dir == "above") g.direction = metrics::Direction::Above;
  else if (dir == "below") g.direction = metrics::Direction::Below;
  else throw ConfigError(path + ".direction", "expected above|below");
  g.consecutive_windows = j.value("consecutive_windows", 1);
  return g;
}

inline nlohmann::json guardrail_to_json(const metrics::Guardrail& g) {
  nlohmann::json j;
  auto dot = g.metric_id.find('.');
  if (dot == std::string::npos) {
    j["metric"] = g.metric_id;
  } else {
    j["metric"] = g.metric_id.substr(0, dot);
    j["service"] = g.metric_id.substr(dot + 1);
  }
  j["threshold"] = g.threshold;
  j["direction"] = g.direction == metrics::Direction::Above ? "above" : "below";
  j["consecutive_windows"] = g.consecutive_windows;
  return j;
}

// `base_dir` resolves a relative topology path; an inline topology object is
// taken as-is (reports embed one so replays never touch the filesystem).
inline ExperimentSpec parse_experiment(const nlohmann::json& doc,
                                       const std::string& base_dir = "") {
  if (!doc.is_object()) throw ConfigError("", "experiment document must be an object");
  ExperimentSpec spec;
  spec.name = chaoslab::detail::get_str(doc, "name", "");

  const auto& topo = chaoslab::detail::require(doc, "topology", "");
  if (topo.is_string()) {
    spec.topology_ref = topo.get<std::string>();
    std::string path = spec.topology_ref;
    if (!base_dir.empty() && !path.empty() && path.front() != '/')
      path = base_dir + "/" + path;
    spec.topology_doc = load_json_file(path);
  } else if (topo.is_object()) {
    spec.topology_ref = "(inline)";
    spec.topology_doc = topo;
  } else {
    throw ConfigError("topology", "expected a path or an inline object");
  }

  spec.seed = chaoslab::detail::get_num<std::uint64_t>(doc, "seed", "");
  spec.metric = doc.value("metric", "sps");

  if (doc.contains("faults")) {
    const auto& jf = doc["faults"];
    if (!jf.is_array()) throw ConfigError("faults", "expected an array");
    for (std::size_t i = 0; i < jf.size(); ++i)
      spec.fault_specs.push_back(
          faults::fault_from_json(jf[i], "faults[" + std::to_string(i) + "]"));
  }

  if (doc.contains("group")) {
    const auto& jg = doc["group"];
    spec.group_fraction = chaoslab::detail::get_num<double>(jg, "fraction", "group");
    spec.group_salt = chaoslab::detail::get_num<std::uint64_t>(jg, "salt", "group");
  }

  spec.duration_ms = chaoslab::detail::get_num<SimMillis>(doc, "duration", "");
  spec.delta = doc.value("delta", 0.01);
  spec.alpha = doc.value("alpha", 0.05);
  spec.permutations = doc.value("permutations", 999);

  if (doc.contains("guardrails")) {
    const auto& jg = doc["guardrails"];
    if (!jg.is_array()) throw ConfigError("guardrails", "expected an array");
    for (std::size_t i = 0; i < jg.size(); ++i)
      spec.guardrails.push_back(
          guardrail_from_json(jg[i], "guardrails[" + std::to_string(i) + "]"));
  }

  std::string policy = doc.value("abort_policy", "on-breach");
  if (policy == "on-breach") spec.abort_policy = AbortPolicy::OnBreach;
  else if (policy == "never") spec.abort_policy = AbortPolicy::Never;
  else throw ConfigError("abort_policy", "expected on-breach|never");

  spec.window_ms = doc.value("window_ms", SimMillis{10'000});
  spec.transient_ms = doc.value("transient_ms", SimMillis{60'000});

  validate_experiment(spec);
  return spec;
}

inline nlohmann::json experiment_to_json(const ExperimentSpec& spec,
                                         bool inline_topology) {
  nlohmann::json doc;
  doc["name"] = spec.name;
  if (inline_topology)
    doc["topology"] = spec.topology_doc;
  else
    doc["topology"] = spec.topology_ref;
  doc["seed"] = spec.seed;
  doc["metric"] = spec.metric;
  doc["faults"] = nlohmann::json::array();
  for (const auto& f : spec.fault_specs)
    doc["faults"].push_back(faults::fault_to_json(f));
  doc["group"] = {{"fraction", spec.group_fraction}, {"salt", spec.group_salt}};
  doc["duration"] = spec.duration_ms;
  doc["delta"] = spec.delta;
  doc["alpha"] = spec.alpha;
  doc["permutations"] = spec.permutations;
  doc["guardrails"] = nlohmann::json::array();
  for (const auto& g : spec.guardrails)
    doc["guardrails"].push_back(guardrail_to_json(g));
  doc["abort_policy"] =
      spec.abort_policy == AbortPolicy::OnBreach ? "on-breach" : "never";
  doc["window_ms"] = spec.window_ms;
  doc["transient_ms"] = spec.transient_ms;
  return doc;
}

inline nlohmann::json series_to_json(const metrics::MetricSeries& s) {
  nlohmann::json j;
  j["metric"] = s.metric_id;
  j["group"] = s.group;
  j["window_ms"] = s.window_ms;
  j["samples"] = nlohmann::json::array();
  for (const auto& [start, v] : s.samples) j["samples"].push_back({start, v});
  return j;
}

inline metrics::MetricSeries series_from_json(const nlohmann::json& j) {
  metrics::MetricSeries s;
  s.metric_id = j.value("metric", "");
  s.group = j.value("group", "global");
  s.window_ms = j.value("window_ms", SimMillis{0});
  for (const auto& row : j.at("samples"))
    s.samples.emplace_back(row.at(0).get<SimMillis>(), row.at(1).get<double>());
  return s;
}

inline nlohmann::json report_to_json(const ExperimentReport& r) {
  nlohmann::json doc;
  doc["produced_at"] = r.produced_at;
  doc["name"] = r.spec.name;
  doc["seed"] = r.spec.seed;
  doc["topology_version"] = r.topology_version;
  doc["group_sizes"] = {{"control", r.control_size},
                        {"experiment", r.experiment_size}};
  doc["spec_snapshot"] = experiment_to_json(r.spec, /*inline_topology=*/true);

  nlohmann::json v;
  v["status"] = verdict_status_name(r.verdict.status);
  v["mode"] = r.verdict.mode == EvalMode::GroupPermutation ? "group-permutation"
                                                           : "baseline-deviation";
  v["effect"] = r.verdict.effect;
  if (std::isfinite(r.verdict.p_value)) v["p_value"] = r.verdict.p_value;
  if (r.verdict.abort) {
    nlohmann::json a;
    a["at_ms"] = r.verdict.abort->at_ms;
    a["breaches"] = nlohmann::json::array();
    for (const auto& b : r.verdict.abort->breaches)
      a["breaches"].push_back({{"metric", b.metric_id},
                               {"service", b.service},
                               {"first_window_start_ms", b.first_window_start},
                               {"threshold", b.threshold},
                               {"observed", b.observed}});
    v["abort"] = a;
  }
  doc["verdict"] = v;

  doc["series"] = {{"control", series_to_json(r.control_sps)},
                   {"experiment", series_to_json(r.experiment_sps)},
                   {"global", series_to_json(r.global_sps)}};

  doc["guardrail_timeline"] = nlohmann::json::array();
  for (const auto& ev : r.guardrail_timeline)
    doc["guardrail_timeline"].push_back(
        {{"window_end_ms", ev.window_end_ms},
         {"metric", ev.breach.metric_id},
         {"service", ev.breach.service},
         {"first_window_start_ms", ev.breach.first_window_start},
         {"threshold", ev.breach.threshold},
         {"observed", ev.breach.observed}});
  return doc;
}

struct ReplayResult {
  bool ok = false;
  std::string detail;  // names the first divergent window on mismatch
};

// Re-runs the embedded snapshot and compares series and verdict exactly.
inline ReplayResult replay_report(const nlohmann::json& report_doc) {
  if (!report_doc.contains("spec_snapshot"))
    throw ConfigError("spec_snapshot", "report carries no spec snapshot");
  ExperimentSpec spec = parse_experiment(report_doc["spec_snapshot"]);
  RunResult rerun = run_experiment(spec);
  nlohmann::json fresh = report_to_json(rerun.report);

  auto compare_series = [&](const char* which) -> std::string {
    const auto& a = report_doc.at("series").at(which).at("samples");
    const auto& b = fresh.at("series").at(which).at("samples");
    if (a.size() != b.size())
      return std::string(which) + " series length " + std::to_string(a.size()) +
             " vs " + std::to_string(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i][0].get<SimMillis>() != b[i][0].get<SimMillis>() ||
          a[i][1].get<double>() != b[i][1].get<double>())
        return std::string(which) + " series diverges at window " +
               std::to_string(a[i][0].get<SimMillis>()) + " ms";
    }
    return "";
  };
  for (const char* which : {"control", "experiment", "global"}) {
    std::string diff = compare_series(which);
    if (!diff.empty()) return {false, diff};
  }
  const auto& v0 = report_doc.at("verdict");
  const auto& v1 = fresh.at("verdict");
  if (v0.at("status") != v1.at("status"))
    return {false, "verdict status differs: " + v0.at("status").get<std::string>() +
                       " vs " + v1.at("status").get<std::string>()};
  if (v0.at("effect").get<double>() != v1.at("effect").get<double>())
    return {false, "verdict effect differs"};
  if (v0.contains("p_value") != v1.contains("p_value") ||
      (v0.contains("p_value") &&
       v0.at("p_value").get<double>() != v1.at("p_value").get<double>()))
    return {false, "verdict p-value differs"};
  return {true, ""};
}

}  // namespace chaoslab::experiment
