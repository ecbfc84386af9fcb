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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "chaoslab/error.hpp"
#include "chaoslab/topology.hpp"

namespace chaoslab::metrics {

enum class GroupTag : int { Control = 0, Experiment = 1, Global = 2, Unassigned = 3 };

inline const char* group_name(GroupTag g) {
  switch (g) {
    case GroupTag::Control: return "control";
    case GroupTag::Experiment: return "experiment";
    case GroupTag::Global: return "global";
    case GroupTag::Unassigned: return "unassigned";
  }
  return "?";
}

enum class OutcomeClass { Success, FallbackSuccess, Failure };

struct MetricSeries {
  std::string metric_id;
  std::string group = "global";
  SimMillis window_ms = 0;
  std::vector<std::pair<SimMillis, double>> samples;  // (window start, value)
};

enum class Direction { Above, Below };

struct Guardrail {
  std::string metric_id;  // "<family>.<service>", e.g. "p99_latency_ms.edge-api"
  double threshold = 0;
  Direction direction = Direction::Above;
  int consecutive_windows = 1;
};

struct Breach {
  std::string metric_id;
  std::string service;
  SimMillis first_window_start = 0;
  double threshold = 0;
  double observed = 0;  // value in the first breached window
};

struct BaselineModel {
  MetricSeries reference;  // the prior-trend series being compared against
  double band = 0.02;      // relative tolerance per window
};

struct DeviationRow {
  SimMillis window_start = 0;
  double current = 0;
  double reference = 0;
  double deviation = 0;  // (current - reference) / reference
  bool infinite = false;  // reference 0 with nonzero current
  bool flagged = false;
};

namespace detail {

struct BoundaryAcc {
  std::int64_t arrivals = 0;
  std::int64_t starts = 0;  // success + fallback-success
  std::int64_t errors = 0;
  std::int64_t fallbacks = 0;
};

struct ServiceAcc {
  std::int64_t calls = 0;
  std::int64_t errors = 0;
  std::int64_t fallbacks = 0;
  std::int64_t deaths = 0;
  double busy_ms = 0;
  std::int64_t queue_max = 0;
  std::int64_t mem_max = 0;
  std::vector<double> latencies;
};

struct ServiceRow {
  std::int64_t calls = 0;
  std::int64_t errors = 0;
  std::int64_t fallbacks = 0;
  std::int64_t deaths = 0;
  double busy_ms = 0;
  std::int64_t queue_max = 0;
  std::int64_t mem_max = 0;
  double p99_latency_ms = 0;  // 0 when the window had no samples
};

inline double format_safe(double v) { return v == 0.0 ? 0.0 : v; }  // normalize -0

}  // namespace detail

// Per-run sink. Written only by the owning simulation thread; sealed windows
// are immutable and may be shared freely afterwards.
class MetricSink {
 public:
  MetricSink(SimMillis window_ms, std::vector<std::string> service_ids,
             std::vector<std::string> region_ids)
      : window_ms_(window_ms),
        service_ids_(std::move(service_ids)),
        region_ids_(std::move(region_ids)) {
    if (window_ms_ <= 0) throw ConfigError("window_ms", "must be > 0");
  }

  SimMillis window_ms() const { return window_ms_; }
  std::size_t sealed_count() const { return sealed_boundary_.size(); }
  SimMillis window_start(std::size_t k) const {
    return static_cast<SimMillis>(k) * window_ms_;
  }

  // User -> group mapping, installed by the experiment module before the run.
  void set_group_fn(std::function<GroupTag(UserId)> fn) { group_fn_ = std::move(fn); }

  void record_arrival(SimMillis t, UserId user) {
    auto& w = open(t);
    w.groups[static_cast<int>(GroupTag::Global)].arrivals++;
    w.groups[static_cast<int>(tag_of(user))].arrivals++;
  }

  void record_outcome(SimMillis t, UserId user, OutcomeClass oc) {
    auto& w = open(t);
    apply_outcome(w.groups[static_cast<int>(GroupTag::Global)], oc);
    apply_outcome(w.groups[static_cast<int>(tag_of(user))], oc);
  }

  void record_service_call(SimMillis t, int svc, OutcomeClass oc, double latency_ms) {
    auto& acc = open(t).services[static_cast<std::size_t>(svc)];
    acc.calls++;
    if (oc == OutcomeClass::Failure) acc.errors++;
    if (oc == OutcomeClass::FallbackSuccess) acc.fallbacks++;
    acc.latencies.push_back(latency_ms);
  }

  void record_busy(SimMillis t, int svc, double busy_ms) {
    open(t).services[static_cast<std::size_t>(svc)].busy_ms += busy_ms;
  }

  void record_queue_sample(SimMillis t, int svc, std::int64_t queue_len) {
    auto& acc = open(t).services[static_cast<std::size_t>(svc)];
    acc.queue_max = std::max(acc.queue_max, queue_len);
    acc.mem_max = std::max(acc.mem_max, queue_len);
  }

  void record_death(SimMillis t, int svc) {
    open(t).services[static_cast<std::size_t>(svc)].deaths++;
  }

  void record_region_arrival(SimMillis t, int region) {
    open(t).region_arrivals[static_cast<std::size_t>(region)]++;
  }

  // Seals every window whose end is <= t. Produces zero-filled windows for
  // quiet stretches so every series stays contiguous.
  void seal_through(SimMillis t) {
    while (static_cast<SimMillis>(sealed_boundary_.size() + 1) * window_ms_ <= t)
      seal_next();
  }

  // --- queries over sealed windows ---

  // Starts-per-second for the window beginning at `window_start`.
  double sps(SimMillis start, GroupTag group = GroupTag::Global) const {
    std::size_t k = index_of(start);
    if (k >= sealed_boundary_.size())
      throw OpenWindowError("window starting at " + std::to_string(start) +
                            " ms is not closed yet");
    const auto& b = sealed_boundary_[k][static_cast<int>(group)];
    return static_cast<double>(b.starts) / (static_cast<double>(window_ms_) / 1000.0);
  }

  MetricSeries series(const std::string& metric_id,
                      GroupTag group = GroupTag::Global) const {
    MetricSeries out;
    out.metric_id = metric_id;
    out.group = group_name(group);
    out.window_ms = window_ms_;
    auto fn = value_fn(metric_id, group);
    out.samples.reserve(sealed_boundary_.size());
    for (std::size_t k = 0; k < sealed_boundary_.size(); ++k)
      out.samples.emplace_back(window_start(k), fn(k));
    return out;
  }

  bool knows_metric(const std::string& metric_id) const {
    try {
      (void)value_fn(metric_id, GroupTag::Global);
      return true;
    } catch (const UnknownMetricError&) {
      return false;
    }
  }

  const std::vector<std::string>& service_ids() const { return service_ids_; }
  const std::vector<std::string>& region_ids() const { return region_ids_; }

  // Deterministic flat export: one row per (metric, group, window start,
  // value), ordered by metric id, then group, then window.
  std::string export_csv() const {
    std::vector<std::string> metric_order;
    for (const char* m : {"arrivals", "errors", "fallbacks", "sps"})
      metric_order.push_back(m);
    std::vector<std::string> service_families = {
        "busy_fraction", "calls",      "deaths",          "error_rate",
        "errors",        "fallback_rate", "fallbacks",    "memory_proxy",
        "p99_latency_ms", "queue_depth_max"};
    for (const auto& fam : service_families)
      for (const auto& s : service_ids_) metric_order.push_back(fam + "." + s);
    for (const auto& r : region_ids_) metric_order.push_back("region_arrivals." + r);
    std::sort(metric_order.begin(), metric_order.end());

    std::string out = "metric,group,window_start_ms,value\n";
    char buf[64];
    auto emit = [&](const std::string& metric, const char* group, SimMillis start,
                    double v) {
      std::snprintf(buf, sizeof buf, "%.10g", detail::format_safe(v));
      out += metric;
      out += ',';
      out += group;
      out += ',';
      out += std::to_string(start);
      out += ',';
      out += buf;
      out += '\n';
    };
    const GroupTag grouped[] = {GroupTag::Control, GroupTag::Experiment,
                                GroupTag::Global, GroupTag::Unassigned};
    for (const auto& metric : metric_order) {
      bool boundary = metric.find('.') == std::string::npos;
      if (boundary) {
        for (GroupTag g : grouped) {
          auto fn = value_fn(metric, g);
          for (std::size_t k = 0; k < sealed_boundary_.size(); ++k)
            emit(metric, group_name(g), window_start(k), fn(k));
        }
      } else {
        auto fn = value_fn(metric, GroupTag::Global);
        for (std::size_t k = 0; k < sealed_boundary_.size(); ++k)
          emit(metric, "global", window_start(k), fn(k));
      }
    }
    return out;
  }

 private:
  struct WindowAcc {
    std::array<detail::BoundaryAcc, 4> groups;
    std::vector<detail::ServiceAcc> services;
    std::vector<std::int64_t> region_arrivals;
  };

  GroupTag tag_of(UserId u) const {
    return group_fn_ ? group_fn_(u) : GroupTag::Unassigned;
  }

  static void apply_outcome(detail::BoundaryAcc& b, OutcomeClass oc) {
    switch (oc) {
      case OutcomeClass::Success: b.starts++; break;
      case OutcomeClass::FallbackSuccess:
        b.starts++;
        b.fallbacks++;
        break;
      case OutcomeClass::Failure: b.errors++; break;
    }
  }

  std::size_t index_of(SimMillis t) const {
    return static_cast<std::size_t>(t / window_ms_);
  }

  WindowAcc& open(SimMillis t) {
    std::size_t k = index_of(t);
    if (k < sealed_boundary_.size())
      throw OpenWindowError("record into sealed window at " + std::to_string(t));
    auto it = open_.find(k);
    if (it == open_.end()) {
      WindowAcc acc;
      acc.services.resize(service_ids_.size());
      acc.region_arrivals.assign(region_ids_.size(), 0);
      it = open_.emplace(k, std::move(acc)).first;
    }
    return it->second;
  }

  void seal_next() {
    std::size_t k = sealed_boundary_.size();
    WindowAcc acc;
    auto it = open_.find(k);
    if (it != open_.end()) {
      acc = std::move(it->second);
      open_.erase(it);
    } else {
      acc.services.resize(service_ids_.size());
      acc.region_arrivals.assign(region_ids_.size(), 0);
    }
    sealed_boundary_.push_back(acc.groups);
    std::vector<detail::ServiceRow> rows(service_ids_.size());
    for (std::size_t s = 0; s < service_ids_.size(); ++s) {
      auto& a = acc.services[s];
      auto& r = rows[s];
      r.calls = a.calls;
      r.errors = a.errors;
      r.fallbacks = a.fallbacks;
      r.deaths = a.deaths;
      r.busy_ms = a.busy_ms;
      r.queue_max = a.queue_max;
      r.mem_max = a.mem_max;
      if (!a.latencies.empty()) {
        std::sort(a.latencies.begin(), a.latencies.end());
        std::size_t idx = (a.latencies.size() * 99 + 99) / 100;  // ceil(0.99 n)
        r.p99_latency_ms = a.latencies[std::min(idx, a.latencies.size()) - 1];
      }
    }
    sealed_services_.push_back(std::move(rows));
    sealed_regions_.push_back(std::move(acc.region_arrivals));
  }

  using ValueFn = std::function<double(std::size_t)>;

  ValueFn value_fn(const std::string& metric_id, GroupTag group) const {
    auto dot = metric_id.find('.');
    if (dot == std::string::npos) {
      int g = static_cast<int>(group);
      if (metric_id == "sps")
        return [this, g](std::size_t k) {
          return static_cast<double>(sealed_boundary_[k][g].starts) /
                 (static_cast<double>(window_ms_) / 1000.0);
        };
      if (metric_id == "arrivals")
        return [this, g](std::size_t k) {
          return static_cast<double>(sealed_boundary_[k][g].arrivals);
        };
      if (metric_id == "errors")
        return [this, g](std::size_t k) {
          return static_cast<double>(sealed_boundary_[k][g].errors);
        };
      if (metric_id == "fallbacks")
        return [this, g](std::size_t k) {
          return static_cast<double>(sealed_boundary_[k][g].fallbacks);
        };
      throw UnknownMetricError(metric_id);
    }
    std::string family = metric_id.substr(0, dot);
    std::string target = metric_id.substr(dot + 1);
    if (family == "region_arrivals") {
      auto it = std::find(region_ids_.begin(), region_ids_.end(), target);
      if (it == region_ids_.end()) throw UnknownMetricError(metric_id);
      std::size_t r = static_cast<std::size_t>(it - region_ids_.begin());
      return [this, r](std::size_t k) {
        return static_cast<double>(sealed_regions_[k][r]);
      };
    }
    auto it = std::find(service_ids_.begin(), service_ids_.end(), target);
    if (it == service_ids_.end()) throw UnknownMetricError(metric_id);
    std::size_t s = static_cast<std::size_t>(it - service_ids_.begin());
    double win_s = static_cast<double>(window_ms_) / 1000.0;
    if (family == "calls")
      return [this, s](std::size_t k) { return double(sealed_services_[k][s].calls); };
    if (family == "errors")
      return [this, s](std::size_t k) { return double(sealed_services_[k][s].errors); };
    if (family == "fallbacks")
      return [this, s](std::size_t k) { return double(sealed_services_[k][s].fallbacks); };
    if (family == "deaths")
      return [this, s](std::size_t k) { return double(sealed_services_[k][s].deaths); };
    if (family == "p99_latency_ms")
      return [this, s](std::size_t k) { return sealed_services_[k][s].p99_latency_ms; };
    if (family == "queue_depth_max")
      return [this, s](std::size_t k) { return double(sealed_services_[k][s].queue_max); };
    if (family == "memory_proxy")
      return [this, s](std::size_t k) { return double(sealed_services_[k][s].mem_max); };
    if (family == "busy_fraction") {
      // Busy time summed over instances, normalized by the configured
      // instance count so 1.0 means the whole fleet of this service ran at
      // rated capacity for the window.
      auto cit = instance_counts_.find(target);
      double denom = win_s * 1000.0 *
                     (cit == instance_counts_.end() ? 1.0 : double(cit->second));
      return [this, s, denom](std::size_t k) {
        return sealed_services_[k][s].busy_ms / denom;
      };
    }
    if (family == "fallback_rate")
      return [this, s](std::size_t k) {
        const auto& r = sealed_services_[k][s];
        return r.calls ? double(r.fallbacks) / double(r.calls) : 0.0;
      };
    if (family == "error_rate")
      return [this, s](std::size_t k) {
        const auto& r = sealed_services_[k][s];
        return r.calls ? double(r.errors) / double(r.calls) : 0.0;
      };
    throw UnknownMetricError(metric_id);
  }

 public:
  // Total instances per service across regions; used for busy_fraction
  // normalization. Set by the simulator at world construction.
  void set_instance_count(const std::string& service, int count) {
    instance_counts_[service] = count;
  }

 private:
  SimMillis window_ms_;
  std::vector<std::string> service_ids_;
  std::vector<std::string> region_ids_;
  std::map<std::string, int> instance_counts_;
  std::function<GroupTag(UserId)> group_fn_;
  std::map<std::size_t, WindowAcc> open_;
  std::vector<std::array<detail::BoundaryAcc, 4>> sealed_boundary_;
  std::vector<std::vector<detail::ServiceRow>> sealed_services_;
  std::vector<std::vector<std::int64_t>> sealed_regions_;
};

// Starts/second over a closed window of a prebuilt series.
inline double sps(const MetricSeries& series, SimMillis window_start) {
  for (const auto& [start, v] : series.samples)
    if (start == window_start) return v;
  throw OpenWindowError("window starting at " + std::to_string(window_start) +
                        " ms is not present in series " + series.metric_id);
}

inline std::vector<DeviationRow> baseline_deviation(const MetricSeries& current,
                                                    const BaselineModel& model) {
  std::map<SimMillis, double> ref;
  for (const auto& [start, v] : model.reference.samples) ref[start] = v;
  std::vector<DeviationRow> out;
  out.reserve(current.samples.size());
  for (const auto& [start, v] : current.samples) {
    auto it = ref.find(start);
    if (it == ref.end())
      throw ConfigError("reference",
                        "reference series does not cover window at " +
                            std::to_string(start) + " ms");
    DeviationRow row;
    row.window_start = start;
    row.current = v;
    row.reference = it->second;
    if (it->second > 0) {
      row.deviation = (v - it->second) / it->second;
      row.flagged = std::abs(row.deviation) > model.band;
    } else if (v != 0) {
      row.infinite = true;
      row.flagged = true;
      row.deviation = std::numeric_limits<double>::infinity();
    }
    out.push_back(row);
  }
  return out;
}

inline std::vector<Breach> guardrail_check(const std::vector<Guardrail>& guardrails,
                                           const MetricSink& sink) {
  std::vector<Breach> breaches;
  for (const auto& g : guardrails) {
    if (!sink.knows_metric(g.metric_id)) throw UnknownMetricError(g.metric_id);
    if (g.consecutive_windows < 1)
      throw ConfigError("guardrail.consecutive_windows", "must be >= 1");
    MetricSeries s = sink.series(g.metric_id);
    int streak = 0;
    for (const auto& [start, v] : s.samples) {
      bool violated = g.direction == Direction::Above ? v > g.threshold
                                                      : v < g.threshold;
      streak = violated ? streak + 1 : 0;
      if (streak >= g.consecutive_windows) {
        Breach b;
        b.metric_id = g.metric_id;
        auto dot = g.metric_id.find('.');
        b.service = dot == std::string::npos ? "" : g.metric_id.substr(dot + 1);
        b.first_window_start =
            start - static_cast<SimMillis>(g.consecutive_windows - 1) * s.window_ms;
        b.threshold = g.threshold;
        b.observed = v;
        breaches.push_back(b);
        break;
      }
    }
  }
  return breaches;
}

}  // namespace chaoslab::metrics
