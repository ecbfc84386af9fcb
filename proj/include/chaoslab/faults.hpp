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

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chaoslab/error.hpp"
#include "chaoslab/hash.hpp"
#include "chaoslab/topology.hpp"

namespace chaoslab::faults {

enum class FaultKind {
  TerminateInstance,
  InjectLatency,
  FailRequests,
  FailService,
  RegionOutage,
};

enum class OutageMode { Blackhole, Evacuate };

enum class ScopeMode { All, Fraction };

struct UserScope {
  ScopeMode mode = ScopeMode::All;
  double fraction = 0.0;       // Fraction mode
  std::uint64_t salt = 0;      // Fraction mode
};

struct TimeWindow {
  SimMillis start_ms = 0;
  SimMillis duration_ms = 0;
  SimMillis end_ms() const { return start_ms + duration_ms; }
  bool contains(SimMillis t) const { return t >= start_ms && t < end_ms(); }
};

// Instance address. Unset fields are picked by the fault-concern PRNG at
// activation time, so tests can pin a victim while the chaos-monkey template
// stays random.
struct InstanceTarget {
  std::optional<std::string> service;
  std::optional<std::string> region;
  std::optional<int> instance;
};

struct EdgeTarget {
  std::string from;
  std::string to;
};

struct FaultSpec {
  FaultKind kind = FaultKind::FailService;
  // Target — which member is meaningful depends on kind.
  InstanceTarget instance;       // terminate-instance
  EdgeTarget edge;               // inject-latency, fail-requests
  std::string service;           // fail-service
  std::string region;            // region-outage
  OutageMode outage_mode = OutageMode::Evacuate;
  double extra_ms = 0;           // inject-latency
  double jitter_ms = 0;          // inject-latency
  double probability = 1.0;      // fail-requests
  UserScope scope;
  TimeWindow window;
};

// Pure, deterministic membership predicate. Fraction mode matches the users
// whose hash bucket falls below fraction * 10^6.
inline bool scope_match(UserId user, const UserScope& scope) {
  if (scope.mode == ScopeMode::All) return true;
  auto threshold = static_cast<std::uint64_t>(
      std::llround(scope.fraction * static_cast<double>(kBucketSpace)));
  return user_bucket(user, scope.salt) < threshold;
}

inline const char* fault_kind_name(FaultKind k) {
  switch (k) {
    case FaultKind::TerminateInstance: return "terminate-instance";
    case FaultKind::InjectLatency: return "inject-latency";
    case FaultKind::FailRequests: return "fail-requests";
    case FaultKind::FailService: return "fail-service";
    case FaultKind::RegionOutage: return "region-outage";
  }
  return "?";
}

// A fault compiled against a topology: resolved indices plus the per-call
// interceptor predicates the simulator consults. Immutable after
// compilation.
struct CompiledFault {
  FaultSpec spec;
  int fault_index = 0;  // position in the experiment's fault list

  // Resolved targets (-1 when not applicable / unpinned).
  int edge_from = -1;
  int edge_to = -1;
  int service = -1;
  int region = -1;

  bool active_at(SimMillis t) const { return spec.window.contains(t); }
  bool user_in_scope(UserId u) const { return scope_match(u, spec.scope); }

  // fail-requests sampling: one stable coin per (fault, request, hop) so a
  // replay sees identical outcomes and unaffected calls never consume
  // randomness.
  bool fail_coin(std::uint64_t request_seq, std::uint64_t hop) const {
    if (spec.probability >= 1.0) return true;
    double u = to_unit(mix64(mix64(0xFA17C0DEull, static_cast<std::uint64_t>(fault_index)),
                             request_seq, hop));
    return u < spec.probability;
  }

  double latency_extra_ms(std::uint64_t request_seq, std::uint64_t hop) const {
    double extra = spec.extra_ms;
    if (spec.jitter_ms > 0) {
      double u = to_unit(mix64(mix64(0x1A7E2C1Full, static_cast<std::uint64_t>(fault_index)),
                               request_seq, hop));
      extra += (2.0 * u - 1.0) * spec.jitter_ms;
    }
    return extra < 0 ? 0 : extra;
  }
};

inline void validate_fault(const FaultSpec& spec, const std::string& path) {
  if (spec.window.duration_ms <= 0)
    throw ConfigError(path + ".window.duration_ms", "must be > 0");
  if (spec.window.start_ms < 0)
    throw ConfigError(path + ".window.start_ms", "must be >= 0");
  if (spec.scope.mode == ScopeMode::Fraction &&
      (spec.scope.fraction < 0 || spec.scope.fraction > 1))
    throw ConfigError(path + ".scope.fraction", "must be in [0,1]");
  // Physical events hit every user routed at the target; a per-user scope on
  // them is a spec mistake, not a narrowing.
  bool physical = spec.kind == FaultKind::TerminateInstance ||
                  spec.kind == FaultKind::RegionOutage;
  if (physical && spec.scope.mode != ScopeMode::All)
    throw ConfigError(path + ".scope",
                      std::string(fault_kind_name(spec.kind)) +
                          " is a physical event and requires scope \"all\"");
  if (spec.kind == FaultKind::FailRequests &&
      (spec.probability < 0 || spec.probability > 1))
    throw ConfigError(path + ".probability", "must be in [0,1]");
}

inline CompiledFault compile_fault(const FaultSpec& spec, const Topology& topo,
                                   int fault_index = 0,
                                   const std::string& path = "fault") {
  validate_fault(spec, path);
  CompiledFault c;
  c.spec = spec;
  c.fault_index = fault_index;
  switch (spec.kind) {
    case FaultKind::TerminateInstance:
      if (spec.instance.service) {
        auto it = topo.service_index.find(*spec.instance.service);
        if (it == topo.service_index.end())
          throw ConfigError(path + ".service", "unknown service: " + *spec.instance.service);
        c.service = it->second;
        if (spec.instance.instance &&
            (*spec.instance.instance < 0 ||
             *spec.instance.instance >=
                 topo.services[static_cast<std::size_t>(it->second)].instances_per_region))
          throw ConfigError(path + ".instance", "instance index out of range");
      }
      if (spec.instance.region) {
        auto it = topo.region_index.find(*spec.instance.region);
        if (it == topo.region_index.end())
          throw ConfigError(path + ".region", "unknown region: " + *spec.instance.region);
        c.region = it->second;
      }
      break;
    case FaultKind::InjectLatency:
    case FaultKind::FailRequests: {
      auto from = topo.service_index.find(spec.edge.from);
      auto to = topo.service_index.find(spec.edge.to);
      if (from == topo.service_index.end())
        throw ConfigError(path + ".edge.from", "unknown service: " + spec.edge.from);
      if (to == topo.service_index.end())
        throw ConfigError(path + ".edge.to", "unknown service: " + spec.edge.to);
      if (!topo.has_edge(from->second, to->second))
        throw ConfigError(path + ".edge",
                          "no edge " + spec.edge.from + " -> " + spec.edge.to);
      c.edge_from = from->second;
      c.edge_to = to->second;
      break;
    }
    case FaultKind::FailService: {
      auto it = topo.service_index.find(spec.service);
      if (it == topo.service_index.end())
        throw ConfigError(path + ".service", "unknown service: " + spec.service);
      // Behaves as fail-requests(p=1) on every inbound edge of the service,
      // including the user-facing edge when it is the entry point.
      c.service = it->second;
      break;
    }
    case FaultKind::RegionOutage: {
      auto it = topo.region_index.find(spec.region);
      if (it == topo.region_index.end())
        throw ConfigError(path + ".region", "unknown region: " + spec.region);
      c.region = it->second;
      break;
    }
  }
  return c;
}

// --- serialization (embedded in experiment documents) ---

inline FaultSpec fault_from_json(const nlohmann::json& j, const std::string& path);

struct FaultTemplate {
  std::string name;
  FaultKind kind;
  nlohmann::json defaults;  // parameter defaults merged under the instantiation
};

// The five real-world event classes, as parameterizable templates.
inline std::vector<FaultTemplate> builtin_catalog() {
  using nlohmann::json;
  return {
      {"chaos-monkey", FaultKind::TerminateInstance, json::object()},
      {"latency-fit", FaultKind::InjectLatency, json{{"extra_ms", 100.0}, {"jitter_ms", 0.0}}},
      {"failure-fit", FaultKind::FailRequests, json{{"probability", 1.0}}},
      {"service-blackout", FaultKind::FailService, json::object()},
      // Kong drills simulate the loss of a region rather than injecting it:
      // traffic is redirected, nothing is switched off.
      {"chaos-kong", FaultKind::RegionOutage, json{{"mode", "evacuate"}}},
  };
}

inline FaultSpec fault_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "fault must be an object");

  nlohmann::json doc = j;
  if (doc.contains("template")) {
    std::string name = doc["template"].get<std::string>();
    auto catalog = builtin_catalog();
    const FaultTemplate* tpl = nullptr;
    for (const auto& t : catalog)
      if (t.name == name) tpl = &t;
    if (!tpl) throw ConfigError(path + ".template", "unknown template: " + name);
    nlohmann::json merged = tpl->defaults;
    merged["kind"] = fault_kind_name(tpl->kind);
    for (auto& [k, v] : doc.items())
      if (k != "template") merged[k] = v;
    doc = merged;
  }

  FaultSpec f;
  std::string kind = detail::get_str(doc, "kind", path);
  if (kind == "terminate-instance") f.kind = FaultKind::TerminateInstance;
  else if (kind == "inject-latency") f.kind = FaultKind::InjectLatency;
  else if (kind == "fail-requests") f.kind = FaultKind::FailRequests;
  else if (kind == "fail-service") f.kind = FaultKind::FailService;
  else if (kind == "region-outage") f.kind = FaultKind::RegionOutage;
  else throw ConfigError(path + ".kind", "unknown fault kind: " + kind);

  switch (f.kind) {
    case FaultKind::TerminateInstance:
      if (doc.contains("service")) f.instance.service = doc["service"].get<std::string>();
      if (doc.contains("region")) f.instance.region = doc["region"].get<std::string>();
      if (doc.contains("instance")) f.instance.instance = doc["instance"].get<int>();
      break;
    case FaultKind::InjectLatency:
    case FaultKind::FailRequests: {
      const auto& je = detail::require(doc, "edge", path);
      f.edge.from = detail::get_str(je, "from", path + ".edge");
      f.edge.to = detail::get_str(je, "to", path + ".edge");
      if (f.kind == FaultKind::InjectLatency) {
        f.extra_ms = detail::get_num<double>(doc, "extra_ms", path);
        f.jitter_ms = doc.value("jitter_ms", 0.0);
      } else {
        f.probability = detail::get_num<double>(doc, "probability", path);
      }
      break;
    }
    case FaultKind::FailService:
      f.service = detail::get_str(doc, "service", path);
      break;
    case FaultKind::RegionOutage: {
      f.region = detail::get_str(doc, "region", path);
      std::string mode = doc.value("mode", "evacuate");
      if (mode == "blackhole") f.outage_mode = OutageMode::Blackhole;
      else if (mode == "evacuate") f.outage_mode = OutageMode::Evacuate;
      else throw ConfigError(path + ".mode", "expected blackhole|evacuate");
      break;
    }
  }

  if (doc.contains("scope")) {
    const auto& js = doc["scope"];
    std::string mode = detail::get_str(js, "mode", path + ".scope");
    if (mode == "all") {
      f.scope.mode = ScopeMode::All;
    } else if (mode == "fraction") {
      f.scope.mode = ScopeMode::Fraction;
      f.scope.fraction = detail::get_num<double>(js, "fraction", path + ".scope");
      f.scope.salt = detail::get_num<std::uint64_t>(js, "salt", path + ".scope");
    } else {
      throw ConfigError(path + ".scope.mode", "expected all|fraction");
    }
  }

  const auto& jw = detail::require(doc, "window", path);
  f.window.start_ms = detail::get_num<SimMillis>(jw, "start_ms", path + ".window");
  f.window.duration_ms = detail::get_num<SimMillis>(jw, "duration_ms", path + ".window");

  validate_fault(f, path);
  return f;
}

inline nlohmann::json fault_to_json(const FaultSpec& f) {
  nlohmann::json j;
  j["kind"] = fault_kind_name(f.kind);
  switch (f.kind) {
    case FaultKind::TerminateInstance:
      if (f.instance.service) j["service"] = *f.instance.service;
      if (f.instance.region) j["region"] = *f.instance.region;
      if (f.instance.instance) j["instance"] = *f.instance.instance;
      break;
    case FaultKind::InjectLatency:
      j["edge"] = {{"from", f.edge.from}, {"to", f.edge.to}};
      j["extra_ms"] = f.extra_ms;
      j["jitter_ms"] = f.jitter_ms;
      break;
    case FaultKind::FailRequests:
      j["edge"] = {{"from", f.edge.from}, {"to", f.edge.to}};
      j["probability"] = f.probability;
      break;
    case FaultKind::FailService:
      j["service"] = f.service;
      break;
    case FaultKind::RegionOutage:
      j["region"] = f.region;
      j["mode"] = f.outage_mode == OutageMode::Blackhole ? "blackhole" : "evacuate";
      break;
  }
  if (f.scope.mode == ScopeMode::All) {
    j["scope"] = {{"mode", "all"}};
  } else {
    j["scope"] = {{"mode", "fraction"},
                  {"fraction", f.scope.fraction},
                  {"salt", f.scope.salt}};
  }
  j["window"] = {{"start_ms", f.window.start_ms},
                 {"duration_ms", f.window.duration_ms}};
  return j;
}

}  // namespace chaoslab::faults
