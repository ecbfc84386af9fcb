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
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chaoslab/error.hpp"

namespace chaoslab {

using SimMillis = std::int64_t;
using UserId = std::uint64_t;

enum class Criticality { Critical, Degradable };
enum class CallKind { RequiredForSuccess, Degradable };
enum class FallbackKind { None, DefaultValue, BypassTo };
enum class QueueKind { Bounded, Unbounded };

struct CacheSpec {
  SimMillis ttl_ms = 0;
  // When true, error responses are stored and served until TTL expiry.
  bool cache_errors = false;
};

struct Fallback {
  FallbackKind kind = FallbackKind::None;
  std::string bypass_target;  // FallbackKind::BypassTo only
};

struct QueuePolicy {
  QueueKind kind = QueueKind::Unbounded;
  std::int64_t max_items = 0;  // QueueKind::Bounded only
};

struct ServiceSpec {
  std::string id;
  Criticality criticality = Criticality::Degradable;
  Fallback fallback;
  double capacity_per_instance = 0;  // requests/second
  double base_latency_ms = 0;        // deterministic mean, jittered per call
  double jitter_frac = 0.1;          // relative half-width of latency jitter
  QueuePolicy queue;
  std::int64_t memory_limit = 0;  // queue item count proxy
  std::optional<CacheSpec> cache;
  int instances_per_region = 1;
};

struct RegionSpec {
  std::string id;
  double routing_weight = 1.0;
  bool evacuated = false;
};

struct EdgeSpec {
  std::string from;
  std::string to;
  CallKind kind = CallKind::RequiredForSuccess;
};

struct TrafficConfig {
  double base_rate = 100.0;  // arrivals/second
  double amplitude = 0.5;    // diurnal modulation depth, [0,1]
  double phase_s = 0.0;      // sinusoid phase offset, seconds
  std::uint64_t population = 100'000;
  std::uint64_t catalog_size = 1'000;  // distinct content keys
};

struct Topology {
  std::vector<ServiceSpec> services;
  std::vector<RegionSpec> regions;
  std::vector<EdgeSpec> edges;
  std::string entry_service;
  TrafficConfig traffic;
  std::int64_t version = 1;

  // Dense lookups built by load_topology/finalize.
  std::map<std::string, int> service_index;
  std::map<std::string, int> region_index;
  std::vector<std::vector<int>> out_edges;  // per service: edge indices, doc order

  int service_of(const std::string& id) const {
    auto it = service_index.find(id);
    if (it == service_index.end()) throw ConfigError("", "unknown service: " + id);
    return it->second;
  }
  int region_of(const std::string& id) const {
    auto it = region_index.find(id);
    if (it == region_index.end()) throw ConfigError("", "unknown region: " + id);
    return it->second;
  }
  bool has_edge(int from, int to) const {
    for (int e : out_edges[static_cast<size_t>(from)])
      if (service_index.at(edges[static_cast<size_t>(e)].to) == to) return true;
    return false;
  }
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key,
                                     const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(path + "." + key, "missing required field");
  return *it;
}

template <typename T>
T get_num(const nlohmann::json& j, const char* key, const std::string& path) {
  const auto& v = require(j, key, path);
  if (!v.is_number()) throw ConfigError(path + "." + key, "expected a number");
  return v.get<T>();
}

inline std::string get_str(const nlohmann::json& j, const char* key,
                           const std::string& path) {
  const auto& v = require(j, key, path);
  if (!v.is_string()) throw ConfigError(path + "." + key, "expected a string");
  return v.get<std::string>();
}

// Cycle detection over the dependency DAG; returns a cycle as a service id
// path when one exists.
inline bool find_cycle(const Topology& t, std::vector<std::string>& cycle) {
  enum { White, Grey, Black };
  std::vector<int> color(t.services.size(), White);
  std::vector<int> stack;
  // Iterative DFS keeping the grey path so the error can name the cycle.
  std::vector<std::pair<int, size_t>> frames;
  for (size_t root = 0; root < t.services.size(); ++root) {
    if (color[root] != White) continue;
    frames.push_back({static_cast<int>(root), 0});
    color[root] = Grey;
    stack.push_back(static_cast<int>(root));
    while (!frames.empty()) {
      auto& [node, next] = frames.back();
      const auto& outs = t.out_edges[static_cast<size_t>(node)];
      if (next < outs.size()) {
        int callee = t.service_index.at(t.edges[static_cast<size_t>(outs[next])].to);
        ++next;
        if (color[callee] == Grey) {
          auto it = std::find(stack.begin(), stack.end(), callee);
          for (; it != stack.end(); ++it)
            cycle.push_back(t.services[static_cast<size_t>(*it)].id);
          cycle.push_back(t.services[static_cast<size_t>(callee)].id);
          return true;
        }
        if (color[callee] == White) {
          color[callee] = Grey;
          stack.push_back(callee);
          frames.push_back({callee, 0});
        }
      } else {
        color[node] = Black;
        stack.pop_back();
        frames.pop_back();
      }
    }
  }
  return false;
}

}  // namespace detail

inline void validate_topology(Topology& t) {
  if (t.services.empty()) throw ConfigError("services", "at least one service required");
  if (t.regions.empty()) throw ConfigError("regions", "at least one region required");

  t.service_index.clear();
  t.region_index.clear();
  for (size_t i = 0; i < t.services.size(); ++i) {
    const auto& s = t.services[i];
    std::string path = "services[" + std::to_string(i) + "]";
    if (s.id.empty()) throw ConfigError(path + ".id", "empty service id");
    if (!t.service_index.emplace(s.id, static_cast<int>(i)).second)
      throw ConfigError(path + ".id", "duplicate service id: " + s.id);
    if (!(s.capacity_per_instance > 0))
      throw ConfigError(path + ".capacity_per_instance", "must be > 0");
    if (s.base_latency_ms < 0)
      throw ConfigError(path + ".base_latency_ms", "must be >= 0");
    if (s.jitter_frac < 0 || s.jitter_frac >= 1)
      throw ConfigError(path + ".jitter_frac", "must be in [0,1)");
    if (s.queue.kind == QueueKind::Bounded && s.queue.max_items < 1)
      throw ConfigError(path + ".queue_policy.max", "bounded queue max must be >= 1");
    if (s.memory_limit < 1)
      throw ConfigError(path + ".memory_limit", "must be >= 1");
    if (s.instances_per_region < 1)
      throw ConfigError(path + ".instances_per_region", "must be >= 1");
    if (s.cache && s.cache->ttl_ms <= 0)
      throw ConfigError(path + ".cache.ttl_s", "ttl must be > 0");
  }
  for (size_t i = 0; i < t.regions.size(); ++i) {
    const auto& r = t.regions[i];
    std::string path = "regions[" + std::to_string(i) + "]";
    if (r.id.empty()) throw ConfigError(path + ".id", "empty region id");
    if (!t.region_index.emplace(r.id, static_cast<int>(i)).second)
      throw ConfigError(path + ".id", "duplicate region id: " + r.id);
    if (r.routing_weight < 0)
      throw ConfigError(path + ".routing_weight", "must be >= 0");
  }
  bool any_routable = false;
  for (const auto& r : t.regions)
    if (!r.evacuated && r.routing_weight > 0) any_routable = true;
  if (!any_routable) throw ConfigError("regions", "no routable region (all evacuated or weight 0)");

  for (size_t i = 0; i < t.services.size(); ++i) {
    const auto& s = t.services[i];
    std::string path = "services[" + std::to_string(i) + "].fallback";
    if (s.fallback.kind == FallbackKind::BypassTo) {
      if (t.service_index.find(s.fallback.bypass_target) == t.service_index.end())
        throw ConfigError(path + ".target",
                          "bypass-to target does not exist: " + s.fallback.bypass_target);
      if (s.fallback.bypass_target == s.id)
        throw ConfigError(path + ".target", "bypass-to target must not be the service itself");
    }
  }

  t.out_edges.assign(t.services.size(), {});
  for (size_t i = 0; i < t.edges.size(); ++i) {
    const auto& e = t.edges[i];
    std::string path = "edges[" + std::to_string(i) + "]";
    auto from = t.service_index.find(e.from);
    if (from == t.service_index.end())
      throw ConfigError(path + ".from", "unknown service: " + e.from);
    if (t.service_index.find(e.to) == t.service_index.end())
      throw ConfigError(path + ".to", "unknown service: " + e.to);
    t.out_edges[static_cast<size_t>(from->second)].push_back(static_cast<int>(i));
  }

  std::vector<std::string> cycle;
  if (detail::find_cycle(t, cycle)) {
    std::string msg = "dependency cycle: ";
    for (size_t i = 0; i < cycle.size(); ++i) {
      if (i) msg += " -> ";
      msg += cycle[i];
    }
    throw ConfigError("edges", msg);
  }

  if (t.service_index.find(t.entry_service) == t.service_index.end())
    throw ConfigError("entry_service", "unknown service: " + t.entry_service);

  if (!(t.traffic.base_rate > 0)) throw ConfigError("traffic.base_rate", "must be > 0");
  if (t.traffic.amplitude < 0 || t.traffic.amplitude > 1)
    throw ConfigError("traffic.amplitude", "must be in [0,1]");
  if (t.traffic.population < 1) throw ConfigError("traffic.population", "must be >= 1");
  if (t.traffic.catalog_size < 1) throw ConfigError("traffic.catalog_size", "must be >= 1");
  if (t.version < 1) throw ConfigError("version", "must be >= 1");
}

inline Topology load_topology(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("", "topology document must be an object");
  Topology t;

  const auto& services = detail::require(doc, "services", "");
  if (!services.is_array()) throw ConfigError("services", "expected an array");
  for (size_t i = 0; i < services.size(); ++i) {
    const auto& js = services[i];
    std::string path = "services[" + std::to_string(i) + "]";
    ServiceSpec s;
    s.id = detail::get_str(js, "id", path);
    std::string crit = js.value("criticality", "degradable");
    if (crit == "critical") s.criticality = Criticality::Critical;
    else if (crit == "degradable") s.criticality = Criticality::Degradable;
    else throw ConfigError(path + ".criticality", "expected critical|degradable");

    if (js.contains("fallback")) {
      const auto& jf = js["fallback"];
      std::string kind = detail::get_str(jf, "kind", path + ".fallback");
      if (kind == "none") s.fallback.kind = FallbackKind::None;
      else if (kind == "default-value") s.fallback.kind = FallbackKind::DefaultValue;
      else if (kind == "bypass-to") {
        s.fallback.kind = FallbackKind::BypassTo;
        s.fallback.bypass_target = detail::get_str(jf, "target", path + ".fallback");
      } else {
        throw ConfigError(path + ".fallback.kind", "expected none|default-value|bypass-to");
      }
    }

    s.capacity_per_instance = detail::get_num<double>(js, "capacity_per_instance", path);
    s.base_latency_ms = detail::get_num<double>(js, "base_latency_ms", path);
    s.jitter_frac = js.value("jitter_frac", 0.1);

    if (js.contains("queue_policy")) {
      const auto& jq = js["queue_policy"];
      std::string kind = detail::get_str(jq, "kind", path + ".queue_policy");
      if (kind == "bounded") {
        s.queue.kind = QueueKind::Bounded;
        s.queue.max_items = detail::get_num<std::int64_t>(jq, "max", path + ".queue_policy");
      } else if (kind == "unbounded") {
        s.queue.kind = QueueKind::Unbounded;
      } else {
        throw ConfigError(path + ".queue_policy.kind", "expected bounded|unbounded");
      }
    }

    s.memory_limit = detail::get_num<std::int64_t>(js, "memory_limit", path);

    if (js.contains("cache") && !js["cache"].is_null()) {
      const auto& jc = js["cache"];
      CacheSpec c;
      c.ttl_ms = static_cast<SimMillis>(
          detail::get_num<double>(jc, "ttl_s", path + ".cache") * 1000.0);
      c.cache_errors = jc.value("cache_errors", false);
      s.cache = c;
    }

    s.instances_per_region = js.value("instances_per_region", 1);
    t.services.push_back(std::move(s));
  }

  const auto& regions = detail::require(doc, "regions", "");
  if (!regions.is_array()) throw ConfigError("regions", "expected an array");
  for (size_t i = 0; i < regions.size(); ++i) {
    const auto& jr = regions[i];
    std::string path = "regions[" + std::to_string(i) + "]";
    RegionSpec r;
    r.id = detail::get_str(jr, "id", path);
    r.routing_weight = jr.value("routing_weight", 1.0);
    r.evacuated = jr.value("evacuated", false);
    t.regions.push_back(std::move(r));
  }

  const auto& edges = detail::require(doc, "edges", "");
  if (!edges.is_array()) throw ConfigError("edges", "expected an array");
  for (size_t i = 0; i < edges.size(); ++i) {
    const auto& je = edges[i];
    std::string path = "edges[" + std::to_string(i) + "]";
    EdgeSpec e;
    e.from = detail::get_str(je, "from", path);
    e.to = detail::get_str(je, "to", path);
    std::string kind = je.value("kind", "required-for-success");
    if (kind == "required-for-success") e.kind = CallKind::RequiredForSuccess;
    else if (kind == "degradable") e.kind = CallKind::Degradable;
    else throw ConfigError(path + ".kind", "expected required-for-success|degradable");
    t.edges.push_back(std::move(e));
  }

  t.entry_service = detail::get_str(doc, "entry_service", "");

  if (doc.contains("traffic")) {
    const auto& jt = doc["traffic"];
    t.traffic.base_rate = detail::get_num<double>(jt, "base_rate", "traffic");
    t.traffic.amplitude = jt.value("amplitude", 0.5);
    t.traffic.phase_s = jt.value("phase", 0.0);
    t.traffic.population = detail::get_num<std::uint64_t>(jt, "population", "traffic");
    t.traffic.catalog_size = jt.value("catalog_size", std::uint64_t{1000});
  }

  t.version = doc.value("version", std::int64_t{1});

  validate_topology(t);
  return t;
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open file");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path, std::string("parse error: ") + e.what());
  }
  return doc;
}

inline Topology load_topology_file(const std::string& path) {
  return load_topology(load_json_file(path));
}

// Canonical re-emit, used to embed a topology snapshot in reports.
inline nlohmann::json topology_to_json(const Topology& t) {
  nlohmann::json doc;
  doc["services"] = nlohmann::json::array();
  for (const auto& s : t.services) {
    nlohmann::json js;
    js["id"] = s.id;
    js["criticality"] = s.criticality == Criticality::Critical ? "critical" : "degradable";
    nlohmann::json jf;
    switch (s.fallback.kind) {
      case FallbackKind::None: jf["kind"] = "none"; break;
      case FallbackKind::DefaultValue: jf["kind"] = "default-value"; break;
      case FallbackKind::BypassTo:
        jf["kind"] = "bypass-to";
        jf["target"] = s.fallback.bypass_target;
        break;
    }
    js["fallback"] = jf;
    js["capacity_per_instance"] = s.capacity_per_instance;
    js["base_latency_ms"] = s.base_latency_ms;
    js["jitter_frac"] = s.jitter_frac;
    nlohmann::json jq;
    if (s.queue.kind == QueueKind::Bounded) {
      jq["kind"] = "bounded";
      jq["max"] = s.queue.max_items;
    } else {
      jq["kind"] = "unbounded";
    }
    js["queue_policy"] = jq;
    js["memory_limit"] = s.memory_limit;
    if (s.cache) {
      js["cache"] = {{"ttl_s", static_cast<double>(s.cache->ttl_ms) / 1000.0},
                     {"cache_errors", s.cache->cache_errors}};
    }
    js["instances_per_region"] = s.instances_per_region;
    doc["services"].push_back(js);
  }
  doc["regions"] = nlohmann::json::array();
  for (const auto& r : t.regions) {
    doc["regions"].push_back({{"id", r.id},
                              {"routing_weight", r.routing_weight},
                              {"evacuated", r.evacuated}});
  }
  doc["edges"] = nlohmann::json::array();
  for (const auto& e : t.edges) {
    doc["edges"].push_back(
        {{"from", e.from},
         {"to", e.to},
         {"kind", e.kind == CallKind::RequiredForSuccess ? "required-for-success"
                                                         : "degradable"}});
  }
  doc["entry_service"] = t.entry_service;
  doc["traffic"] = {{"base_rate", t.traffic.base_rate},
                    {"amplitude", t.traffic.amplitude},
                    {"phase", t.traffic.phase_s},
                    {"population", t.traffic.population},
                    {"catalog_size", t.traffic.catalog_size}};
  doc["version"] = t.version;
  return doc;
}

}  // namespace chaoslab
