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

#include "chaoslab/topology.hpp"

#include <gtest/gtest.h>

#include <string>

namespace chaoslab {
namespace {

const std::string kFixtures = CHAOSLAB_FIXTURE_DIR;

nlohmann::json minimal_doc() {
  return nlohmann::json::parse(R"({
    "services": [
      {"id": "a", "capacity_per_instance": 10, "base_latency_ms": 5,
       "memory_limit": 100, "instances_per_region": 1},
      {"id": "b", "capacity_per_instance": 10, "base_latency_ms": 5,
       "memory_limit": 100, "instances_per_region": 1}
    ],
    "regions": [{"id": "r1", "routing_weight": 1.0}],
    "edges": [{"from": "a", "to": "b", "kind": "required-for-success"}],
    "entry_service": "a",
    "traffic": {"base_rate": 10, "population": 1000}
  })");
}

TEST(Topology, LoadsAllShippedFixtures) {
  for (const char* name : {"bookmark-fallback", "cache-poisoning",
                           "unbounded-queue", "three-region"}) {
    SCOPED_TRACE(name);
    Topology t = load_topology_file(kFixtures + "/topologies/" + name + ".json");
    EXPECT_FALSE(t.services.empty());
    EXPECT_GE(t.version, 1);
    for (const auto& s : t.services) EXPECT_GE(s.instances_per_region, 1);
  }
}

TEST(Topology, BookmarkFixtureHasDegradableFallback) {
  Topology t =
      load_topology_file(kFixtures + "/topologies/bookmark-fallback.json");
  const auto& bm = t.services[static_cast<size_t>(t.service_of("bookmarks"))];
  EXPECT_EQ(bm.criticality, Criticality::Degradable);
  EXPECT_EQ(bm.fallback.kind, FallbackKind::DefaultValue);
  EXPECT_EQ(t.version, 1);
}

TEST(Topology, SelfLoopIsReportedAsCycle) {
  auto doc = minimal_doc();
  doc["edges"].push_back({{"from", "a"}, {"to", "a"}});
  try {
    load_topology(doc);
    FAIL() << "expected cycle error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cycle"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("a -> a"), std::string::npos);
  }
}

TEST(Topology, LongerCycleNamesItsMembers) {
  auto doc = minimal_doc();
  doc["edges"].push_back({{"from", "b"}, {"to", "a"}});
  try {
    load_topology(doc);
    FAIL() << "expected cycle error";
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("a"), std::string::npos);
    EXPECT_NE(msg.find("b"), std::string::npos);
  }
}

TEST(Topology, DanglingBypassTargetIsRejected) {
  auto doc = minimal_doc();
  doc["services"][0]["fallback"] = {{"kind", "bypass-to"},
                                    {"target", "nonexistent"}};
  try {
    load_topology(doc);
    FAIL() << "expected dangling-reference error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.path()).find("fallback"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("nonexistent"), std::string::npos);
  }
}

TEST(Topology, BypassToSelfIsRejected) {
  auto doc = minimal_doc();
  doc["services"][0]["fallback"] = {{"kind", "bypass-to"}, {"target", "a"}};
  EXPECT_THROW(load_topology(doc), ConfigError);
}

TEST(Topology, SchemaErrorNamesTheField) {
  auto doc = minimal_doc();
  doc["services"][1].erase("capacity_per_instance");
  try {
    load_topology(doc);
    FAIL() << "expected schema error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "services[1].capacity_per_instance");
  }
}

TEST(Topology, NonPositiveCapacityIsRejected) {
  auto doc = minimal_doc();
  doc["services"][0]["capacity_per_instance"] = 0;
  try {
    load_topology(doc);
    FAIL() << "expected invariant error";
  } catch (const ConfigError& e) {
    EXPECT_NE(e.path().find("capacity_per_instance"), std::string::npos);
  }
}

TEST(Topology, BoundedQueueNeedsPositiveMax) {
  auto doc = minimal_doc();
  doc["services"][0]["queue_policy"] = {{"kind", "bounded"}, {"max", 0}};
  EXPECT_THROW(load_topology(doc), ConfigError);
}

TEST(Topology, UnknownEdgeEndpointIsRejected) {
  auto doc = minimal_doc();
  doc["edges"].push_back({{"from", "a"}, {"to", "ghost"}});
  try {
    load_topology(doc);
    FAIL() << "expected dangling-reference error";
  } catch (const ConfigError& e) {
    EXPECT_NE(e.path().find("edges[1].to"), std::string::npos);
  }
}

TEST(Topology, UnknownEntryServiceIsRejected) {
  auto doc = minimal_doc();
  doc["entry_service"] = "ghost";
  EXPECT_THROW(load_topology(doc), ConfigError);
}

TEST(Topology, CacheTtlMustBePositive) {
  auto doc = minimal_doc();
  doc["services"][0]["cache"] = {{"ttl_s", 0}};
  EXPECT_THROW(load_topology(doc), ConfigError);
}

TEST(Topology, VersionDefaultsToOne) {
  EXPECT_EQ(load_topology(minimal_doc()).version, 1);
  auto doc = minimal_doc();
  doc["version"] = 7;
  EXPECT_EQ(load_topology(doc).version, 7);
}

TEST(Topology, RoundTripsThroughJson) {
  Topology t =
      load_topology_file(kFixtures + "/topologies/bookmark-fallback.json");
  Topology t2 = load_topology(topology_to_json(t));
  EXPECT_EQ(topology_to_json(t).dump(), topology_to_json(t2).dump());
}

}  // namespace
}  // namespace chaoslab
