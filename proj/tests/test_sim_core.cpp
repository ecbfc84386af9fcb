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

#include "chaoslab/sim.hpp"

#include <gtest/gtest.h>

#include <map>
#include <string>

namespace chaoslab {
namespace {

const std::string kFixtures = CHAOSLAB_FIXTURE_DIR;

Topology fixture(const std::string& name) {
  return load_topology_file(kFixtures + "/topologies/" + name + ".json");
}

TEST(RunUntil, ReRunningToSameClockIsANoOp) {
  Topology t = fixture("three-region");
  sim::WorldState world(t, 5, 10'000);
  world.run_until(30'000);
  std::string csv = world.sink().export_csv();
  std::int64_t arrivals = world.total_arrivals();
  world.run_until(world.clock());
  EXPECT_EQ(world.sink().export_csv(), csv);
  EXPECT_EQ(world.total_arrivals(), arrivals);
}

TEST(RunUntil, BackwardsIsAnError) {
  sim::WorldState world(fixture("three-region"), 5, 10'000);
  world.run_until(20'000);
  EXPECT_THROW(world.run_until(10'000), ConfigError);
}

TEST(RunUntil, SameSeedSameTopologyIsByteIdentical) {
  Topology t = fixture("three-region");
  sim::WorldState a(t, 777, 10'000);
  sim::WorldState b(t, 777, 10'000);
  a.run_until(120'000);
  b.run_until(120'000);
  EXPECT_EQ(a.sink().export_csv(), b.sink().export_csv());
  EXPECT_EQ(a.total_arrivals(), b.total_arrivals());
  EXPECT_EQ(a.in_flight(), b.in_flight());
}

TEST(RunUntil, DifferentSeedsDiverge) {
  Topology t = fixture("three-region");
  sim::WorldState a(t, 1, 10'000);
  sim::WorldState b(t, 2, 10'000);
  a.run_until(60'000);
  b.run_until(60'000);
  EXPECT_NE(a.sink().export_csv(), b.sink().export_csv());
}

// Failure mode: slow downstream, unbounded outbound queue. The memory proxy
// climbs at (arrival rate - drain rate) until the limit kills the instance.
TEST(RunUntil, UnboundedQueueGrowsUntilInstanceDeath) {
  Topology t = fixture("unbounded-queue");
  faults::FaultSpec f;
  f.kind = faults::FaultKind::InjectLatency;
  f.edge = {"client", "server"};
  f.extra_ms = 900'000;  // no admitted call returns within the run
  f.window = {0, 600'000};
  auto cf = faults::compile_fault(f, t);
  sim::WorldState world(t, 99, 10'000, {cf});
  world.run_until(600'000);

  ASSERT_EQ(world.deaths().size(), 1u);
  const auto& death = world.deaths()[0];
  EXPECT_EQ(t.services[static_cast<size_t>(death.service)].id, "client");

  // Hand oracle: drain is zero after the fault activates, so the queue is
  // arrival rate x time; the limit of 1500 at 50/s falls at ~30 s (Poisson
  // noise on the 1501st arrival is ~sqrt(1501)/50 s).
  double predicted_s = 1500.0 / 50.0;
  EXPECT_NEAR(static_cast<double>(death.time) / 1000.0, predicted_s, 3.0);

  auto mem = world.sink().series("memory_proxy.client");
  size_t death_window = static_cast<size_t>(death.time / 10'000);
  for (size_t w = 1; w <= death_window && w < mem.samples.size(); ++w)
    ASSERT_GE(mem.samples[w].second, mem.samples[w - 1].second) << "window " << w;
}

TEST(RunUntil, BoundedQueueNeverExceedsMaxAndSurvives) {
  Topology t = fixture("unbounded-queue");
  auto doc = topology_to_json(t);
  doc["services"][0]["queue_policy"] = {{"kind", "bounded"}, {"max", 100}};
  t = load_topology(doc);
  faults::FaultSpec f;
  f.kind = faults::FaultKind::InjectLatency;
  f.edge = {"client", "server"};
  f.extra_ms = 900'000;
  f.window = {0, 600'000};
  auto cf = faults::compile_fault(f, t);
  sim::WorldState world(t, 99, 10'000, {cf});
  world.run_until(600'000);

  EXPECT_TRUE(world.deaths().empty());
  auto depth = world.sink().series("queue_depth_max.client");
  for (const auto& [start, v] : depth.samples) ASSERT_LE(v, 100.0);
  auto errors = world.sink().series("errors");
  double total_errors = 0;
  for (const auto& [start, v] : errors.samples) total_errors += v;
  EXPECT_GT(total_errors, 1000.0);
}

TEST(Routing, EqualWeightsSplitUsersEvenly) {
  Topology t = fixture("three-region");
  sim::WorldState world(t, 4242, 10'000);
  std::map<int, int> counts;
  const int population = 100'000;
  for (UserId u = 0; u < population; ++u) counts[world.route_request(u)]++;
  ASSERT_EQ(counts.size(), 3u);
  for (const auto& [region, n] : counts)
    EXPECT_NEAR(static_cast<double>(n) / population, 1.0 / 3.0, 0.005) << region;
}

TEST(Routing, StickyUnderUnchangedWeights) {
  Topology t = fixture("three-region");
  sim::WorldState world(t, 4242, 10'000);
  for (UserId u = 0; u < 5000; ++u)
    ASSERT_EQ(world.route_request(u), world.route_request(u));
}

TEST(Routing, EvacuationMovesOnlyTheEvacuatedUsers) {
  Topology t = fixture("three-region");
  sim::WorldState world(t, 4242, 10'000);
  const int population = 50'000;
  std::vector<int> before(population);
  for (UserId u = 0; u < population; ++u)
    before[static_cast<size_t>(u)] = world.route_request(u);

  int evacuated = world.topology().region_of("us-east-1");
  world.apply_region_outage(faults::OutageMode::Evacuate, evacuated);

  std::map<int, int> moved_to;
  for (UserId u = 0; u < population; ++u) {
    int now = world.route_request(u);
    ASSERT_NE(now, evacuated);
    if (before[static_cast<size_t>(u)] != evacuated)
      ASSERT_EQ(now, before[static_cast<size_t>(u)]) << "healthy user moved: " << u;
    else
      moved_to[now]++;
  }
  // Displaced users split across both survivors.
  EXPECT_EQ(moved_to.size(), 2u);
  for (const auto& [r, n] : moved_to) EXPECT_GT(n, 5'000);
}

TEST(Routing, EvacuatingTheLastHealthyRegionIsRefused) {
  Topology t = fixture("three-region");
  sim::WorldState world(t, 1, 10'000);
  world.apply_region_outage(faults::OutageMode::Evacuate, 0);
  world.apply_region_outage(faults::OutageMode::Evacuate, 1);
  EXPECT_THROW(world.apply_region_outage(faults::OutageMode::Evacuate, 2),
               AllRegionsDownError);
  // The two successful evacuations stand; routing still works.
  EXPECT_EQ(world.route_request(123), 2);
}

TEST(Conservation, ArrivalsEqualOutcomesPlusInFlight) {
  Topology t = fixture("three-region");
  sim::WorldState world(t, 31, 10'000);
  world.run_until(180'000);
  EXPECT_EQ(world.total_arrivals(),
            world.finalized_outcomes() + world.in_flight());

  // Cumulative sealed counters never exceed arrivals.
  auto arrivals = world.sink().series("arrivals");
  auto sps = world.sink().series("sps");
  auto errors = world.sink().series("errors");
  double cum_arr = 0, cum_out = 0;
  for (size_t w = 0; w < arrivals.samples.size(); ++w) {
    cum_arr += arrivals.samples[w].second;
    cum_out += sps.samples[w].second * 10.0 + errors.samples[w].second;
    ASSERT_GE(cum_arr, cum_out) << "window " << w;
  }
}

TEST(Conservation, NoFaultsLowUtilizationMeansZeroFailures) {
  Topology t = fixture("three-region");
  sim::WorldState world(t, 8, 10'000);
  world.run_until(300'000);
  auto errors = world.sink().series("errors");
  for (const auto& [start, v] : errors.samples) ASSERT_EQ(v, 0.0);
  auto busy = world.sink().series("busy_fraction.edge-api");
  for (const auto& [start, v] : busy.samples) ASSERT_LT(v, 1.0);
}

TEST(ProcessCallDepth, TerminatesOnAcyclicGraph) {
  Topology t = fixture("bookmark-fallback");
  sim::WorldState world(t, 3, 10'000);
  auto out = world.process_call("edge-api", 42, 7, 1);
  EXPECT_GT(out.duration_ms, 0);
}

}  // namespace
}  // namespace chaoslab
