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

#include <gtest/gtest.h>

#include <cmath>

#include "chaoslab/sim.hpp"

namespace chaoslab {
namespace {

nlohmann::json tiny_topology(double base_rate, double amplitude, double phase) {
  nlohmann::json doc = nlohmann::json::parse(R"({
    "services": [
      {"id": "svc", "capacity_per_instance": 100000, "base_latency_ms": 1,
       "memory_limit": 1000000, "instances_per_region": 1}
    ],
    "regions": [{"id": "r1", "routing_weight": 1.0}],
    "edges": [],
    "entry_service": "svc",
    "traffic": {"base_rate": 0, "amplitude": 0, "phase": 0,
                "population": 50000, "catalog_size": 100}
  })");
  doc["traffic"]["base_rate"] = base_rate;
  doc["traffic"]["amplitude"] = amplitude;
  doc["traffic"]["phase"] = phase;
  return doc;
}

// Closed-form expected arrivals for the sinusoidal rate over [t0, t1), in ms.
double expected_count(double base, double amp, double phase_s, SimMillis t0,
                      SimMillis t1) {
  double a = static_cast<double>(t0) / 1000.0;
  double b = static_cast<double>(t1) / 1000.0;
  double period = 86400.0;
  double w = 2.0 * M_PI / period;
  return base * ((b - a) -
                 amp / w * (std::cos(w * (b - phase_s)) - std::cos(w * (a - phase_s))));
}

TEST(Arrivals, ZeroAmplitudeIsHomogeneousPoisson) {
  Topology t = load_topology(tiny_topology(100, 0, 0));
  sim::WorldState world(t, 17, 10'000);
  auto arrivals = world.generate_arrivals(0, 3'600'000);
  double expected = 100.0 * 3600.0;
  double sigma = std::sqrt(expected);
  EXPECT_NEAR(static_cast<double>(arrivals.size()), expected, 3 * sigma);
}

TEST(Arrivals, RateAtSinZeroCrossingIsBaseRate) {
  // phase 0 puts a zero crossing at t = 0; counts right after it should
  // match the base rate.
  Topology t = load_topology(tiny_topology(200, 0.5, 0));
  double total = 0;
  int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    sim::WorldState world(t, 1000 + static_cast<std::uint64_t>(s), 10'000);
    total += static_cast<double>(world.generate_arrivals(0, 60'000).size());
  }
  double mean = total / seeds;
  double expected = expected_count(200, 0.5, 0, 0, 60'000);
  EXPECT_NEAR(expected, 200.0 * 60.0, 0.01 * expected);  // crossing: ~base
  double sigma = std::sqrt(expected / seeds);
  EXPECT_NEAR(mean, expected, 4 * sigma);
}

TEST(Arrivals, DiurnalShapeMatchesClosedFormIntegral) {
  // One full day, hourly windows, 30 seeds: empirical means must track the
  // integral of the rate function, and peak/trough must come out near 3.
  const double base = 30, amp = 0.5, phase = 0;
  Topology t = load_topology(tiny_topology(base, amp, phase));
  const int seeds = 30;
  const SimMillis window = 3'600'000;
  std::vector<double> counts(24, 0);
  for (int s = 0; s < seeds; ++s) {
    sim::WorldState world(t, 9000 + static_cast<std::uint64_t>(s), 10'000);
    auto arrivals = world.generate_arrivals(0, 86'400'000);
    for (const auto& a : arrivals) counts[static_cast<size_t>(a.time / window)]++;
  }
  double peak = 0, trough = 1e18;
  for (int w = 0; w < 24; ++w) {
    double mean = counts[static_cast<size_t>(w)] / seeds;
    double expected = expected_count(base, amp, phase, w * window, (w + 1) * window);
    double sigma = std::sqrt(expected / seeds);
    ASSERT_NEAR(mean, expected, 5 * sigma) << "hour " << w;
    peak = std::max(peak, mean);
    trough = std::min(trough, mean);
  }
  EXPECT_NEAR(peak / trough, 3.0, 0.2);
}

TEST(Arrivals, RegenerationIsExactAndBlockLocal) {
  Topology t = load_topology(tiny_topology(100, 0.5, 0));
  sim::WorldState world(t, 333, 10'000);
  auto all = world.generate_arrivals(0, 120'000);
  auto mid = world.generate_arrivals(40'000, 80'000);
  std::vector<sim::ArrivalSample> expected;
  for (const auto& a : all)
    if (a.time >= 40'000 && a.time < 80'000) expected.push_back(a);
  ASSERT_EQ(mid.size(), expected.size());
  for (size_t i = 0; i < mid.size(); ++i) {
    EXPECT_EQ(mid[i].time, expected[i].time);
    EXPECT_EQ(mid[i].user, expected[i].user);
    EXPECT_EQ(mid[i].key, expected[i].key);
    EXPECT_EQ(mid[i].seq, expected[i].seq);
  }
}

TEST(Arrivals, UsersComeFromConfiguredPopulation) {
  Topology t = load_topology(tiny_topology(100, 0, 0));
  sim::WorldState world(t, 12, 10'000);
  for (const auto& a : world.generate_arrivals(0, 600'000)) {
    ASSERT_LT(a.user, 50'000u);
    ASSERT_LT(a.key, 100u);
  }
}

TEST(Arrivals, BadIntervalThrows) {
  Topology t = load_topology(tiny_topology(100, 0, 0));
  sim::WorldState world(t, 12, 10'000);
  EXPECT_THROW(world.generate_arrivals(1000, 1000), ConfigError);
}

}  // namespace
}  // namespace chaoslab
