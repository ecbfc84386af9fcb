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

#include "chaoslab/metrics.hpp"

#include <gtest/gtest.h>

#include "chaoslab/rng.hpp"

namespace chaoslab::metrics {
namespace {

MetricSink make_sink() {
  MetricSink sink(10'000, {"svc-a", "svc-b"}, {"r1"});
  sink.set_instance_count("svc-a", 2);
  sink.set_instance_count("svc-b", 1);
  return sink;
}

TEST(MetricSink, SuccessfulStartBumpsSps) {
  auto sink = make_sink();
  sink.record_outcome(500, 1, OutcomeClass::Success);
  sink.seal_through(10'000);
  EXPECT_DOUBLE_EQ(sink.sps(0), 0.1);  // 1 start / 10 s
}

TEST(MetricSink, FallbackStartCountsInSpsAndFallbacks) {
  auto sink = make_sink();
  sink.record_outcome(100, 1, OutcomeClass::FallbackSuccess);
  sink.seal_through(10'000);
  EXPECT_DOUBLE_EQ(sink.sps(0), 0.1);
  EXPECT_DOUBLE_EQ(sink.series("fallbacks").samples[0].second, 1.0);
  EXPECT_DOUBLE_EQ(sink.series("errors").samples[0].second, 0.0);
}

TEST(MetricSink, FailureLeavesSpsUntouched) {
  auto sink = make_sink();
  sink.record_outcome(100, 1, OutcomeClass::Failure);
  sink.seal_through(10'000);
  EXPECT_DOUBLE_EQ(sink.sps(0), 0.0);
  EXPECT_DOUBLE_EQ(sink.series("errors").samples[0].second, 1.0);
}

TEST(MetricSink, SpsArithmetic) {
  // 600 successful starts in one 60 s window -> 10/s.
  MetricSink sink(60'000, {"svc-a"}, {"r1"});
  for (int i = 0; i < 600; ++i)
    sink.record_outcome(i * 100, static_cast<UserId>(i), OutcomeClass::Success);
  sink.seal_through(60'000);
  EXPECT_DOUBLE_EQ(sink.sps(0), 10.0);
}

TEST(MetricSink, ZeroArrivalsGiveZeroSps) {
  auto sink = make_sink();
  sink.seal_through(20'000);
  EXPECT_DOUBLE_EQ(sink.sps(0), 0.0);
  EXPECT_DOUBLE_EQ(sink.sps(10'000), 0.0);
}

TEST(MetricSink, OpenWindowQueryThrows) {
  auto sink = make_sink();
  sink.record_outcome(100, 1, OutcomeClass::Success);
  EXPECT_THROW(sink.sps(0), OpenWindowError);
  sink.seal_through(10'000);
  EXPECT_NO_THROW(sink.sps(0));
  EXPECT_THROW(sink.sps(10'000), OpenWindowError);
}

TEST(MetricSink, SpsInvariantUnderSameWindowReordering) {
  auto a = make_sink();
  auto b = make_sink();
  a.record_outcome(100, 1, OutcomeClass::Success);
  a.record_outcome(200, 2, OutcomeClass::Failure);
  a.record_outcome(300, 3, OutcomeClass::FallbackSuccess);
  b.record_outcome(300, 3, OutcomeClass::FallbackSuccess);
  b.record_outcome(100, 1, OutcomeClass::Success);
  b.record_outcome(200, 2, OutcomeClass::Failure);
  a.seal_through(10'000);
  b.seal_through(10'000);
  EXPECT_EQ(a.sps(0), b.sps(0));
  EXPECT_EQ(a.export_csv(), b.export_csv());
}

TEST(MetricSink, GroupCountersSumToGlobal) {
  MetricSink sink(10'000, {"svc-a"}, {"r1"});
  sink.set_group_fn([](UserId u) {
    if (u % 10 == 0) return GroupTag::Experiment;
    if (u % 10 == 1) return GroupTag::Control;
    return GroupTag::Unassigned;
  });
  Rng rng(4242);
  for (int i = 0; i < 5000; ++i) {
    UserId u = rng.next_below(1000);
    auto oc = static_cast<OutcomeClass>(rng.next_below(3));
    sink.record_outcome(static_cast<SimMillis>(rng.next_below(30'000)), u, oc);
  }
  sink.seal_through(30'000);
  for (const char* metric : {"sps", "arrivals", "errors", "fallbacks"}) {
    auto global = sink.series(metric, GroupTag::Global);
    auto ctl = sink.series(metric, GroupTag::Control);
    auto exp = sink.series(metric, GroupTag::Experiment);
    auto una = sink.series(metric, GroupTag::Unassigned);
    for (size_t w = 0; w < global.samples.size(); ++w)
      ASSERT_DOUBLE_EQ(global.samples[w].second,
                       ctl.samples[w].second + exp.samples[w].second +
                           una.samples[w].second)
          << metric << " window " << w;
  }
}

TEST(MetricSink, P99IsExactOverWindowSamples) {
  MetricSink sink(10'000, {"svc-a"}, {"r1"});
  for (int i = 1; i <= 200; ++i)
    sink.record_service_call(100, 0, OutcomeClass::Success, i);
  sink.seal_through(10'000);
  // ceil(0.99 * 200) = 198th order statistic.
  EXPECT_DOUBLE_EQ(sink.series("p99_latency_ms.svc-a").samples[0].second, 198.0);
}

TEST(MetricSink, UnknownMetricIsAnError) {
  auto sink = make_sink();
  sink.seal_through(10'000);
  EXPECT_THROW(sink.series("p99_latency_ms.ghost"), UnknownMetricError);
  EXPECT_THROW(sink.series("nonsense"), UnknownMetricError);
  EXPECT_TRUE(sink.knows_metric("busy_fraction.svc-b"));
}

TEST(Baseline, IdenticalSeriesDeviatesNowhere) {
  MetricSeries s;
  s.metric_id = "sps";
  s.window_ms = 10'000;
  for (int i = 0; i < 30; ++i) s.samples.emplace_back(i * 10'000, 100.0 + i);
  auto rows = baseline_deviation(s, BaselineModel{s, 0.1});
  for (const auto& r : rows) {
    EXPECT_DOUBLE_EQ(r.deviation, 0.0);
    EXPECT_FALSE(r.flagged);
  }
}

TEST(Baseline, HalvedSeriesFlagsEveryWindow) {
  MetricSeries ref, cur;
  ref.window_ms = cur.window_ms = 10'000;
  for (int i = 0; i < 30; ++i) {
    ref.samples.emplace_back(i * 10'000, 100.0);
    cur.samples.emplace_back(i * 10'000, 50.0);
  }
  auto rows = baseline_deviation(cur, BaselineModel{ref, 0.1});
  for (const auto& r : rows) {
    EXPECT_DOUBLE_EQ(r.deviation, -0.5);
    EXPECT_TRUE(r.flagged);
  }
}

TEST(Baseline, ZeroReferenceWithSignalIsInfiniteNotACrash) {
  MetricSeries ref, cur;
  ref.window_ms = cur.window_ms = 10'000;
  ref.samples.emplace_back(0, 0.0);
  cur.samples.emplace_back(0, 5.0);
  auto rows = baseline_deviation(cur, BaselineModel{ref, 0.1});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].infinite);
  EXPECT_TRUE(rows[0].flagged);
}

TEST(Baseline, MissingCoverageIsAnError) {
  MetricSeries ref, cur;
  ref.window_ms = cur.window_ms = 10'000;
  ref.samples.emplace_back(0, 1.0);
  cur.samples.emplace_back(0, 1.0);
  cur.samples.emplace_back(10'000, 1.0);
  EXPECT_THROW(baseline_deviation(cur, BaselineModel{ref, 0.1}), ConfigError);
}

TEST(Guardrail, CalmSystemProducesEmptyReport) {
  auto sink = make_sink();
  for (int w = 0; w < 5; ++w)
    sink.record_service_call(w * 10'000 + 1, 0, OutcomeClass::Success, 10.0);
  sink.seal_through(50'000);
  auto breaches = guardrail_check(
      {{"p99_latency_ms.svc-a", 100.0, Direction::Above, 2}}, sink);
  EXPECT_TRUE(breaches.empty());
}

TEST(Guardrail, ConsecutiveWindowRuleAndFirstWindowNaming) {
  auto sink = make_sink();
  double lat[] = {10, 200, 200, 200, 10};
  for (int w = 0; w < 5; ++w)
    sink.record_service_call(w * 10'000 + 1, 0, OutcomeClass::Success, lat[w]);
  sink.seal_through(50'000);
  auto hit = guardrail_check({{"p99_latency_ms.svc-a", 100.0, Direction::Above, 3}},
                             sink);
  ASSERT_EQ(hit.size(), 1u);
  EXPECT_EQ(hit[0].service, "svc-a");
  EXPECT_EQ(hit[0].first_window_start, 10'000);
  auto miss = guardrail_check(
      {{"p99_latency_ms.svc-a", 100.0, Direction::Above, 4}}, sink);
  EXPECT_TRUE(miss.empty());
}

TEST(Guardrail, LooseningThresholdNeverAddsBreaches) {
  auto sink = make_sink();
  Rng rng(7);
  for (int w = 0; w < 40; ++w)
    sink.record_service_call(w * 10'000 + 1, 0, OutcomeClass::Success,
                             50.0 + 100.0 * rng.next_unit());
  sink.seal_through(400'000);
  int prev_count = 2;
  for (double threshold : {60.0, 90.0, 120.0, 160.0}) {
    auto b = guardrail_check({{"p99_latency_ms.svc-a", threshold,
                               Direction::Above, 1}},
                             sink);
    ASSERT_LE(static_cast<int>(b.size()), prev_count);
    prev_count = static_cast<int>(b.size());
  }
}

TEST(Guardrail, UnknownMetricIdThrows) {
  auto sink = make_sink();
  sink.seal_through(10'000);
  EXPECT_THROW(
      guardrail_check({{"p99_latency_ms.ghost", 1.0, Direction::Above, 1}}, sink),
      UnknownMetricError);
}

TEST(Csv, ExportIsDeterministicAndOrdered) {
  auto a = make_sink();
  a.record_outcome(100, 1, OutcomeClass::Success);
  a.record_service_call(100, 0, OutcomeClass::Success, 12.5);
  a.record_region_arrival(100, 0);
  a.seal_through(20'000);
  std::string csv = a.export_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "metric,group,window_start_ms,value");
  // Rows are sorted by metric, then group, then window.
  auto first_data = csv.substr(csv.find('\n') + 1);
  EXPECT_EQ(first_data.substr(0, first_data.find(',')), "arrivals");
}

}  // namespace
}  // namespace chaoslab::metrics
