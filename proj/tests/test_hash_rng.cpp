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

#include "chaoslab/hash.hpp"
#include "chaoslab/rng.hpp"

#include <gtest/gtest.h>

#include <set>

namespace chaoslab {
namespace {

// Replay depends on these exact values; a change here is a format break.
TEST(Hash, GoldenValuesArePinned) {
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafull);
  EXPECT_EQ(splitmix64(42), 0xbdd732262feb6e95ull);
  EXPECT_EQ(mix64(1, 2), 0x99482f861feb6cb1ull);
  EXPECT_EQ(fnv1a64("chaos"), 0xa73c7d764c13f15full);
  EXPECT_EQ(user_bucket(12345, 30), 40827u);
}

TEST(Hash, BucketStaysInSpace) {
  for (std::uint64_t u = 0; u < 10000; ++u)
    ASSERT_LT(user_bucket(u, 99), kBucketSpace);
}

TEST(Hash, ToUnitIsHalfOpen) {
  EXPECT_GE(to_unit(0), 0.0);
  EXPECT_LT(to_unit(~std::uint64_t{0}), 1.0);
}

TEST(Rng, StreamsAreIndependentPerConcern) {
  std::uint64_t master = 1234;
  std::set<std::uint64_t> seeds;
  for (const char* concern : {"arrivals", "latency-jitter", "routing",
                              "fault-victim", "permutation"})
    for (std::uint64_t idx = 0; idx < 8; ++idx)
      seeds.insert(derive_seed(master, concern, idx));
  EXPECT_EQ(seeds.size(), 5u * 8u);
}

TEST(Rng, SequenceIsPinned) {
  Rng r(derive_seed(7, "arrivals", 3));
  EXPECT_EQ(r.next_u64(), 0x7856e2c57b233f72ull);
  EXPECT_DOUBLE_EQ(r.next_unit(), 0.5876172605338793);
}

TEST(Rng, UnitAndBelowStayInRange) {
  Rng r(99);
  for (int i = 0; i < 10000; ++i) {
    double u = r.next_unit();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.next_below(17), 17u);
    ASSERT_GT(r.next_exp_s(2.0), 0.0);
  }
}

TEST(Rng, SameSeedSameStream) {
  Rng a(555), b(555);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

}  // namespace
}  // namespace chaoslab
