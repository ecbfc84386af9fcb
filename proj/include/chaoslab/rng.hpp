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
#include <random>
#include <string_view>

#include "chaoslab/hash.hpp"

namespace chaoslab {

// One named stream per concern (arrivals, fault victim picks, permutation
// shuffles, ...), each derived independently from the master seed so that
// activating a fault never shifts the draws seen by traffic generation.
// Control and experiment runs must differ only by the fault itself.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view concern,
                                 std::uint64_t index = 0) {
  return mix64(mix64(master, fnv1a64(concern)), index);
}

// Sequential stream with our own uniform mappings. mt19937_64 output is
// pinned by the standard; the std distributions are not, so we never use
// them on a replay-sensitive path.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0,1)
  double next_unit() { return to_unit(eng_()); }

  // {0, ..., n-1}; modulo bias is < 2^-40 for the population sizes used here
  std::uint64_t next_below(std::uint64_t n) { return eng_() % n; }

  // Exponential inter-arrival gap for a Poisson process at `rate` per second.
  double next_exp_s(double rate) { return -std::log1p(-next_unit()) / rate; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace chaoslab
