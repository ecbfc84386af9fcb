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

#include <cstdint>
#include <string_view>

namespace chaoslab {

// Stable integer mixing used for every replay-sensitive decision: user
// bucketing, sticky routing, per-call jitter, fault sampling, history
// checksums. std::hash is implementation-defined and must never leak into
// any of these paths.

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(splitmix64(a) ^ (0x9e3779b97f4a7c15ull + b));
}

inline constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b,
                                     std::uint64_t c) noexcept {
  return mix64(mix64(a, b), c);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Maps a 64-bit hash to [0,1). 53 mantissa bits, exact on every platform.
inline constexpr double to_unit(std::uint64_t h) noexcept {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// User bucket space for scoping and group assignment. A user's bucket under
// a salt is the single source of truth for "is this user in a p-fraction
// slice"; experiment groups and fault scopes must agree on it by
// construction.
inline constexpr std::uint64_t kBucketSpace = 1'000'000;

inline constexpr std::uint64_t user_bucket(std::uint64_t user,
                                           std::uint64_t salt) noexcept {
  return mix64(user, salt) % kBucketSpace;
}

}  // namespace chaoslab
