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
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chaoslab/error.hpp"
#include "chaoslab/hash.hpp"
#include "chaoslab/topology.hpp"

namespace chaoslab::sched {

// Wall-clock seconds since the Unix epoch. The scheduler lives on wall time;
// the simulations it launches run on simulated time. The two never mix.
using WallSeconds = std::int64_t;

namespace detail {

// Civil <-> epoch day conversions (proleptic Gregorian).
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const int yoe = static_cast<int>(y - era * 400);
  const int doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const int doe = static_cast<int>(z - era * 146097);
  const int yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const int doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const int mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = static_cast<int>(yy + (m <= 2));
}

inline int last_day_of_month(int y, int m) {
  static const int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && ((y % 4 == 0 && y % 100 != 0) || y % 400 == 0)) return 29;
  return days[m - 1];
}

// 0 = Sunday ... 6 = Saturday.
inline int weekday_of_day(std::int64_t days) {
  return static_cast<int>(((days % 7) + 11) % 7);
}

}  // namespace detail

enum class CadenceKind { ContinuousBusinessHours, Monthly, Interval };

struct Cadence {
  CadenceKind kind = CadenceKind::Interval;
  WallSeconds period_s = 3600;  // continuous-business-hours and interval
  int day_of_month = 1;         // monthly (clamped to month length)
  int hour = 0;                 // monthly fire time
  int minute = 0;
  int utc_offset_min = 0;       // fixed-offset zone for local-time rules
};

inline constexpr int kBusinessStartHour = 9;
inline constexpr int kBusinessEndHour = 17;

struct Schedule {
  std::string name;
  std::string spec_path;
  Cadence cadence;
  bool enabled = true;
  std::optional<WallSeconds> last_fire;  // runtime state, not configuration
};

// Smallest grid point strictly after `after` for this cadence.
inline WallSeconds next_fire(const Cadence& c, WallSeconds after) {
  switch (c.kind) {
    case CadenceKind::Interval: {
      if (c.period_s <= 0) throw ConfigError("cadence.period_s", "must be > 0");
      WallSeconds k = after >= 0 ? after / c.period_s + 1
                                 : -((-after - 1) / c.period_s);
      return k * c.period_s;
    }
    case CadenceKind::ContinuousBusinessHours: {
      if (c.period_s <= 0) throw ConfigError("cadence.period_s", "must be > 0");
      WallSeconds local = after + 1 + c.utc_offset_min * 60;
      for (int guard = 0; guard < 16; ++guard) {
        std::int64_t day = local >= 0 ? local / 86400 : (local - 86399) / 86400;
        WallSeconds in_day = local - day * 86400;
        int wd = detail::weekday_of_day(day);
        if (wd >= 1 && wd <= 5) {  // Monday..Friday
          WallSeconds start = kBusinessStartHour * 3600;
          WallSeconds end = kBusinessEndHour * 3600;
          if (in_day <= start)
            return day * 86400 + start - c.utc_offset_min * 60;
          if (in_day <= end) {
            WallSeconds k = (in_day - start + c.period_s - 1) / c.period_s;
            WallSeconds fire = start + k * c.period_s;
            if (fire < end)
              return day * 86400 + fire - c.utc_offset_min * 60;
          }
        }
        local = (day + 1) * 86400;  // next local midnight
      }
      throw Error("no business-hours slot found within two weeks");
    }
    case CadenceKind::Monthly: {
      WallSeconds local = after + 1 + c.utc_offset_min * 60;
      std::int64_t day = local >= 0 ? local / 86400 : (local - 86399) / 86400;
      int y, m, d;
      detail::civil_from_days(day, y, m, d);
      for (int guard = 0; guard < 3; ++guard) {
        int dom = std::min(c.day_of_month, detail::last_day_of_month(y, m));
        WallSeconds fire_local = detail::days_from_civil(y, m, dom) * 86400 +
                                 c.hour * 3600 + c.minute * 60;
        if (fire_local >= local) return fire_local - c.utc_offset_min * 60;
        if (++m > 12) {
          m = 1;
          ++y;
        }
      }
      throw Error("monthly cadence failed to find a slot");
    }
  }
  throw Error("unreachable cadence kind");
}

struct DueEntry {
  const Schedule* schedule = nullptr;
  WallSeconds fire_time = 0;
};

// Pure: the next fire time per enabled schedule, given `now`.
inline std::vector<DueEntry> next_due(const std::vector<Schedule>& schedules,
                                      WallSeconds now) {
  std::vector<DueEntry> out;
  for (const auto& s : schedules) {
    if (!s.enabled) continue;
    out.push_back({&s, next_fire(s.cadence, now)});
  }
  return out;
}

// Latest grid point <= now that has not fired yet. Missed periods collapse
// into the most recent one.
inline std::optional<WallSeconds> due_fire_time(const Schedule& s, WallSeconds now) {
  if (!s.enabled) return std::nullopt;
  WallSeconds after = s.last_fire ? *s.last_fire
                                  : now - 366LL * 86400;  // look back one year
  std::optional<WallSeconds> due;
  for (int guard = 0; guard < 100000; ++guard) {
    WallSeconds f = next_fire(s.cadence, after);
    if (f > now) break;
    due = f;
    after = f;
  }
  return due;
}

struct RunRecord {
  std::string spec_name;
  std::int64_t topology_version = 0;
  std::string verdict;  // upheld | refuted | aborted | error
  std::string error;    // executor failure detail, empty otherwise
  std::string report_path;
  WallSeconds timestamp = 0;
  bool stale = false;
  std::string prev_hash;
  std::string hash;
};

namespace detail {

// The hash covers the immutable payload plus the predecessor's hash. The
// stale flag stays outside the hash so marking old runs stale cannot break
// the chain.
inline std::string record_hash(const RunRecord& r) {
  nlohmann::json payload;
  payload["spec_name"] = r.spec_name;
  payload["topology_version"] = r.topology_version;
  payload["verdict"] = r.verdict;
  payload["error"] = r.error;
  payload["report_path"] = r.report_path;
  payload["timestamp"] = r.timestamp;
  std::uint64_t h = fnv1a64(r.prev_hash + "|" + payload.dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

class History {
 public:
  History() = default;

  const std::vector<RunRecord>& records() const { return records_; }

  void append(RunRecord r) {
    r.prev_hash = records_.empty() ? "genesis" : records_.back().hash;
    r.hash = detail::record_hash(r);
    records_.push_back(std::move(r));
  }

  // Index of the first record whose chain link is broken, or -1 when intact.
  int verify_chain() const {
    std::string prev = "genesis";
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (r.prev_hash != prev || r.hash != detail::record_hash(r))
        return static_cast<int>(i);
      prev = r.hash;
    }
    return -1;
  }

  // Every record produced under an older topology version goes stale; the
  // flag never clears.
  void mark_stale(std::int64_t new_topology_version) {
    if (new_topology_version <= 0)
      throw ConfigError("topology_version", "must be > 0");
    for (auto& r : records_)
      if (r.topology_version < new_topology_version) r.stale = true;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError(path, "cannot open history for writing");
    for (const auto& r : records_) out << to_json(r).dump() << "\n";
  }

  static History load(const std::string& path) {
    History h;
    std::ifstream in(path);
    if (!in) return h;  // fresh history
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ":" + std::to_string(n),
                          std::string("bad history line: ") + e.what());
      }
      h.records_.push_back(from_json(j));
    }
    return h;
  }

  static nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json j;
    j["spec_name"] = r.spec_name;
    j["topology_version"] = r.topology_version;
    j["verdict"] = r.verdict;
    j["error"] = r.error;
    j["report_path"] = r.report_path;
    j["timestamp"] = r.timestamp;
    j["stale"] = r.stale;
    j["prev_hash"] = r.prev_hash;
    j["hash"] = r.hash;
    return j;
  }

  static RunRecord from_json(const nlohmann::json& j) {
    RunRecord r;
    r.spec_name = j.value("spec_name", "");
    r.topology_version = j.value("topology_version", std::int64_t{0});
    r.verdict = j.value("verdict", "");
    r.error = j.value("error", "");
    r.report_path = j.value("report_path", "");
    r.timestamp = j.value("timestamp", WallSeconds{0});
    r.stale = j.value("stale", false);
    r.prev_hash = j.value("prev_hash", "");
    r.hash = j.value("hash", "");
    return r;
  }

 private:
  std::vector<RunRecord> records_;
};

// Runs one due schedule; fills spec_name/verdict/report_path/version or
// throws. timestamp and chain fields are stamped by execute_due.
using Executor = std::function<RunRecord(const Schedule&, WallSeconds fire_time)>;

// Executes every due schedule once. An executor failure is recorded as an
// error run and never blocks the remaining due schedules.
inline std::vector<RunRecord> execute_due(std::vector<Schedule>& schedules,
                                          WallSeconds now, const Executor& executor,
                                          History& history) {
  std::vector<RunRecord> out;
  for (auto& s : schedules) {
    auto fire = due_fire_time(s, now);
    if (!fire) continue;
    s.last_fire = *fire;
    RunRecord r;
    try {
      r = executor(s, *fire);
    } catch (const std::exception& e) {
      r.spec_name = s.name;
      r.verdict = "error";
      r.error = e.what();
    }
    r.timestamp = *fire;
    history.append(r);
    out.push_back(history.records().back());
  }
  return out;
}

// --- schedule document parsing ---

inline Schedule schedule_from_json(const nlohmann::json& j, const std::string& path) {
  Schedule s;
  s.name = chaoslab::detail::get_str(j, "name", path);
  s.spec_path = chaoslab::detail::get_str(j, "spec", path);
  const auto& jc = chaoslab::detail::require(j, "cadence", path);
  std::string kind = chaoslab::detail::get_str(jc, "kind", path + ".cadence");
  if (kind == "continuous-business-hours") {
    s.cadence.kind = CadenceKind::ContinuousBusinessHours;
    s.cadence.period_s = jc.value("period_s", WallSeconds{3600});
  } else if (kind == "monthly") {
    s.cadence.kind = CadenceKind::Monthly;
    s.cadence.day_of_month = jc.value("day", 1);
    s.cadence.hour = jc.value("hour", 0);
    s.cadence.minute = jc.value("minute", 0);
    if (s.cadence.day_of_month < 1 || s.cadence.day_of_month > 31)
      throw ConfigError(path + ".cadence.day", "must be in [1,31]");
  } else if (kind == "interval") {
    s.cadence.kind = CadenceKind::Interval;
    s.cadence.period_s =
        chaoslab::detail::get_num<WallSeconds>(jc, "period_s", path + ".cadence");
  } else {
    throw ConfigError(path + ".cadence.kind",
                      "expected continuous-business-hours|monthly|interval");
  }
  s.cadence.utc_offset_min = jc.value("utc_offset_min", 0);
  if (s.cadence.kind != CadenceKind::Monthly && s.cadence.period_s <= 0)
    throw ConfigError(path + ".cadence.period_s", "must be > 0");
  s.enabled = j.value("enabled", true);
  return s;
}

inline std::vector<Schedule> schedules_from_json(const nlohmann::json& doc) {
  const auto& js = chaoslab::detail::require(doc, "schedules", "");
  if (!js.is_array()) throw ConfigError("schedules", "expected an array");
  std::vector<Schedule> out;
  for (std::size_t i = 0; i < js.size(); ++i)
    out.push_back(schedule_from_json(js[i], "schedules[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace chaoslab::sched
