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
#include <functional>
#include <limits>
#include <memory>
#include <queue>
#include <unordered_map>
#include <vector>

#include "chaoslab/faults.hpp"
#include "chaoslab/metrics.hpp"
#include "chaoslab/rng.hpp"
#include "chaoslab/topology.hpp"

namespace chaoslab::sim {

inline constexpr SimMillis kGenBlockMs = 10'000;
inline constexpr double kSecondsPerDay = 86'400.0;

struct Request {
  UserId user = 0;
  std::uint64_t key = 0;  // content key; cache lookups share it across users
  std::uint64_t seq = 0;  // (gen block << 32) | index, stable across fault schedules
};

struct ArrivalSample {
  SimMillis time = 0;
  UserId user = 0;
  std::uint64_t key = 0;
  std::uint64_t seq = 0;
};

enum class FailReason {
  None,
  Injected,        // fail-requests / fail-service interceptor
  InstanceDown,    // no live instance in the routed region
  RegionBlackhole,
  QueueFull,
  CachedError,     // error response served from a poisoned cache
  UpstreamFailed,  // a required dependency failed
};

inline const char* fail_reason_name(FailReason r) {
  switch (r) {
    case FailReason::None: return "none";
    case FailReason::Injected: return "injected";
    case FailReason::InstanceDown: return "instance-down";
    case FailReason::RegionBlackhole: return "region-blackhole";
    case FailReason::QueueFull: return "queue-full";
    case FailReason::CachedError: return "cached-error";
    case FailReason::UpstreamFailed: return "upstream-failed";
  }
  return "?";
}

// Result of evaluating one service call (including its dependency subtree).
// `transport` distinguishes "the service could not be reached" (fallbacks
// apply) from an answered error response (they do not).
struct CallOutcome {
  metrics::OutcomeClass cls = metrics::OutcomeClass::Success;
  FailReason reason = FailReason::None;
  bool transport = false;
  bool degraded = false;  // some dependency on the path was resolved by fallback
  double duration_ms = 0;
};

struct DeathRecord {
  SimMillis time = 0;
  int service = -1;
  int region = -1;
  int instance = -1;
  bool terminated_by_fault = false;
};

struct FiringRecord {
  SimMillis time = 0;
  int fault_index = -1;
  UserId user = 0;
};

// Deterministic single-threaded world. Everything observable is a pure
// function of (seed, topology, fault schedule, t_end); all per-call
// randomness is counter-hashed so that a fault only perturbs the calls it
// actually intercepts.
class WorldState {
 public:
  WorldState(Topology topology, std::uint64_t seed, SimMillis window_ms = 10'000,
             std::vector<faults::CompiledFault> fault_schedule = {})
      : topo_(std::move(topology)),
        seed_(seed),
        sink_(std::make_unique<metrics::MetricSink>(window_ms, service_ids(topo_),
                                                    region_ids(topo_))),
        fault_rng_(derive_seed(seed, "fault-victim")),
        faults_(std::move(fault_schedule)) {
    routing_salt_ = derive_seed(seed_, "routing");
    instance_salt_ = derive_seed(seed_, "instance-pick");
    jitter_seed_ = derive_seed(seed_, "latency-jitter");

    n_services_ = static_cast<int>(topo_.services.size());
    n_regions_ = static_cast<int>(topo_.regions.size());

    instance_base_.resize(static_cast<std::size_t>(n_services_) + 1, 0);
    for (int s = 0; s < n_services_; ++s)
      instance_base_[static_cast<std::size_t>(s) + 1] =
          instance_base_[static_cast<std::size_t>(s)] +
          topo_.services[static_cast<std::size_t>(s)].instances_per_region * n_regions_;
    instances_.resize(static_cast<std::size_t>(instance_base_.back()));
    alive_count_.assign(static_cast<std::size_t>(n_services_ * n_regions_), 0);
    for (int s = 0; s < n_services_; ++s) {
      const auto& svc = topo_.services[static_cast<std::size_t>(s)];
      for (int r = 0; r < n_regions_; ++r)
        alive_count_[static_cast<std::size_t>(s * n_regions_ + r)] =
            svc.instances_per_region;
      sink_->set_instance_count(svc.id, svc.instances_per_region * n_regions_);
    }

    evacuated_.resize(static_cast<std::size_t>(n_regions_));
    blackholed_.assign(static_cast<std::size_t>(n_regions_), false);
    for (int r = 0; r < n_regions_; ++r)
      evacuated_[static_cast<std::size_t>(r)] =
          topo_.regions[static_cast<std::size_t>(r)].evacuated;
    rebuild_routing();

    caches_.resize(static_cast<std::size_t>(n_services_ * n_regions_));
    visit_counts_.assign(static_cast<std::size_t>(n_services_), 0);

    // Interceptor lookup tables.
    fail_edge_.assign(static_cast<std::size_t>(n_services_ * n_services_), {});
    latency_edge_.assign(static_cast<std::size_t>(n_services_ * n_services_), {});
    fail_service_.assign(static_cast<std::size_t>(n_services_), {});
    for (std::size_t i = 0; i < faults_.size(); ++i) {
      const auto& f = faults_[i];
      switch (f.spec.kind) {
        case faults::FaultKind::FailRequests:
          fail_edge_[static_cast<std::size_t>(f.edge_from * n_services_ + f.edge_to)]
              .push_back(static_cast<int>(i));
          break;
        case faults::FaultKind::InjectLatency:
          latency_edge_[static_cast<std::size_t>(f.edge_from * n_services_ + f.edge_to)]
              .push_back(static_cast<int>(i));
          break;
        case faults::FaultKind::FailService:
          fail_service_[static_cast<std::size_t>(f.service)].push_back(
              static_cast<int>(i));
          break;
        default:
          break;
      }
      push_event(f.spec.window.start_ms, EventKind::FaultActivate,
                 static_cast<std::uint64_t>(i));
      push_event(f.spec.window.end_ms(), EventKind::FaultRevert,
                 static_cast<std::uint64_t>(i));
    }

    entry_svc_ = topo_.service_of(topo_.entry_service);
    push_event(0, EventKind::BlockGen, 0);
    push_event(window_ms, EventKind::WindowClose, 0);
  }

  WorldState(const WorldState&) = delete;
  WorldState& operator=(const WorldState&) = delete;

  const Topology& topology() const { return topo_; }
  SimMillis clock() const { return clock_; }
  metrics::MetricSink& sink() { return *sink_; }
  const metrics::MetricSink& sink() const { return *sink_; }
  std::uint64_t seed() const { return seed_; }

  const std::vector<DeathRecord>& deaths() const { return deaths_; }
  const std::vector<FiringRecord>& interceptor_firings() const { return firings_; }
  std::int64_t in_flight() const { return in_flight_; }
  std::int64_t total_arrivals() const { return total_arrivals_; }

  bool region_evacuated(int r) const { return evacuated_[static_cast<std::size_t>(r)]; }
  bool region_blackholed(int r) const { return blackholed_[static_cast<std::size_t>(r)]; }

  std::int64_t queue_len(int svc, int region, int inst) const {
    return inst_at(svc, region, inst).queue_len;
  }
  bool instance_alive(int svc, int region, int inst) const {
    return inst_at(svc, region, inst).alive;
  }

  // Completions scheduled beyond this time are never observable and are
  // dropped to bound heap growth in collapse scenarios. Only meaningful when
  // the world will never be advanced past the horizon.
  void set_event_horizon(SimMillis horizon) { horizon_ = horizon; }

  // Invoked after each window seal with the window's end boundary. May call
  // request_stop() to end the run at that boundary.
  void set_window_callback(std::function<void(SimMillis)> cb) {
    window_cb_ = std::move(cb);
  }
  void request_stop() { stop_ = true; }

  // Sticky, weight-proportional region choice. A user maps to the same
  // region until evacuations or weights change; users of healthy regions do
  // not move when another region is evacuated.
  int route_request(UserId user) const {
    std::uint32_t x =
        static_cast<std::uint32_t>(mix64(user, routing_salt_) & 0xffffffffull);
    int primary = pick_region(x, config_cum_);
    if (primary >= 0 && !evacuated_[static_cast<std::size_t>(primary)]) return primary;
    // Rehash the displaced user over the surviving regions.
    if (survivor_total_ == 0) throw AllRegionsDownError();
    std::uint32_t y = static_cast<std::uint32_t>(
        mix64(x, 0xE7ACA7E0ull ^ routing_salt_) & 0xffffffffull);
    int r = pick_region(y, survivor_cum_);
    if (r < 0) throw AllRegionsDownError();
    return r;
  }

  // Regenerates the arrival stream for [t0, t1) without touching world
  // state. The run consumes exactly this stream, so tests can use it as an
  // independent view of the traffic process.
  std::vector<ArrivalSample> generate_arrivals(SimMillis t0, SimMillis t1) const {
    if (t1 <= t0) throw ConfigError("interval", "t1 must be > t0");
    std::vector<ArrivalSample> out;
    for (SimMillis block = t0 / kGenBlockMs; block * kGenBlockMs < t1; ++block) {
      for (const auto& a : gen_block(block))
        if (a.time >= t0 && a.time < t1) out.push_back(a);
    }
    return out;
  }

  // Evaluates one call against the current world state, scheduling its
  // completion like any simulated call. Exposed for direct unit probing.
  CallOutcome process_call(const std::string& service, UserId user, std::uint64_t key,
                           std::uint64_t seq) {
    Request req{user, key, seq};
    std::fill(visit_counts_.begin(), visit_counts_.end(), 0);
    hop_counter_ = 0;
    entry_admitted_ = kNoInstance;
    int region = route_request(user);
    return resolve_dependency(topo_.service_of(service), region, req, -1, clock_, 0);
  }

  // Processes every pending event with time <= t_end in (time, insertion)
  // order. Instance deaths are simulated outcomes, not errors.
  void run_until(SimMillis t_end) {
    if (t_end < clock_) throw ConfigError("t_end", "cannot run backwards");
    stop_ = false;
    while (!events_.empty() && !stop_) {
      const Event& top = events_.top();
      if (top.time > t_end) break;
      Event e = top;
      events_.pop();
      clock_ = e.time;
      dispatch(e);
    }
    if (clock_ < t_end && !stop_) clock_ = t_end;
  }

  // Immediate mode switch for a region, also used by scheduled region-outage
  // faults. Evacuation is the simulate-not-inject mode: traffic is
  // redirected and nothing fails because of routing itself.
  void apply_region_outage(faults::OutageMode mode, int region) {
    if (mode == faults::OutageMode::Blackhole) {
      blackholed_[static_cast<std::size_t>(region)] = true;
      return;
    }
    if (!evacuated_[static_cast<std::size_t>(region)]) {
      int healthy_left = 0;
      for (int r = 0; r < n_regions_; ++r)
        if (r != region && !evacuated_[static_cast<std::size_t>(r)] &&
            topo_.regions[static_cast<std::size_t>(r)].routing_weight > 0)
          ++healthy_left;
      if (healthy_left == 0) throw AllRegionsDownError();
      evacuated_[static_cast<std::size_t>(region)] = true;
      rebuild_routing();
    }
  }

  void revert_region_outage(faults::OutageMode mode, int region) {
    if (mode == faults::OutageMode::Blackhole) {
      blackholed_[static_cast<std::size_t>(region)] = false;
      return;
    }
    bool config_evacuated = topo_.regions[static_cast<std::size_t>(region)].evacuated;
    if (evacuated_[static_cast<std::size_t>(region)] != config_evacuated) {
      evacuated_[static_cast<std::size_t>(region)] = config_evacuated;
      rebuild_routing();
    }
  }

  // Reverts every fault whose window contains `now` and stops interceptors
  // from firing after it. Irreversible consequences (dead instances) stand.
  void deactivate_faults(SimMillis now) {
    fault_cutoff_ = now;
    for (const auto& f : faults_) {
      if (f.spec.window.contains(now) &&
          f.spec.kind == faults::FaultKind::RegionOutage)
        revert_region_outage(f.spec.outage_mode, f.region);
    }
  }

 private:
  enum class EventKind {
    BlockGen,
    Arrival,
    CallComplete,
    BoundaryRecord,
    InstanceDeath,
    FaultActivate,
    FaultRevert,
    WindowClose,
  };

  static constexpr std::uint64_t kNoInstance = ~std::uint64_t{0};

  struct Event {
    SimMillis time;
    std::uint64_t seq;
    EventKind kind;
    std::uint64_t a = 0;  // kind-specific payload
    std::uint64_t b = 0;
    std::uint64_t c = 0;
    double x = 0;
  };
  struct EventOrder {
    bool operator()(const Event& lhs, const Event& rhs) const {
      if (lhs.time != rhs.time) return lhs.time > rhs.time;
      return lhs.seq > rhs.seq;
    }
  };

  struct Instance {
    double next_start_ms = 0;
    std::int64_t queue_len = 0;
    bool alive = true;
    bool death_scheduled = false;
    // Boundary outcomes waiting on this instance (entry admissions only).
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pending;  // (id, gen)
  };

  struct PendingEntry {
    UserId user = 0;
    metrics::OutcomeClass outcome = metrics::OutcomeClass::Failure;
    bool finalized = true;
    std::uint32_t gen = 0;
  };

  struct CacheEntry {
    SimMillis expires = 0;
    bool is_error = false;
  };

  static std::vector<std::string> service_ids(const Topology& t) {
    std::vector<std::string> out;
    for (const auto& s : t.services) out.push_back(s.id);
    return out;
  }
  static std::vector<std::string> region_ids(const Topology& t) {
    std::vector<std::string> out;
    for (const auto& r : t.regions) out.push_back(r.id);
    return out;
  }

  Instance& inst_ref(int svc, int region, int i) {
    return instances_[static_cast<std::size_t>(
        instance_base_[static_cast<std::size_t>(svc)] +
        region * topo_.services[static_cast<std::size_t>(svc)].instances_per_region +
        i)];
  }
  const Instance& inst_at(int svc, int region, int i) const {
    return instances_[static_cast<std::size_t>(
        instance_base_[static_cast<std::size_t>(svc)] +
        region * topo_.services[static_cast<std::size_t>(svc)].instances_per_region +
        i)];
  }

  void push_event(SimMillis t, EventKind kind, std::uint64_t a = 0,
                  std::uint64_t b = 0, std::uint64_t c = 0, double x = 0) {
    events_.push(Event{t, event_seq_++, kind, a, b, c, x});
  }

  // --- routing ---

  void rebuild_routing() {
    config_cum_.clear();
    double total = 0;
    for (const auto& r : topo_.regions) total += r.routing_weight;
    double acc = 0;
    for (const auto& r : topo_.regions) {
      acc += r.routing_weight;
      config_cum_.push_back(static_cast<std::uint64_t>(
          (acc / total) * 4294967296.0));
    }
    survivor_cum_.clear();
    double stotal = 0;
    for (int r = 0; r < n_regions_; ++r)
      if (!evacuated_[static_cast<std::size_t>(r)])
        stotal += topo_.regions[static_cast<std::size_t>(r)].routing_weight;
    survivor_total_ = stotal;
    double sacc = 0;
    for (int r = 0; r < n_regions_; ++r) {
      if (!evacuated_[static_cast<std::size_t>(r)])
        sacc += topo_.regions[static_cast<std::size_t>(r)].routing_weight;
      survivor_cum_.push_back(
          stotal > 0 ? static_cast<std::uint64_t>((sacc / stotal) * 4294967296.0)
                     : 0);
    }
  }

  int pick_region(std::uint32_t x, const std::vector<std::uint64_t>& cum) const {
    std::uint64_t prev = 0;
    for (int r = 0; r < n_regions_; ++r) {
      std::uint64_t hi = cum[static_cast<std::size_t>(r)];
      if (x >= prev && x < hi) return r;
      prev = hi;
    }
    // Rounding can leave a sliver at the top of the space; assign it to the
    // last region that actually has a slice.
    prev = 0;
    int last = -1;
    for (int r = 0; r < n_regions_; ++r) {
      if (cum[static_cast<std::size_t>(r)] > prev) last = r;
      prev = cum[static_cast<std::size_t>(r)];
    }
    return last;
  }

  // --- traffic ---

  double lambda_at(SimMillis t) const {
    const auto& tr = topo_.traffic;
    double ts = static_cast<double>(t) / 1000.0;
    return tr.base_rate *
           (1.0 + tr.amplitude *
                      std::sin(2.0 * M_PI * (ts - tr.phase_s) / kSecondsPerDay));
  }

  std::vector<ArrivalSample> gen_block(SimMillis block) const {
    const auto& tr = topo_.traffic;
    double lambda_max = tr.base_rate * (1.0 + tr.amplitude);
    Rng rng(derive_seed(seed_, "arrivals", static_cast<std::uint64_t>(block)));
    std::vector<ArrivalSample> out;
    SimMillis t0 = block * kGenBlockMs;
    double tt = 0;  // offset within block, ms
    std::uint64_t index = 0;
    for (;;) {
      tt += rng.next_exp_s(lambda_max) * 1000.0;
      if (tt >= static_cast<double>(kGenBlockMs)) break;
      SimMillis at = t0 + static_cast<SimMillis>(tt);
      double keep = rng.next_unit();
      if (keep * lambda_max <= lambda_at(at)) {
        ArrivalSample a;
        a.time = at;
        a.user = rng.next_below(tr.population);
        a.key = rng.next_below(tr.catalog_size);
        a.seq = (static_cast<std::uint64_t>(block) << 32) | index++;
        out.push_back(a);
      }
    }
    return out;
  }

  // --- per-call deterministic noise ---

  double jitter_factor(const ServiceSpec& svc, std::uint64_t req_seq, int svc_idx) {
    if (svc.jitter_frac <= 0) return 1.0;
    std::uint32_t occ = visit_counts_[static_cast<std::size_t>(svc_idx)]++;
    double u = to_unit(mix64(jitter_seed_, req_seq,
                             (static_cast<std::uint64_t>(svc_idx) << 32) | occ));
    return 1.0 + svc.jitter_frac * (2.0 * u - 1.0);
  }

  // --- call evaluation ---

  bool fault_live(const faults::CompiledFault& f, SimMillis t) const {
    return t < fault_cutoff_ && f.active_at(t);
  }

  // Applies the callee's fallback policy to a failed dependency call.
  // Fallbacks only mask transport failures; an answered error response (for
  // example a poisoned cache entry) propagates untouched.
  CallOutcome resolve_dependency(int callee, int region, const Request& req,
                                 int caller, SimMillis t, int depth) {
    CallOutcome res = call_service(callee, region, req, caller, t, depth);
    if (res.cls != metrics::OutcomeClass::Failure || !res.transport) return res;

    const auto& spec = topo_.services[static_cast<std::size_t>(callee)];
    switch (spec.fallback.kind) {
      case FallbackKind::None:
        record_unadmitted(callee, t, res);
        return res;
      case FallbackKind::DefaultValue: {
        CallOutcome out;
        out.cls = metrics::OutcomeClass::FallbackSuccess;
        out.degraded = true;
        out.duration_ms = res.duration_ms;
        record_unadmitted(callee, t, out);
        return out;
      }
      case FallbackKind::BypassTo: {
        // Reissue directly against the bypass target: the user is served,
        // at the cost of extra latency and extra load on the target.
        int target = topo_.service_of(spec.fallback.bypass_target);
        CallOutcome direct = call_service(target, region, req, caller,
                                          t + static_cast<SimMillis>(res.duration_ms),
                                          depth + 1);
        CallOutcome out = direct;
        out.duration_ms = res.duration_ms + direct.duration_ms;
        if (direct.cls != metrics::OutcomeClass::Failure) {
          out.cls = metrics::OutcomeClass::FallbackSuccess;
          out.degraded = true;
          record_unadmitted(callee, t, out);
        } else {
          // Bypass did not help; report the original transport failure.
          record_unadmitted(callee, t, res);
          if (direct.transport)
            record_unadmitted(target, t + static_cast<SimMillis>(res.duration_ms),
                              direct);
          out = res;
          out.duration_ms = res.duration_ms + direct.duration_ms;
        }
        return out;
      }
    }
    return res;
  }

  // Records the outcome of a call that never reached an instance (or was
  // resolved by its caller's fallback) so per-service error and fallback
  // rates still see it.
  void record_unadmitted(int svc, SimMillis t, const CallOutcome& out) {
    push_event(t + static_cast<SimMillis>(out.duration_ms), EventKind::CallComplete,
               pack_addr(svc, -1, -1),
               (static_cast<std::uint64_t>(out.cls == metrics::OutcomeClass::Failure
                                               ? 2
                                           : out.cls == metrics::OutcomeClass::FallbackSuccess
                                               ? 1
                                               : 0)),
               0, out.duration_ms);
  }

  static std::uint64_t pack_addr(int svc, int region, int inst) {
    return (static_cast<std::uint64_t>(static_cast<std::uint16_t>(svc)) << 32) |
           (static_cast<std::uint64_t>(static_cast<std::uint16_t>(region)) << 16) |
           static_cast<std::uint64_t>(static_cast<std::uint16_t>(inst));
  }
  static void unpack_addr(std::uint64_t p, int& svc, int& region, int& inst) {
    svc = static_cast<std::int16_t>((p >> 32) & 0xffff);
    region = static_cast<std::int16_t>((p >> 16) & 0xffff);
    inst = static_cast<std::int16_t>(p & 0xffff);
  }

  CallOutcome call_service(int svc, int region, const Request& req, int caller,
                           SimMillis t, int depth) {
    std::uint64_t hop = hop_counter_++;
    const auto& spec = topo_.services[static_cast<std::size_t>(svc)];

    // Injected request failures between caller and callee.
    if (caller >= 0) {
      for (int fi :
           fail_edge_[static_cast<std::size_t>(caller * n_services_ + svc)]) {
        const auto& f = faults_[static_cast<std::size_t>(fi)];
        if (fault_live(f, t) && f.user_in_scope(req.user) &&
            f.fail_coin(req.seq, hop)) {
          firings_.push_back({t, fi, req.user});
          return {metrics::OutcomeClass::Failure, FailReason::Injected, true, false, 0};
        }
      }
    }
    // A failed service is unreachable on every inbound path, including the
    // user-facing one and bypass reissues.
    for (int fi : fail_service_[static_cast<std::size_t>(svc)]) {
      const auto& f = faults_[static_cast<std::size_t>(fi)];
      if (fault_live(f, t) && f.user_in_scope(req.user)) {
        firings_.push_back({t, fi, req.user});
        return {metrics::OutcomeClass::Failure, FailReason::Injected, true, false, 0};
      }
    }

    double extra = 0;
    if (caller >= 0) {
      for (int fi :
           latency_edge_[static_cast<std::size_t>(caller * n_services_ + svc)]) {
        const auto& f = faults_[static_cast<std::size_t>(fi)];
        if (fault_live(f, t) && f.user_in_scope(req.user)) {
          firings_.push_back({t, fi, req.user});
          extra += f.latency_extra_ms(req.seq, hop);
        }
      }
    }

    if (blackholed_[static_cast<std::size_t>(region)])
      return {metrics::OutcomeClass::Failure, FailReason::RegionBlackhole, true, false,
              extra};

    int alive = alive_count_[static_cast<std::size_t>(svc * n_regions_ + region)];
    if (alive == 0)
      return {metrics::OutcomeClass::Failure, FailReason::InstanceDown, true, false,
              extra};
    int pick = static_cast<int>(
        mix64(req.user, instance_salt_,
              static_cast<std::uint64_t>(svc * n_regions_ + region)) %
        static_cast<std::uint64_t>(alive));
    int inst_idx = -1;
    for (int i = 0; i < spec.instances_per_region; ++i) {
      if (!inst_at(svc, region, i).alive) continue;
      if (pick-- == 0) {
        inst_idx = i;
        break;
      }
    }
    if (inst_idx < 0)
      return {metrics::OutcomeClass::Failure, FailReason::InstanceDown, true, false,
              extra};
    Instance& inst = inst_ref(svc, region, inst_idx);

    // Queue admission. queue_len counts requests admitted and not yet
    // answered; it is exactly the memory proxy.
    std::int64_t q = inst.queue_len;
    if (spec.queue.kind == QueueKind::Bounded && q >= spec.queue.max_items)
      return {metrics::OutcomeClass::Failure, FailReason::QueueFull, true, false,
              extra};
    inst.queue_len = q + 1;
    if (caller < 0) entry_admitted_ = pack_addr(svc, region, inst_idx);
    sink_->record_queue_sample(t, svc, inst.queue_len);
    sink_->record_busy(t, svc, 1000.0 / spec.capacity_per_instance);
    if (inst.queue_len > spec.memory_limit && !inst.death_scheduled) {
      inst.death_scheduled = true;
      push_event(t, EventKind::InstanceDeath,
                 pack_addr(svc, region, inst_idx), 0 /* simulated, not fault */);
    }

    // The instance starts requests at its rated capacity; waiting plus the
    // queue-dependent service time is the call's own latency.
    double slot_ms = 1000.0 / spec.capacity_per_instance;
    double start = std::max(static_cast<double>(t), inst.next_start_ms);
    inst.next_start_ms = start + slot_ms;
    double own = spec.base_latency_ms *
                 (1.0 + static_cast<double>(q) / spec.capacity_per_instance) *
                 jitter_factor(spec, req.seq, svc);
    double elapsed = (start - static_cast<double>(t)) + own;

    CallOutcome result;

    // Cache lookup: a fronted service serves stored responses, including
    // stored errors, until TTL expiry.
    bool cache_miss = false;
    if (spec.cache) {
      auto& store = caches_[static_cast<std::size_t>(svc * n_regions_ + region)];
      auto it = store.find(req.key);
      if (it != store.end() && t < it->second.expires) {
        if (it->second.is_error) {
          result.cls = metrics::OutcomeClass::Failure;
          result.reason = FailReason::CachedError;
          result.transport = false;
          if (cached_error_log_enabled_) cached_error_users_.push_back(req.user);
        }
        result.duration_ms = elapsed + extra;
        finish_call(svc, region, inst_idx, t, elapsed, result);
        return result;
      }
      if (it != store.end()) store.erase(it);
      cache_miss = true;
    }

    bool degraded = false;
    for (int ei : topo_.out_edges[static_cast<std::size_t>(svc)]) {
      const auto& edge = topo_.edges[static_cast<std::size_t>(ei)];
      int callee = topo_.service_of(edge.to);
      CallOutcome dep = resolve_dependency(
          callee, region, req, svc, t + static_cast<SimMillis>(elapsed), depth + 1);
      elapsed += dep.duration_ms;
      degraded |= dep.degraded;
      if (dep.cls == metrics::OutcomeClass::Failure) {
        bool required =
            edge.kind == CallKind::RequiredForSuccess ||
            topo_.services[static_cast<std::size_t>(callee)].criticality ==
                Criticality::Critical;
        if (required) {
          result.cls = metrics::OutcomeClass::Failure;
          result.reason = FailReason::UpstreamFailed;
          result.transport = false;
          break;
        }
        degraded = true;  // dependency lost but not required; degraded start
      }
    }

    if (result.cls != metrics::OutcomeClass::Failure && degraded)
      result.cls = metrics::OutcomeClass::FallbackSuccess;
    result.degraded = degraded;

    if (cache_miss) {
      bool failed = result.cls == metrics::OutcomeClass::Failure;
      if (!failed || spec.cache->cache_errors) {
        auto& store = caches_[static_cast<std::size_t>(svc * n_regions_ + region)];
        store[req.key] = CacheEntry{
            t + static_cast<SimMillis>(elapsed) + spec.cache->ttl_ms, failed};
      }
    }

    result.duration_ms = elapsed + extra;
    finish_call(svc, region, inst_idx, t, elapsed, result);
    return result;
  }

  void finish_call(int svc, int region, int inst_idx, SimMillis t, double elapsed,
                   const CallOutcome& result) {
    SimMillis complete_at = t + static_cast<SimMillis>(elapsed);
    std::uint64_t cls_code =
        result.cls == metrics::OutcomeClass::Failure
            ? 2
            : (result.cls == metrics::OutcomeClass::FallbackSuccess ? 1 : 0);
    if (complete_at <= horizon_)
      push_event(complete_at, EventKind::CallComplete,
                 pack_addr(svc, region, inst_idx), cls_code, 0, elapsed);
  }

  std::uint32_t alloc_pending() {
    if (!free_pendings_.empty()) {
      std::uint32_t id = free_pendings_.back();
      free_pendings_.pop_back();
      pendings_[id].gen++;
      return id;
    }
    pendings_.push_back({});
    return static_cast<std::uint32_t>(pendings_.size() - 1);
  }

  void compact_pending(Instance& inst) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> live;
    for (auto [id, gen] : inst.pending) {
      const auto& p = pendings_[id];
      if (p.gen == gen && !p.finalized) live.emplace_back(id, gen);
    }
    if (live.size() * 2 < inst.pending.size()) inst.pending = std::move(live);
  }

  void finalize_pending(std::uint32_t id, std::uint32_t gen, SimMillis t,
                        bool as_failure) {
    PendingEntry& p = pendings_[id];
    if (p.gen != gen || p.finalized) return;
    p.finalized = true;
    sink_->record_outcome(t, p.user,
                          as_failure ? metrics::OutcomeClass::Failure : p.outcome);
    in_flight_--;
    finalized_outcomes_++;
    free_pendings_.push_back(id);
  }

  void kill_instance(int svc, int region, int inst_idx, SimMillis t,
                     bool by_fault) {
    Instance& inst = inst_ref(svc, region, inst_idx);
    if (!inst.alive) return;
    inst.alive = false;
    alive_count_[static_cast<std::size_t>(svc * n_regions_ + region)]--;
    sink_->record_death(t, svc);
    deaths_.push_back({t, svc, region, inst_idx, by_fault});
    // Work queued on the instance dies with it.
    for (auto [id, gen] : inst.pending) finalize_pending(id, gen, t, true);
    inst.pending.clear();
  }

  // --- event dispatch ---

  void dispatch(const Event& e) {
    switch (e.kind) {
      case EventKind::BlockGen: {
        SimMillis block = static_cast<SimMillis>(e.a);
        for (const auto& a : gen_block(block))
          push_event(a.time, EventKind::Arrival, a.user, a.key, a.seq);
        push_event((block + 1) * kGenBlockMs, EventKind::BlockGen,
                   static_cast<std::uint64_t>(block + 1));
        break;
      }
      case EventKind::Arrival:
        handle_arrival(e.time, e.a, e.b, e.c);
        break;
      case EventKind::CallComplete: {
        int svc, region, inst_idx;
        unpack_addr(e.a, svc, region, inst_idx);
        auto cls = static_cast<int>(e.b & 0xff);
        metrics::OutcomeClass oc = cls == 2   ? metrics::OutcomeClass::Failure
                                   : cls == 1 ? metrics::OutcomeClass::FallbackSuccess
                                              : metrics::OutcomeClass::Success;
        if (region >= 0) {
          Instance& inst = inst_ref(svc, region, inst_idx);
          if (inst.alive) {
            inst.queue_len--;
            sink_->record_service_call(e.time, svc, oc, e.x);
          }
        } else {
          // Unadmitted or fallback-resolved call: rate bookkeeping only.
          sink_->record_service_call(e.time, svc, oc, e.x);
        }
        break;
      }
      case EventKind::BoundaryRecord:
        finalize_pending(static_cast<std::uint32_t>(e.a >> 32),
                         static_cast<std::uint32_t>(e.a & 0xffffffffull), e.time,
                         false);
        break;
      case EventKind::InstanceDeath: {
        int svc, region, inst_idx;
        unpack_addr(e.a, svc, region, inst_idx);
        kill_instance(svc, region, inst_idx, e.time, e.b != 0);
        break;
      }
      case EventKind::FaultActivate:
        activate_fault(static_cast<std::size_t>(e.a), e.time);
        break;
      case EventKind::FaultRevert:
        revert_fault(static_cast<std::size_t>(e.a), e.time);
        break;
      case EventKind::WindowClose: {
        // End-of-window queue snapshot keeps memory-proxy series meaningful
        // even in windows with no admissions.
        for (int s = 0; s < n_services_; ++s) {
          const auto& spec = topo_.services[static_cast<std::size_t>(s)];
          for (int r = 0; r < n_regions_; ++r)
            for (int i = 0; i < spec.instances_per_region; ++i) {
              const Instance& inst = inst_at(s, r, i);
              if (inst.alive)
                sink_->record_queue_sample(e.time - 1, s, inst.queue_len);
            }
        }
        sink_->seal_through(e.time);
        push_event(e.time + sink_->window_ms(), EventKind::WindowClose, 0);
        if (window_cb_) window_cb_(e.time);
        break;
      }
    }
  }

  void handle_arrival(SimMillis t, UserId user, std::uint64_t key,
                      std::uint64_t seq) {
    total_arrivals_++;
    sink_->record_arrival(t, user);
    int region = route_request(user);
    sink_->record_region_arrival(t, region);

    Request req{user, key, seq};
    std::fill(visit_counts_.begin(), visit_counts_.end(), 0);
    hop_counter_ = 0;
    entry_admitted_ = kNoInstance;
    CallOutcome res = resolve_dependency(entry_svc_, region, req, -1, t, 0);

    // One boundary outcome per arrival, finalized when the stream start
    // completes, or converted to a failure if the serving instance dies
    // while this request rides its queue.
    std::uint32_t id = alloc_pending();
    PendingEntry& p = pendings_[id];
    p.user = user;
    p.outcome = res.cls;
    p.finalized = false;
    in_flight_++;
    if (entry_admitted_ != kNoInstance) {
      int svc, region_a, inst_idx;
      unpack_addr(entry_admitted_, svc, region_a, inst_idx);
      Instance& inst = inst_ref(svc, region_a, inst_idx);
      inst.pending.emplace_back(id, p.gen);
      if (inst.pending.size() > 1024) compact_pending(inst);
    }
    SimMillis at = t + static_cast<SimMillis>(res.duration_ms);
    if (at <= horizon_)
      push_event(at, EventKind::BoundaryRecord,
                 (static_cast<std::uint64_t>(id) << 32) | p.gen);
  }

  void activate_fault(std::size_t i, SimMillis t) {
    auto& f = faults_[i];
    if (t >= fault_cutoff_) return;
    switch (f.spec.kind) {
      case faults::FaultKind::TerminateInstance: {
        // Uniform victim among live matching instances unless pinned.
        struct Candidate {
          int svc, region, inst;
        };
        std::vector<Candidate> candidates;
        for (int s = 0; s < n_services_; ++s) {
          if (f.service >= 0 && s != f.service) continue;
          const auto& spec = topo_.services[static_cast<std::size_t>(s)];
          for (int r = 0; r < n_regions_; ++r) {
            if (f.region >= 0 && r != f.region) continue;
            for (int ii = 0; ii < spec.instances_per_region; ++ii) {
              if (f.spec.instance.instance && *f.spec.instance.instance != ii)
                continue;
              if (inst_at(s, r, ii).alive) candidates.push_back({s, r, ii});
            }
          }
        }
        if (candidates.empty()) return;
        const auto& victim =
            candidates[fault_rng_.next_below(candidates.size())];
        kill_instance(victim.svc, victim.region, victim.inst, t, true);
        break;
      }
      case faults::FaultKind::RegionOutage:
        apply_region_outage(f.spec.outage_mode, f.region);
        break;
      default:
        break;  // window-gated interceptors need no activation action
    }
  }

  void revert_fault(std::size_t i, SimMillis t) {
    auto& f = faults_[i];
    if (t > fault_cutoff_) return;
    if (f.spec.kind == faults::FaultKind::RegionOutage)
      revert_region_outage(f.spec.outage_mode, f.region);
    // Terminated instances stay dead until respawn; interceptors expire by
    // their window.
  }

 public:
  // Cached-error forensics used by failure-mode tests.
  void enable_cached_error_log() { cached_error_log_enabled_ = true; }
  const std::vector<UserId>& cached_error_users() const {
    return cached_error_users_;
  }

 private:
  Topology topo_;
  std::uint64_t seed_;
  std::unique_ptr<metrics::MetricSink> sink_;

  int n_services_ = 0;
  int n_regions_ = 0;
  int entry_svc_ = 0;

  SimMillis clock_ = 0;
  std::uint64_t event_seq_ = 0;
  bool stop_ = false;
  SimMillis horizon_ = std::numeric_limits<SimMillis>::max();
  SimMillis fault_cutoff_ = std::numeric_limits<SimMillis>::max();

  std::priority_queue<Event, std::vector<Event>, EventOrder> events_;

  std::vector<std::size_t> instance_base_;
  std::vector<Instance> instances_;
  std::vector<int> alive_count_;

  std::vector<bool> evacuated_;
  std::vector<bool> blackholed_;
  std::vector<std::uint64_t> config_cum_;
  std::vector<std::uint64_t> survivor_cum_;
  double survivor_total_ = 0;

  std::vector<std::unordered_map<std::uint64_t, CacheEntry>> caches_;

  std::uint64_t routing_salt_ = 0;
  std::uint64_t instance_salt_ = 0;
  std::uint64_t jitter_seed_ = 0;
  Rng fault_rng_;

  std::vector<faults::CompiledFault> faults_;
  std::vector<std::vector<int>> fail_edge_;
  std::vector<std::vector<int>> latency_edge_;
  std::vector<std::vector<int>> fail_service_;

  std::vector<std::uint32_t> visit_counts_;
  std::uint64_t hop_counter_ = 0;

  std::vector<PendingEntry> pendings_;
  std::vector<std::uint32_t> free_pendings_;
  std::int64_t in_flight_ = 0;
  std::int64_t total_arrivals_ = 0;

  std::vector<DeathRecord> deaths_;
  std::vector<FiringRecord> firings_;
  bool cached_error_log_enabled_ = false;
  std::vector<UserId> cached_error_users_;

  std::function<void(SimMillis)> window_cb_;
  std::uint64_t entry_admitted_ = ~std::uint64_t{0};
  std::int64_t finalized_outcomes_ = 0;

 public:
  std::int64_t finalized_outcomes() const { return finalized_outcomes_; }
};

}  // namespace chaoslab::sim

namespace chaoslab::faults {

// Module-level façade matching the faults surface; the state lives on the
// world.
inline void apply_region_outage(OutageMode mode, const std::string& region,
                                sim::WorldState& world) {
  world.apply_region_outage(mode, world.topology().region_of(region));
}

}  // namespace chaoslab::faults
