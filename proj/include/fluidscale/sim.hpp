#pragma once

// Request-level discrete-event simulation of a function network under a
// replica-control policy.
//
// Every replica serves its requests FCFS, one at a time, and holds at most
// y_k requests (in service plus queued).  Events are ordered by time and
// then by insertion sequence, and all randomness comes from four named
// streams derived from the seed, so a run is a pure function of its inputs.

#include <fluidscale/model.hpp>
#include <fluidscale/planner.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <ostream>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fluidscale::sim {

// ---------------------------------------------------------------------------
// policies

/// Threshold autoscaler: one more replica after each failed placement, one
/// fewer whenever a replica runs empty or an idle scan finds one.
struct AutoscalerPolicy {
  std::vector<int> initial;  // [k]
  std::vector<int> min;      // [k]
  std::vector<int> max;      // [k]
  double idle_scan_period = 0.1;
};

/// Replica counts follow a precomputed plan, changing at its breakpoints.
struct FluidSchedulePolicy {
  ReplicaPlan plan;
};

using Policy = std::variant<AutoscalerPolicy, FluidSchedulePolicy>;

/// Per function: max = its share of the smallest server it runs on,
/// initial = 10% of max rounded up, min = `min_replicas`.
inline AutoscalerPolicy default_autoscaler(const NetworkSpec& spec, int min_replicas = 1,
                                           double initial_fraction = 0.1) {
  AutoscalerPolicy p;
  std::vector<int> per_server(spec.num_servers, 0);
  for (const auto& a : spec.allocations) ++per_server[a.server];
  for (int k = 0; k < spec.num_functions; ++k) {
    int cap = 0;
    bool any = false;
    for (const auto& a : spec.allocations) {
      if (a.function != k) continue;
      const int share = static_cast<int>(std::floor(spec.capacity[a.server][0] / per_server[a.server] + 1e-9));
      cap = any ? std::min(cap, share) : share;
      any = true;
    }
    cap = std::max(cap, min_replicas);
    p.max.push_back(cap);
    p.min.push_back(min_replicas);
    p.initial.push_back(std::clamp(static_cast<int>(std::ceil(initial_fraction * cap - 1e-9)), min_replicas, cap));
  }
  return p;
}

// ---------------------------------------------------------------------------
// records and results

enum class Outcome { Completed, FailedOnArrival, TimedOut, InSystemAtEnd };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Completed: return "completed";
    case Outcome::FailedOnArrival: return "failed";
    case Outcome::TimedOut: return "timed_out";
    case Outcome::InSystemAtEnd: return "in_system";
  }
  return "?";
}

struct RequestRecord {
  long id = 0;
  int function = 0;
  double arrival = 0.0;
  std::optional<double> start;
  std::optional<double> completion;
  std::optional<double> removal;  // timeout
  Outcome outcome = Outcome::InSystemAtEnd;
  std::optional<long> parent;
  int allocation = -1;  // -1 when never placed
};

using RequestLog = std::vector<RequestRecord>;

struct DiagramPoint {
  double time;
  long arrivals;  // admitted
  long completions;
  long timeouts;
  long in_system;
};

struct StepPoint {
  double time;
  int value;
};

struct FunctionTally {
  long arrivals = 0;
  long completed = 0;
  long failed = 0;
  long timed_out = 0;
  long in_system_at_end = 0;
};

struct SimResult {
  double holding_cost = 0.0;
  std::optional<double> avg_response_time;
  long arrivals = 0;
  long completed = 0;
  long failures = 0;
  long timeouts = 0;
  long in_system_at_end = 0;
  std::vector<FunctionTally> per_function;
  std::vector<std::vector<DiagramPoint>> cumulative;  // [k]
  std::vector<std::vector<StepPoint>> replicas;       // [j]
};

/// KPIs from a closed log.  Sojourn ends at completion, at timeout removal,
/// or at the horizon; failed requests carry no holding cost.
inline SimResult compute_metrics(const RequestLog& log, const NetworkSpec& spec, double horizon) {
  SimResult r;
  const int K = spec.num_functions;
  r.per_function.assign(K, {});
  double response_sum = 0.0;
  struct Mark {
    double t;
    int kind;  // 0 admit, 1 complete, 2 timeout
  };
  std::vector<std::vector<Mark>> marks(K);
  for (const auto& q : log) {
    if (q.function < 0 || q.function >= K) throw std::invalid_argument("compute_metrics: function index out of range");
    auto& tally = r.per_function[q.function];
    const double c = spec.holding_cost[q.function];
    ++tally.arrivals;
    ++r.arrivals;
    switch (q.outcome) {
      case Outcome::Completed:
        if (!q.completion || !q.start) throw std::invalid_argument("compute_metrics: completed request without times");
        r.holding_cost += c * (*q.completion - q.arrival);
        response_sum += *q.completion - q.arrival;
        ++tally.completed;
        ++r.completed;
        marks[q.function].push_back({q.arrival, 0});
        marks[q.function].push_back({*q.completion, 1});
        break;
      case Outcome::TimedOut:
        if (!q.removal) throw std::invalid_argument("compute_metrics: timed-out request without removal time");
        r.holding_cost += c * (*q.removal - q.arrival);
        ++tally.timed_out;
        ++r.timeouts;
        marks[q.function].push_back({q.arrival, 0});
        marks[q.function].push_back({*q.removal, 2});
        break;
      case Outcome::InSystemAtEnd:
        if (q.completion || q.removal) throw std::invalid_argument("compute_metrics: open request has an end time");
        r.holding_cost += c * (horizon - q.arrival);
        ++tally.in_system_at_end;
        ++r.in_system_at_end;
        marks[q.function].push_back({q.arrival, 0});
        break;
      case Outcome::FailedOnArrival:
        ++tally.failed;
        ++r.failures;
        break;
    }
  }
  if (r.completed > 0) r.avg_response_time = response_sum / static_cast<double>(r.completed);
  r.cumulative.resize(K);
  for (int k = 0; k < K; ++k) {
    auto& m = marks[k];
    std::stable_sort(m.begin(), m.end(), [](const Mark& a, const Mark& b) { return a.t < b.t; });
    DiagramPoint p{0.0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < m.size(); ++i) {
      p.time = m[i].t;
      if (m[i].kind == 0) ++p.arrivals;
      if (m[i].kind == 1) ++p.completions;
      if (m[i].kind == 2) ++p.timeouts;
      p.in_system = p.arrivals - p.completions - p.timeouts;
      if (i + 1 < m.size() && m[i + 1].t == m[i].t) continue;
      r.cumulative[k].push_back(p);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// random streams

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char ch : name) h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ULL;
  return splitmix64(splitmix64(seed) ^ h);
}

class Stream {
 public:
  Stream(std::uint64_t seed, std::string_view name) : rng_(stream_seed(seed, name)) {}
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// engine

struct RunOptions {
  double horizon = 0.0;  // 0 means the spec's horizon
  std::uint64_t seed = 1;
  bool strict_round_robin = false;
};

struct RunOutput {
  SimResult result;
  RequestLog log;
};

namespace detail {

enum class EventType { Arrival, Completion, Timeout, PlanChange, IdleScan };

struct Event {
  double time;
  std::uint64_t seq;
  EventType type;
  long a;  // request id or interval index
  int b;   // replica id

  bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
};

struct Replica {
  int allocation = 0;
  std::deque<long> queue;  // waiting requests, FCFS
  long serving = -1;
  bool draining = false;
  bool alive = true;
  double rate = 0.0;

  int in_system() const { return static_cast<int>(queue.size()) + (serving >= 0 ? 1 : 0); }
};

class Engine {
 public:
  Engine(const NetworkSpec& spec, const Policy& policy, const RunOptions& opt)
      : spec_(spec),
        policy_(policy),
        strict_(opt.strict_round_robin),
        horizon_(opt.horizon > 0.0 ? opt.horizon : spec.horizon),
        arrivals_(opt.seed, "arrivals"),
        types_(opt.seed, "types"),
        services_(opt.seed, "services"),
        routing_(opt.seed, "routing") {
    require_valid(spec_);
    if (horizon_ > spec_.horizon + 1e-9) throw std::invalid_argument("sim::run: horizon exceeds the spec horizon");
    const int K = spec_.num_functions, J = spec_.num_allocations();
    allocs_of_.assign(K, {});
    for (int j = 0; j < J; ++j) allocs_of_[spec_.allocations[j].function].push_back(j);
    live_.assign(K, {});
    pointer_.assign(K, 0);
    count_.assign(J, 0);
    active_count_.assign(J, 0);
    in_system_.assign(K, 0);
    server_used_.assign(spec_.num_servers, 0.0);
    replica_trace_.assign(J, {{0.0, 0}});
    function_cap_.assign(K, std::numeric_limits<int>::max());
    for (int k = 0; k < K; ++k)
      if (spec_.timeout[k]) function_cap_[k] = static_cast<int>(std::ceil(spec_.arrival_rate[k] * *spec_.timeout[k] - 1e-9));

    if (auto* a = std::get_if<AutoscalerPolicy>(&policy_)) {
      auto_ = a;
      if (static_cast<int>(a->initial.size()) != K || static_cast<int>(a->min.size()) != K ||
          static_cast<int>(a->max.size()) != K)
        throw std::invalid_argument("sim::run: autoscaler bounds must have one entry per function");
      for (int k = 0; k < K; ++k)
        if (a->min[k] < 0 || a->min[k] > a->initial[k] || a->initial[k] > a->max[k])
          throw std::invalid_argument("sim::run: autoscaler needs min <= initial <= max");
      demand_ = spec_.replica_demand_lb;
    } else {
      plan_ = &std::get<FluidSchedulePolicy>(policy_).plan;
      if (static_cast<int>(plan_->replicas.size()) != J || static_cast<int>(plan_->demand.size()) != J ||
          plan_->num_intervals() < 1)
        throw std::invalid_argument("sim::run: plan does not match the network");
      for (int j = 0; j < J; ++j)
        if (static_cast<int>(plan_->replicas[j].size()) != plan_->num_intervals() ||
            static_cast<int>(plan_->demand[j].size()) != spec_.num_resources)
          throw std::invalid_argument("sim::run: plan does not match the network");
      if (plan_->breakpoints.front() != 0.0) throw std::invalid_argument("sim::run: plan must start at 0");
      demand_ = plan_->demand;
    }
    for (int j = 0; j < J; ++j) rate_.push_back(spec_.replica_rate(j, demand_[j]));
  }

  RunOutput run() {
    const int K = spec_.num_functions;
    if (auto_) {
      for (int k = 0; k < K; ++k)
        for (int n = 0; n < auto_->initial[k]; ++n) scale_up(k, 0.0);
      if (auto_->idle_scan_period > 0.0) push(auto_->idle_scan_period, EventType::IdleScan, 0, 0);
    } else {
      apply_plan(0, 0.0);
      for (int n = 1; n < plan_->num_intervals(); ++n) push(plan_->breakpoints[n], EventType::PlanChange, n, 0);
    }
    for (int k = 0; k < K; ++k)
      for (long n = 0; n < static_cast<long>(std::llround(spec_.initial_load[k])); ++n) arrive(k, 0.0, std::nullopt);

    total_rate_ = 0.0;
    for (double l : spec_.arrival_rate) total_rate_ += l;
    if (total_rate_ > 0.0) push(arrivals_.exponential(total_rate_), EventType::Arrival, 0, 0);

    while (!events_.empty()) {
      const Event e = events_.top();
      if (e.time >= horizon_) break;
      events_.pop();
      switch (e.type) {
        case EventType::Arrival: on_arrival(e.time); break;
        case EventType::Completion: on_completion(e.time, e.b); break;
        case EventType::Timeout: on_timeout(e.time, e.a); break;
        case EventType::PlanChange: apply_plan(static_cast<int>(e.a), e.time); break;
        case EventType::IdleScan: on_idle_scan(e.time); break;
      }
    }
    RunOutput out;
    out.log = std::move(log_);
    out.result = compute_metrics(out.log, spec_, horizon_);
    out.result.replicas = std::move(replica_trace_);
    return out;
  }

 private:
  const NetworkSpec& spec_;
  const Policy& policy_;
  const AutoscalerPolicy* auto_ = nullptr;
  const ReplicaPlan* plan_ = nullptr;
  bool strict_;
  double horizon_;
  Stream arrivals_, types_, services_, routing_;
  double total_rate_ = 0.0;

  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::uint64_t seq_ = 0;
  RequestLog log_;
  std::vector<int> replica_of_;  // per request, -1 when not queued or served

  std::vector<Replica> replicas_;
  std::vector<std::vector<int>> allocs_of_;  // [k]
  std::vector<std::vector<int>> live_;       // [k] replica ids in creation order
  std::vector<std::size_t> pointer_;         // [k]
  std::vector<int> count_;                   // [j] live replicas
  std::vector<int> active_count_;            // [j] live and not draining
  std::vector<int> in_system_;               // [k]
  std::vector<int> function_cap_;            // [k]
  std::vector<double> server_used_;          // [i] resource 0
  std::vector<std::vector<double>> demand_;  // [j][m]
  std::vector<double> rate_;                 // [j]
  std::vector<std::vector<StepPoint>> replica_trace_;

  void push(double t, EventType type, long a, int b) { events_.push({t, seq_++, type, a, b}); }

  int function_of(int replica) const { return spec_.allocations[replicas_[replica].allocation].function; }

  void trace(int j, double t) {
    auto& tr = replica_trace_[j];
    if (tr.back().time == t)
      tr.back().value = count_[j];
    else if (tr.back().value != count_[j])
      tr.push_back({t, count_[j]});
  }

  int add_replica(int j, double t) {
    Replica r;
    r.allocation = j;
    r.rate = rate_[j];
    replicas_.push_back(std::move(r));
    const int id = static_cast<int>(replicas_.size()) - 1;
    live_[spec_.allocations[j].function].push_back(id);
    ++count_[j];
    ++active_count_[j];
    server_used_[spec_.allocations[j].server] += demand_[j][0];
    trace(j, t);
    return id;
  }

  void remove_replica(int id, double t) {
    Replica& r = replicas_[id];
    const int j = r.allocation, k = function_of(id);
    r.alive = false;
    auto& live = live_[k];
    const auto it = std::find(live.begin(), live.end(), id);
    const std::size_t pos = static_cast<std::size_t>(it - live.begin());
    live.erase(it);
    if (pos < pointer_[k]) --pointer_[k];
    if (pointer_[k] >= live.size()) pointer_[k] = 0;
    --count_[j];
    if (!r.draining) --active_count_[j];
    server_used_[spec_.allocations[j].server] -= demand_[j][0];
    trace(j, t);
  }

  // autoscaler growth: the allocation of k with the fewest replicas whose
  // server still has room
  bool scale_up(int k, double t) {
    int total = 0;
    for (int j : allocs_of_[k]) total += count_[j];
    if (total >= auto_->max[k]) return false;
    int best = -1;
    for (int j : allocs_of_[k]) {
      const int i = spec_.allocations[j].server;
      if (server_used_[i] + demand_[j][0] > spec_.capacity[i][0] + 1e-9) continue;
      if (best < 0 || count_[j] < count_[best]) best = j;
    }
    if (best < 0) return false;
    add_replica(best, t);
    return true;
  }

  int total_replicas(int k) const {
    int total = 0;
    for (int j : allocs_of_[k]) total += count_[j];
    return total;
  }

  void apply_plan(int n, double t) {
    for (int j = 0; j < spec_.num_allocations(); ++j) {
      const int target = plan_->replicas[j][n];
      const int k = spec_.allocations[j].function;
      int active = active_count_[j];
      if (target > active) {
        for (int id : live_[k]) {
          if (active == target) break;
          Replica& r = replicas_[id];
          if (r.allocation == j && r.draining) {
            r.draining = false;
            ++active_count_[j];
            ++active;
          }
        }
        while (active < target) {
          add_replica(j, t);
          ++active;
        }
      } else if (target < active) {
        std::vector<int> cand;
        for (int id : live_[k])
          if (replicas_[id].allocation == j && !replicas_[id].draining) cand.push_back(id);
        std::stable_sort(cand.begin(), cand.end(),
                         [&](int a, int b) { return replicas_[a].in_system() < replicas_[b].in_system(); });
        for (int c = 0; c < active - target; ++c) {
          Replica& r = replicas_[cand[c]];
          r.draining = true;
          --active_count_[j];
          if (r.in_system() == 0) remove_replica(cand[c], t);
        }
      }
    }
  }

  bool admits(int id, int k) const {
    const Replica& r = replicas_[id];
    return r.alive && !r.draining && r.in_system() < spec_.concurrency_cap[k];
  }

  // replica id for a new request of function k, or -1
  int place(int k) {
    auto& live = live_[k];
    if (live.empty()) return -1;
    std::size_t& ptr = pointer_[k];
    if (ptr >= live.size()) ptr = 0;
    if (strict_) {
      const int id = live[ptr];
      ptr = (ptr + 1) % live.size();
      return admits(id, k) ? id : -1;
    }
    for (std::size_t step = 0; step < live.size(); ++step) {
      const std::size_t idx = (ptr + step) % live.size();
      if (admits(live[idx], k)) {
        ptr = (idx + 1) % live.size();
        return live[idx];
      }
    }
    return -1;
  }

  void arrive(int k, double t, std::optional<long> parent) {
    RequestRecord q;
    q.id = static_cast<long>(log_.size());
    q.function = k;
    q.arrival = t;
    q.parent = parent;
    const int id = in_system_[k] < function_cap_[k] ? place(k) : -1;
    if (id < 0) {
      q.outcome = Outcome::FailedOnArrival;
      log_.push_back(q);
      replica_of_.push_back(-1);
      if (auto_) scale_up(k, t);
      return;
    }
    q.allocation = replicas_[id].allocation;
    log_.push_back(q);
    replica_of_.push_back(id);
    ++in_system_[k];
    Replica& r = replicas_[id];
    if (r.serving < 0) {
      start_service(id, q.id, t);
    } else {
      r.queue.push_back(q.id);
      if (spec_.timeout[k]) push(t + *spec_.timeout[k], EventType::Timeout, q.id, id);
    }
  }

  void start_service(int id, long req, double t) {
    Replica& r = replicas_[id];
    r.serving = req;
    log_[req].start = t;
    push(t + services_.exponential(r.rate), EventType::Completion, req, id);
  }

  void on_arrival(double t) {
    const double pick = types_.uniform() * total_rate_;
    double acc = 0.0;
    int k = spec_.num_functions - 1;
    for (int i = 0; i < spec_.num_functions; ++i) {
      acc += spec_.arrival_rate[i];
      if (pick < acc) {
        k = i;
        break;
      }
    }
    while (spec_.arrival_rate[k] <= 0.0) --k;
    push(t + arrivals_.exponential(total_rate_), EventType::Arrival, 0, 0);
    arrive(k, t, std::nullopt);
  }

  void on_completion(double t, int id) {
    Replica& r = replicas_[id];
    const long req = r.serving;
    RequestRecord& q = log_[req];
    q.completion = t;
    q.outcome = Outcome::Completed;
    replica_of_[req] = -1;
    const int k = q.function, j = r.allocation;
    --in_system_[k];
    r.serving = -1;
    if (!r.queue.empty()) {
      const long next = r.queue.front();
      r.queue.pop_front();
      start_service(id, next, t);
    } else if (r.draining) {
      remove_replica(id, t);
    } else if (auto_ && total_replicas(k) > auto_->min[k]) {
      remove_replica(id, t);
    }
    // routing: one draw per completion
    const auto& p = spec_.routing[j];
    const double u = routing_.uniform();
    double acc = 0.0;
    for (int dest = 0; dest < spec_.num_functions; ++dest) {
      if (p[dest] <= 0.0) continue;
      acc += p[dest];
      if (u < acc) {
        arrive(dest, t, req);
        break;
      }
    }
  }

  void on_timeout(double t, long req) {
    RequestRecord& q = log_[req];
    if (q.start || q.outcome != Outcome::InSystemAtEnd) return;
    const int id = replica_of_[req];
    Replica& r = replicas_[id];
    r.queue.erase(std::find(r.queue.begin(), r.queue.end(), req));
    q.removal = t;
    q.outcome = Outcome::TimedOut;
    replica_of_[req] = -1;
    --in_system_[q.function];
    if (r.draining && r.in_system() == 0) remove_replica(id, t);
  }

  void on_idle_scan(double t) {
    for (int k = 0; k < spec_.num_functions; ++k) {
      if (total_replicas(k) <= auto_->min[k]) continue;
      for (int id : live_[k])
        if (replicas_[id].in_system() == 0) {
          remove_replica(id, t);
          break;
        }
    }
    push(t + auto_->idle_scan_period, EventType::IdleScan, 0, 0);
  }
};

}  // namespace detail

inline RunOutput run(const NetworkSpec& spec, const Policy& policy, const RunOptions& opt = {}) {
  return detail::Engine(spec, policy, opt).run();
}

// ---------------------------------------------------------------------------
// export

inline void write_log_csv(const RequestLog& log, std::ostream& os) {
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << *v;
  };
  os << "id,function,arrival,start,completion,removal,outcome,parent,allocation\n";
  os.precision(17);
  for (const auto& q : log) {
    os << q.id << ',' << q.function << ',' << q.arrival << ',';
    opt(q.start);
    os << ',';
    opt(q.completion);
    os << ',';
    opt(q.removal);
    os << ',' << to_string(q.outcome) << ',';
    if (q.parent) os << *q.parent;
    os << ',' << q.allocation << '\n';
  }
}

inline void to_json(nlohmann::json& j, const SimResult& r) {
  j = {{"holding_cost", r.holding_cost},
       {"avg_response_time", r.avg_response_time ? nlohmann::json(*r.avg_response_time) : nlohmann::json(nullptr)},
       {"arrivals", r.arrivals},
       {"completed", r.completed},
       {"failures", r.failures},
       {"timeouts", r.timeouts},
       {"in_system_at_end", r.in_system_at_end}};
}

}  // namespace fluidscale::sim
