#pragma once

// Network data model for multi-class queueing networks of serverless
// functions: functions (buffers), servers, allocations (flows), routing,
// piecewise-linear rate functions, capacities and costs.
//
// All indices are 0-based.  Allocation j drains buffer `function` on server
// `server`.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace fluidscale {

struct Allocation {
  int function = 0;
  int server = 0;
};

/// One linear piece of a concave rate function: `slope` fluid per unit time
/// per resource unit, valid over `width` resource units.
struct RateSegment {
  double slope = 0.0;
  double width = 0.0;
};

struct NetworkSpec {
  int num_functions = 0;
  int num_servers = 0;
  int num_resources = 1;
  std::vector<Allocation> allocations;
  std::vector<std::vector<double>> routing;  // [j][k]
  std::vector<double> arrival_rate;          // [k]
  std::vector<double> initial_load;          // [k]
  std::vector<std::vector<std::vector<RateSegment>>> rate_segments;  // [j][m][l]
  std::vector<std::vector<double>> capacity;                         // [i][m]
  std::vector<double> holding_cost;                                  // [k]
  std::vector<std::optional<double>> timeout;                        // [k]
  std::vector<int> concurrency_cap;                                  // [k]
  std::vector<std::vector<double>> replica_demand_lb;                // [j][m]
  std::vector<double> control_lower_bound;                           // [j]
  double horizon = 10.0;

  int num_allocations() const { return static_cast<int>(allocations.size()); }

  /// Rate of allocation j when given `units` of resource m; concave and piecewise linear.
  double rate_function(int j, int m, double units) const {
    double rate = 0.0;
    for (const auto& seg : rate_segments[j][m]) {
      const double take = std::min(units, seg.width);
      if (take <= 0.0) break;
      rate += seg.slope * take;
      units -= take;
    }
    return rate;
  }

  /// Service rate of one replica of allocation j holding `demand` per resource.
  double replica_rate(int j, const std::vector<double>& demand) const {
    double r = std::numeric_limits<double>::infinity();
    for (int m = 0; m < num_resources; ++m) r = std::min(r, rate_function(j, m, demand[m]));
    return r;
  }

  double total_width(int j, int m) const {
    double w = 0.0;
    for (const auto& seg : rate_segments[j][m]) w += seg.width;
    return w;
  }

  bool has_endogenous_inflow(int k) const {
    for (int j = 0; j < num_allocations(); ++j)
      if (allocations[j].function != k && routing[j][k] > 0.0) return true;
    return false;
  }
};

// ---------------------------------------------------------------------------
// validation

enum class ViolationCode {
  DimensionMismatch,
  EmptyNetwork,
  FunctionOutOfRange,
  ServerOutOfRange,
  DuplicateBufferServer,
  RoutingMassExceedsOne,
  NegativeRouting,
  SelfRouting,
  NegativeArrivalRate,
  NegativeInitialLoad,
  NonPositiveSlope,
  NonPositiveWidth,
  NonConcaveSegments,
  MissingSegments,
  NonPositiveCapacity,
  NonPositiveCost,
  NonPositiveTimeout,
  NonPositiveConcurrency,
  NegativeDemandBound,
  NegativeControlBound,
  ControlBoundExceedsWidth,
  ControlBoundExceedsCapacity,
  NonPositiveHorizon,
};

inline const char* to_string(ViolationCode c) {
  switch (c) {
    case ViolationCode::DimensionMismatch: return "dimension_mismatch";
    case ViolationCode::EmptyNetwork: return "empty_network";
    case ViolationCode::FunctionOutOfRange: return "function_out_of_range";
    case ViolationCode::ServerOutOfRange: return "server_out_of_range";
    case ViolationCode::DuplicateBufferServer: return "duplicate_buffer_server";
    case ViolationCode::RoutingMassExceedsOne: return "routing_mass_exceeds_one";
    case ViolationCode::NegativeRouting: return "negative_routing";
    case ViolationCode::SelfRouting: return "self_routing";
    case ViolationCode::NegativeArrivalRate: return "negative_arrival_rate";
    case ViolationCode::NegativeInitialLoad: return "negative_initial_load";
    case ViolationCode::NonPositiveSlope: return "non_positive_slope";
    case ViolationCode::NonPositiveWidth: return "non_positive_width";
    case ViolationCode::NonConcaveSegments: return "non_concave_segments";
    case ViolationCode::MissingSegments: return "missing_segments";
    case ViolationCode::NonPositiveCapacity: return "non_positive_capacity";
    case ViolationCode::NonPositiveCost: return "non_positive_cost";
    case ViolationCode::NonPositiveTimeout: return "non_positive_timeout";
    case ViolationCode::NonPositiveConcurrency: return "non_positive_concurrency";
    case ViolationCode::NegativeDemandBound: return "negative_demand_bound";
    case ViolationCode::NegativeControlBound: return "negative_control_bound";
    case ViolationCode::ControlBoundExceedsWidth: return "control_bound_exceeds_width";
    case ViolationCode::ControlBoundExceedsCapacity: return "control_bound_exceeds_capacity";
    case ViolationCode::NonPositiveHorizon: return "non_positive_horizon";
  }
  return "unknown";
}

struct Violation {
  ViolationCode code;
  std::string detail;
};

using ValidationReport = std::vector<Violation>;

inline bool has_violation(const ValidationReport& r, ViolationCode c) {
  return std::any_of(r.begin(), r.end(), [c](const Violation& v) { return v.code == c; });
}

inline ValidationReport validate(const NetworkSpec& s) {
  ValidationReport out;
  auto add = [&](ViolationCode c, std::string d) { out.push_back({c, std::move(d)}); };
  const int K = s.num_functions, I = s.num_servers, M = s.num_resources, J = s.num_allocations();
  if (K <= 0 || I <= 0 || M <= 0 || J <= 0) {
    add(ViolationCode::EmptyNetwork, "counts must be positive");
    return out;
  }
  auto sized = [&](std::size_t got, int want, const char* what) {
    if (got != static_cast<std::size_t>(want)) {
      add(ViolationCode::DimensionMismatch, std::string(what) + " has " + std::to_string(got) + " entries, expected " +
                                                std::to_string(want));
      return false;
    }
    return true;
  };
  bool ok = sized(s.routing.size(), J, "routing") & sized(s.arrival_rate.size(), K, "arrival_rate") &
            sized(s.initial_load.size(), K, "initial_load") & sized(s.rate_segments.size(), J, "rate_segments") &
            sized(s.capacity.size(), I, "capacity") & sized(s.holding_cost.size(), K, "holding_cost") &
            sized(s.timeout.size(), K, "timeout") & sized(s.concurrency_cap.size(), K, "concurrency_cap") &
            sized(s.replica_demand_lb.size(), J, "replica_demand_lb") &
            sized(s.control_lower_bound.size(), J, "control_lower_bound");
  if (ok) {
    for (int j = 0; j < J; ++j) {
      ok &= sized(s.routing[j].size(), K, "routing row");
      ok &= sized(s.rate_segments[j].size(), M, "rate_segments row");
      ok &= sized(s.replica_demand_lb[j].size(), M, "replica_demand_lb row");
    }
    for (int i = 0; i < I; ++i) ok &= sized(s.capacity[i].size(), M, "capacity row");
  }
  if (!ok) return out;

  for (int j = 0; j < J; ++j) {
    const auto& a = s.allocations[j];
    const std::string tag = "allocation " + std::to_string(j);
    if (a.function < 0 || a.function >= K) add(ViolationCode::FunctionOutOfRange, tag);
    if (a.server < 0 || a.server >= I) add(ViolationCode::ServerOutOfRange, tag);
    for (int j2 = 0; j2 < j; ++j2)
      if (s.allocations[j2].function == a.function && s.allocations[j2].server == a.server)
        add(ViolationCode::DuplicateBufferServer, tag + " repeats allocation " + std::to_string(j2));
    double mass = 0.0;
    for (int k = 0; k < K; ++k) {
      const double p = s.routing[j][k];
      if (p < 0.0 || !std::isfinite(p)) add(ViolationCode::NegativeRouting, tag);
      if (k == a.function && p > 0.0) add(ViolationCode::SelfRouting, tag);
      mass += p;
    }
    if (mass > 1.0 + 1e-12) add(ViolationCode::RoutingMassExceedsOne, tag + " routes mass " + std::to_string(mass));
    for (int m = 0; m < M; ++m) {
      const auto& segs = s.rate_segments[j][m];
      if (segs.empty()) add(ViolationCode::MissingSegments, tag);
      for (std::size_t l = 0; l < segs.size(); ++l) {
        if (!(segs[l].slope > 0.0)) add(ViolationCode::NonPositiveSlope, tag);
        if (!(segs[l].width > 0.0)) add(ViolationCode::NonPositiveWidth, tag);
        if (l > 0 && segs[l].slope > segs[l - 1].slope) add(ViolationCode::NonConcaveSegments, tag);
      }
      if (s.replica_demand_lb[j][m] < 0.0) add(ViolationCode::NegativeDemandBound, tag);
    }
    const double lb = s.control_lower_bound[j];
    if (lb < 0.0) add(ViolationCode::NegativeControlBound, tag);
    if (lb > s.total_width(j, 0) + 1e-12) add(ViolationCode::ControlBoundExceedsWidth, tag);
  }
  for (int k = 0; k < K; ++k) {
    const std::string tag = "function " + std::to_string(k);
    if (!(s.arrival_rate[k] >= 0.0)) add(ViolationCode::NegativeArrivalRate, tag);
    if (!(s.initial_load[k] >= 0.0)) add(ViolationCode::NegativeInitialLoad, tag);
    if (!(s.holding_cost[k] > 0.0)) add(ViolationCode::NonPositiveCost, tag);
    if (s.timeout[k] && !(*s.timeout[k] > 0.0)) add(ViolationCode::NonPositiveTimeout, tag);
    if (s.concurrency_cap[k] <= 0) add(ViolationCode::NonPositiveConcurrency, tag);
  }
  for (int i = 0; i < I; ++i) {
    double need = 0.0;
    for (int m = 0; m < M; ++m)
      if (!(s.capacity[i][m] > 0.0)) add(ViolationCode::NonPositiveCapacity, "server " + std::to_string(i));
    for (int j = 0; j < J; ++j)
      if (s.allocations[j].server == i) need += s.control_lower_bound[j];
    if (need > s.capacity[i][0] + 1e-9)
      add(ViolationCode::ControlBoundExceedsCapacity, "server " + std::to_string(i));
  }
  if (!(s.horizon > 0.0)) add(ViolationCode::NonPositiveHorizon, "horizon");
  return out;
}

inline void require_valid(const NetworkSpec& s) {
  auto report = validate(s);
  if (!report.empty())
    throw std::invalid_argument(std::string("invalid network: ") + to_string(report.front().code) + " (" +
                                report.front().detail + ")");
}

// ---------------------------------------------------------------------------
// trajectories

/// Piecewise-constant controls over breakpoints t[0] = 0 < ... < t[N] = T.
struct ControlTrajectory {
  std::vector<double> breakpoints;
  std::vector<std::vector<std::vector<double>>> eta;  // [j][m][n]
  std::vector<std::vector<double>> rate;              // u[j][n]

  int num_intervals() const { return breakpoints.empty() ? 0 : static_cast<int>(breakpoints.size()) - 1; }
  double length(int n) const { return breakpoints[n + 1] - breakpoints[n]; }

  /// Index of the interval containing t (right-open, last interval closed).
  int interval_at(double t) const {
    auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
    int n = static_cast<int>(it - breakpoints.begin()) - 1;
    return std::clamp(n, 0, num_intervals() - 1);
  }
};

struct NegativeExcursion {
  int function;
  double begin;
  double end;
};

/// Piecewise-linear buffer levels, exact between control breakpoints.
struct BufferTrajectory {
  std::vector<double> breakpoints;
  std::vector<std::vector<double>> level;  // x[k][n] at breakpoints
  std::vector<NegativeExcursion> negative;

  double value(int k, double t) const {
    const auto& x = level[k];
    if (t <= breakpoints.front()) return x.front();
    if (t >= breakpoints.back()) return x.back();
    auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
    const std::size_t n = static_cast<std::size_t>(it - breakpoints.begin()) - 1;
    const double w = (t - breakpoints[n]) / (breakpoints[n + 1] - breakpoints[n]);
    return x[n] + w * (x[n + 1] - x[n]);
  }

  /// Exact integral of c_k x_k(t) over the horizon.
  double weighted_integral(const std::vector<double>& cost) const {
    double total = 0.0;
    for (std::size_t k = 0; k < level.size(); ++k)
      for (std::size_t n = 0; n + 1 < breakpoints.size(); ++n)
        total += cost[k] * 0.5 * (level[k][n] + level[k][n + 1]) * (breakpoints[n + 1] - breakpoints[n]);
    return total;
  }
};

/// Net drift of each buffer during interval n of `ctrl`.
inline std::vector<double> buffer_drift(const NetworkSpec& s, const ControlTrajectory& ctrl, int n) {
  std::vector<double> drift(s.arrival_rate);
  for (int j = 0; j < s.num_allocations(); ++j) {
    const double u = ctrl.rate[j][n];
    const int own = s.allocations[j].function;
    drift[own] -= u;
    for (int k = 0; k < s.num_functions; ++k)
      if (k != own) drift[k] += s.routing[j][k] * u;
  }
  return drift;
}

/// Integrates the fluid dynamics exactly for piecewise-constant controls.
/// Negative levels are reported, not clamped.
inline BufferTrajectory evaluate_buffers(const NetworkSpec& s, const ControlTrajectory& ctrl) {
  const int J = s.num_allocations(), K = s.num_functions, N = ctrl.num_intervals();
  if (N <= 0 || static_cast<int>(ctrl.rate.size()) != J || static_cast<int>(ctrl.eta.size()) != J)
    throw std::invalid_argument("evaluate_buffers: control dimensions do not match network");
  for (int j = 0; j < J; ++j)
    if (static_cast<int>(ctrl.rate[j].size()) != N)
      throw std::invalid_argument("evaluate_buffers: control dimensions do not match network");
  for (int n = 0; n < N; ++n)
    if (!(ctrl.breakpoints[n + 1] > ctrl.breakpoints[n]))
      throw std::invalid_argument("evaluate_buffers: breakpoints must be strictly increasing");

  BufferTrajectory b;
  b.breakpoints = ctrl.breakpoints;
  b.level.assign(K, std::vector<double>(N + 1, 0.0));
  for (int k = 0; k < K; ++k) b.level[k][0] = s.initial_load[k];
  for (int n = 0; n < N; ++n) {
    const auto drift = buffer_drift(s, ctrl, n);
    const double dt = ctrl.length(n);
    for (int k = 0; k < K; ++k) b.level[k][n + 1] = b.level[k][n] + drift[k] * dt;
  }
  for (int k = 0; k < K; ++k) {
    const auto& x = b.level[k];
    for (int n = 0; n < N; ++n) {
      const double t0 = b.breakpoints[n], t1 = b.breakpoints[n + 1];
      const double a = x[n], c = x[n + 1];
      if (a >= 0.0 && c >= 0.0) continue;
      double begin = t0, end = t1;
      if (a >= 0.0) begin = t0 + (t1 - t0) * a / (a - c);
      if (c >= 0.0) end = t0 + (t1 - t0) * a / (a - c);
      if (!b.negative.empty() && b.negative.back().function == k && b.negative.back().end == begin)
        b.negative.back().end = end;
      else
        b.negative.push_back({k, begin, end});
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// scenario builders

struct CrissCrossParams {
  double lambda1 = 8.0;
  double lambda2 = 8.0;
  double mu1 = 1.0;
  double mu2 = 1.0;
  double mu3 = 1.0;
  double b1 = 20.0;
  double b2 = 12.0;
  double alpha = 20.0;  // initial load of functions 1 and 2
  double horizon = 10.0;
  int concurrency = 5;
};

/// Two servers, three functions; function 2's output feeds function 3.
inline NetworkSpec build_crisscross(const CrissCrossParams& p) {
  for (double v : {p.lambda1, p.lambda2, p.mu1, p.mu2, p.mu3, p.b1, p.b2, p.horizon})
    if (!(v > 0.0)) throw std::invalid_argument("build_crisscross: rates, capacities and horizon must be positive");
  if (p.alpha < 0.0 || p.concurrency <= 0) throw std::invalid_argument("build_crisscross: invalid initial load");
  NetworkSpec s;
  s.num_functions = 3;
  s.num_servers = 2;
  s.num_resources = 1;
  s.allocations = {{0, 0}, {1, 0}, {2, 1}};
  s.routing = {{0, 0, 0}, {0, 0, 1}, {0, 0, 0}};
  s.arrival_rate = {p.lambda1, p.lambda2, 0.0};
  s.initial_load = {p.alpha, p.alpha, 0.0};
  s.rate_segments = {{{{p.mu1, p.b1}}}, {{{p.mu2, p.b1}}}, {{{p.mu3, p.b2}}}};
  s.capacity = {{p.b1}, {p.b2}};
  s.holding_cost = {1.0, 1.0, 1.0};
  s.timeout = {std::nullopt, std::nullopt, std::nullopt};
  s.concurrency_cap = {p.concurrency, p.concurrency, p.concurrency};
  s.replica_demand_lb = {{1.0}, {1.0}, {1.0}};
  s.control_lower_bound = {1.0, 1.0, 1.0};
  s.horizon = p.horizon;
  return s;
}

struct UniqueAllocationParams {
  int num_servers = 10;
  int funcs_per_server = 5;
  double lambda = 100.0;
  double mu = 2.1;  // per resource unit; mean service time 1/mu on one unit
  double server_capacity = 250.0;
  double alpha = 100.0;
  int concurrency = 100;
  double horizon = 10.0;
  double holding_cost = 1.0;
  std::optional<double> timeout;
};

/// Every function is served by exactly one server; no routing.
inline NetworkSpec build_unique_allocation(const UniqueAllocationParams& p) {
  if (p.num_servers < 1 || p.funcs_per_server < 1)
    throw std::invalid_argument("build_unique_allocation: counts must be at least 1");
  NetworkSpec s;
  const int K = p.num_servers * p.funcs_per_server;
  s.num_functions = K;
  s.num_servers = p.num_servers;
  s.num_resources = 1;
  for (int k = 0; k < K; ++k) s.allocations.push_back({k, k / p.funcs_per_server});
  s.routing.assign(K, std::vector<double>(K, 0.0));
  s.arrival_rate.assign(K, p.lambda);
  s.initial_load.assign(K, p.alpha);
  s.rate_segments.assign(K, {{{p.mu, p.server_capacity}}});
  s.capacity.assign(p.num_servers, {p.server_capacity});
  s.holding_cost.assign(K, p.holding_cost);
  s.timeout.assign(K, p.timeout);
  s.concurrency_cap.assign(K, p.concurrency);
  s.replica_demand_lb.assign(K, {1.0});
  s.control_lower_bound.assign(K, std::min(1.0, p.server_capacity / p.funcs_per_server));
  s.horizon = p.horizon;
  return s;
}

namespace detail {
// uniform double in [0, 1) with the top 53 bits of a 64-bit draw
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
}  // namespace detail

/// Resamples per-function arrival and processing rates.  Each draw is
/// uniform on [100, 100 + 2.1 * spread] and is applied relative to the base
/// value (draw / 100), so a base with lambda = 100, mu = 2.1 sees lambda in
/// that range and mu in [2.1, 2.1 * (1 + 0.021 * spread)].
inline NetworkSpec build_heterogeneous(const NetworkSpec& base, double spread, std::uint64_t seed) {
  if (spread < 0.0) throw std::invalid_argument("build_heterogeneous: spread must be non-negative");
  NetworkSpec s = base;
  if (spread == 0.0) return s;
  std::mt19937_64 rng(seed);
  auto draw = [&] { return 100.0 + 2.1 * spread * detail::unit_uniform(rng); };
  for (int k = 0; k < s.num_functions; ++k) {
    const double arrival_factor = draw() / 100.0;
    const double service_factor = draw() / 100.0;
    s.arrival_rate[k] = base.arrival_rate[k] * arrival_factor;
    for (int j = 0; j < s.num_allocations(); ++j)
      if (s.allocations[j].function == k)
        for (auto& per_resource : s.rate_segments[j])
          for (auto& seg : per_resource) seg.slope *= service_factor;
  }
  return s;
}

// ---------------------------------------------------------------------------
// JSON

inline constexpr const char* kSpecVersion = "fluidscale-spec/1";

inline void to_json(nlohmann::json& j, const RateSegment& s) { j = {{"slope", s.slope}, {"width", s.width}}; }
inline void from_json(const nlohmann::json& j, RateSegment& s) {
  j.at("slope").get_to(s.slope);
  j.at("width").get_to(s.width);
}
inline void to_json(nlohmann::json& j, const Allocation& a) { j = {{"function", a.function}, {"server", a.server}}; }
inline void from_json(const nlohmann::json& j, Allocation& a) {
  j.at("function").get_to(a.function);
  j.at("server").get_to(a.server);
}

inline void to_json(nlohmann::json& j, const NetworkSpec& s) {
  nlohmann::json timeouts = nlohmann::json::array();
  for (const auto& t : s.timeout) timeouts.push_back(t ? nlohmann::json(*t) : nlohmann::json(nullptr));
  j = {{"version", kSpecVersion},
       {"num_functions", s.num_functions},
       {"num_servers", s.num_servers},
       {"num_resources", s.num_resources},
       {"allocations", s.allocations},
       {"routing", s.routing},
       {"arrival_rate", s.arrival_rate},
       {"initial_load", s.initial_load},
       {"rate_segments", s.rate_segments},
       {"capacity", s.capacity},
       {"holding_cost", s.holding_cost},
       {"timeout", timeouts},
       {"concurrency_cap", s.concurrency_cap},
       {"replica_demand_lb", s.replica_demand_lb},
       {"control_lower_bound", s.control_lower_bound},
       {"horizon", s.horizon}};
}

inline void from_json(const nlohmann::json& j, NetworkSpec& s) {
  if (j.value("version", std::string{}) != kSpecVersion)
    throw std::invalid_argument(std::string("network spec: expected version ") + kSpecVersion);
  j.at("num_functions").get_to(s.num_functions);
  j.at("num_servers").get_to(s.num_servers);
  s.num_resources = j.value("num_resources", 1);
  j.at("allocations").get_to(s.allocations);
  j.at("routing").get_to(s.routing);
  j.at("arrival_rate").get_to(s.arrival_rate);
  j.at("initial_load").get_to(s.initial_load);
  j.at("rate_segments").get_to(s.rate_segments);
  j.at("capacity").get_to(s.capacity);
  j.at("holding_cost").get_to(s.holding_cost);
  s.timeout.clear();
  for (const auto& t : j.at("timeout")) s.timeout.push_back(t.is_null() ? std::nullopt : std::optional<double>(t.get<double>()));
  j.at("concurrency_cap").get_to(s.concurrency_cap);
  j.at("replica_demand_lb").get_to(s.replica_demand_lb);
  j.at("control_lower_bound").get_to(s.control_lower_bound);
  j.at("horizon").get_to(s.horizon);
}

inline void to_json(nlohmann::json& j, const ControlTrajectory& c) {
  j = {{"breakpoints", c.breakpoints}, {"eta", c.eta}, {"rate", c.rate}};
}
inline void from_json(const nlohmann::json& j, ControlTrajectory& c) {
  j.at("breakpoints").get_to(c.breakpoints);
  j.at("eta").get_to(c.eta);
  j.at("rate").get_to(c.rate);
}

}  // namespace fluidscale
