#pragma once

// Experiment driver: scenario construction, fluid solve, replica planning
// and replicated simulation of both policies, aggregated per sweep point.

#include <fluidscale/fluid.hpp>
#include <fluidscale/model.hpp>
#include <fluidscale/planner.hpp>
#include <fluidscale/sim.hpp>

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fluidscale::harness {

enum class PolicyChoice { Both, Autoscaler, Fluid };

inline PolicyChoice parse_policy(const std::string& s) {
  if (s == "both") return PolicyChoice::Both;
  if (s == "auto" || s == "autoscaler") return PolicyChoice::Autoscaler;
  if (s == "fluid") return PolicyChoice::Fluid;
  throw std::invalid_argument("unknown policy '" + s + "' (expected both, auto or fluid)");
}

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"crisscross", "network-size", "timeout", "initial-replicas",
                                              "heterogeneity", "custom"};
  return names;
}

/// Sweep used when the config leaves it empty.
inline std::vector<double> default_sweep(const std::string& scenario) {
  if (scenario == "network-size") return {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  if (scenario == "timeout") return {2, 5, 10};
  if (scenario == "initial-replicas") return {5, 10, 15, 20, 30, 40, 50};
  if (scenario == "heterogeneity") return {0, 2, 5, 10};
  return {0};
}

struct ExperimentConfig {
  std::string scenario = "crisscross";
  std::vector<double> sweep;  // servers, timeout, initial replicas or rate spread
  int replications = 100;
  std::uint64_t seed = 1;
  int n_steps = 100;
  double horizon = 10.0;
  PolicyChoice policy = PolicyChoice::Both;
  bool strict_round_robin = false;

  CrissCrossParams crisscross;
  UniqueAllocationParams base;
  double timeout_server_capacity = 80.0;
  std::uint64_t heterogeneity_seed = 2024;
  std::optional<NetworkSpec> custom;
  int autoscaler_min = 1;
  double idle_scan_period = 0.1;
  DiscretizeOptions discretize;
  double horizon_tolerance = 1e-3;
  bool keep_first_run = false;
};

struct Kpi {
  double mean = 0.0;
  double se = 0.0;
  int samples = 0;
};

inline Kpi summarize(const std::vector<double>& v) {
  Kpi k;
  k.samples = static_cast<int>(v.size());
  if (v.empty()) return k;
  for (double x : v) k.mean += x;
  k.mean /= v.size();
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - k.mean) * (x - k.mean);
    k.se = std::sqrt(ss / (v.size() - 1) / v.size());
  }
  return k;
}

struct ReportRow {
  std::string scenario;
  double point = 0.0;
  std::string policy;  // "autoscaler" or "fluid"
  int functions = 0;
  double horizon = 0.0;
  std::optional<double> lp_objective;
  std::string lp_status;
  Kpi holding_cost, response_time, failures, timeouts, arrivals;
  std::vector<double> holding_samples, response_samples, failure_samples;  // per replication, seed order
  double solve_seconds = 0.0;
  double sim_seconds = 0.0;
  std::string note;
  std::optional<sim::SimResult> first_run;
  std::optional<ReplicaPlan> plan;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
};

struct RunInfo {
  std::string scenario;
  double point;
  std::string policy;
  std::uint64_t seed;
};

using RunCallback = std::function<void(const RunInfo&, const NetworkSpec&, const sim::RunOutput&)>;

/// Network for one sweep point, before any horizon search.
inline NetworkSpec scenario_spec(const ExperimentConfig& cfg, double point) {
  const auto& s = cfg.scenario;
  if (s == "crisscross") {
    auto p = cfg.crisscross;
    p.horizon = cfg.horizon;
    return build_crisscross(p);
  }
  auto base = cfg.base;
  base.horizon = cfg.horizon;
  if (s == "network-size") {
    base.num_servers = static_cast<int>(std::lround(point));
    return build_unique_allocation(base);
  }
  if (s == "timeout") {
    base.server_capacity = cfg.timeout_server_capacity;
    base.timeout = point;
    return build_unique_allocation(base);
  }
  if (s == "initial-replicas") return build_unique_allocation(base);
  if (s == "heterogeneity") return build_heterogeneous(build_unique_allocation(base), point, cfg.heterogeneity_seed);
  if (s == "custom") {
    if (!cfg.custom) throw std::invalid_argument("custom scenario needs a network spec");
    auto spec = *cfg.custom;
    spec.horizon = cfg.horizon;
    return spec;
  }
  throw std::invalid_argument("unknown scenario '" + s + "'");
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void simulate(ReportRow& row, const ExperimentConfig& cfg, const NetworkSpec& spec, const sim::Policy& policy,
                     double horizon, const RunCallback& on_run) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> timeouts, arrivals;
  for (int r = 0; r < cfg.replications; ++r) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(r);
    auto out = sim::run(spec, policy, {horizon, seed, cfg.strict_round_robin});
    row.holding_samples.push_back(out.result.holding_cost);
    if (out.result.avg_response_time) row.response_samples.push_back(*out.result.avg_response_time);
    row.failure_samples.push_back(static_cast<double>(out.result.failures));
    timeouts.push_back(static_cast<double>(out.result.timeouts));
    arrivals.push_back(static_cast<double>(out.result.arrivals));
    if (on_run) on_run({row.scenario, row.point, row.policy, seed}, spec, out);
    if (r == 0 && cfg.keep_first_run) row.first_run = std::move(out.result);
  }
  row.holding_cost = summarize(row.holding_samples);
  row.response_time = summarize(row.response_samples);
  row.failures = summarize(row.failure_samples);
  row.timeouts = summarize(timeouts);
  row.arrivals = summarize(arrivals);
  row.sim_seconds = seconds_since(t0);
}

}  // namespace detail

inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunCallback& on_run = {}) {
  if (cfg.replications < 1) throw std::invalid_argument("replications must be at least 1");
  const auto sweep = cfg.sweep.empty() ? default_sweep(cfg.scenario) : cfg.sweep;
  const bool run_auto = cfg.policy != PolicyChoice::Fluid, run_fluid = cfg.policy != PolicyChoice::Autoscaler;
  ExperimentReport report;

  for (std::size_t idx = 0; idx < sweep.size(); ++idx) {
    const double point = sweep[idx];
    NetworkSpec spec = scenario_spec(cfg, point);
    double horizon = spec.horizon;
    std::optional<FluidSolution> fluid;
    std::string note, status;
    double solve_seconds = 0.0;

    // the timeout scenario runs both policies only over the feasible horizon
    const bool need_fluid = run_fluid || cfg.scenario == "timeout";
    const bool fluid_row = run_fluid && (cfg.scenario != "initial-replicas" || idx == 0);
    if (need_fluid && (cfg.scenario != "initial-replicas" || idx == 0)) {
      const auto t0 = std::chrono::steady_clock::now();
      if (cfg.scenario == "timeout") {
        auto h = max_feasible_horizon(spec, cfg.n_steps, cfg.horizon_tolerance, cfg.discretize);
        horizon = h.horizon;
        if (h.solution) fluid = std::move(h.solution);
        if (horizon <= 0.0) note = "no feasible horizon";
      } else {
        fluid = solve_fluid(discretize(spec, cfg.n_steps, cfg.discretize));
      }
      solve_seconds = detail::seconds_since(t0);
      status = fluid ? lp::to_string(fluid->status) : "infeasible";
      if (fluid && !fluid->optimal() && note.empty()) {
        note = lp::to_string(fluid->status);
        if (!fluid->violations.empty()) note += ": " + fluid->violations.front();
      }
    }
    if (horizon <= 0.0) {
      ReportRow row;
      row.scenario = cfg.scenario;
      row.point = point;
      row.policy = "none";
      row.functions = spec.num_functions;
      row.lp_status = status;
      row.note = note;
      report.rows.push_back(std::move(row));
      continue;
    }
    NetworkSpec run_spec = spec;
    run_spec.horizon = horizon;

    auto make_row = [&](const char* policy) {
      ReportRow row;
      row.scenario = cfg.scenario;
      row.point = point;
      row.policy = policy;
      row.functions = spec.num_functions;
      row.horizon = horizon;
      row.lp_status = status;
      row.solve_seconds = solve_seconds;
      if (fluid && fluid->optimal()) row.lp_objective = fluid->objective;
      return row;
    };

    if (run_auto) {
      auto row = make_row("autoscaler");
      auto policy = sim::default_autoscaler(run_spec, cfg.autoscaler_min);
      policy.idle_scan_period = cfg.idle_scan_period;
      if (cfg.scenario == "initial-replicas")
        for (int k = 0; k < run_spec.num_functions; ++k)
          policy.initial[k] = std::clamp(static_cast<int>(std::lround(point)), policy.min[k], policy.max[k]);
      detail::simulate(row, cfg, run_spec, policy, horizon, on_run);
      report.rows.push_back(std::move(row));
    }
    if (fluid_row) {
      auto row = make_row("fluid");
      if (fluid && fluid->optimal()) {
        auto plan = plan_ceiling(*fluid);
        detail::simulate(row, cfg, run_spec, sim::FluidSchedulePolicy{plan}, horizon, on_run);
        row.plan = std::move(plan);
      } else {
        row.note = note.empty() ? "fluid program not solved" : note;
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// output

inline void write_report_csv(const ExperimentReport& report, std::ostream& os) {
  os << "scenario,point,policy,functions,horizon,lp_status,lp_objective,replications,"
        "holding_cost_mean,holding_cost_se,response_time_mean,response_time_se,failures_mean,failures_se,"
        "timeouts_mean,timeouts_se,arrivals_mean,solve_seconds,sim_seconds,note\n";
  os.precision(10);
  for (const auto& r : report.rows) {
    os << r.scenario << ',' << r.point << ',' << r.policy << ',' << r.functions << ',' << r.horizon << ','
       << r.lp_status << ',';
    if (r.lp_objective) os << *r.lp_objective;
    os << ',' << r.holding_cost.samples << ',' << r.holding_cost.mean << ',' << r.holding_cost.se << ',';
    if (r.response_time.samples > 0) os << r.response_time.mean << ',' << r.response_time.se;
    else os << ',';
    os << ',' << r.failures.mean << ',' << r.failures.se << ',' << r.timeouts.mean << ',' << r.timeouts.se << ','
       << r.arrivals.mean << ',' << r.solve_seconds << ',' << r.sim_seconds << ',';
    std::string note = r.note;
    for (char& c : note)
      if (c == ',' || c == '\n') c = ';';
    os << note << '\n';
  }
}

/// One cumulative-diagram CSV per function and one replica-count CSV per
/// run; returns the paths written.
inline std::vector<std::filesystem::path> export_diagrams(const sim::SimResult& result, int num_functions,
                                                          const std::filesystem::path& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (int k = 0; k < num_functions; ++k) {
    auto path = dir / (prefix + "_cumulative_f" + std::to_string(k) + ".csv");
    std::ofstream os(path);
    os << "time,arrivals,completions,timeouts,in_system\n";
    os.precision(12);
    if (k < static_cast<int>(result.cumulative.size()))
      for (const auto& p : result.cumulative[k])
        os << p.time << ',' << p.arrivals << ',' << p.completions << ',' << p.timeouts << ',' << p.in_system << '\n';
    written.push_back(path);
  }
  auto path = dir / (prefix + "_replicas.csv");
  std::ofstream os(path);
  os << "allocation,time,replicas\n";
  os.precision(12);
  for (std::size_t j = 0; j < result.replicas.size(); ++j)
    for (const auto& s : result.replicas[j]) os << j << ',' << s.time << ',' << s.value << '\n';
  written.push_back(path);
  return written;
}

// ---------------------------------------------------------------------------
// config file

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.scenario = j.value("experiment", c.scenario);
  if (j.contains("sweep")) j.at("sweep").get_to(c.sweep);
  c.replications = j.value("replications", c.replications);
  c.seed = j.value("seed", c.seed);
  c.n_steps = j.value("steps", c.n_steps);
  c.horizon = j.value("horizon", c.horizon);
  if (j.contains("policy")) c.policy = parse_policy(j.at("policy").get<std::string>());
  c.strict_round_robin = j.value("strict_rr", c.strict_round_robin);
  c.autoscaler_min = j.value("autoscaler_min", c.autoscaler_min);
  c.idle_scan_period = j.value("idle_scan_period", c.idle_scan_period);
  c.timeout_server_capacity = j.value("timeout_server_capacity", c.timeout_server_capacity);
  c.heterogeneity_seed = j.value("heterogeneity_seed", c.heterogeneity_seed);
  c.discretize.balance_weight = j.value("balance_weight", c.discretize.balance_weight);
  if (j.contains("crisscross")) {
    const auto& x = j.at("crisscross");
    auto& p = c.crisscross;
    p.lambda1 = x.value("lambda1", p.lambda1);
    p.lambda2 = x.value("lambda2", p.lambda2);
    p.mu1 = x.value("mu1", p.mu1);
    p.mu2 = x.value("mu2", p.mu2);
    p.mu3 = x.value("mu3", p.mu3);
    p.b1 = x.value("b1", p.b1);
    p.b2 = x.value("b2", p.b2);
    p.alpha = x.value("alpha", p.alpha);
    p.concurrency = x.value("concurrency", p.concurrency);
  }
  if (j.contains("base")) {
    const auto& x = j.at("base");
    auto& p = c.base;
    p.num_servers = x.value("num_servers", p.num_servers);
    p.funcs_per_server = x.value("funcs_per_server", p.funcs_per_server);
    p.lambda = x.value("lambda", p.lambda);
    p.mu = x.value("mu", p.mu);
    p.server_capacity = x.value("server_capacity", p.server_capacity);
    p.alpha = x.value("alpha", p.alpha);
    p.concurrency = x.value("concurrency", p.concurrency);
  }
  if (j.contains("spec")) c.custom = j.at("spec").get<NetworkSpec>();
  return c;
}

}  // namespace fluidscale::harness
