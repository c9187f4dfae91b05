#pragma once

// Integer replica plans from fluid controls: r[j][n] replicas of allocation
// j in interval n, each holding d[j][m] units of resource m, such that
// d * r covers the fluid allocation eta.

#include <fluidscale/fluid.hpp>
#include <fluidscale/model.hpp>

#include <json.hpp>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fluidscale {

struct ReplicaPlan {
  std::vector<double> breakpoints;
  std::vector<std::vector<int>> replicas;   // [j][n]
  std::vector<std::vector<double>> demand;  // [j][m]
  std::vector<double> weights;              // [m]

  int num_intervals() const { return breakpoints.empty() ? 0 : static_cast<int>(breakpoints.size()) - 1; }
  double length(int n) const { return breakpoints[n + 1] - breakpoints[n]; }

  /// Weighted resource-time of the plan: sum_n tau_n sum_j sum_m w_m d r.
  double cost() const {
    double total = 0.0;
    for (std::size_t j = 0; j < replicas.size(); ++j)
      for (int n = 0; n < num_intervals(); ++n)
        for (std::size_t m = 0; m < weights.size(); ++m) total += length(n) * weights[m] * demand[j][m] * replicas[j][n];
    return total;
  }
};

/// Raised when no scanned demand keeps a server within capacity.
class PlanError : public std::runtime_error {
 public:
  PlanError(int server, int resource, int interval, const std::string& what)
      : std::runtime_error(what), server_(server), resource_(resource), interval_(interval) {}
  int server() const { return server_; }
  int resource() const { return resource_; }
  int interval() const { return interval_; }

 private:
  int server_, resource_, interval_;
};

inline constexpr double kCeilGuard = 1e-9;

inline int guarded_ceil(double v) { return v <= kCeilGuard ? 0 : static_cast<int>(std::ceil(v - kCeilGuard)); }

/// One unit of the single resource per replica; r = ceil(eta).  Rounding
/// may exceed a server's capacity by less than one unit per allocation.
inline ReplicaPlan plan_ceiling(const ControlTrajectory& ctrl) {
  for (const auto& per_flow : ctrl.eta)
    if (per_flow.size() != 1) throw std::invalid_argument("plan_ceiling: requires exactly one resource");
  ReplicaPlan plan;
  plan.breakpoints = ctrl.breakpoints;
  plan.weights = {1.0};
  for (const auto& per_flow : ctrl.eta) {
    std::vector<int> r;
    for (double e : per_flow[0]) r.push_back(guarded_ceil(e));
    plan.replicas.push_back(std::move(r));
    plan.demand.push_back({1.0});
  }
  return plan;
}

inline ReplicaPlan plan_ceiling(const FluidSolution& sol) { return plan_ceiling(sol.control); }

struct PlanOptions {
  std::vector<double> weights;                // [m]; empty means all 1
  std::vector<std::vector<double>> min_demand;  // [j][m]; empty means the spec's bound
  int q_max = 64;
  int max_rounds = 64;
};

/// Demand is fixed on the longest interval by scanning eta/q for q up to
/// q_max plus the minimum demand; replica counts then follow by ceiling.
/// Capacity violations are repaired by enlarging the demand of the flow that
/// overshoots most on the violated row.
inline ReplicaPlan plan_optimal(const ControlTrajectory& ctrl, const NetworkSpec& spec, const PlanOptions& opt = {}) {
  const int J = spec.num_allocations(), M = spec.num_resources, I = spec.num_servers, N = ctrl.num_intervals();
  if (static_cast<int>(ctrl.eta.size()) != J || N <= 0)
    throw std::invalid_argument("plan_optimal: control does not match network");
  std::vector<double> w = opt.weights.empty() ? std::vector<double>(M, 1.0) : opt.weights;
  const auto& dmin = opt.min_demand.empty() ? spec.replica_demand_lb : opt.min_demand;
  if (static_cast<int>(w.size()) != M || static_cast<int>(dmin.size()) != J)
    throw std::invalid_argument("plan_optimal: weights or minimum demand have the wrong size");
  if (opt.q_max < 1) throw std::invalid_argument("plan_optimal: q_max must be at least 1");

  for (int i = 0; i < I; ++i)
    for (int m = 0; m < M; ++m)
      for (int n = 0; n < N; ++n) {
        double need = 0.0;
        for (int j = 0; j < J; ++j)
          if (spec.allocations[j].server == i) need += ctrl.eta[j][m][n];
        if (need > spec.capacity[i][m] + 1e-9)
          throw PlanError(i, m, n,
                          "plan_optimal: capacity[" + std::to_string(i) + "," + std::to_string(m) + "," +
                              std::to_string(n) + "] is below the fluid allocation");
      }

  int longest = 0;
  for (int n = 1; n < N; ++n)
    if (ctrl.length(n) > ctrl.length(longest)) longest = n;

  ReplicaPlan plan;
  plan.breakpoints = ctrl.breakpoints;
  plan.weights = w;
  plan.demand.assign(J, std::vector<double>(M, 0.0));
  for (int j = 0; j < J; ++j)
    for (int m = 0; m < M; ++m) {
      const auto& eta = ctrl.eta[j][m];
      const double lo = dmin[j][m];
      const double target = eta[longest];
      std::vector<double> candidates;
      if (lo > 0.0) candidates.push_back(lo);
      for (int q = 1; q <= opt.q_max && target > 0.0; ++q)
        if (target / q >= lo) candidates.push_back(target / q);
      if (candidates.empty()) candidates.push_back(1.0);
      // lexicographic: cost on the longest interval, cost over the horizon, larger d
      double best_d = 0.0, best_primary = lp::kInf, best_total = lp::kInf;
      for (double d : candidates) {
        const double primary = w[m] * d * guarded_ceil(target / d);
        double total = 0.0;
        for (int n = 0; n < N; ++n) total += ctrl.length(n) * w[m] * d * guarded_ceil(eta[n] / d);
        const double tol = 1e-12 * std::max(1.0, best_primary);
        const bool better = primary < best_primary - tol ||
                            (primary <= best_primary + tol &&
                             (total < best_total - 1e-12 * std::max(1.0, best_total) ||
                              (total <= best_total + 1e-12 * std::max(1.0, best_total) && d > best_d)));
        if (better) {
          best_d = d;
          best_primary = primary;
          best_total = total;
        }
      }
      plan.demand[j][m] = best_d;
    }

  auto fill = [&] {
    plan.replicas.assign(J, std::vector<int>(N, 0));
    for (int j = 0; j < J; ++j)
      for (int n = 0; n < N; ++n)
        for (int m = 0; m < M; ++m)
          plan.replicas[j][n] = std::max(plan.replicas[j][n], guarded_ceil(ctrl.eta[j][m][n] / plan.demand[j][m]));
  };

  for (int round = 0;; ++round) {
    fill();
    int vi = -1, vm = -1, vn = -1;
    for (int i = 0; i < I && vi < 0; ++i)
      for (int m = 0; m < M && vi < 0; ++m)
        for (int n = 0; n < N && vi < 0; ++n) {
          double used = 0.0;
          for (int j = 0; j < J; ++j)
            if (spec.allocations[j].server == i) used += plan.demand[j][m] * plan.replicas[j][n];
          if (used > spec.capacity[i][m] + 1e-9) vi = i, vm = m, vn = n;
        }
    if (vi < 0) return plan;
    const std::string row = "capacity[" + std::to_string(vi) + "," + std::to_string(vm) + "," + std::to_string(vn) + "]";
    if (round >= opt.max_rounds)
      throw PlanError(vi, vm, vn, "plan_optimal: " + row + " still violated after " + std::to_string(round) + " rounds");
    int pick = -1;
    double worst = 1e-9;
    for (int j = 0; j < J; ++j) {
      if (spec.allocations[j].server != vi || plan.replicas[j][vn] < 2) continue;
      const double over = plan.demand[j][vm] * plan.replicas[j][vn] - ctrl.eta[j][vm][vn];
      if (over > worst) worst = over, pick = j;
    }
    if (pick < 0) throw PlanError(vi, vm, vn, "plan_optimal: " + row + " cannot be met by any replica demand");
    plan.demand[pick][vm] = ctrl.eta[pick][vm][vn] / (plan.replicas[pick][vn] - 1);
  }
}

inline ReplicaPlan plan_optimal(const FluidSolution& sol, const NetworkSpec& spec, const PlanOptions& opt = {}) {
  return plan_optimal(sol.control, spec, opt);
}

inline void to_json(nlohmann::json& j, const ReplicaPlan& p) {
  std::vector<double> lengths;
  for (int n = 0; n < p.num_intervals(); ++n) lengths.push_back(p.length(n));
  j = {{"breakpoints", p.breakpoints},
       {"interval_lengths", lengths},
       {"replicas", p.replicas},
       {"demand", p.demand},
       {"weights", p.weights}};
}

inline void from_json(const nlohmann::json& j, ReplicaPlan& p) {
  j.at("breakpoints").get_to(p.breakpoints);
  j.at("replicas").get_to(p.replicas);
  j.at("demand").get_to(p.demand);
  j.at("weights").get_to(p.weights);
}

}  // namespace fluidscale
