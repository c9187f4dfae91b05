#pragma once

// Fluid optimal-control problem on a uniform time grid.
//
// Controls are constant on each grid interval, so the buffer levels at grid
// points obey the Euler recursion exactly and the trapezoid rule integrates
// the piecewise-linear holding cost exactly.

#include <fluidscale/lp.hpp>
#include <fluidscale/model.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fluidscale {

struct DiscretizeOptions {
  std::size_t max_variables = 4'000'000;
  // Weight, relative to the holding cost, of a secondary term that penalises
  // the largest weighted buffer on each server.  Among holding-cost optima
  // it selects the one that keeps buffers sharing a server level with each
  // other; 0 disables it.
  double balance_weight = 1e-6;
};

struct FluidProgram {
  NetworkSpec spec;
  int n_steps = 0;
  std::vector<double> times;
  lp::LpProblem lp;
  std::vector<std::vector<int>> eta_base;  // [j][m]; segment l, interval n at base + l*N + n
  std::vector<int> u_base;                 // [j]; interval n at base + n
  std::vector<int> x_base;                 // [k]; grid point n >= 1 at base + n - 1
  std::vector<std::vector<std::vector<int>>> capacity_rows;  // [i][m][n]
  // balance variables and rows trail everything else; -1 when absent
  int balance_var_begin = -1;
  int balance_row_begin = -1;

  double step() const { return times[1] - times[0]; }
  int eta(int j, int m, int l, int n) const { return eta_base[j][m] + l * n_steps + n; }
  int u(int j, int n) const { return u_base[j] + n; }
  int x(int k, int n) const { return x_base[k] + n - 1; }
};

inline FluidProgram discretize(const NetworkSpec& spec, int n_steps, const DiscretizeOptions& opt = {}) {
  require_valid(spec);
  if (n_steps < 1) throw std::invalid_argument("discretize: n_steps must be at least 1");
  const int K = spec.num_functions, I = spec.num_servers, M = spec.num_resources, J = spec.num_allocations();
  const int N = n_steps;
  for (int k = 0; k < K; ++k)
    if (spec.timeout[k] && spec.has_endogenous_inflow(k))
      throw std::invalid_argument("discretize: timeout bound on function " + std::to_string(k) +
                                  " which receives routed requests");

  std::size_t per_step = static_cast<std::size_t>(J + K);
  for (int j = 0; j < J; ++j)
    for (int m = 0; m < M; ++m) per_step += spec.rate_segments[j][m].size();
  if (opt.balance_weight > 0.0) per_step += static_cast<std::size_t>(I);
  if (per_step * static_cast<std::size_t>(N) > opt.max_variables)
    throw std::length_error("discretize: " + std::to_string(per_step * N) + " variables exceed the limit of " +
                            std::to_string(opt.max_variables));

  FluidProgram prog;
  prog.spec = spec;
  prog.n_steps = N;
  const double dt = spec.horizon / N;
  for (int n = 0; n <= N; ++n) prog.times.push_back(n == N ? spec.horizon : dt * n);
  auto& lp = prog.lp;
  auto tag = [](const char* name, std::initializer_list<int> idx) {
    std::string s = name;
    s += '[';
    bool first = true;
    for (int v : idx) {
      if (!first) s += ',';
      s += std::to_string(v);
      first = false;
    }
    return s + ']';
  };

  prog.eta_base.assign(J, std::vector<int>(M));
  for (int j = 0; j < J; ++j)
    for (int m = 0; m < M; ++m) {
      prog.eta_base[j][m] = lp.num_vars();
      const auto& segs = spec.rate_segments[j][m];
      const bool bound_by_var = m == 0 && segs.size() == 1;
      for (std::size_t l = 0; l < segs.size(); ++l)
        for (int n = 0; n < N; ++n)
          lp.add_variable(0.0, bound_by_var ? spec.control_lower_bound[j] : 0.0, segs[l].width,
                          tag("eta", {j, m, static_cast<int>(l), n}));
    }
  prog.u_base.resize(J);
  for (int j = 0; j < J; ++j) {
    prog.u_base[j] = lp.num_vars();
    for (int n = 0; n < N; ++n) lp.add_variable(0.0, 0.0, lp::kInf, tag("u", {j, n}));
  }
  // trapezoid weights: dt at interior points, dt/2 at the ends; x(0) is data
  prog.x_base.resize(K);
  for (int k = 0; k < K; ++k) {
    prog.x_base[k] = lp.num_vars();
    const double cap = spec.timeout[k] ? spec.arrival_rate[k] * *spec.timeout[k] : lp::kInf;
    for (int n = 1; n <= N; ++n)
      lp.add_variable(spec.holding_cost[k] * (n == N ? 0.5 * dt : dt), 0.0, cap, tag("x", {k, n}));
    lp.cost_offset += spec.holding_cost[k] * 0.5 * dt * spec.initial_load[k];
  }

  // dynamics
  for (int k = 0; k < K; ++k)
    for (int n = 1; n <= N; ++n) {
      std::vector<lp::Term> t{{prog.x(k, n), 1.0}};
      double rhs = dt * spec.arrival_rate[k];
      if (n > 1)
        t.push_back({prog.x(k, n - 1), -1.0});
      else
        rhs += spec.initial_load[k];
      for (int j = 0; j < J; ++j) {
        if (spec.allocations[j].function == k)
          t.push_back({prog.u(j, n - 1), dt});
        else if (spec.routing[j][k] > 0.0)
          t.push_back({prog.u(j, n - 1), -dt * spec.routing[j][k]});
      }
      lp.add_row(std::move(t), lp::Sense::Equal, rhs, tag("dynamics", {k, n}));
    }
  // rate limited by every resource
  for (int j = 0; j < J; ++j)
    for (int m = 0; m < M; ++m)
      for (int n = 0; n < N; ++n) {
        std::vector<lp::Term> t{{prog.u(j, n), 1.0}};
        const auto& segs = spec.rate_segments[j][m];
        for (std::size_t l = 0; l < segs.size(); ++l) t.push_back({prog.eta(j, m, static_cast<int>(l), n), -segs[l].slope});
        lp.add_row(std::move(t), lp::Sense::LessEqual, 0.0, tag("rate", {j, m, n}));
      }
  // server capacity
  prog.capacity_rows.assign(I, std::vector<std::vector<int>>(M, std::vector<int>(N, -1)));
  for (int i = 0; i < I; ++i)
    for (int m = 0; m < M; ++m)
      for (int n = 0; n < N; ++n) {
        std::vector<lp::Term> t;
        for (int j = 0; j < J; ++j) {
          if (spec.allocations[j].server != i) continue;
          for (std::size_t l = 0; l < spec.rate_segments[j][m].size(); ++l)
            t.push_back({prog.eta(j, m, static_cast<int>(l), n), 1.0});
        }
        if (t.empty()) continue;
        prog.capacity_rows[i][m][n] =
            lp.add_row(std::move(t), lp::Sense::LessEqual, spec.capacity[i][m], tag("capacity", {i, m, n}));
      }
  // lower bound on allocated resource when it is split over segments
  for (int j = 0; j < J; ++j) {
    const auto& segs = spec.rate_segments[j][0];
    if (segs.size() == 1 || spec.control_lower_bound[j] <= 0.0) continue;
    for (int n = 0; n < N; ++n) {
      std::vector<lp::Term> t;
      for (std::size_t l = 0; l < segs.size(); ++l) t.push_back({prog.eta(j, 0, static_cast<int>(l), n), 1.0});
      lp.add_row(std::move(t), lp::Sense::GreaterEqual, spec.control_lower_bound[j], tag("floor", {j, n}));
    }
  }
  // secondary balance term: z[i][n] >= c_k x_k(n) for every function served on i
  if (opt.balance_weight > 0.0) {
    prog.balance_var_begin = lp.num_vars();
    prog.balance_row_begin = lp.num_rows();
    double scale = 0.0;
    for (double c : spec.holding_cost) scale = std::max(scale, c);
    for (int i = 0; i < I; ++i) {
      std::vector<int> funcs;
      for (int j = 0; j < J; ++j)
        if (spec.allocations[j].server == i) funcs.push_back(spec.allocations[j].function);
      std::sort(funcs.begin(), funcs.end());
      funcs.erase(std::unique(funcs.begin(), funcs.end()), funcs.end());
      if (funcs.size() < 2) continue;
      for (int n = 1; n <= N; ++n) {
        const double w = opt.balance_weight * scale * (n == N ? 0.5 * dt : dt);
        const int z = lp.add_variable(w, 0.0, lp::kInf, tag("z", {i, n}));
        for (int k : funcs)
          lp.add_row({{z, 1.0}, {prog.x(k, n), -spec.holding_cost[k]}}, lp::Sense::GreaterEqual, 0.0,
                     tag("balance", {i, k, n}));
      }
    }
  }
  return prog;
}

struct FluidSolution {
  lp::Status status = lp::Status::Infeasible;
  ControlTrajectory control;
  BufferTrajectory buffers;
  double objective = 0.0;     // integral of the weighted buffers
  double lp_objective = 0.0;  // includes any secondary term
  long iterations = 0;
  std::vector<double> grid;
  std::vector<std::vector<double>> grid_levels;  // LP buffer values [k][n], n = 0..N
  std::vector<std::string> violations;

  bool optimal() const { return status == lp::Status::Optimal; }
};

namespace detail {

inline std::vector<std::string> row_names(const lp::LpProblem& p, const std::vector<int>& rows) {
  std::vector<std::string> out;
  for (int r : rows) out.push_back(p.rows[r].name.empty() ? "row " + std::to_string(r) : p.rows[r].name);
  return out;
}

// Solves the program without its balance rows first, then finishes from that
// basis extended by one tight balance row per (server, step).  The extension
// is primal feasible, so only the tie-break pivots remain.
inline lp::LpSolution solve_program(const FluidProgram& prog, const lp::SolveOptions& opts) {
  const auto& full = prog.lp;
  if (prog.balance_row_begin < 0 || opts.warm_start != nullptr) return lp::solve(full, opts);
  const int nv = prog.balance_var_begin, nr = prog.balance_row_begin;
  lp::LpProblem core;
  core.cost.assign(full.cost.begin(), full.cost.begin() + nv);
  core.lower.assign(full.lower.begin(), full.lower.begin() + nv);
  core.upper.assign(full.upper.begin(), full.upper.begin() + nv);
  core.rows.assign(full.rows.begin(), full.rows.begin() + nr);
  core.cost_offset = full.cost_offset;
  auto first = lp::solve(core, opts);
  if (first.status != lp::Status::Optimal) return first;

  lp::Basis basis;
  basis.structural = first.basis.structural;
  basis.structural.resize(full.num_vars(), lp::VarStatus::Basic);
  basis.logical = first.basis.logical;
  basis.logical.resize(full.num_rows(), lp::VarStatus::Basic);
  // rows of one z are contiguous; the row with the largest c_k x_k is tight
  for (int r = nr; r < full.num_rows();) {
    const int z = full.rows[r].terms[0].var;
    int best = r;
    double top = -lp::kInf;
    for (; r < full.num_rows() && full.rows[r].terms[0].var == z; ++r) {
      const auto& t = full.rows[r].terms[1];
      const double v = -t.coef * first.x[t.var];
      if (v > top) top = v, best = r;
    }
    basis.logical[best] = lp::VarStatus::AtUpper;
  }
  lp::SolveOptions o = opts;
  o.warm_start = &basis;
  auto sol = lp::solve(full, o);
  sol.iterations += first.iterations;
  return sol;
}

}  // namespace detail

inline constexpr double kMergeTolerance = 1e-6;

inline FluidSolution solve_fluid(const FluidProgram& prog, const lp::SolveOptions& opts = {}) {
  const auto& spec = prog.spec;
  const int K = spec.num_functions, M = spec.num_resources, J = spec.num_allocations(), N = prog.n_steps;
  FluidSolution out;
  out.grid = prog.times;

  for (int k = 0; k < K; ++k)
    if (spec.timeout[k] && spec.initial_load[k] > spec.arrival_rate[k] * *spec.timeout[k]) {
      out.status = lp::Status::Infeasible;
      out.violations.push_back("timeout bound of function " + std::to_string(k) + " violated at t=0");
    }
  if (!out.violations.empty()) return out;

  const auto sol = detail::solve_program(prog, opts);
  out.status = sol.status;
  out.iterations = sol.iterations;
  if (sol.status != lp::Status::Optimal) {
    out.violations = detail::row_names(prog.lp, sol.violated_rows);
    if (out.violations.empty()) out.violations.push_back(sol.message.empty() ? lp::to_string(sol.status) : sol.message);
    return out;
  }
  out.lp_objective = sol.objective;

  // per-interval values: u for every flow, then eta for every flow and resource
  auto values = [&](int n) {
    std::vector<double> v;
    v.reserve(J * (M + 1));
    for (int j = 0; j < J; ++j) v.push_back(std::max(0.0, sol.x[prog.u(j, n)]));
    for (int j = 0; j < J; ++j)
      for (int m = 0; m < M; ++m) {
        double e = 0.0;
        for (std::size_t l = 0; l < spec.rate_segments[j][m].size(); ++l)
          e += sol.x[prog.eta(j, m, static_cast<int>(l), n)];
        v.push_back(std::max(0.0, e));
      }
    return v;
  };

  auto& ctrl = out.control;
  ctrl.breakpoints = {0.0};
  ctrl.rate.assign(J, {});
  ctrl.eta.assign(J, std::vector<std::vector<double>>(M));
  int start = 0;
  auto first = values(0);
  std::vector<double> sum = first;
  auto flush = [&](int end) {
    const double len = prog.times[end] - prog.times[start];
    std::vector<double> mean(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) mean[i] = sum[i] * prog.step() / len;
    ctrl.breakpoints.push_back(prog.times[end]);
    for (int j = 0; j < J; ++j) ctrl.rate[j].push_back(mean[j]);
    for (int j = 0; j < J; ++j)
      for (int m = 0; m < M; ++m) ctrl.eta[j][m].push_back(mean[J + j * M + m]);
  };
  for (int n = 1; n < N; ++n) {
    auto v = values(n);
    bool same = true;
    for (std::size_t i = 0; i < v.size() && same; ++i) same = std::abs(v[i] - first[i]) <= kMergeTolerance;
    if (same) {
      for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
      continue;
    }
    flush(n);
    start = n;
    first = v;
    sum = v;
  }
  flush(N);
  ctrl.breakpoints.back() = spec.horizon;

  out.buffers = evaluate_buffers(spec, ctrl);
  out.grid_levels.assign(K, std::vector<double>(N + 1));
  for (int k = 0; k < K; ++k) {
    out.grid_levels[k][0] = spec.initial_load[k];
    for (int n = 1; n <= N; ++n) out.grid_levels[k][n] = sol.x[prog.x(k, n)];
    for (int n = 0; n <= N; ++n) {
      const double lpx = out.grid_levels[k][n], ev = out.buffers.value(k, prog.times[n]);
      if (std::abs(lpx - ev) > 1e-6 * std::max(1.0, std::abs(lpx)))
        throw std::logic_error("solve_fluid: buffer " + std::to_string(k) + " at grid point " + std::to_string(n) +
                               " disagrees with the LP (" + std::to_string(ev) + " vs " + std::to_string(lpx) + ")");
    }
  }
  out.objective = out.buffers.weighted_integral(spec.holding_cost);
  return out;
}

struct HorizonSearch {
  double horizon = 0.0;
  std::optional<FluidSolution> solution;
  int solves = 0;
};

/// Largest horizon in [0, spec.horizon] (to within `tol`) whose discretized
/// program is feasible.  Each probe discretizes its own horizon with n_steps.
inline HorizonSearch max_feasible_horizon(const NetworkSpec& spec, int n_steps, double tol = 1e-3,
                                          const DiscretizeOptions& dopt = {}, const lp::SolveOptions& sopt = {}) {
  require_valid(spec);
  HorizonSearch out;
  for (int k = 0; k < spec.num_functions; ++k)
    if (spec.timeout[k] && spec.initial_load[k] > spec.arrival_rate[k] * *spec.timeout[k]) return out;

  auto attempt = [&](double T) {
    NetworkSpec s = spec;
    s.horizon = T;
    ++out.solves;
    return solve_fluid(discretize(s, n_steps, dopt), sopt);
  };
  auto full = attempt(spec.horizon);
  if (full.status == lp::Status::Optimal) {
    out.horizon = spec.horizon;
    out.solution = std::move(full);
    return out;
  }
  if (full.status != lp::Status::Infeasible) {
    out.solution = std::move(full);
    return out;
  }
  double lo = 0.0, hi = spec.horizon;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    auto s = attempt(mid);
    if (s.status == lp::Status::Optimal) {
      lo = mid;
      out.solution = std::move(s);
    } else {
      hi = mid;
    }
  }
  out.horizon = lo;
  return out;
}

inline void to_json(nlohmann::json& j, const FluidSolution& s) {
  j = {{"status", lp::to_string(s.status)},
       {"objective", s.objective},
       {"lp_objective", s.lp_objective},
       {"breakpoints", s.control.breakpoints},
       {"eta", s.control.eta},
       {"rate", s.control.rate},
       {"buffers", s.buffers.level},
       {"violations", s.violations}};
}

}  // namespace fluidscale
