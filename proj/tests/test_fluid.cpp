#include <fluidscale/fluid.hpp>

#include <gtest/gtest.h>

using namespace fluidscale;

namespace {

NetworkSpec single_buffer(double alpha, double lambda, double mu, double width, double T) {
  NetworkSpec s;
  s.num_functions = 1;
  s.num_servers = 1;
  s.allocations = {{0, 0}};
  s.routing = {{0.0}};
  s.arrival_rate = {lambda};
  s.initial_load = {alpha};
  s.rate_segments = {{{{mu, width}}}};
  s.capacity = {{width}};
  s.holding_cost = {1.0};
  s.timeout = {std::nullopt};
  s.concurrency_cap = {1};
  s.replica_demand_lb = {{1.0}};
  s.control_lower_bound = {0.0};
  s.horizon = T;
  return s;
}

// Single buffer with no arrivals: serving at the maximum rate is optimal, so
// the grid optimum is the trapezoid integral of the greedy drain.
double greedy_drain_objective(double alpha, double max_rate, double T, int n_steps) {
  const double dt = T / n_steps;
  double x = alpha, total = 0.0;
  for (int n = 0; n < n_steps; ++n) {
    const double next = std::max(0.0, x - max_rate * dt);
    total += 0.5 * (x + next) * dt;
    x = next;
  }
  return total;
}

double grid_trapezoid(const FluidSolution& s, const std::vector<double>& cost) {
  double total = 0.0;
  for (std::size_t k = 0; k < s.grid_levels.size(); ++k)
    for (std::size_t n = 0; n + 1 < s.grid.size(); ++n)
      total += cost[k] * 0.5 * (s.grid_levels[k][n] + s.grid_levels[k][n + 1]) * (s.grid[n + 1] - s.grid[n]);
  return total;
}

}  // namespace

TEST(Fluid, DrainMatchesGreedyOracle) {
  auto s = single_buffer(10.0, 0.0, 1.0, 5.0, 4.0);
  for (int n : {1, 2, 3, 4, 5, 7, 16, 100}) {
    auto sol = solve_fluid(discretize(s, n));
    ASSERT_TRUE(sol.optimal()) << n;
    EXPECT_NEAR(sol.objective, greedy_drain_objective(10.0, 5.0, 4.0, n), 1e-9) << n;
  }
}

TEST(Fluid, DrainObjectiveIsExactWhenEmptyingTimeIsOnGrid) {
  auto s = single_buffer(10.0, 0.0, 1.0, 5.0, 4.0);
  for (int n : {4, 100, 400}) EXPECT_NEAR(solve_fluid(discretize(s, n)).objective, 10.0, 1e-9) << n;
}

TEST(Fluid, DrainRefinementIsMonotone) {
  auto s = single_buffer(10.0, 0.0, 1.0, 5.0, 4.0);
  double prev = lp::kInf;
  for (int n = 1; n <= 256; n *= 2) {
    const double obj = solve_fluid(discretize(s, n)).objective;
    EXPECT_LE(obj, prev + 1e-6 * obj) << n;
    prev = obj;
  }
  // off-grid emptying time: still converges from above
  auto odd = single_buffer(10.0, 0.0, 1.0, 3.0, 4.0);
  prev = lp::kInf;
  for (int n = 1; n <= 256; n *= 2) {
    const double obj = solve_fluid(discretize(odd, n)).objective;
    EXPECT_LE(obj, prev + 1e-6 * obj) << n;
    EXPECT_GE(obj, 100.0 / 6.0 - 1e-9);
    prev = obj;
  }
}

TEST(Fluid, DrainMergesIntoTwoIntervals) {
  auto s = single_buffer(10.0, 0.0, 1.0, 5.0, 4.0);
  auto sol = solve_fluid(discretize(s, 4));
  ASSERT_EQ(sol.control.num_intervals(), 2);
  EXPECT_NEAR(sol.control.breakpoints[1], 2.0, 1e-12);
  EXPECT_NEAR(sol.control.rate[0][0], 5.0, 1e-9);
  EXPECT_NEAR(sol.control.rate[0][1], 0.0, 1e-9);
}

TEST(Fluid, EmptySystemCostsNothing) {
  auto s = single_buffer(0.0, 0.0, 1.0, 5.0, 4.0);
  auto sol = solve_fluid(discretize(s, 10));
  ASSERT_TRUE(sol.optimal());
  EXPECT_NEAR(sol.objective, 0.0, 1e-12);
}

TEST(Fluid, BalancedLoadHoldsLevel) {
  auto s = single_buffer(7.0, 5.0, 1.0, 5.0, 6.0);
  auto sol = solve_fluid(discretize(s, 12));
  ASSERT_TRUE(sol.optimal());
  for (double t : {0.0, 1.0, 3.3, 6.0}) EXPECT_NEAR(sol.buffers.value(0, t), 7.0, 1e-9);
  EXPECT_NEAR(sol.objective, 42.0, 1e-9);
}

TEST(Fluid, ConcaveSegmentsRaiseTheRate) {
  auto s = single_buffer(12.0, 0.0, 2.0, 1.0, 4.0);
  s.rate_segments[0][0] = {{2.0, 1.0}, {1.0, 4.0}};
  s.capacity = {{5.0}};
  s.control_lower_bound = {1.0};
  auto prog = discretize(s, 8);
  bool has_floor = false;
  for (const auto& r : prog.lp.rows) has_floor |= r.name.rfind("floor", 0) == 0;
  EXPECT_TRUE(has_floor);
  auto sol = solve_fluid(prog);
  ASSERT_TRUE(sol.optimal());
  EXPECT_NEAR(sol.objective, greedy_drain_objective(12.0, 6.0, 4.0, 8), 1e-9);
}

TEST(Fluid, CrissCrossCapacityRowSharesServerOne) {
  auto s = build_crisscross({});
  auto prog = discretize(s, 5);
  const int row = prog.capacity_rows[0][0][3];
  ASSERT_GE(row, 0);
  const auto& r = prog.lp.rows[row];
  EXPECT_EQ(r.sense, lp::Sense::LessEqual);
  EXPECT_EQ(r.rhs, s.capacity[0][0]);
  std::vector<int> vars;
  for (const auto& t : r.terms) {
    EXPECT_EQ(t.coef, 1.0);
    vars.push_back(t.var);
  }
  EXPECT_EQ(vars, (std::vector<int>{prog.eta(0, 0, 0, 3), prog.eta(1, 0, 0, 3)}));
  EXPECT_EQ(prog.lp.rows[prog.capacity_rows[1][0][3]].terms.size(), 1u);
}

TEST(Fluid, SolutionInvariantsOnCrissCross) {
  auto s = build_crisscross({});
  auto sol = solve_fluid(discretize(s, 100));
  ASSERT_TRUE(sol.optimal());
  EXPECT_LE(sol.control.num_intervals(), 100);
  for (int j = 0; j < 3; ++j)
    for (double e : sol.control.eta[j][0]) EXPECT_GE(e, 1.0 - 1e-9);
  for (const auto& row : sol.buffers.level)
    for (double v : row) EXPECT_GE(v, -1e-7);
  EXPECT_TRUE(sol.buffers.negative.empty() || sol.buffers.negative.front().end - sol.buffers.negative.front().begin < 1e-9);
  EXPECT_NEAR(sol.objective, grid_trapezoid(sol, s.holding_cost), 1e-6 * sol.objective);
  // controls respect the rate and capacity limits
  for (int n = 0; n < sol.control.num_intervals(); ++n) {
    EXPECT_LE(sol.control.eta[0][0][n] + sol.control.eta[1][0][n], s.capacity[0][0] + 1e-7);
    EXPECT_LE(sol.control.eta[2][0][n], s.capacity[1][0] + 1e-7);
    for (int j = 0; j < 3; ++j)
      EXPECT_LE(sol.control.rate[j][n], s.rate_function(j, 0, sol.control.eta[j][0][n]) + 1e-7);
  }
}

TEST(Fluid, BalanceTermKeepsHoldingCostOptimal) {
  UniqueAllocationParams p;
  p.num_servers = 1;
  auto s = build_unique_allocation(p);
  DiscretizeOptions plain;
  plain.balance_weight = 0.0;
  auto a = solve_fluid(discretize(s, 50, plain));
  auto b = solve_fluid(discretize(s, 50));
  ASSERT_TRUE(a.optimal());
  ASSERT_TRUE(b.optimal());
  EXPECT_NEAR(a.objective, b.objective, 1e-5 * a.objective);
  // identical functions stay level with each other
  for (int n = 0; n <= 50; ++n)
    for (int k = 1; k < 5; ++k) EXPECT_NEAR(b.grid_levels[k][n], b.grid_levels[0][n], 1e-6);
}

TEST(Fluid, StagedBalanceSolveMatchesColdSolve) {
  auto s = build_heterogeneous(build_unique_allocation({.num_servers = 2}), 10.0, 5);
  auto prog = discretize(s, 40);
  ASSERT_GE(prog.balance_row_begin, 0);
  auto staged = solve_fluid(prog);
  auto cold = lp::solve(prog.lp);
  ASSERT_TRUE(staged.optimal());
  ASSERT_EQ(cold.status, lp::Status::Optimal);
  EXPECT_NEAR(staged.lp_objective, cold.objective, 1e-7 * std::abs(cold.objective));
}

TEST(Fluid, TimeoutViolatedAtStartIsInfeasible) {
  auto s = single_buffer(10.0, 2.0, 1.0, 5.0, 4.0);
  s.timeout = {1.0};
  auto sol = solve_fluid(discretize(s, 4));
  EXPECT_EQ(sol.status, lp::Status::Infeasible);
  ASSERT_FALSE(sol.violations.empty());
  auto h = max_feasible_horizon(s, 4);
  EXPECT_EQ(h.horizon, 0.0);
  EXPECT_FALSE(h.solution.has_value());
}

TEST(Fluid, MaxHorizonIsFullWhenTimeoutNeverBinds) {
  auto s = single_buffer(10.0, 2.0, 1.0, 5.0, 4.0);
  s.timeout = {100.0};
  auto h = max_feasible_horizon(s, 8);
  EXPECT_EQ(h.horizon, 4.0);
  ASSERT_TRUE(h.solution.has_value());
  EXPECT_TRUE(h.solution->optimal());
}

TEST(Fluid, MaxHorizonMatchesOverflowTime) {
  // buffer grows at lambda - mu * b until it reaches lambda * tau
  const double alpha = 0.0, lambda = 10.0, mu = 1.0, b = 5.0, tau = 2.0;
  auto s = single_buffer(alpha, lambda, mu, b, 10.0);
  s.timeout = {tau};
  const double expected = (lambda * tau - alpha) / (lambda - mu * b);
  auto h = max_feasible_horizon(s, 10, 1e-4);
  EXPECT_NEAR(h.horizon, expected, 2e-4);
  EXPECT_GT(h.horizon, 0.0);
  EXPECT_LT(h.horizon, s.horizon);
  ASSERT_TRUE(h.solution.has_value());
  EXPECT_LE(h.solution->buffers.level[0].back(), lambda * tau + 1e-6);
}

TEST(Fluid, InfeasibleReportNamesRows) {
  auto s = single_buffer(0.0, 10.0, 1.0, 5.0, 10.0);
  s.timeout = {2.0};
  auto sol = solve_fluid(discretize(s, 10));
  EXPECT_EQ(sol.status, lp::Status::Infeasible);
  ASSERT_FALSE(sol.violations.empty());
  EXPECT_NE(sol.violations.front().find("dynamics"), std::string::npos);
}

TEST(Fluid, RejectsTimeoutOnRoutedFunction) {
  auto s = build_crisscross({});
  s.timeout[2] = 5.0;
  EXPECT_THROW(discretize(s, 10), std::invalid_argument);
}

TEST(Fluid, GuardsProblemSize) {
  auto s = build_crisscross({});
  DiscretizeOptions o;
  o.max_variables = 1000;
  EXPECT_THROW(discretize(s, 1000, o), std::length_error);
  EXPECT_THROW(discretize(s, 0), std::invalid_argument);
}

TEST(Fluid, SerializesSolution) {
  auto sol = solve_fluid(discretize(single_buffer(10.0, 0.0, 1.0, 5.0, 4.0), 4));
  nlohmann::json j = sol;
  EXPECT_EQ(j["status"], "optimal");
  EXPECT_EQ(j["breakpoints"].size(), 3u);
  EXPECT_NEAR(j["objective"].get<double>(), 10.0, 1e-9);
}
