#include <fluidscale/model.hpp>

#include <gtest/gtest.h>

#include <functional>
#include <random>

using namespace fluidscale;

namespace {

NetworkSpec single_buffer(double alpha, double lambda, double mu, double width) {
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
  s.horizon = 4.0;
  return s;
}

ControlTrajectory constant_control(const NetworkSpec& s, std::vector<double> breakpoints, std::vector<double> u) {
  ControlTrajectory c;
  c.breakpoints = std::move(breakpoints);
  const int N = c.num_intervals();
  for (int j = 0; j < s.num_allocations(); ++j) {
    c.rate.push_back(std::vector<double>(N, u[j]));
    c.eta.push_back(std::vector<std::vector<double>>(s.num_resources, std::vector<double>(N, 0.0)));
  }
  return c;
}

ControlTrajectory random_control(const NetworkSpec& s, int N, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> step(0.1, 1.5), rate(0.0, 30.0);
  ControlTrajectory c;
  c.breakpoints = {0.0};
  for (int n = 0; n < N; ++n) c.breakpoints.push_back(c.breakpoints.back() + step(rng));
  c.rate.assign(s.num_allocations(), std::vector<double>(N));
  c.eta.assign(s.num_allocations(), std::vector<std::vector<double>>(s.num_resources, std::vector<double>(N, 0.0)));
  for (auto& row : c.rate)
    for (auto& v : row) v = rate(rng);
  return c;
}

}  // namespace

TEST(Validate, CrissCrossIsValid) { EXPECT_TRUE(validate(build_crisscross({})).empty()); }

TEST(Validate, RoutingMassAboveOne) {
  auto s = build_crisscross({});
  s.routing[0] = {0.0, 0.5, 0.7};
  EXPECT_TRUE(has_violation(validate(s), ViolationCode::RoutingMassExceedsOne));
}

TEST(Validate, DuplicateBufferServerPair) {
  auto s = build_crisscross({});
  s.allocations[1] = {0, 0};
  EXPECT_TRUE(has_violation(validate(s), ViolationCode::DuplicateBufferServer));
}

TEST(Validate, ReportsEachKindOfViolation) {
  auto base = build_crisscross({});
  struct Case {
    std::function<void(NetworkSpec&)> mutate;
    ViolationCode code;
  };
  std::vector<Case> cases = {
      {[](NetworkSpec& s) { s.allocations[0].function = 7; }, ViolationCode::FunctionOutOfRange},
      {[](NetworkSpec& s) { s.allocations[2].server = -1; }, ViolationCode::ServerOutOfRange},
      {[](NetworkSpec& s) { s.routing[2][2] = 0.5; }, ViolationCode::SelfRouting},
      {[](NetworkSpec& s) { s.routing[2][0] = -0.1; }, ViolationCode::NegativeRouting},
      {[](NetworkSpec& s) { s.arrival_rate[0] = -1.0; }, ViolationCode::NegativeArrivalRate},
      {[](NetworkSpec& s) { s.initial_load[1] = -1.0; }, ViolationCode::NegativeInitialLoad},
      {[](NetworkSpec& s) { s.rate_segments[0][0][0].slope = 0.0; }, ViolationCode::NonPositiveSlope},
      {[](NetworkSpec& s) { s.rate_segments[0][0][0].width = 0.0; }, ViolationCode::NonPositiveWidth},
      {[](NetworkSpec& s) { s.rate_segments[0][0] = {{1.0, 2.0}, {1.5, 2.0}}; }, ViolationCode::NonConcaveSegments},
      {[](NetworkSpec& s) { s.capacity[1][0] = 0.0; }, ViolationCode::NonPositiveCapacity},
      {[](NetworkSpec& s) { s.holding_cost[2] = 0.0; }, ViolationCode::NonPositiveCost},
      {[](NetworkSpec& s) { s.timeout[0] = 0.0; }, ViolationCode::NonPositiveTimeout},
      {[](NetworkSpec& s) { s.concurrency_cap[0] = 0; }, ViolationCode::NonPositiveConcurrency},
      {[](NetworkSpec& s) { s.control_lower_bound[0] = 19.5; }, ViolationCode::ControlBoundExceedsCapacity},
      {[](NetworkSpec& s) { s.control_lower_bound[2] = 13.0; }, ViolationCode::ControlBoundExceedsWidth},
      {[](NetworkSpec& s) { s.horizon = 0.0; }, ViolationCode::NonPositiveHorizon},
      {[](NetworkSpec& s) { s.holding_cost.pop_back(); }, ViolationCode::DimensionMismatch},
  };
  for (const auto& c : cases) {
    auto s = base;
    c.mutate(s);
    EXPECT_TRUE(has_violation(validate(s), c.code)) << to_string(c.code);
    EXPECT_THROW(require_valid(s), std::invalid_argument) << to_string(c.code);
  }
}

TEST(Builders, CrissCrossShape) {
  auto s = build_crisscross({});
  EXPECT_EQ(s.num_functions, 3);
  EXPECT_EQ(s.num_servers, 2);
  EXPECT_EQ(s.num_allocations(), 3);
  EXPECT_EQ(s.arrival_rate[2], 0.0);
  EXPECT_EQ(s.routing[1][2], 1.0);
  for (double lb : s.control_lower_bound) EXPECT_EQ(lb, 1.0);
  CrissCrossParams bad;
  bad.mu2 = 0.0;
  EXPECT_THROW(build_crisscross(bad), std::invalid_argument);
}

TEST(Builders, UniqueAllocationSizes) {
  UniqueAllocationParams p;
  auto s = build_unique_allocation(p);
  EXPECT_EQ(s.num_functions, 50);
  EXPECT_EQ(s.num_servers, 10);
  EXPECT_TRUE(validate(s).empty());
  for (int j = 0; j < s.num_allocations(); ++j) EXPECT_EQ(s.allocations[j].server, j / 5);
  p.num_servers = 100;
  EXPECT_EQ(build_unique_allocation(p).num_functions, 500);

  UniqueAllocationParams idle;
  idle.num_servers = 1;
  idle.funcs_per_server = 1;
  idle.lambda = 0.0;
  auto one = build_unique_allocation(idle);
  EXPECT_EQ(one.num_functions, 1);
  EXPECT_EQ(one.arrival_rate[0], 0.0);
  EXPECT_TRUE(validate(one).empty());
}

TEST(Builders, HeterogeneousSampling) {
  auto base = build_unique_allocation({});
  auto same = build_heterogeneous(base, 0.0, 5);
  EXPECT_EQ(nlohmann::json(same), nlohmann::json(base));

  auto a = build_heterogeneous(base, 10.0, 42), b = build_heterogeneous(base, 10.0, 42);
  EXPECT_EQ(nlohmann::json(a), nlohmann::json(b));
  EXPECT_TRUE(validate(a).empty());
  bool varied = false;
  for (int k = 0; k < a.num_functions; ++k) {
    EXPECT_GE(a.arrival_rate[k], 100.0);
    EXPECT_LE(a.arrival_rate[k], 121.0);
    const double mu = a.rate_segments[k][0][0].slope;
    EXPECT_GE(mu, 2.1 - 1e-12);
    EXPECT_LE(mu, 2.1 * 1.21 + 1e-12);
    varied |= a.arrival_rate[k] != a.arrival_rate[0];
  }
  EXPECT_TRUE(varied);
  EXPECT_NE(nlohmann::json(build_heterogeneous(base, 10.0, 43)), nlohmann::json(a));
}

TEST(Evaluate, NoServiceGrowsLinearly) {
  auto s = build_crisscross({});
  auto c = constant_control(s, {0.0, 2.5, 10.0}, {0.0, 0.0, 0.0});
  auto b = evaluate_buffers(s, c);
  for (int k = 0; k < 3; ++k)
    for (double t : {0.0, 1.0, 2.5, 7.0, 10.0})
      EXPECT_NEAR(b.value(k, t), s.initial_load[k] + s.arrival_rate[k] * t, 1e-12);
  EXPECT_TRUE(b.negative.empty());
}

TEST(Evaluate, DrainGoesNegativeAfterTwo) {
  auto s = single_buffer(10.0, 0.0, 1.0, 5.0);
  auto b = evaluate_buffers(s, constant_control(s, {0.0, 4.0}, {5.0}));
  EXPECT_NEAR(b.value(0, 1.0), 5.0, 1e-12);
  EXPECT_NEAR(b.value(0, 4.0), -10.0, 1e-12);
  ASSERT_EQ(b.negative.size(), 1u);
  EXPECT_NEAR(b.negative[0].begin, 2.0, 1e-12);
  EXPECT_NEAR(b.negative[0].end, 4.0, 1e-12);
}

TEST(Evaluate, CrissCrossRoutesSecondOutputToThird) {
  auto s = build_crisscross({});
  const double c = 3.0, u3 = 1.0;
  auto b = evaluate_buffers(s, constant_control(s, {0.0, 10.0}, {0.0, c, u3}));
  for (double t : {0.0, 1.5, 6.0, 10.0}) EXPECT_NEAR(b.value(2, t), c * t - u3 * t, 1e-12);
}

TEST(Evaluate, RejectsMismatchedControl) {
  auto s = build_crisscross({});
  auto c = constant_control(s, {0.0, 1.0}, {0.0, 0.0, 0.0});
  c.rate.pop_back();
  EXPECT_THROW(evaluate_buffers(s, c), std::invalid_argument);
  auto d = constant_control(s, {0.0, 1.0, 1.0}, {0.0, 0.0, 0.0});
  EXPECT_THROW(evaluate_buffers(s, d), std::invalid_argument);
}

// total initial load + exogenous inflow = buffered + departed, at every breakpoint
TEST(Evaluate, ConservesMass) {
  std::mt19937_64 rng(99);
  auto s = build_crisscross({});
  s.routing[0] = {0.0, 0.0, 0.3};
  for (int trial = 0; trial < 50; ++trial) {
    auto c = random_control(s, 12, rng);
    auto b = evaluate_buffers(s, c);
    double departed = 0.0;
    for (int n = 0; n <= c.num_intervals(); ++n) {
      if (n > 0)
        for (int j = 0; j < s.num_allocations(); ++j) {
          double mass = 0.0;
          for (double p : s.routing[j]) mass += p;
          departed += (1.0 - mass) * c.rate[j][n - 1] * c.length(n - 1);
        }
      const double t = c.breakpoints[n];
      double in = 0.0, held = 0.0;
      for (int k = 0; k < s.num_functions; ++k) {
        in += s.initial_load[k] + s.arrival_rate[k] * t;
        held += b.level[k][n];
      }
      EXPECT_NEAR(held + departed, in, 1e-9 * std::max(1.0, in));
    }
  }
}

TEST(Evaluate, LinearInControl) {
  std::mt19937_64 rng(5);
  auto s = build_crisscross({});
  auto zero = constant_control(s, {0.0, 1.0}, {0.0, 0.0, 0.0});
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_control(s, 8, rng), b = a;
    std::uniform_real_distribution<double> rate(0.0, 30.0);
    for (auto& row : b.rate)
      for (auto& v : row) v = rate(rng);
    auto sum = a;
    for (int j = 0; j < s.num_allocations(); ++j)
      for (int n = 0; n < a.num_intervals(); ++n) sum.rate[j][n] += b.rate[j][n];
    auto xa = evaluate_buffers(s, a), xb = evaluate_buffers(s, b), xs = evaluate_buffers(s, sum);
    for (int k = 0; k < s.num_functions; ++k)
      for (int n = 0; n <= a.num_intervals(); ++n) {
        const double baseline = s.initial_load[k] + s.arrival_rate[k] * a.breakpoints[n];
        EXPECT_NEAR(xs.level[k][n] - xb.level[k][n], xa.level[k][n] - baseline, 1e-9);
      }
  }
}

TEST(Json, RoundTripsAndChecksVersion) {
  auto s = build_crisscross({});
  s.timeout[0] = 2.5;
  nlohmann::json j = s;
  EXPECT_EQ(j["version"], "fluidscale-spec/1");
  EXPECT_TRUE(j["timeout"][1].is_null());
  auto back = j.get<NetworkSpec>();
  EXPECT_EQ(nlohmann::json(back), j);
  j["version"] = "other/2";
  EXPECT_THROW(j.get<NetworkSpec>(), std::invalid_argument);
}

TEST(RateFunction, ConcaveSegmentsAccumulate) {
  auto s = single_buffer(0.0, 0.0, 2.0, 3.0);
  s.rate_segments[0][0] = {{2.0, 3.0}, {0.5, 4.0}};
  EXPECT_DOUBLE_EQ(s.rate_function(0, 0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(s.rate_function(0, 0, 5.0), 7.0);
  EXPECT_DOUBLE_EQ(s.rate_function(0, 0, 100.0), 8.0);
  EXPECT_DOUBLE_EQ(s.replica_rate(0, {1.0}), 2.0);
}
