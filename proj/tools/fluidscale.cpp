// Command-line driver for the experiment harness.

#include <fluidscale/harness.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace fluidscale;

namespace {

std::string point_tag(double point) {
  std::ostringstream os;
  os << point;
  std::string s = os.str();
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fluid-model replica planning versus a reactive autoscaler"};
  std::string experiment = "crisscross", out_dir = "results", policy = "both", config_path;
  std::vector<double> sweep;
  int reps = -1, steps = -1;
  double horizon = -1.0;
  long long seed = -1;
  bool strict_rr = false, dump_logs = false, diagrams = false;

  app.add_option("--experiment", experiment, "Scenario")->check(CLI::IsMember(harness::scenario_names()));
  app.add_option("--sweep", sweep, "Sweep values (servers, timeout, initial replicas or spread)");
  app.add_option("--reps", reps, "Replications per point")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Base seed; replication r uses seed + r")->check(CLI::NonNegativeNumber);
  app.add_option("--steps", steps, "Time steps of the fluid discretization")->check(CLI::PositiveNumber);
  app.add_option("--horizon", horizon, "Planning and simulation horizon")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--policy", policy, "both, auto or fluid")->check(CLI::IsMember({"both", "auto", "fluid"}));
  app.add_flag("--strict-rr", strict_rr, "Fail an arrival when the next replica in turn is full");
  app.add_flag("--dump-logs", dump_logs, "Write a per-request CSV log for every run");
  app.add_flag("--diagrams", diagrams, "Write cumulative and replica diagrams for the first replication");
  app.add_option("--config", config_path, "JSON config; command-line options override it")->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  harness::ExperimentConfig cfg;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      cfg = harness::config_from_json(nlohmann::json::parse(in));
    }
    if (app.count("--experiment")) cfg.scenario = experiment;
    if (!sweep.empty()) cfg.sweep = sweep;
    if (reps > 0) cfg.replications = reps;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (steps > 0) cfg.n_steps = steps;
    if (horizon > 0) cfg.horizon = horizon;
    if (app.count("--policy")) cfg.policy = harness::parse_policy(policy);
    if (strict_rr) cfg.strict_round_robin = true;
    cfg.keep_first_run = diagrams;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  const fs::path out(out_dir);
  fs::create_directories(out);
  harness::RunCallback on_run;
  if (dump_logs) {
    fs::create_directories(out / "logs");
    on_run = [&](const harness::RunInfo& info, const NetworkSpec&, const sim::RunOutput& run) {
      std::ofstream os(out / "logs" /
                       (info.scenario + "_" + point_tag(info.point) + "_" + info.policy + "_seed" +
                        std::to_string(info.seed) + ".csv"));
      sim::write_log_csv(run.log, os);
    };
  }

  harness::ExperimentReport report;
  try {
    report = harness::run_experiment(cfg, on_run);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  {
    std::ofstream os(out / (cfg.scenario + ".csv"));
    harness::write_report_csv(report, os);
  }
  harness::write_report_csv(report, std::cout);

  bool any_solved = false;
  for (const auto& row : report.rows) {
    if (row.policy == "fluid" && row.lp_objective) any_solved = true;
    if (!row.note.empty()) std::cerr << "note: " << row.scenario << " point " << row.point << ": " << row.note << '\n';
    if (diagrams && row.first_run)
      harness::export_diagrams(*row.first_run, row.functions, out / "diagrams",
                               row.scenario + "_" + point_tag(row.point) + "_" + row.policy);
    if (row.plan) {
      std::ofstream os(out / (row.scenario + "_" + point_tag(row.point) + "_plan.json"));
      os << nlohmann::json(*row.plan).dump(2) << '\n';
    }
  }
  // every point infeasible means the fluid program has no feasible plan at all
  if (cfg.policy != harness::PolicyChoice::Autoscaler && !any_solved) {
    std::cerr << "error: fluid program infeasible at every sweep point\n";
    return 1;
  }
  return 0;
}
