#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "rddp/cli.hpp"
#include "rddp/serialize.hpp"

using namespace rddp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("rddp_test_" + tag);
  std::filesystem::remove_all(dir);
  return dir.string();
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("config defaults follow the experiment ranges and reject bad input") {
  const cli::RunConfig config = cli::config_from_json(nlohmann::json::object());
  CHECK(config.theta0.lo == doctest::Approx(M_PI - 1.0));
  CHECK(config.theta0.hi == doctest::Approx(M_PI + 1.0));
  CHECK(config.omega0.lo == -0.5);
  CHECK(config.v0.hi == 1.0);
  CHECK(config.d1.hi == 0.1);
  CHECK(config.samples == 50);
  CHECK(config.failure_threshold == 0.1);

  nlohmann::json bad_range = {{"experiment", {{"theta0", {2.0, 1.0}}}}};
  CHECK_THROWS_AS(cli::config_from_json(bad_range), std::invalid_argument);
  nlohmann::json bad_samples = {{"experiment", {{"samples", 0}}}};
  CHECK_THROWS_AS(cli::config_from_json(bad_samples), std::invalid_argument);
  nlohmann::json bad_strategy = {{"planner", {{"strategy", "bogus"}}}};
  CHECK_THROWS_AS(cli::config_from_json(bad_strategy), std::invalid_argument);
}

TEST_CASE("cmd_plan on a linear fixture matches the Riccati oracle") {
  cli::RunConfig config;
  config.model = "scalar";
  VectorXd x0(1);
  x0 << 1.0;
  config.x0 = x0;
  const std::string out = temp_dir("plan_scalar");
  std::string error;
  const int code = cli::cmd_plan(config, out, &error);
  CHECK(code == cli::kExitOk);
  CHECK(error.empty());

  const nlohmann::json doc = nlohmann::json::parse(slurp(out + "/plan.json"));
  CHECK(doc["schema"] == "rddp-plan/1");
  const RobustPlan loaded = plan_from_json(doc);

  const auto oracle = oracles::riccati_recursion(
      MatrixXd::Constant(1, 1, 0.9), MatrixXd::Constant(1, 1, 1.0),
      MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1), 10.0 * MatrixXd::Identity(1, 1),
      20);
  for (int t = 0; t < 20; ++t) {
    CHECK(loaded.policies[t].k2(0, 0) ==
          doctest::Approx(-oracle.k[t](0, 0)).epsilon(1e-6));
  }
  // CSV has a header plus 21 state rows.
  const std::string csv = slurp(out + "/trajectory.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 22);
  CHECK(csv.rfind("t,x0,u0\n", 0) == 0);
}

TEST_CASE("cmd_plan writes the pendulum artifacts and converges") {
  cli::RunConfig config;  // pendulum defaults
  config.epsilon = 0.02;
  config.max_iters = 100;
  config.regularization_mu = 2.0;
  const std::string out = temp_dir("plan_pendulum");
  std::string error;
  const int code = cli::cmd_plan(config, out, &error);
  CHECK(code == cli::kExitOk);

  const std::string csv = slurp(out + "/trajectory.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 52);  // header + 51 states
  CHECK(csv.rfind("t,theta,omega,s,v,u\n", 0) == 0);

  const nlohmann::json doc = nlohmann::json::parse(slurp(out + "/plan.json"));
  CHECK(doc["status"] == "converged");
  CHECK(doc["certificate"] == "local");
  CHECK(doc["model"] == "pendulum");
}

TEST_CASE("cmd_simulate reproduces the plan under the nominal sample") {
  cli::RunConfig config;
  config.epsilon = 0.02;
  config.max_iters = 100;
  config.regularization_mu = 2.0;
  const std::string out = temp_dir("sim_pendulum");
  std::string error;
  REQUIRE(cli::cmd_plan(config, out, &error) == cli::kExitOk);

  nlohmann::json nominal = {{"nominal", true}};
  const int code = cli::cmd_simulate(config, out + "/plan.json", nominal, out + "/sim", &error);
  CHECK(code == cli::kExitOk);
  CHECK(slurp(out + "/sim/trajectory.csv") == slurp(out + "/trajectory.csv"));

  // Corner of the parameter box: finite cost, valid artifacts.
  nlohmann::json corner = {{"delta", {1.0, 1.0}}};
  REQUIRE(cli::cmd_simulate(config, out + "/plan.json", corner, out + "/sim_corner", &error) ==
          cli::kExitOk);
  const nlohmann::json cost = nlohmann::json::parse(slurp(out + "/sim_corner/cost.json"));
  CHECK(cost["cost"].is_number());

  // Physical d1/d2 spec maps onto the same box.
  nlohmann::json physical = {{"d1", 0.1}, {"d2", 0.1}};
  REQUIRE(cli::cmd_simulate(config, out + "/plan.json", physical, out + "/sim_phys", &error) ==
          cli::kExitOk);
  CHECK(slurp(out + "/sim_phys/trajectory.csv") == slurp(out + "/sim_corner/trajectory.csv"));

  // Schema mismatch is rejected.
  {
    nlohmann::json doc = nlohmann::json::parse(slurp(out + "/plan.json"));
    doc["schema"] = "rddp-plan/999";
    std::ofstream bad(out + "/bad_plan.json");
    bad << doc.dump();
  }
  CHECK(cli::cmd_simulate(config, out + "/bad_plan.json", nominal, out + "/sim_bad", &error) ==
        cli::kExitError);
}

TEST_CASE("cmd_montecarlo writes deterministic artifacts") {
  cli::RunConfig config;
  config.samples = 1;
  config.seed = 5;
  config.max_iters = 6;
  config.epsilon = 1e-4;
  config.regularization_mu = 2.0;
  const std::string out1 = temp_dir("mc_a");
  const std::string out2 = temp_dir("mc_b");
  std::string error;
  REQUIRE(cli::cmd_montecarlo(config, out1, &error) == cli::kExitOk);
  REQUIRE(cli::cmd_montecarlo(config, out2, &error) == cli::kExitOk);
  CHECK(slurp(out1 + "/shots.csv") == slurp(out2 + "/shots.csv"));
  CHECK(slurp(out1 + "/summary.json") == slurp(out2 + "/summary.json"));

  const std::string csv = slurp(out1 + "/shots.csv");
  CHECK(csv.rfind("shot,method,d1,d2,theta0,omega0,s0,v0,cost,terminal_norm\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + robust + nominal

  // Summary statistics recompute from the shots.
  const nlohmann::json summary = nlohmann::json::parse(slurp(out1 + "/summary.json"));
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  double robust_cost = 0.0;
  while (std::getline(lines, line)) {
    if (line.find(",robust,") == std::string::npos) continue;
    const auto last_comma = line.rfind(',');
    const auto prev_comma = line.rfind(',', last_comma - 1);
    robust_cost = std::stod(line.substr(prev_comma + 1, last_comma - prev_comma - 1));
  }
  CHECK(summary["methods"]["robust"]["mean"].get<double>() ==
        doctest::Approx(robust_cost).epsilon(1e-12));
}

TEST_CASE("montecarlo at the collapsed nominal box yields finite costs") {
  cli::RunConfig config;
  config.samples = 1;
  config.seed = 2;
  config.max_iters = 8;
  config.epsilon = 1e-4;
  config.regularization_mu = 2.0;
  config.d1 = {0.05, 0.05};  // collapsed to the nominal midpoint
  config.d2 = {0.05, 0.05};
  const cli::MonteCarloResult mc = cli::run_montecarlo(config);
  REQUIRE(mc.shots.size() == 2);
  for (const auto& s : mc.shots) {
    CHECK(std::isfinite(s.cost));
    CHECK(s.d1 == 0.05);
    CHECK(s.d2 == 0.05);
  }
}

TEST_CASE("montecarlo can reuse a single policy across shots") {
  cli::RunConfig config;
  config.samples = 2;
  config.seed = 3;
  config.max_iters = 6;
  config.epsilon = 1e-4;
  config.regularization_mu = 2.0;
  config.replan_per_shot = false;
  const cli::MonteCarloResult mc = cli::run_montecarlo(config);
  REQUIRE(mc.shots.size() == 4);
  for (const auto& s : mc.shots) CHECK_FALSE(s.planner_failed);
}

TEST_SUITE_END();
