/*
 Copyright 2026 The rddp authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef RDDP_CLI_HPP
#define RDDP_CLI_HPP

#include <string>

#include "json.hpp"
#include "rddp/driver.hpp"
#include "rddp/models.hpp"

namespace rddp {
namespace cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNotConverged = 2;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Run description parsed from the JSON config plus command-line overrides.
struct RunConfig {
  std::string model = "pendulum";  // pendulum | scalar | double_integrator | random_stable
  uint64_t model_seed = 1;
  bool model_uncertainty = true;  // random_stable only
  models::PendulumParams pendulum;

  Strategy strategy = Strategy::kAuto;
  QMethod qmethod = QMethod::kLinearized;
  double epsilon = 1e-6;
  int max_iters = 50;
  double sigma_rho = 1e-2;
  std::optional<double> regularization_mu;

  int samples = 50;
  uint64_t seed = 1;
  Range theta0{M_PI - 1.0, M_PI + 1.0};
  Range omega0{-0.5, 0.5};
  Range s0{-1.0, 1.0};
  Range v0{-1.0, 1.0};
  Range d1{0.0, 0.1};
  Range d2{0.0, 0.1};
  double failure_threshold = 0.1;
  bool replan_per_shot = true;

  std::optional<VectorXd> x0;
  bool write_trace = false;
};

/// Parses and validates a config document; throws std::invalid_argument on
/// malformed ranges or counts.
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

GeneralizedPlant build_model(const RunConfig& config);
/// The comparison baseline: the same model with the uncertainty channels
/// removed and parameters frozen at their nominal midpoint.
GeneralizedPlant build_nominal_model(const RunConfig& config);

VectorXd default_initial_state(const RunConfig& config);
PlanOptions planner_options(const RunConfig& config);

/// plan: writes plan.json and trajectory.csv under out_dir.
int cmd_plan(const RunConfig& config, const std::string& out_dir, std::string* error = nullptr);

/// simulate: loads a plan document, closes the loop under the sampled
/// uncertainty, writes trajectory.csv and cost.json.
int cmd_simulate(const RunConfig& config, const std::string& plan_path,
                 const nlohmann::json& sample_spec, const std::string& out_dir,
                 std::string* error = nullptr);

/// montecarlo: seeded robust-vs-nominal experiment; writes shots.csv and
/// summary.json. Per-shot substreams are derived by counter so any shot is
/// reproducible in isolation.
int cmd_montecarlo(const RunConfig& config, const std::string& out_dir,
                   std::string* error = nullptr);

/// In-memory result of one Monte Carlo run, exposed for tests.
struct ShotRecord {
  int shot = 0;
  std::string method;
  double d1 = 0.0, d2 = 0.0;
  double theta0 = 0.0, omega0 = 0.0, s0 = 0.0, v0 = 0.0;
  double cost = 0.0;  // +inf on planner failure
  double terminal_norm = 0.0;
  bool planner_failed = false;
};

struct MonteCarloResult {
  std::vector<ShotRecord> shots;  // interleaved robust/nominal per shot
  std::string shots_csv;
  nlohmann::json summary;
};

MonteCarloResult run_montecarlo(const RunConfig& config);

std::vector<std::string> state_names(const RunConfig& config);
std::vector<std::string> input_names(const RunConfig& config);

}  // namespace cli
}  // namespace rddp

#endif  // RDDP_CLI_HPP
