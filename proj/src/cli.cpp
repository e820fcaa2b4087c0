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
#include "rddp/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "rddp/serialize.hpp"

namespace rddp {
namespace cli {

namespace {

struct SplitMix64 {
  uint64_t state;
  explicit SplitMix64(uint64_t seed) : state(seed) {}
  uint64_t next() {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double uniform() { return (next() >> 11) * 0x1.0p-53; }
};

uint64_t shot_stream(uint64_t seed, uint64_t shot) {
  SplitMix64 mix(seed);
  mix.next();
  mix.state ^= (shot + 1) * 0xbf58476d1ce4e5b9ull;
  return mix.next();
}

double sample_range(SplitMix64& rng, const Range& r) {
  return r.lo + (r.hi - r.lo) * rng.uniform();
}

Range range_from(const nlohmann::json& j, Range fallback) {
  if (j.is_null()) return fallback;
  Range r{j.at(0).get<double>(), j.at(1).get<double>()};
  if (r.lo > r.hi) throw std::invalid_argument("config: range with lo > hi");
  return r;
}

Strategy strategy_from(const std::string& s) {
  if (s == "simple") return Strategy::kSimple;
  if (s == "dual") return Strategy::kDual;
  if (s == "canonical") return Strategy::kCanonical;
  if (s == "auto") return Strategy::kAuto;
  throw std::invalid_argument("config: unknown strategy " + s);
}

QMethod qmethod_from(const std::string& s) {
  if (s == "taylor") return QMethod::kTaylor;
  if (s == "linearized") return QMethod::kLinearized;
  throw std::invalid_argument("config: unknown qmethod " + s);
}

nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& doc) {
  RunConfig config;
  if (doc.contains("model")) config.model = doc["model"].get<std::string>();
  if (doc.contains("model_seed")) config.model_seed = doc["model_seed"].get<uint64_t>();
  if (doc.contains("model_uncertainty")) {
    config.model_uncertainty = doc["model_uncertainty"].get<bool>();
  }
  if (doc.contains("pendulum")) {
    const auto& p = doc["pendulum"];
    auto& params = config.pendulum;
    if (p.contains("gravity")) params.gravity = p["gravity"].get<double>();
    if (p.contains("length")) params.length = p["length"].get<double>();
    if (p.contains("d1_nominal")) params.d1_nominal = p["d1_nominal"].get<double>();
    if (p.contains("d2_nominal")) params.d2_nominal = p["d2_nominal"].get<double>();
    if (p.contains("radius")) params.radius = p["radius"].get<double>();
    if (p.contains("horizon_seconds")) {
      params.horizon_seconds = p["horizon_seconds"].get<double>();
    }
    if (p.contains("steps")) params.steps = p["steps"].get<int>();
    if (p.contains("terminal_weight")) {
      params.terminal_weight = p["terminal_weight"].get<double>();
    }
    if (params.radius < 0.0) throw std::invalid_argument("config: radius must be >= 0");
    if (params.steps < 1) throw std::invalid_argument("config: steps must be >= 1");
  }
  if (doc.contains("planner")) {
    const auto& p = doc["planner"];
    if (p.contains("strategy")) config.strategy = strategy_from(p["strategy"]);
    if (p.contains("qmethod")) config.qmethod = qmethod_from(p["qmethod"]);
    if (p.contains("epsilon")) config.epsilon = p["epsilon"].get<double>();
    if (p.contains("max_iters")) config.max_iters = p["max_iters"].get<int>();
    if (p.contains("sigma_rho")) config.sigma_rho = p["sigma_rho"].get<double>();
    if (p.contains("regularization_mu") && !p["regularization_mu"].is_null()) {
      config.regularization_mu = p["regularization_mu"].get<double>();
    }
  }
  if (doc.contains("experiment")) {
    const auto& e = doc["experiment"];
    if (e.contains("samples")) config.samples = e["samples"].get<int>();
    if (e.contains("seed")) config.seed = e["seed"].get<uint64_t>();
    config.theta0 = range_from(e.value("theta0", nlohmann::json()), config.theta0);
    config.omega0 = range_from(e.value("omega0", nlohmann::json()), config.omega0);
    config.s0 = range_from(e.value("s0", nlohmann::json()), config.s0);
    config.v0 = range_from(e.value("v0", nlohmann::json()), config.v0);
    config.d1 = range_from(e.value("d1", nlohmann::json()), config.d1);
    config.d2 = range_from(e.value("d2", nlohmann::json()), config.d2);
    if (e.contains("failure_threshold")) {
      config.failure_threshold = e["failure_threshold"].get<double>();
    }
    if (e.contains("replan_per_shot")) {
      config.replan_per_shot = e["replan_per_shot"].get<bool>();
    }
    if (config.samples < 1) throw std::invalid_argument("config: samples must be >= 1");
  }
  if (doc.contains("x0")) {
    const auto& x = doc["x0"];
    VectorXd x0(x.size());
    for (size_t i = 0; i < x.size(); ++i) x0(static_cast<int>(i)) = x[i].get<double>();
    config.x0 = x0;
  }
  if (doc.contains("trace")) config.write_trace = doc["trace"].get<bool>();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  nlohmann::json doc;
  in >> doc;
  return config_from_json(doc);
}

GeneralizedPlant build_model(const RunConfig& config) {
  if (config.model == "pendulum") return models::build_pendulum_plant(config.pendulum);
  if (config.model == "scalar") return models::scalar_fixture();
  if (config.model == "double_integrator") return models::double_integrator_fixture();
  if (config.model == "random_stable") {
    return models::random_stable_fixture(config.model_seed, 20, config.model_uncertainty);
  }
  throw std::invalid_argument("unknown model " + config.model);
}

GeneralizedPlant build_nominal_model(const RunConfig& config) {
  if (config.model == "pendulum") {
    const GeneralizedPlant channel = models::build_pendulum_plant(config.pendulum);
    GeneralizedPlant plant;
    plant.n = channel.n;
    plant.m = channel.m;
    plant.d = 0;
    plant.l = 0;
    plant.horizon = channel.horizon;
    plant.dynamics = [base = channel.dynamics](const VectorXd& x, const VectorXd& u,
                                               const VectorXd&) {
      return base(x, u, VectorXd::Zero(2));
    };
    plant.stage_cost = channel.stage_cost;
    plant.terminal_cost = channel.terminal_cost;
    plant.terminal_anchor = channel.terminal_anchor;
    return plant;
  }
  if (config.model == "random_stable") {
    return models::random_stable_fixture(config.model_seed, 20, false);
  }
  return build_model(config);
}

VectorXd default_initial_state(const RunConfig& config) {
  if (config.x0) return *config.x0;
  const GeneralizedPlant plant = build_model(config);
  VectorXd x0 = VectorXd::Zero(plant.n);
  if (config.model == "pendulum") x0(0) = M_PI;  // hanging down
  else x0.setConstant(1.0);
  return x0;
}

PlanOptions planner_options(const RunConfig& config) {
  PlanOptions options;
  options.epsilon = config.epsilon;
  options.max_iters = config.max_iters;
  options.backward.strategy = config.strategy;
  options.backward.qmethod = config.qmethod;
  options.backward.sigma.rho = config.sigma_rho;
  options.backward.regularization_mu = config.regularization_mu;
  if (config.qmethod == QMethod::kTaylor && !options.backward.regularization_mu) {
    // Taylor models can be indefinite; the linearized model is PSD as built.
    options.backward.regularization_mu = 1e-6;
  }
  return options;
}

std::vector<std::string> state_names(const RunConfig& config) {
  if (config.model == "pendulum") return {"theta", "omega", "s", "v"};
  const GeneralizedPlant plant = build_model(config);
  std::vector<std::string> names;
  for (int i = 0; i < plant.n; ++i) names.push_back("x" + std::to_string(i));
  return names;
}

std::vector<std::string> input_names(const RunConfig& config) {
  if (config.model == "pendulum") return {"u"};
  const GeneralizedPlant plant = build_model(config);
  std::vector<std::string> names;
  for (int i = 0; i < plant.m; ++i) names.push_back("u" + std::to_string(i));
  return names;
}

int cmd_plan(const RunConfig& config, const std::string& out_dir, std::string* error) {
  try {
    std::filesystem::create_directories(out_dir);
    const GeneralizedPlant plant = build_model(config);
    const VectorXd x0 = default_initial_state(config);
    const RobustPlan result = plan(plant, x0, planner_options(config));

    nlohmann::json doc = plan_to_json(result);
    doc["model"] = config.model;
    if (!config.write_trace) doc.erase("backward_trace");
    write_file(out_dir + "/plan.json", doc.dump(2) + "\n");
    write_file(out_dir + "/trajectory.csv",
               trajectory_csv(result.trajectory, state_names(config), input_names(config)));
    return result.status == PlanStatus::kConverged ? kExitOk : kExitNotConverged;
  } catch (const std::exception& e) {
    if (error) *error = e.what();
    return kExitError;
  }
}

namespace {

UncertaintySample sample_from_spec(const RunConfig& config, const GeneralizedPlant& plant,
                                   const nlohmann::json& spec) {
  if (spec.contains("nominal") && spec["nominal"].get<bool>()) {
    return UncertaintySample::nominal(plant.horizon, plant.d, plant.l);
  }
  VectorXd delta;
  if (spec.contains("delta")) {
    const auto& d = spec["delta"];
    delta.resize(d.size());
    for (size_t i = 0; i < d.size(); ++i) delta(static_cast<int>(i)) = d[i].get<double>();
  } else if (spec.contains("d1") || spec.contains("d2")) {
    if (config.model != "pendulum") {
      throw std::invalid_argument("sample: d1/d2 only apply to the pendulum model");
    }
    const double radius = std::max(config.pendulum.radius, 1e-12);
    delta.resize(2);
    delta(0) = (spec.value("d1", config.pendulum.d1_nominal) - config.pendulum.d1_nominal) /
               radius;
    delta(1) = (spec.value("d2", config.pendulum.d2_nominal) - config.pendulum.d2_nominal) /
               radius;
  } else {
    throw std::invalid_argument("sample: expected nominal, delta, or d1/d2 fields");
  }
  return UncertaintySample::from_box(plant.channels, delta, plant.horizon, plant.d, plant.l);
}

}  // namespace

int cmd_simulate(const RunConfig& config, const std::string& plan_path,
                 const nlohmann::json& sample_spec, const std::string& out_dir,
                 std::string* error) {
  try {
    std::filesystem::create_directories(out_dir);
    std::ifstream in(plan_path);
    if (!in) throw std::invalid_argument("cannot open plan " + plan_path);
    nlohmann::json doc;
    in >> doc;
    const RobustPlan loaded = plan_from_json(doc);

    const GeneralizedPlant plant = build_model(config);
    const UncertaintySample sample = sample_from_spec(config, plant, sample_spec);
    const VectorXd x0 = config.x0 ? *config.x0 : loaded.trajectory.xs.front();
    const auto [traj, cost] = simulate_uncertain(plant, loaded.policies, x0, sample);

    write_file(out_dir + "/trajectory.csv",
               trajectory_csv(traj, state_names(config), input_names(config)));
    nlohmann::json sidecar;
    sidecar["cost"] = json_number(cost);
    sidecar["terminal_norm"] = json_number(traj.xs.back().norm());
    sidecar["certified_bound"] = json_number(loaded.certified_bound(x0));
    write_file(out_dir + "/cost.json", sidecar.dump(2) + "\n");
    return kExitOk;
  } catch (const std::exception& e) {
    if (error) *error = e.what();
    return kExitError;
  }
}

MonteCarloResult run_montecarlo(const RunConfig& config) {
  if (config.model != "pendulum") {
    throw std::invalid_argument("montecarlo: only the pendulum model is supported");
  }
  const GeneralizedPlant robust_plant = build_model(config);
  const GeneralizedPlant nominal_plant = build_nominal_model(config);
  const PlanOptions options = planner_options(config);
  const double radius = std::max(config.pendulum.radius, 1e-12);

  MonteCarloResult result;
  std::string csv = "shot,method,d1,d2,theta0,omega0,s0,v0,cost,terminal_norm\n";

  // Lazily planned shared policies for the replan_per_shot = false variant.
  std::optional<RobustPlan> shared_robust, shared_nominal;

  for (int shot = 0; shot < config.samples; ++shot) {
    SplitMix64 rng(shot_stream(config.seed, static_cast<uint64_t>(shot)));
    const double d1 = sample_range(rng, config.d1);
    const double d2 = sample_range(rng, config.d2);
    VectorXd x0(4);
    x0 << sample_range(rng, config.theta0), sample_range(rng, config.omega0),
        sample_range(rng, config.s0), sample_range(rng, config.v0);

    VectorXd delta(2);
    delta << std::clamp((d1 - config.pendulum.d1_nominal) / radius, -1.0, 1.0),
        std::clamp((d2 - config.pendulum.d2_nominal) / radius, -1.0, 1.0);
    const UncertaintySample sample = UncertaintySample::from_box(
        robust_plant.channels, delta, robust_plant.horizon, robust_plant.d, robust_plant.l);

    for (const std::string& method : {std::string("robust"), std::string("nominal")}) {
      const bool is_robust = method == "robust";
      ShotRecord rec;
      rec.shot = shot;
      rec.method = method;
      rec.d1 = d1;
      rec.d2 = d2;
      rec.theta0 = x0(0);
      rec.omega0 = x0(1);
      rec.s0 = x0(2);
      rec.v0 = x0(3);
      try {
        const GeneralizedPlant& planner_plant = is_robust ? robust_plant : nominal_plant;
        const RobustPlan* planned = nullptr;
        RobustPlan local;
        if (config.replan_per_shot) {
          local = plan(planner_plant, x0, options);
          planned = &local;
        } else {
          auto& shared = is_robust ? shared_robust : shared_nominal;
          if (!shared) {
            RunConfig nominal_start = config;
            nominal_start.x0.reset();
            shared = plan(planner_plant, default_initial_state(nominal_start), options);
          }
          planned = &*shared;
        }
        // Both policy sets face the same sampled parametric system, which
        // the channel plant integrates exactly.
        const auto [traj, cost] =
            simulate_uncertain(robust_plant, planned->policies, x0, sample);
        rec.cost = cost;
        rec.terminal_norm = traj.xs.back().norm();
      } catch (const std::exception&) {
        rec.cost = std::numeric_limits<double>::infinity();
        rec.terminal_norm = std::numeric_limits<double>::infinity();
        rec.planner_failed = true;
      }
      csv += std::to_string(rec.shot) + "," + rec.method + "," + format_double(rec.d1) + "," +
             format_double(rec.d2) + "," + format_double(rec.theta0) + "," +
             format_double(rec.omega0) + "," + format_double(rec.s0) + "," +
             format_double(rec.v0) + "," + format_double(rec.cost) + "," +
             format_double(rec.terminal_norm) + "\n";
      result.shots.push_back(std::move(rec));
    }
  }
  result.shots_csv = std::move(csv);

  nlohmann::json summary;
  summary["schema"] = "rddp-montecarlo/1";
  summary["samples"] = config.samples;
  summary["seed"] = config.seed;
  summary["failure_threshold"] = config.failure_threshold;
  for (const std::string& method : {std::string("robust"), std::string("nominal")}) {
    std::vector<double> costs;
    int failures = 0, planner_failures = 0;
    for (const auto& rec : result.shots) {
      if (rec.method != method) continue;
      costs.push_back(rec.cost);
      if (rec.planner_failed || rec.terminal_norm > config.failure_threshold) ++failures;
      if (rec.planner_failed) ++planner_failures;
    }
    nlohmann::json running_mean = nlohmann::json::array();
    nlohmann::json running_std = nlohmann::json::array();
    double sum = 0.0;
    for (size_t k = 0; k < costs.size(); ++k) {
      sum += costs[k];
      const double mean = sum / static_cast<double>(k + 1);
      running_mean.push_back(json_number(mean));
      double var = 0.0;
      for (size_t i = 0; i <= k; ++i) {
        const double dev = costs[i] - mean;
        var += dev * dev;
      }
      running_std.push_back(
          json_number(k > 0 ? std::sqrt(var / static_cast<double>(k)) : 0.0));
    }
    nlohmann::json m;
    m["running_mean"] = running_mean;
    m["running_std"] = running_std;
    m["mean"] = running_mean.empty() ? nlohmann::json(0.0) : running_mean.back();
    m["std"] = running_std.empty() ? nlohmann::json(0.0) : running_std.back();
    m["failures"] = failures;
    m["planner_failures"] = planner_failures;
    summary["methods"][method] = m;
  }
  result.summary = std::move(summary);
  return result;
}

int cmd_montecarlo(const RunConfig& config, const std::string& out_dir, std::string* error) {
  try {
    std::filesystem::create_directories(out_dir);
    const MonteCarloResult result = run_montecarlo(config);
    write_file(out_dir + "/shots.csv", result.shots_csv);
    write_file(out_dir + "/summary.json", result.summary.dump(2) + "\n");
    return kExitOk;
  } catch (const std::exception& e) {
    if (error) *error = e.what();
    return kExitError;
  }
}

}  // namespace cli
}  // namespace rddp
