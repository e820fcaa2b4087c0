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
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "rddp/cli.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<uint64_t> seed;
  std::optional<int> samples;
  std::optional<std::string> strategy;
  std::optional<std::string> qmethod;
  bool trace = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON run configuration")->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "override experiment seed");
  cmd->add_option("--samples", args.samples, "override Monte Carlo shot count");
  cmd->add_option("--strategy", args.strategy, "simple|dual|canonical|auto");
  cmd->add_option("--qmethod", args.qmethod, "taylor|linearized");
  cmd->add_flag("--trace", args.trace, "emit the per-step backward trace");
}

rddp::cli::RunConfig resolve(const CommonArgs& args) {
  rddp::cli::RunConfig config = rddp::cli::load_config(args.config_path);
  if (args.seed) config.seed = *args.seed;
  if (args.samples) config.samples = *args.samples;
  if (args.trace) config.write_trace = true;
  if (args.strategy) {
    nlohmann::json doc = {{"planner", {{"strategy", *args.strategy}}}};
    config.strategy = rddp::cli::config_from_json(doc).strategy;
  }
  if (args.qmethod) {
    nlohmann::json doc = {{"planner", {{"qmethod", *args.qmethod}}}};
    config.qmethod = rddp::cli::config_from_json(doc).qmethod;
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust trajectory planning with per-step LMI certificates"};
  app.require_subcommand(1);

  CommonArgs plan_args, sim_args, mc_args;
  std::string plan_path, sample_path;

  CLI::App* plan_cmd = app.add_subcommand("plan", "plan a robust trajectory");
  add_common(plan_cmd, plan_args);

  CLI::App* sim_cmd = app.add_subcommand("simulate", "simulate a saved plan under a sample");
  add_common(sim_cmd, sim_args);
  sim_cmd->add_option("--plan", plan_path, "plan.json produced by the plan command")
      ->required();
  sim_cmd->add_option("--sample", sample_path, "JSON uncertainty sample spec")->required();

  CLI::App* mc_cmd = app.add_subcommand("montecarlo", "robust vs nominal comparison");
  add_common(mc_cmd, mc_args);

  CLI11_PARSE(app, argc, argv);

  std::string error;
  int code = rddp::cli::kExitError;
  try {
    if (plan_cmd->parsed()) {
      code = rddp::cli::cmd_plan(resolve(plan_args), plan_args.out_dir, &error);
    } else if (sim_cmd->parsed()) {
      nlohmann::json sample_spec;
      std::ifstream in(sample_path);
      if (!in) {
        std::cerr << "error: cannot open sample " << sample_path << "\n";
        return rddp::cli::kExitError;
      }
      in >> sample_spec;
      code = rddp::cli::cmd_simulate(resolve(sim_args), plan_path, sample_spec,
                                     sim_args.out_dir, &error);
    } else if (mc_cmd->parsed()) {
      code = rddp::cli::cmd_montecarlo(resolve(mc_args), mc_args.out_dir, &error);
    }
  } catch (const std::exception& e) {
    error = e.what();
    code = rddp::cli::kExitError;
  }
  if (!error.empty()) std::cerr << "error: " << error << "\n";
  return code;
}
