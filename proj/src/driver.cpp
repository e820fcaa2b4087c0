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
#include "rddp/driver.hpp"

#include <cmath>

namespace rddp {

const char* to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::kConverged: return "converged";
    case PlanStatus::kMaxIters: return "max_iters";
    case PlanStatus::kBackwardFailed: return "backward_failed";
  }
  return "unknown";
}

const char* to_string(CertificateLabel c) {
  return c == CertificateLabel::kExact ? "exact" : "local";
}

namespace {

double stacked_norm(const std::vector<VectorXd>& xs) {
  double sq = 0.0;
  for (const auto& x : xs) sq += x.squaredNorm();
  return std::sqrt(sq);
}

double stacked_diff_norm(const std::vector<VectorXd>& a, const std::vector<VectorXd>& b) {
  double sq = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]).squaredNorm();
  return std::sqrt(sq);
}

Trajectory rollout_inputs(const GeneralizedPlant& plant,
                          const std::vector<AffinePolicy>* policies,
                          const std::vector<VectorXd>* inputs, const VectorXd& x0) {
  Trajectory traj;
  const int T = plant.horizon;
  traj.xs.reserve(T + 1);
  traj.us.reserve(T);
  traj.ws.assign(T, VectorXd::Zero(plant.d));
  traj.zs.reserve(T);
  traj.xs.push_back(x0);
  for (int t = 0; t < T; ++t) {
    const VectorXd& x = traj.xs.back();
    const VectorXd u = policies ? (*policies)[t].apply(x) : (*inputs)[t];
    const VectorXd w = VectorXd::Zero(plant.d);
    VectorXd next = plant.dynamics(x, u, w);
    if (!next.allFinite()) {
      throw NonFiniteState("rollout: dynamics diverged at t = " + std::to_string(t));
    }
    traj.zs.push_back(plant.l > 0 && plant.uncertainty_output
                          ? plant.uncertainty_output(x, u, w)
                          : VectorXd::Zero(0));
    traj.us.push_back(u);
    traj.xs.push_back(std::move(next));
  }
  return traj;
}

}  // namespace

Trajectory rollout(const GeneralizedPlant& plant, const std::vector<AffinePolicy>& policies,
                   const VectorXd& x0) {
  if (static_cast<int>(policies.size()) != plant.horizon) {
    throw DimensionMismatch("rollout: one policy per timestep required");
  }
  return rollout_inputs(plant, &policies, nullptr, x0);
}

double evaluate_cost(const GeneralizedPlant& plant, const Trajectory& trajectory) {
  double cost = 0.0;
  for (int t = 0; t < trajectory.horizon(); ++t) {
    cost += plant.stage_cost(trajectory.xs[t], trajectory.us[t]);
  }
  return cost + plant.terminal_value().value(trajectory.xs.back());
}

RobustPlan plan(const GeneralizedPlant& plant, const VectorXd& x0, const PlanOptions& options) {
  {
    const ValidationReport report = validate_plant(plant);
    if (!report.ok) {
      std::string what = "plan: plant validation failed:";
      for (const auto& issue : report.issues) what += " " + issue.message + ";";
      throw std::invalid_argument(what);
    }
  }
  const int T = plant.horizon;
  std::vector<VectorXd> zero_inputs(T, VectorXd::Zero(plant.m));
  const std::vector<VectorXd>* init =
      options.initial_inputs ? &*options.initial_inputs : &zero_inputs;
  Trajectory traj = rollout_inputs(plant, nullptr, init, x0);

  RobustPlan best;
  best.certificate = plant.affine_quadratic && options.backward.qmethod == QMethod::kLinearized
                         ? CertificateLabel::kExact
                         : CertificateLabel::kLocal;
  bool have_plan = false;

  for (int iter = 1; iter <= options.max_iters; ++iter) {
    const ValueQuad v_terminal = plant.terminal_value().reanchored(traj.xs.back());
    BackwardPassResult pass;
    Trajectory next;
    try {
      pass = run_backward_pass(plant, traj.xs, traj.us, v_terminal, options.backward);
      if (!pass.ok) {
        if (!have_plan) throw BackwardInfeasible(pass.failed_t, iter, pass.message);
        best.status = PlanStatus::kBackwardFailed;
        return best;
      }
      next = rollout(plant, pass.policies, x0);
    } catch (const BackwardInfeasible&) {
      throw;
    } catch (const std::exception&) {
      if (!have_plan) throw;
      best.status = PlanStatus::kBackwardFailed;
      return best;
    }
    const double dx = stacked_diff_norm(next.xs, traj.xs);

    IterationRecord rec;
    rec.dx_norm = dx;
    rec.nominal_cost = evaluate_cost(plant, next);
    rec.certified_bound = pass.values.front().value(x0);
    best.log.push_back(rec);

    best.policies = pass.policies;
    best.values = pass.values;
    best.trajectory = next;
    best.backward_trace = pass.trace;
    best.iterations = iter;
    have_plan = true;

    if (dx < options.epsilon * (1.0 + stacked_norm(traj.xs))) {
      best.status = PlanStatus::kConverged;
      return best;
    }
    traj = next;
  }
  best.status = PlanStatus::kMaxIters;
  return best;
}

std::pair<Trajectory, double> simulate_uncertain(const GeneralizedPlant& plant,
                                                 const std::vector<AffinePolicy>& policies,
                                                 const VectorXd& x0,
                                                 const UncertaintySample& sample) {
  const int T = plant.horizon;
  if (static_cast<int>(policies.size()) != T) {
    throw DimensionMismatch("simulate_uncertain: one policy per timestep required");
  }
  if (static_cast<int>(sample.gains.size()) != T) {
    throw DimensionMismatch("simulate_uncertain: one gain per timestep required");
  }
  Trajectory traj;
  traj.xs.push_back(x0);
  for (int t = 0; t < T; ++t) {
    const VectorXd& x = traj.xs.back();
    const VectorXd u = policies[t].apply(x);
    const MatrixXd& gain = sample.gains[t];

    VectorXd w = VectorXd::Zero(plant.d);
    if (plant.d > 0 && plant.l > 0) {
      bool converged = false;
      for (int it = 0; it < 100; ++it) {
        const VectorXd next_w = gain * plant.uncertainty_output(x, u, w);
        const double delta = (next_w - w).cwiseAbs().maxCoeff();
        w = next_w;
        if (delta < 1e-10) {
          converged = true;
          break;
        }
      }
      if (!converged) {
        throw WellPosednessFailure("simulate_uncertain: fixed point stalled at t = " +
                                   std::to_string(t));
      }
    }

    VectorXd next;
    if (plant.closed_loop_step) {
      const DeltaFn delta_fn = [&gain](const VectorXd& z) { return VectorXd(gain * z); };
      next = (*plant.closed_loop_step)(x, u, delta_fn);
    } else {
      next = plant.dynamics(x, u, w);
    }
    if (!next.allFinite()) {
      throw NonFiniteState("simulate_uncertain: dynamics diverged at t = " + std::to_string(t));
    }
    traj.zs.push_back(plant.l > 0 ? VectorXd(plant.uncertainty_output(x, u, w))
                                  : VectorXd::Zero(0));
    traj.ws.push_back(w);
    traj.us.push_back(u);
    traj.xs.push_back(std::move(next));
  }
  const double cost = evaluate_cost(plant, traj);
  return {std::move(traj), cost};
}

}  // namespace rddp
