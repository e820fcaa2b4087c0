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
#ifndef RDDP_DRIVER_HPP
#define RDDP_DRIVER_HPP

#include "rddp/backward.hpp"
#include "rddp/plant.hpp"

namespace rddp {

struct NonFiniteState : std::runtime_error {
  explicit NonFiniteState(const std::string& what) : std::runtime_error(what) {}
};
struct WellPosednessFailure : std::runtime_error {
  explicit WellPosednessFailure(const std::string& what) : std::runtime_error(what) {}
};
struct BackwardInfeasible : std::runtime_error {
  BackwardInfeasible(int timestep, int iter, const std::string& what)
      : std::runtime_error(what), t(timestep), iteration(iter) {}
  int t;
  int iteration;
};

struct Trajectory {
  std::vector<VectorXd> xs;  ///< T+1 states
  std::vector<VectorXd> us;  ///< T inputs
  std::vector<VectorXd> ws;  ///< T disturbances (zero on nominal rollouts)
  std::vector<VectorXd> zs;  ///< T uncertainty outputs

  int horizon() const { return static_cast<int>(us.size()); }
};

enum class PlanStatus { kConverged, kMaxIters, kBackwardFailed };
enum class CertificateLabel { kExact, kLocal };

const char* to_string(PlanStatus s);
const char* to_string(CertificateLabel c);

struct IterationRecord {
  double dx_norm = 0.0;          ///< l2 of stacked state deviations vs previous pass
  double nominal_cost = 0.0;     ///< cost of the fresh nominal rollout
  double certified_bound = 0.0;  ///< V_0 at the initial state
};

struct RobustPlan {
  std::vector<AffinePolicy> policies;
  std::vector<ValueQuad> values;  ///< V_0..V_T anchored at the final pass trajectory
  Trajectory trajectory;          ///< last nominal rollout
  std::vector<IterationRecord> log;
  std::vector<BackwardStepTrace> backward_trace;  ///< from the last backward pass
  PlanStatus status = PlanStatus::kMaxIters;
  CertificateLabel certificate = CertificateLabel::kLocal;
  int iterations = 0;

  double certified_bound(const VectorXd& x0) const { return values.front().value(x0); }
};

struct PlanOptions {
  double epsilon = 1e-6;  ///< convergence: |dx| < epsilon * (1 + |trajectory|)
  int max_iters = 50;
  BackwardOptions backward;
  std::optional<std::vector<VectorXd>> initial_inputs;
};

/// Nominal forward pass: w_t = 0, u_t from the affine policies.
Trajectory rollout(const GeneralizedPlant& plant, const std::vector<AffinePolicy>& policies,
                   const VectorXd& x0);

/// Stage costs plus terminal cost of a trajectory.
double evaluate_cost(const GeneralizedPlant& plant, const Trajectory& trajectory);

/// Alternates robust backward passes with nominal rollouts until the
/// trajectory stops changing. First-iteration backward failure throws
/// BackwardInfeasible; later failures return the last successful plan with
/// status kBackwardFailed.
RobustPlan plan(const GeneralizedPlant& plant, const VectorXd& x0,
                const PlanOptions& options = {});

/// Closed-loop simulation under a sampled uncertainty: w_t is resolved from
/// w = Delta_t(g(x, u, w)) by fixed-point iteration (100 iterations, 1e-10),
/// then the step uses the plant's stage-accurate closed stepper when
/// available and x+ = f(x, u, w_t) otherwise.
std::pair<Trajectory, double> simulate_uncertain(const GeneralizedPlant& plant,
                                                 const std::vector<AffinePolicy>& policies,
                                                 const VectorXd& x0,
                                                 const UncertaintySample& sample);

}  // namespace rddp

#endif  // RDDP_DRIVER_HPP
