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
#ifndef RDDP_BACKWARD_HPP
#define RDDP_BACKWARD_HPP

#include <optional>
#include <string>
#include <vector>

#include "rddp/plant.hpp"
#include "rddp/qapprox.hpp"
#include "rddp/quadform.hpp"
#include "rddp/sdp.hpp"

namespace rddp {

/// Per-timestep affine feedback u(x) = u_anchor + k1 + K2 (x - x_anchor).
struct AffinePolicy {
  VectorXd x_anchor;
  VectorXd u_anchor;
  VectorXd k1;
  MatrixXd k2;

  VectorXd apply(const VectorXd& x) const { return u_anchor + k1 + k2 * (x - x_anchor); }
};

enum class Strategy { kAuto, kSimple, kDual, kCanonical };
enum class QMethod { kTaylor, kLinearized };

const char* to_string(Strategy s);
const char* to_string(QMethod q);

enum class StepStatus {
  kOptimal,
  kNotApplicable,      ///< structural precondition of the strategy fails
  kRegularityViolated, ///< Q indefinite beyond the perturbation budget
  kRankDeficient,      ///< W12 factor rank deficient (canonical)
  kInfeasible,
  kPrimalCheckFailed,  ///< dual solved but the recovered primal LMI fails
  kNumericalFailure,
};

const char* to_string(StepStatus s);

struct BackwardStepResult {
  StepStatus status = StepStatus::kNumericalFailure;
  Strategy strategy_used = Strategy::kSimple;
  VectorXd k1;
  MatrixXd k2;
  MatrixXd p;              ///< (1+n)^2 value matrix
  VectorXd lambda;         ///< recovered multipliers, >= 0
  double trace_objective = 0.0;
  /// max eigenvalue of the realized backward matrix inequality at the
  /// solution; negative when the certificate holds
  double certificate_margin = 0.0;
  double qbar44_max_eig = 0.0;
  double u_schur_min_eig = 0.0;
  double epsilon_perturbation = 0.0;  ///< diagonal shift applied to Q (dual/canonical)
  SdpStatus solver_status = SdpStatus::kNumericalFailure;
  std::string note;
};

/// Weight of the trace objective; defaults to blockdiag(1, rho * I_n),
/// which favors a tight bound at the anchor state.
struct SigmaSchedule {
  double rho = 1e-2;
  std::optional<MatrixXd> fixed;
  MatrixXd at(int n) const;
};

struct StepOptions {
  double margin_scale = 1e-8;      ///< strict LMIs realized as <= -margin_scale*(1+|Q|)*I
  double epsilon_budget = 1e-6;    ///< diagonal perturbation budget, relative to |Q|
  SolverOptions solver{.max_iters = 200, .tolerance = 1e-9};
};

/// One robust Bellman step: minimize trace(Sigma P) subject to the backward
/// matrix inequality posed through one of three convexifications.

/// Single Schur complement form; applicable when no generator touches the
/// du row and Q33 is positive definite.
BackwardStepResult backward_step_simple(const PartitionedQuad& q, const MultiplierSet& m,
                                        const MatrixXd& sigma, const StepOptions& opts = {});

/// Dualized form (equivalent by the dualization lemma) for box channel
/// multipliers covering every disturbance coordinate; requires Q positive
/// definite up to the perturbation budget.
BackwardStepResult backward_step_dual(const PartitionedQuad& q, const MultiplierSet& m,
                                      const MatrixXd& sigma, const StepOptions& opts = {});

/// Factorization-based dualization (sufficient, possibly conservative)
/// using the generator factors M = Mp^T Mp - Mm^T Mm.
BackwardStepResult backward_step_canonical(const PartitionedQuad& q, const MultiplierSet& m,
                                           const MatrixXd& sigma, const StepOptions& opts = {});

struct BackwardStepTrace {
  int t = 0;
  Strategy strategy = Strategy::kSimple;
  StepStatus status = StepStatus::kNumericalFailure;
  double trace_objective = 0.0;
  double certificate_margin = 0.0;
  std::vector<double> lambda;
};

struct BackwardOptions {
  Strategy strategy = Strategy::kAuto;
  QMethod qmethod = QMethod::kLinearized;
  SigmaSchedule sigma;
  /// Regularization floor applied to Q's (dx,du,dw) sub-block before the
  /// step; disabled when unset. Taylor models usually need it.
  std::optional<double> regularization_mu;
  StepOptions step;
};

struct BackwardPassResult {
  bool ok = false;
  int failed_t = -1;
  std::string message;
  std::vector<BackwardStepResult> steps;  ///< index t = 0..T-1
  std::vector<ValueQuad> values;          ///< V_0..V_T, anchored at the trajectory
  std::vector<AffinePolicy> policies;     ///< t = 0..T-1
  std::vector<BackwardStepTrace> trace;
};

/// Full backward recursion t = T-1..0 along an anchor trajectory
/// (T+1 states, T inputs); w_t = 0 is the expansion point. v_terminal must
/// dominate the plant's terminal cost. Strategy kAuto tries
/// simple -> dual -> canonical per timestep and records which one applied.
BackwardPassResult run_backward_pass(const GeneralizedPlant& plant,
                                     const std::vector<VectorXd>& xs,
                                     const std::vector<VectorXd>& us,
                                     const ValueQuad& v_terminal,
                                     const BackwardOptions& opts = {});

/// The realized backward matrix inequality at a candidate solution:
///   J(K)^T (Qbar - blockdiag(P, 0)) J(K),  J(K) = [1 0 0; 0 I 0; k1 K2 0; 0 0 I].
MatrixXd realized_backward_inequality(const PartitionedQuad& qbar, const MatrixXd& p,
                                      const VectorXd& k1, const MatrixXd& k2);

}  // namespace rddp

#endif  // RDDP_BACKWARD_HPP
