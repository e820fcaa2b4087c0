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
#ifndef RDDP_PLANT_HPP
#define RDDP_PLANT_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rddp/quadform.hpp"

namespace rddp {

struct RankDeficientFactor : std::runtime_error {
  explicit RankDeficientFactor(const std::string& what) : std::runtime_error(what) {}
};

/// First-order data of the dynamics plus a quadratic stage-cost model,
/// all taken at one (x, u, w) point.
struct PlantDerivatives {
  VectorXd f;          ///< f(x, u, w)
  MatrixXd a;          ///< df/dx  (n x n)
  MatrixXd bu;         ///< df/du  (n x m)
  MatrixXd bw;         ///< df/dw  (n x d)
  MatrixXd stage_quad; ///< (1+n+m)^2 quadratic model of f0 around the point
};

using DynamicsFn = std::function<VectorXd(const VectorXd&, const VectorXd&, const VectorXd&)>;
using OutputFn = std::function<VectorXd(const VectorXd&, const VectorXd&, const VectorXd&)>;
using StageCostFn = std::function<double(const VectorXd&, const VectorXd&)>;
using DerivativeProvider =
    std::function<PlantDerivatives(const VectorXd&, const VectorXd&, const VectorXd&)>;
/// Maps an uncertainty output z to a disturbance w.
using DeltaFn = std::function<VectorXd(const VectorXd&)>;
/// Optional high-fidelity closed-loop step x+ = step(x, u, delta) used by
/// simulations when the plant can close the uncertainty channel tighter than
/// the generic per-step fixed point (e.g. inside integrator stages).
using ClosedStepFn = std::function<VectorXd(const VectorXd&, const VectorXd&, const DeltaFn&)>;

/// One normalized box-parametric channel w_i = delta_i z_i, delta_i in [-1,1].
/// z_indices selects the rows of z belonging to the channel, w_indices the
/// coordinates of w it drives; the two lists have equal length.
struct ChannelSpec {
  std::vector<int> z_indices;
  std::vector<int> w_indices;
};

/// Discrete-time uncertain generalized plant
///   x_{t+1} = f(x_t, u_t, w_t),  z_t = g(x_t, u_t, w_t),  w_t = Delta_t(z_t)
/// with stage cost f0(x, u) and terminal cost V_T. Immutable after
/// construction; evaluators must be pure functions of their arguments.
struct GeneralizedPlant {
  int n = 0;  ///< state dimension
  int m = 0;  ///< input dimension
  int d = 0;  ///< disturbance dimension
  int l = 0;  ///< uncertainty output dimension
  int horizon = 1;

  DynamicsFn dynamics;
  OutputFn uncertainty_output;  ///< may be empty when l == 0
  StageCostFn stage_cost;
  MatrixXd terminal_cost;       ///< (1+n)^2 quadratic form over (1, x - terminal_anchor)
  VectorXd terminal_anchor;     ///< defaults to the origin

  std::optional<DerivativeProvider> derivative_provider;
  std::vector<ChannelSpec> channels;  ///< box-parametric channels when known
  std::optional<ClosedStepFn> closed_loop_step;
  /// Declares f affine and f0/z exactly quadratic/affine, making the
  /// linearized Q model exact (certificates become global statements).
  bool affine_quadratic = false;

  ValueQuad terminal_value() const;
};

/// Generator of the multiplier cone plus its indefinite factorization
///   m = mp^T mp - mm^T mm  with full-row-rank factors.
struct MultiplierGenerator {
  MatrixXd m;   ///< symmetric, (1+n+m+d)^2 over (1, dx, du, dw)
  MatrixXd mp;
  MatrixXd mm;
  std::vector<int> w_indices;  ///< box channel coordinates; empty if not a channel
};

/// Generators M^(1)..M^(s) of the multiplier cone; nonnegative combinations
/// relax the uncertainty constraint. Checked at construction: symmetry and
/// the factorization round-trip to 1e-10 relative Frobenius.
struct MultiplierSet {
  std::vector<MultiplierGenerator> generators;
  BlockDims dims;

  int size() const { return static_cast<int>(generators.size()); }
  MatrixXd combine(const VectorXd& lambda) const;
  void check() const;
};

/// Per-timestep uncertainty realization: static gains w = gain * z.
struct UncertaintySample {
  enum class Provenance { kNominal, kSampled, kWorstCaseEstimate };
  Provenance provenance = Provenance::kNominal;
  std::vector<MatrixXd> gains;  ///< one d x l gain per timestep

  static UncertaintySample nominal(int horizon, int d, int l);
  /// Builds constant per-step gains from normalized box parameters
  /// delta in [-1, 1]^s laid out per channel. Throws std::invalid_argument
  /// when a delta leaves the box by more than 1e-12.
  static UncertaintySample from_box(const std::vector<ChannelSpec>& channels,
                                    const VectorXd& delta, int horizon, int d, int l,
                                    Provenance provenance = Provenance::kSampled);
};

struct ValidationIssue {
  enum class Kind {
    kDimensionMismatch,
    kNonSymmetricTerminalCost,
    kTerminalCostNotPsd,
    kBadHorizon,
    kWellPosednessProbeFailed,
  };
  Kind kind;
  std::string message;
};

struct ValidationReport {
  bool ok = true;
  std::vector<ValidationIssue> issues;
  int probes_run = 0;
  bool probe_skipped = false;

  bool has(ValidationIssue::Kind kind) const;
};

struct ValidationOptions {
  uint64_t seed = 0x9e3779b9ull;
  int probes = 32;
  int fixed_point_iters = 100;
  double fixed_point_tol = 1e-10;
};

/// Structural checks (dimensions, terminal cost symmetry/PSD, horizon) plus a
/// sampled well-posedness probe of the implicit loop w = Delta(g(x, u, w)).
/// Deterministic for a fixed seed. The probe is skipped when d == l == 0.
ValidationReport validate_plant(const GeneralizedPlant& plant,
                                const ValidationOptions& opts = {});

/// Affine model of z over (1, dx, du, dw) at a point: first column is
/// z(x, u, w), remaining columns the central-difference Jacobian.
MatrixXd linearize_output(const GeneralizedPlant& plant, const VectorXd& x,
                          const VectorXd& u, const VectorXd& w);

/// Builds one generator per channel from the affine z rows:
///   M^(i) = Z_i^T Z_i - E_i^T E_i
/// encoding z_i^2 - w_i^2 >= 0 over (1, dx, du, dw), with factors
/// Mp = Z_i and Mm = E_i (w-coordinate selectors). Throws
/// RankDeficientFactor when a Z_i row block is row-rank deficient.
MultiplierSet box_multipliers(const MatrixXd& z_rows,
                              const std::vector<ChannelSpec>& channels, BlockDims dims);

/// Central-difference fallback used when the plant has no derivative
/// provider: Jacobians with step 1e-6 * (1 + |coordinate|) and a stage-cost
/// quadratic with Hessian step 1e-4 * (1 + |coordinate|).
PlantDerivatives finite_difference_derivatives(const GeneralizedPlant& plant,
                                               const VectorXd& x, const VectorXd& u,
                                               const VectorXd& w);

/// Provider if present, finite differences otherwise.
PlantDerivatives plant_derivatives(const GeneralizedPlant& plant, const VectorXd& x,
                                   const VectorXd& u, const VectorXd& w);

}  // namespace rddp

#endif  // RDDP_PLANT_HPP
