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
#ifndef RDDP_QAPPROX_HPP
#define RDDP_QAPPROX_HPP

#include "rddp/plant.hpp"
#include "rddp/quadform.hpp"

namespace rddp {

struct NonFiniteDerivative : std::runtime_error {
  explicit NonFiniteDerivative(const std::string& what) : std::runtime_error(what) {}
};

/// Quadratic stage-cost model over (1, dx, du); the form value equals the
/// modeled cost.
struct StageQuadCost {
  MatrixXd matrix;  ///< (1+n+m)^2 symmetric
  int n = 0;
  int m = 0;
};

/// First-order dynamics model x+ ~= f + A dx + Bu du + Bw dw.
struct Linearization {
  VectorXd f;
  MatrixXd a;
  MatrixXd bu;
  MatrixXd bw;
};

/// Second-order model of f0(x,u) + V_next(f(x,u,w)) around (x, u, w).
/// Uses the plant's derivative provider when present (differencing its
/// Jacobians for the dynamics curvature) and full central finite
/// differences otherwise. Throws NonFiniteDerivative on NaN/inf.
PartitionedQuad taylor_q(const GeneralizedPlant& plant, const VectorXd& x, const VectorXd& u,
                         const VectorXd& w, const ValueQuad& v_next);

/// Exact Q for an affine dynamics model and quadratic stage cost:
///   Q = S1^T P_next S1 + S2^T R S2
/// with S1 the affine next-state map into the (1, dx_next) basis of V_next
/// and S2 the (1, dx, du) selector. Positive semi-definite whenever R and
/// P_next are.
PartitionedQuad linearized_q(const Linearization& lin, const StageQuadCost& cost,
                             const ValueQuad& v_next, BlockDims dims);

/// Convenience: linearize the plant at (x, u, w) and build linearized_q.
PartitionedQuad linearized_q_at(const GeneralizedPlant& plant, const VectorXd& x,
                                const VectorXd& u, const VectorXd& w,
                                const ValueQuad& v_next);

struct RegularizeResult {
  PartitionedQuad q;
  double sigma = 0.0;
};

/// Adds sigma * blockdiag(0, I) with the smallest sigma in {0, mu_min 2^k}
/// that lifts the (dx, du, dw) sub-block above mu_min * I. Never touches
/// q11; idempotent on its own output.
RegularizeResult regularize(const PartitionedQuad& q, double mu_min);

}  // namespace rddp

#endif  // RDDP_QAPPROX_HPP
