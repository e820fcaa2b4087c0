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
#ifndef RDDP_SDP_HPP
#define RDDP_SDP_HPP

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rddp/quadform.hpp"

namespace rddp {

struct NonAffineExpression : std::runtime_error {
  explicit NonAffineExpression(const std::string& what) : std::runtime_error(what) {}
};
struct UnknownVariable : std::runtime_error {
  explicit UnknownVariable(const std::string& what) : std::runtime_error(what) {}
};

enum class VarKind { kScalar, kVector, kMatrix, kSymmetric };

/// Named decision variables flattened to a coordinate vector y.
///
/// Ordering is deterministic: variables are sorted lexicographically by name,
/// then expanded coordinate-wise. Scalars occupy one coordinate, vectors one
/// per entry, matrices one per entry (column-major), and symmetric matrices
/// k(k+1)/2 coordinates in the orthonormal basis {E_ii, (E_ij+E_ji)/sqrt(2)}
/// ordered by (j, i<=j) column-major.
class VariableSet {
 public:
  struct Var {
    std::string name;
    VarKind kind;
    int rows = 0;
    int cols = 0;
    int offset = 0;
    int count = 0;
  };

  void add_scalar(const std::string& name);
  void add_vector(const std::string& name, int size);
  void add_matrix(const std::string& name, int rows, int cols);
  void add_symmetric(const std::string& name, int size);

  int coord_count() const { return total_; }
  const std::vector<Var>& vars() const { return vars_; }
  const Var& var(const std::string& name) const;
  bool has(const std::string& name) const;

 private:
  void add(Var v);
  std::vector<Var> vars_;  // kept sorted by name
  int total_ = 0;
};

/// Concrete values for every variable in a VariableSet.
class Assignment {
 public:
  explicit Assignment(const VariableSet* vars) : vars_(vars) {}

  double scalar(const std::string& name) const;
  VectorXd vec(const std::string& name) const;
  const MatrixXd& mat(const std::string& name) const;  ///< matrix or symmetric

  void set(const std::string& name, MatrixXd value);

  static Assignment zeros(const VariableSet& vars);
  static Assignment from_coords(const VariableSet& vars, const VectorXd& y);
  VectorXd to_coords() const;

 private:
  const VariableSet* vars_;
  std::map<std::string, MatrixXd> values_;
};

/// One affine PSD constraint block: F0 + sum_i y_i F_i >= margin * I.
struct LmiBlock {
  int size = 0;
  double margin = 0.0;
  MatrixXd f0;
  std::vector<std::pair<int, MatrixXd>> terms;  ///< (coordinate, F_i), F_i != 0

  MatrixXd evaluate(const VectorXd& y) const;
};

/// Canonical LMI minimization problem over the coordinate vector y:
///   minimize    c . y + objective_offset
///   subject to  F0_j + sum_i y_i F_ij >= margin_j * I   for each block j
///               lower_i <= y_i <= upper_i               where bounds given
struct LmiProblem {
  int num_coords = 0;
  VectorXd c;
  double objective_offset = 0.0;
  std::vector<LmiBlock> blocks;
  std::vector<std::optional<double>> lower_bounds;
  std::vector<std::optional<double>> upper_bounds;
  double default_margin = 1e-7;

  void validate() const;  ///< throws DimensionMismatch on inconsistent data
};

enum class SdpStatus { kOptimal, kInfeasible, kUnbounded, kMaxIter, kNumericalFailure };

const char* to_string(SdpStatus status);

struct SdpSolution {
  VectorXd y;
  SdpStatus status = SdpStatus::kNumericalFailure;
  double objective = 0.0;
  /// min eigenvalue of F(y) - margin*I across blocks (bounds as 1x1 blocks)
  double residual = 0.0;
  int iterations = 0;
  double duality_gap = 0.0;
  /// Improving-ray certificate when status is infeasible or unbounded:
  /// infeasible -> dual ray (one PSD matrix per block, <F_i, X> = 0, <F0', X> < 0);
  /// unbounded  -> y-ray with sum y_i F_i >= 0 and c.y < 0.
  std::vector<MatrixXd> ray_blocks;
  VectorXd ray_y;
};

struct SolverOptions {
  int max_iters = 200;
  double tolerance = 1e-8;  ///< relative duality gap and residual target
  /// When the iteration stalls short of `tolerance`, the best iterate is
  /// still reported optimal if its worst relative merit clears this band.
  double accept_tolerance = 1e-6;
  bool verbose = false;
};

/// Backend interface so an external conic solver can be swapped in.
class SdpBackend {
 public:
  virtual ~SdpBackend() = default;
  virtual SdpSolution solve(const LmiProblem& problem, const SolverOptions& opts) = 0;
};

/// Dense primal-dual interior-point method on the homogeneous self-dual
/// embedding with Nesterov-Todd scaling and Mehrotra predictor-corrector.
/// Suitable for blocks up to roughly a hundred rows.
class InteriorPointSolver final : public SdpBackend {
 public:
  SdpSolution solve(const LmiProblem& problem, const SolverOptions& opts) override;
};

SdpSolution solve(const LmiProblem& problem, const SolverOptions& opts = {});

using BlockBuilder = std::function<MatrixXd(const Assignment&)>;
using ScalarBuilder = std::function<double(const Assignment&)>;

struct ConstraintSpec {
  BlockBuilder build;
  std::optional<double> margin;  ///< overrides the problem default when set
};

/// Assembles builders into the canonical form by probing them at unit
/// coordinates. Builders must be affine in the variables; a random-point
/// round-trip check throws NonAffineExpression otherwise.
LmiProblem assemble(const VariableSet& vars, const std::vector<ConstraintSpec>& constraints,
                    const ScalarBuilder& objective, double margin = 1e-7);

void set_lower_bound(LmiProblem& problem, const VariableSet& vars, const std::string& name,
                     double lo);
void set_upper_bound(LmiProblem& problem, const VariableSet& vars, const std::string& name,
                     double hi);

/// Debug dump: variable table plus flattened F_i triplets per block.
/// Schema (rddp-lmi/1):
/// { "schema": "rddp-lmi/1",
///   "num_coords": p, "objective": [c...], "objective_offset": o,
///   "variables": [{"name","kind","rows","cols","offset","count"}...],
///   "blocks": [{"size",k, "margin",m, "f0": [[r,c,v]...],
///               "terms": [{"coord": i, "entries": [[r,c,v]...]}...]}...],
///   "lower_bounds": [[i, lo]...], "upper_bounds": [[i, hi]...] }
nlohmann::json dump_problem_json(const LmiProblem& problem,
                                 const VariableSet* vars = nullptr);

}  // namespace rddp

#endif  // RDDP_SDP_HPP
