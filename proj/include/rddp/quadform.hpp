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
#ifndef RDDP_QUADFORM_HPP
#define RDDP_QUADFORM_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace rddp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Errors thrown on violated numerical preconditions.
struct SingularPivot : std::runtime_error {
  explicit SingularPivot(const std::string& what) : std::runtime_error(what) {}
};
struct WrongSign : std::runtime_error {
  explicit WrongSign(const std::string& what) : std::runtime_error(what) {}
};
struct NotConcaveInW : std::runtime_error {
  explicit NotConcaveInW(const std::string& what) : std::runtime_error(what) {}
};
struct SingularP : std::runtime_error {
  explicit SingularP(const std::string& what) : std::runtime_error(what) {}
};
struct RankDeficientW1 : std::runtime_error {
  explicit RankDeficientW1(const std::string& what) : std::runtime_error(what) {}
};
struct DimensionMismatch : std::runtime_error {
  explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

/// Block dimensions of the (1, dx, du, dw) basis.
struct BlockDims {
  int n = 0;  ///< state block
  int m = 0;  ///< input block
  int d = 0;  ///< disturbance block
  int total() const { return 1 + n + m + d; }
};

double symmetrize_in_place(MatrixXd& mat);  ///< returns max asymmetry removed

/// Numerical definiteness conventions: ">~ 0" means the smallest eigenvalue
/// clears 1e-9 * (1 + ||M||_2). Strict negativity is the mirror image.
double min_eigenvalue(const MatrixXd& sym);
double max_eigenvalue(const MatrixXd& sym);
bool is_positive_definite(const MatrixXd& sym);
bool is_negative_definite(const MatrixXd& sym);
bool is_positive_semidefinite(const MatrixXd& sym, double tol_scale = 1e-9);

/// Symmetric matrix over the basis (1, dx, du, dw) with named blocks.
/// The quadratic form value at (dx, du, dw) is
///   (1, dx, du, dw)^T Q (1, dx, du, dw),
/// i.e. q11 is the value at the anchor, q12 is half the dx-gradient and
/// Q22 is half the dx-Hessian. Input is symmetrized at construction.
class PartitionedQuad {
 public:
  PartitionedQuad(MatrixXd matrix, BlockDims dims);

  const MatrixXd& matrix() const { return mat_; }
  const BlockDims& dims() const { return dims_; }
  double input_asymmetry() const { return asym_; }

  double q11() const { return mat_(0, 0); }
  Eigen::Block<const MatrixXd> q12() const { return blk(0, 1); }
  Eigen::Block<const MatrixXd> q13() const { return blk(0, 2); }
  Eigen::Block<const MatrixXd> q14() const { return blk(0, 3); }
  Eigen::Block<const MatrixXd> Q22() const { return blk(1, 1); }
  Eigen::Block<const MatrixXd> Q23() const { return blk(1, 2); }
  Eigen::Block<const MatrixXd> Q24() const { return blk(1, 3); }
  Eigen::Block<const MatrixXd> Q33() const { return blk(2, 2); }
  Eigen::Block<const MatrixXd> Q34() const { return blk(2, 3); }
  Eigen::Block<const MatrixXd> Q44() const { return blk(3, 3); }

  /// Offset/size of block b in {0:1, 1:dx, 2:du, 3:dw}.
  int block_offset(int b) const;
  int block_size(int b) const;

  double value(const VectorXd& dx, const VectorXd& du, const VectorXd& dw) const;

  PartitionedQuad operator+(const PartitionedQuad& other) const;

 private:
  Eigen::Block<const MatrixXd> blk(int r, int c) const {
    return mat_.block(block_offset(r), block_offset(c), block_size(r), block_size(c));
  }
  MatrixXd mat_;
  BlockDims dims_;
  double asym_ = 0.0;
};

/// Symmetric matrix over (1, dx) describing a quadratic value model
///   V(x) = (1, x - anchor)^T P (1, x - anchor).
class ValueQuad {
 public:
  ValueQuad() = default;
  ValueQuad(MatrixXd matrix, VectorXd anchor);

  const MatrixXd& matrix() const { return mat_; }
  const VectorXd& anchor() const { return anchor_; }
  int state_dim() const { return static_cast<int>(anchor_.size()); }

  double p11() const { return mat_(0, 0); }
  Eigen::Block<const MatrixXd> p12() const { return mat_.block(0, 1, 1, state_dim()); }
  Eigen::Block<const MatrixXd> P22() const {
    return mat_.block(1, 1, state_dim(), state_dim());
  }

  double value(const VectorXd& x) const;
  VectorXd gradient(const VectorXd& x) const;  ///< d/dx of value
  bool certified_positive_definite() const { return is_positive_definite(mat_); }

  /// Same quadratic function expressed around a different anchor.
  ValueQuad reanchored(const VectorXd& new_anchor) const;

 private:
  MatrixXd mat_;
  VectorXd anchor_;
};

/// Which block of a PartitionedQuad to pivot on.
enum class QuadBlock { kState = 1, kInput = 2, kDisturbance = 3 };

enum class PivotSign { kPositive, kNegative };

/// Schur complement A - B D^{-1} B^T eliminating the given block (pivot D).
/// The reduced matrix keeps the remaining blocks in their original order.
/// Throws SingularPivot when cond(D) > 1e12 and WrongSign when the pivot's
/// definiteness contradicts the declared sign.
MatrixXd schur_eliminate(const PartitionedQuad& q, QuadBlock block, PivotSign sign);

/// Affine map (1, dx, du) -> dw maximizing the quadratic form in dw.
struct WorstCaseMap {
  VectorXd g0;  ///< constant part
  MatrixXd Gx;  ///< dx coefficient
  MatrixXd Gu;  ///< du coefficient
  VectorXd operator()(const VectorXd& dx, const VectorXd& du) const {
    return g0 + Gx * dx + Gu * du;
  }
};

/// Stationary point of the (strictly concave) quadratic in dw:
///   dw*(dx, du) = -(Q44)^{-1} (q41 + Q42 dx + Q43 du).
/// Requires max eigenvalue of Q44 <= -1e-9; throws NotConcaveInW otherwise.
WorstCaseMap worst_case_delta_w(const PartitionedQuad& qbar);

struct DualPairCheck {
  bool primal_holds = false;
  bool dual_holds = false;
};

/// Primal pair:  (I; W)^T P (I; W) < 0   and   (0; I)^T P (0; I) > 0.
/// Dual pair:    (W^T; -I)^T P^{-1} (W^T; -I) > 0  and  (P^{-1})_11 < 0.
/// For symmetric nonsingular P the two pairs are equivalent; this evaluates
/// both sides so the equivalence can be property-tested and reused.
/// W has one row per "lower" coordinate and one column per "upper" one,
/// i.e. P is (a+b) x (a+b) with W in R^{b x a}.
DualPairCheck dualize_equiv(const MatrixXd& p, const MatrixXd& w);

/// One-way variant: W1 (full column rank, a x c) and W2 (b x c) with
/// P in S^{a+b}. Dual pair:
///   ((W2 W1+)^T; -I)^T P^{-1} (...) > 0  and  (P^{-1})_11 < 0
/// implies the primal pair
///   (W1; W2)^T P (W1; W2) < 0  and  P_22 > 0,
/// where W1+ = (W1^T W1)^{-1} W1^T. The converse can fail.
DualPairCheck dualize_oneway(const MatrixXd& p, const MatrixXd& w1, const MatrixXd& w2);

}  // namespace rddp

#endif  // RDDP_QUADFORM_HPP
