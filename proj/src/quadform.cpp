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
#include "rddp/quadform.hpp"

#include <Eigen/Eigenvalues>

namespace rddp {

double symmetrize_in_place(MatrixXd& mat) {
  if (mat.size() == 0) return 0.0;
  MatrixXd sym = 0.5 * (mat + mat.transpose());
  const double max_asym = (mat - sym).cwiseAbs().maxCoeff();
  mat = std::move(sym);
  return max_asym;
}

double min_eigenvalue(const MatrixXd& sym) {
  if (sym.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eigenvalue(const MatrixXd& sym) {
  if (sym.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

namespace {
double definiteness_tol(const MatrixXd& sym) {
  const double norm2 = sym.rows() == 0 ? 0.0 : sym.cwiseAbs().rowwise().sum().maxCoeff();
  return 1e-9 * (1.0 + norm2);
}
}  // namespace

bool is_positive_definite(const MatrixXd& sym) {
  if (sym.rows() == 0) return true;
  return min_eigenvalue(sym) >= definiteness_tol(sym);
}

bool is_negative_definite(const MatrixXd& sym) {
  if (sym.rows() == 0) return true;
  return max_eigenvalue(sym) <= -definiteness_tol(sym);
}

bool is_positive_semidefinite(const MatrixXd& sym, double tol_scale) {
  if (sym.rows() == 0) return true;
  const double norm2 = sym.cwiseAbs().rowwise().sum().maxCoeff();
  return min_eigenvalue(sym) >= -tol_scale * (1.0 + norm2);
}

PartitionedQuad::PartitionedQuad(MatrixXd matrix, BlockDims dims)
    : mat_(std::move(matrix)), dims_(dims) {
  if (mat_.rows() != dims_.total() || mat_.cols() != dims_.total()) {
    throw DimensionMismatch("PartitionedQuad: matrix is " + std::to_string(mat_.rows()) +
                            "x" + std::to_string(mat_.cols()) + ", block dims need " +
                            std::to_string(dims_.total()));
  }
  asym_ = symmetrize_in_place(mat_);
}

int PartitionedQuad::block_offset(int b) const {
  switch (b) {
    case 0: return 0;
    case 1: return 1;
    case 2: return 1 + dims_.n;
    default: return 1 + dims_.n + dims_.m;
  }
}

int PartitionedQuad::block_size(int b) const {
  switch (b) {
    case 0: return 1;
    case 1: return dims_.n;
    case 2: return dims_.m;
    default: return dims_.d;
  }
}

double PartitionedQuad::value(const VectorXd& dx, const VectorXd& du,
                              const VectorXd& dw) const {
  VectorXd xi(dims_.total());
  xi(0) = 1.0;
  xi.segment(1, dims_.n) = dx;
  xi.segment(1 + dims_.n, dims_.m) = du;
  xi.segment(1 + dims_.n + dims_.m, dims_.d) = dw;
  return xi.dot(mat_ * xi);
}

PartitionedQuad PartitionedQuad::operator+(const PartitionedQuad& other) const {
  if (other.dims_.total() != dims_.total()) {
    throw DimensionMismatch("PartitionedQuad: block layouts differ in operator+");
  }
  return PartitionedQuad(mat_ + other.mat_, dims_);
}

ValueQuad::ValueQuad(MatrixXd matrix, VectorXd anchor)
    : mat_(std::move(matrix)), anchor_(std::move(anchor)) {
  const int n = static_cast<int>(anchor_.size());
  if (mat_.rows() != 1 + n || mat_.cols() != 1 + n) {
    throw DimensionMismatch("ValueQuad: matrix size does not match anchor dimension");
  }
  symmetrize_in_place(mat_);
}

double ValueQuad::value(const VectorXd& x) const {
  VectorXd v(1 + state_dim());
  v(0) = 1.0;
  v.tail(state_dim()) = x - anchor_;
  return v.dot(mat_ * v);
}

VectorXd ValueQuad::gradient(const VectorXd& x) const {
  const VectorXd dx = x - anchor_;
  return 2.0 * (p12().transpose() + P22() * dx);
}

ValueQuad ValueQuad::reanchored(const VectorXd& new_anchor) const {
  const int n = state_dim();
  const VectorXd shift = new_anchor - anchor_;
  const VectorXd p12t = mat_.block(0, 1, 1, n).transpose();
  const MatrixXd p22 = mat_.block(1, 1, n, n);
  MatrixXd out = mat_;
  out(0, 0) = p11() + 2.0 * p12t.dot(shift) + shift.dot(p22 * shift);
  const VectorXd row = p12t + p22 * shift;
  out.block(0, 1, 1, n) = row.transpose();
  out.block(1, 0, n, 1) = row;
  return ValueQuad(out, new_anchor);
}

MatrixXd schur_eliminate(const PartitionedQuad& q, QuadBlock block, PivotSign sign) {
  const int b = static_cast<int>(block);
  const int off = q.block_offset(b);
  const int sz = q.block_size(b);
  const int total = q.dims().total();
  if (sz == 0) throw DimensionMismatch("schur_eliminate: pivot block is empty");

  std::vector<int> keep;
  keep.reserve(total - sz);
  for (int i = 0; i < total; ++i) {
    if (i < off || i >= off + sz) keep.push_back(i);
  }
  MatrixXd a(keep.size(), keep.size());
  MatrixXd bmat(keep.size(), sz);
  for (size_t r = 0; r < keep.size(); ++r) {
    for (size_t c = 0; c < keep.size(); ++c) a(r, c) = q.matrix()(keep[r], keep[c]);
    for (int c = 0; c < sz; ++c) bmat(r, c) = q.matrix()(keep[r], off + c);
  }
  const MatrixXd dpiv = q.matrix().block(off, off, sz, sz);

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(dpiv);
  const VectorXd ev = es.eigenvalues();
  const double abs_max = ev.cwiseAbs().maxCoeff();
  const double abs_min = ev.cwiseAbs().minCoeff();
  if (abs_min <= 0.0 || abs_max / abs_min > 1e12) {
    throw SingularPivot("schur_eliminate: pivot condition number exceeds 1e12");
  }
  const bool pivot_pos = ev.minCoeff() > 0.0;
  const bool pivot_neg = ev.maxCoeff() < 0.0;
  if ((sign == PivotSign::kPositive && !pivot_pos) ||
      (sign == PivotSign::kNegative && !pivot_neg)) {
    throw WrongSign("schur_eliminate: pivot definiteness contradicts declared sign");
  }

  MatrixXd reduced = a - bmat * dpiv.ldlt().solve(bmat.transpose());
  symmetrize_in_place(reduced);
  return reduced;
}

WorstCaseMap worst_case_delta_w(const PartitionedQuad& qbar) {
  const MatrixXd q44 = qbar.Q44();
  if (q44.rows() == 0) {
    throw DimensionMismatch("worst_case_delta_w: disturbance block is empty");
  }
  if (max_eigenvalue(q44) > -1e-9) {
    throw NotConcaveInW(
        "worst_case_delta_w: Q44 not negative definite, inner maximization unbounded");
  }
  const auto solver = q44.ldlt();
  WorstCaseMap map;
  map.g0 = -solver.solve(qbar.q14().transpose());
  map.Gx = -solver.solve(MatrixXd(qbar.Q24().transpose()));
  map.Gu = -solver.solve(MatrixXd(qbar.Q34().transpose()));
  return map;
}

namespace {

MatrixXd checked_inverse(const MatrixXd& p) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(p);
  const VectorXd ev = es.eigenvalues();
  const double abs_max = ev.cwiseAbs().maxCoeff();
  const double abs_min = ev.cwiseAbs().minCoeff();
  if (abs_min <= 0.0 || abs_max / abs_min > 1e12) {
    throw SingularP("dualize: P is singular (condition number > 1e12)");
  }
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

bool strictly_negative(const MatrixXd& sym) { return max_eigenvalue(sym) < 0.0; }
bool strictly_positive(const MatrixXd& sym) { return min_eigenvalue(sym) > 0.0; }

}  // namespace

DualPairCheck dualize_equiv(const MatrixXd& p, const MatrixXd& w) {
  const int a = static_cast<int>(w.cols());
  const int b = static_cast<int>(w.rows());
  if (p.rows() != a + b || p.cols() != a + b) {
    throw DimensionMismatch("dualize_equiv: P must be (a+b) x (a+b) with W b x a");
  }
  DualPairCheck out;

  MatrixXd upper(a + b, a);
  upper.topRows(a) = MatrixXd::Identity(a, a);
  upper.bottomRows(b) = w;
  const MatrixXd primal1 = upper.transpose() * p * upper;
  const MatrixXd p22 = p.bottomRightCorner(b, b);
  out.primal_holds = strictly_negative(primal1) && strictly_positive(p22);

  const MatrixXd pinv = checked_inverse(p);
  MatrixXd lower(a + b, b);
  lower.topRows(a) = w.transpose();
  lower.bottomRows(b) = -MatrixXd::Identity(b, b);
  const MatrixXd dual1 = lower.transpose() * pinv * lower;
  const MatrixXd pinv11 = pinv.topLeftCorner(a, a);
  out.dual_holds = strictly_positive(dual1) && strictly_negative(pinv11);
  return out;
}

DualPairCheck dualize_oneway(const MatrixXd& p, const MatrixXd& w1, const MatrixXd& w2) {
  const int a = static_cast<int>(w1.rows());
  const int b = static_cast<int>(w2.rows());
  const int c = static_cast<int>(w1.cols());
  if (w2.cols() != c) throw DimensionMismatch("dualize_oneway: W1 and W2 column counts differ");
  if (p.rows() != a + b || p.cols() != a + b) {
    throw DimensionMismatch("dualize_oneway: P must be (a+b) x (a+b)");
  }
  Eigen::JacobiSVD<MatrixXd> svd(w1);
  if (svd.singularValues().size() < c || svd.singularValues()(c - 1) <= 1e-9) {
    throw RankDeficientW1("dualize_oneway: W1 smallest singular value <= 1e-9");
  }
  const MatrixXd w1_pinv = (w1.transpose() * w1).ldlt().solve(w1.transpose());

  DualPairCheck out;
  MatrixXd stacked(a + b, c);
  stacked.topRows(a) = w1;
  stacked.bottomRows(b) = w2;
  const MatrixXd primal1 = stacked.transpose() * p * stacked;
  const MatrixXd p22 = p.bottomRightCorner(b, b);
  out.primal_holds = strictly_negative(primal1) && strictly_positive(p22);

  const MatrixXd pinv = checked_inverse(p);
  MatrixXd lower(a + b, b);
  lower.topRows(a) = (w2 * w1_pinv).transpose();
  lower.bottomRows(b) = -MatrixXd::Identity(b, b);
  const MatrixXd dual1 = lower.transpose() * pinv * lower;
  const MatrixXd pinv11 = pinv.topLeftCorner(a, a);
  out.dual_holds = strictly_positive(dual1) && strictly_negative(pinv11);
  return out;
}

}  // namespace rddp
