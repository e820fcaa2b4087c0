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
#include "rddp/sdp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace rddp {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
}

// ---------------------------------------------------------------------------
// VariableSet / Assignment
// ---------------------------------------------------------------------------

void VariableSet::add(Var v) {
  auto it = std::lower_bound(vars_.begin(), vars_.end(), v.name,
                             [](const Var& a, const std::string& b) { return a.name < b; });
  if (it != vars_.end() && it->name == v.name) {
    throw std::invalid_argument("VariableSet: duplicate variable " + v.name);
  }
  vars_.insert(it, std::move(v));
  // Re-assign offsets so ordering stays lexicographic regardless of add order.
  total_ = 0;
  for (auto& var : vars_) {
    var.offset = total_;
    total_ += var.count;
  }
}

void VariableSet::add_scalar(const std::string& name) {
  add(Var{name, VarKind::kScalar, 1, 1, 0, 1});
}

void VariableSet::add_vector(const std::string& name, int size) {
  add(Var{name, VarKind::kVector, size, 1, 0, size});
}

void VariableSet::add_matrix(const std::string& name, int rows, int cols) {
  add(Var{name, VarKind::kMatrix, rows, cols, 0, rows * cols});
}

void VariableSet::add_symmetric(const std::string& name, int size) {
  add(Var{name, VarKind::kSymmetric, size, size, 0, size * (size + 1) / 2});
}

const VariableSet::Var& VariableSet::var(const std::string& name) const {
  auto it = std::lower_bound(vars_.begin(), vars_.end(), name,
                             [](const Var& a, const std::string& b) { return a.name < b; });
  if (it == vars_.end() || it->name != name) {
    throw UnknownVariable("VariableSet: no variable named " + name);
  }
  return *it;
}

bool VariableSet::has(const std::string& name) const {
  auto it = std::lower_bound(vars_.begin(), vars_.end(), name,
                             [](const Var& a, const std::string& b) { return a.name < b; });
  return it != vars_.end() && it->name == name;
}

double Assignment::scalar(const std::string& name) const {
  return mat(name)(0, 0);
}

VectorXd Assignment::vec(const std::string& name) const {
  return mat(name).col(0);
}

const MatrixXd& Assignment::mat(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) {
    throw UnknownVariable("Assignment: no value for variable " + name);
  }
  return it->second;
}

void Assignment::set(const std::string& name, MatrixXd value) {
  const auto& v = vars_->var(name);
  if (value.rows() != v.rows || value.cols() != v.cols) {
    throw DimensionMismatch("Assignment: wrong shape for variable " + name);
  }
  values_[name] = std::move(value);
}

Assignment Assignment::zeros(const VariableSet& vars) {
  Assignment a(&vars);
  for (const auto& v : vars.vars()) {
    a.values_[v.name] = MatrixXd::Zero(v.rows, v.cols);
  }
  return a;
}

Assignment Assignment::from_coords(const VariableSet& vars, const VectorXd& y) {
  if (y.size() != vars.coord_count()) {
    throw DimensionMismatch("Assignment::from_coords: coordinate count mismatch");
  }
  Assignment a = zeros(vars);
  for (const auto& v : vars.vars()) {
    MatrixXd& value = a.values_[v.name];
    switch (v.kind) {
      case VarKind::kScalar:
        value(0, 0) = y(v.offset);
        break;
      case VarKind::kVector:
        value.col(0) = y.segment(v.offset, v.count);
        break;
      case VarKind::kMatrix: {
        int k = v.offset;
        for (int c = 0; c < v.cols; ++c)
          for (int r = 0; r < v.rows; ++r) value(r, c) = y(k++);
        break;
      }
      case VarKind::kSymmetric: {
        int k = v.offset;
        for (int c = 0; c < v.cols; ++c) {
          for (int r = 0; r <= c; ++r) {
            if (r == c) {
              value(r, c) = y(k);
            } else {
              value(r, c) = y(k) / kSqrt2;
              value(c, r) = y(k) / kSqrt2;
            }
            ++k;
          }
        }
        break;
      }
    }
  }
  return a;
}

VectorXd Assignment::to_coords() const {
  VectorXd y = VectorXd::Zero(vars_->coord_count());
  for (const auto& v : vars_->vars()) {
    const MatrixXd& value = mat(v.name);
    switch (v.kind) {
      case VarKind::kScalar:
        y(v.offset) = value(0, 0);
        break;
      case VarKind::kVector:
        y.segment(v.offset, v.count) = value.col(0);
        break;
      case VarKind::kMatrix: {
        int k = v.offset;
        for (int c = 0; c < v.cols; ++c)
          for (int r = 0; r < v.rows; ++r) y(k++) = value(r, c);
        break;
      }
      case VarKind::kSymmetric: {
        int k = v.offset;
        for (int c = 0; c < v.cols; ++c) {
          for (int r = 0; r <= c; ++r) {
            y(k++) = (r == c) ? value(r, c) : value(r, c) * kSqrt2;
          }
        }
        break;
      }
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Problem container
// ---------------------------------------------------------------------------

MatrixXd LmiBlock::evaluate(const VectorXd& y) const {
  MatrixXd out = f0;
  for (const auto& [coord, fi] : terms) out += y(coord) * fi;
  return out;
}

void LmiProblem::validate() const {
  if (c.size() != num_coords) throw DimensionMismatch("LmiProblem: c size != num_coords");
  if (static_cast<int>(lower_bounds.size()) != num_coords ||
      static_cast<int>(upper_bounds.size()) != num_coords) {
    throw DimensionMismatch("LmiProblem: bound vectors must have num_coords entries");
  }
  for (const auto& b : blocks) {
    if (b.f0.rows() != b.size || b.f0.cols() != b.size) {
      throw DimensionMismatch("LmiProblem: F0 shape mismatch");
    }
    if ((b.f0 - b.f0.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + b.f0.cwiseAbs().maxCoeff())) {
      throw DimensionMismatch("LmiProblem: F0 not symmetric");
    }
    for (const auto& [coord, fi] : b.terms) {
      if (coord < 0 || coord >= num_coords) throw DimensionMismatch("LmiProblem: bad coord");
      if (fi.rows() != b.size || fi.cols() != b.size) {
        throw DimensionMismatch("LmiProblem: F_i shape mismatch");
      }
    }
  }
}

const char* to_string(SdpStatus status) {
  switch (status) {
    case SdpStatus::kOptimal: return "optimal";
    case SdpStatus::kInfeasible: return "infeasible";
    case SdpStatus::kUnbounded: return "unbounded";
    case SdpStatus::kMaxIter: return "max_iter";
    case SdpStatus::kNumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Assembly by affine probing
// ---------------------------------------------------------------------------

namespace {

// Deterministic pseudo-random stream for the affinity probe.
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
  double symmetric() { return 2.0 * uniform() - 1.0; }
};

}  // namespace

LmiProblem assemble(const VariableSet& vars, const std::vector<ConstraintSpec>& constraints,
                    const ScalarBuilder& objective, double margin) {
  const int p = vars.coord_count();
  LmiProblem problem;
  problem.num_coords = p;
  problem.default_margin = margin;
  problem.lower_bounds.assign(p, std::nullopt);
  problem.upper_bounds.assign(p, std::nullopt);

  const Assignment zero = Assignment::zeros(vars);
  std::vector<Assignment> units;
  units.reserve(p);
  for (int i = 0; i < p; ++i) {
    VectorXd e = VectorXd::Zero(p);
    e(i) = 1.0;
    units.push_back(Assignment::from_coords(vars, e));
  }

  SplitMix64 rng(0x5eedULL);
  VectorXd probe(p);
  for (int i = 0; i < p; ++i) probe(i) = rng.symmetric();
  const Assignment probe_assignment = Assignment::from_coords(vars, probe);

  problem.objective_offset = objective(zero);
  problem.c = VectorXd::Zero(p);
  for (int i = 0; i < p; ++i) problem.c(i) = objective(units[i]) - problem.objective_offset;
  {
    const double direct = objective(probe_assignment);
    const double linear = problem.objective_offset + problem.c.dot(probe);
    if (std::abs(direct - linear) > 1e-9 * (1.0 + std::abs(direct))) {
      throw NonAffineExpression("assemble: objective is not affine in the variables");
    }
  }

  for (const auto& spec : constraints) {
    LmiBlock block;
    block.margin = spec.margin.value_or(margin);
    MatrixXd f0 = spec.build(zero);
    symmetrize_in_place(f0);
    block.size = static_cast<int>(f0.rows());
    block.f0 = f0;
    double scale = 1.0 + f0.cwiseAbs().maxCoeff();
    for (int i = 0; i < p; ++i) {
      MatrixXd fi = spec.build(units[i]) - f0;
      symmetrize_in_place(fi);
      if (fi.rows() != block.size || fi.cols() != block.size) {
        throw DimensionMismatch("assemble: constraint block changes size with variables");
      }
      const double mag = fi.cwiseAbs().maxCoeff();
      scale = std::max(scale, mag);
      if (mag > 0.0) block.terms.emplace_back(i, std::move(fi));
    }
    MatrixXd direct = spec.build(probe_assignment);
    symmetrize_in_place(direct);
    const MatrixXd linear = block.evaluate(probe);
    if ((direct - linear).cwiseAbs().maxCoeff() > 1e-9 * scale) {
      throw NonAffineExpression("assemble: constraint block is not affine in the variables");
    }
    problem.blocks.push_back(std::move(block));
  }
  problem.validate();
  return problem;
}

void set_lower_bound(LmiProblem& problem, const VariableSet& vars, const std::string& name,
                     double lo) {
  const auto& v = vars.var(name);
  for (int i = 0; i < v.count; ++i) problem.lower_bounds[v.offset + i] = lo;
}

void set_upper_bound(LmiProblem& problem, const VariableSet& vars, const std::string& name,
                     double hi) {
  const auto& v = vars.var(name);
  for (int i = 0; i < v.count; ++i) problem.upper_bounds[v.offset + i] = hi;
}

// ---------------------------------------------------------------------------
// Interior-point solver (homogeneous self-dual embedding, NT scaling,
// Mehrotra predictor-corrector)
// ---------------------------------------------------------------------------

namespace {

double frob_dot(const MatrixXd& a, const MatrixXd& b) { return (a.cwiseProduct(b)).sum(); }

double inf_norm(const VectorXd& v) { return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0; }

// Internal block: F(y) = f0 + sum_i y(coords[k]) * fis[k], required >= 0.
struct IpBlock {
  int size = 0;
  MatrixXd f0;                       // margin already subtracted, scaled
  std::vector<int> coords;
  std::vector<MatrixXd> fis;         // scaled
  double scale = 1.0;
};

struct IpState {
  std::vector<MatrixXd> X, S;
  VectorXd y;
  double tau = 1.0, kappa = 1.0;
};

struct BlockScaling {
  MatrixXd w;   // NT scaling point, W S W = X
  MatrixXd g;   // symmetric sqrt of W
  MatrixXd ginv;
  Eigen::SelfAdjointEigenSolver<MatrixXd> v_eig;  // of V = G S G
};

MatrixXd sym_sqrt(const Eigen::SelfAdjointEigenSolver<MatrixXd>& es) {
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

MatrixXd sym_pow(const MatrixXd& m, double expo, double floor = 0.0) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  VectorXd d = es.eigenvalues();
  for (int i = 0; i < d.size(); ++i) d(i) = std::pow(std::max(d(i), floor), expo);
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

bool compute_nt_scaling(const MatrixXd& x, const MatrixXd& s, BlockScaling& out) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es_s(s);
  if (es_s.eigenvalues().minCoeff() <= 0.0) return false;
  const MatrixXd s_half = sym_sqrt(es_s);
  const MatrixXd s_half_inv = es_s.eigenvectors() *
                              es_s.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                              es_s.eigenvectors().transpose();
  MatrixXd mid = s_half * x * s_half;
  symmetrize_in_place(mid);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es_mid(mid);
  if (es_mid.eigenvalues().minCoeff() <= 0.0) return false;
  MatrixXd w = s_half_inv * sym_sqrt(es_mid) * s_half_inv;
  symmetrize_in_place(w);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es_w(w);
  if (es_w.eigenvalues().minCoeff() <= 0.0) return false;
  out.w = w;
  out.g = sym_sqrt(es_w);
  out.ginv = es_w.eigenvectors() *
             es_w.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
             es_w.eigenvectors().transpose();
  MatrixXd v = out.g * s * out.g;
  symmetrize_in_place(v);
  out.v_eig.compute(v);
  return out.v_eig.eigenvalues().minCoeff() > 0.0;
}

// Solves (V M + M V)/2 = rhs for M in the eigenbasis of V.
MatrixXd lyapunov_solve(const Eigen::SelfAdjointEigenSolver<MatrixXd>& v_eig,
                        const MatrixXd& rhs) {
  const MatrixXd& u = v_eig.eigenvectors();
  const VectorXd& d = v_eig.eigenvalues();
  MatrixXd r = u.transpose() * rhs * u;
  for (int i = 0; i < r.rows(); ++i)
    for (int j = 0; j < r.cols(); ++j) r(i, j) *= 2.0 / (d(i) + d(j));
  MatrixXd m = u * r * u.transpose();
  symmetrize_in_place(m);
  return m;
}

// Largest step a >= 0 with m + a*dm psd; returns +inf when unrestricted.
double step_to_boundary(const MatrixXd& m, const MatrixXd& dm) {
  if (m.rows() == 0) return std::numeric_limits<double>::infinity();
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return 0.0;
  const MatrixXd l = llt.matrixL();
  MatrixXd scaled = l.triangularView<Eigen::Lower>().solve(dm);
  scaled = l.triangularView<Eigen::Lower>().solve(MatrixXd(scaled.transpose()));
  symmetrize_in_place(scaled);
  const double lam = min_eigenvalue(scaled);
  if (lam >= 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / lam;
}

struct Direction {
  VectorXd dy;
  std::vector<MatrixXd> dX, dS;
  double dtau = 0.0, dkappa = 0.0;
};

}  // namespace

SdpSolution InteriorPointSolver::solve(const LmiProblem& problem, const SolverOptions& opts) {
  problem.validate();
  const int p = problem.num_coords;

  SdpSolution sol;
  sol.y = VectorXd::Zero(p);

  // Expand matrix blocks plus bound constraints into internal blocks.
  std::vector<IpBlock> blocks;
  for (const auto& b : problem.blocks) {
    if (b.size == 0) continue;
    IpBlock ib;
    ib.size = b.size;
    ib.f0 = b.f0 - b.margin * MatrixXd::Identity(b.size, b.size);
    double scale = std::max(1.0, ib.f0.cwiseAbs().maxCoeff());
    for (const auto& [coord, fi] : b.terms) {
      scale = std::max(scale, fi.cwiseAbs().maxCoeff());
    }
    ib.scale = scale;
    ib.f0 /= scale;
    for (const auto& [coord, fi] : b.terms) {
      ib.coords.push_back(coord);
      ib.fis.push_back(fi / scale);
    }
    blocks.push_back(std::move(ib));
  }
  for (int i = 0; i < p; ++i) {
    if (problem.lower_bounds[i]) {
      IpBlock ib;
      ib.size = 1;
      ib.f0 = MatrixXd::Constant(1, 1, -*problem.lower_bounds[i]);
      ib.coords = {i};
      ib.fis = {MatrixXd::Constant(1, 1, 1.0)};
      blocks.push_back(std::move(ib));
    }
    if (problem.upper_bounds[i]) {
      IpBlock ib;
      ib.size = 1;
      ib.f0 = MatrixXd::Constant(1, 1, *problem.upper_bounds[i]);
      ib.coords = {i};
      ib.fis = {MatrixXd::Constant(1, 1, -1.0)};
      blocks.push_back(std::move(ib));
    }
  }
  const int nblocks = static_cast<int>(blocks.size());

  const double cscale = std::max(1.0, inf_norm(problem.c));
  const VectorXd c = problem.c / cscale;

  auto finish = [&](SdpStatus status, const VectorXd& y_hat, int iters, double gap) {
    sol.status = status;
    sol.y = y_hat;
    sol.iterations = iters;
    sol.duality_gap = gap;
    sol.objective = problem.c.dot(y_hat) + problem.objective_offset;
    double residual = std::numeric_limits<double>::infinity();
    for (const auto& b : problem.blocks) {
      if (b.size == 0) continue;
      const MatrixXd f = b.evaluate(y_hat) - b.margin * MatrixXd::Identity(b.size, b.size);
      residual = std::min(residual, min_eigenvalue(f));
    }
    for (int i = 0; i < p; ++i) {
      if (problem.lower_bounds[i]) residual = std::min(residual, y_hat(i) - *problem.lower_bounds[i]);
      if (problem.upper_bounds[i]) residual = std::min(residual, *problem.upper_bounds[i] - y_hat(i));
    }
    if (!std::isfinite(residual)) residual = 0.0;
    sol.residual = residual;
    return sol;
  };

  if (nblocks == 0) {
    // Unconstrained: optimal iff c == 0.
    if (inf_norm(c) == 0.0) return finish(SdpStatus::kOptimal, VectorXd::Zero(p), 0, 0.0);
    sol.ray_y = -problem.c.normalized();
    return finish(SdpStatus::kUnbounded, VectorXd::Zero(p), 0, 0.0);
  }

  IpState st;
  st.y = VectorXd::Zero(p);
  for (const auto& b : blocks) {
    st.X.push_back(MatrixXd::Identity(b.size, b.size));
    st.S.push_back(MatrixXd::Identity(b.size, b.size));
  }

  double nu = 1.0;
  for (const auto& b : blocks) nu += b.size;

  double best_merit = std::numeric_limits<double>::infinity();
  VectorXd best_y = VectorXd::Zero(p);
  double best_gap = std::numeric_limits<double>::infinity();
  double prev_mu = std::numeric_limits<double>::infinity();
  int mu_stall = 0;

  const double tol = opts.tolerance;
  auto stalled_finish = [&](int iters) {
    if (best_merit <= opts.accept_tolerance) {
      return finish(SdpStatus::kOptimal, best_y, iters, best_gap);
    }
    return finish(SdpStatus::kNumericalFailure, best_y, iters, best_gap);
  };
  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    // Residuals of the homogeneous embedding.
    VectorXd res_p = VectorXd::Zero(p);  // <F_i, X> - c_i tau
    for (int j = 0; j < nblocks; ++j) {
      for (size_t k = 0; k < blocks[j].coords.size(); ++k) {
        res_p(blocks[j].coords[k]) += frob_dot(blocks[j].fis[k], st.X[j]);
      }
    }
    res_p -= c * st.tau;

    std::vector<MatrixXd> res_d(nblocks);
    double norm_d = 0.0;
    for (int j = 0; j < nblocks; ++j) {
      MatrixXd d = blocks[j].f0 * st.tau - st.S[j];
      for (size_t k = 0; k < blocks[j].coords.size(); ++k) {
        d += st.y(blocks[j].coords[k]) * blocks[j].fis[k];
      }
      norm_d = std::max(norm_d, d.cwiseAbs().maxCoeff() / (1.0 + blocks[j].f0.cwiseAbs().maxCoeff()));
      res_d[j] = std::move(d);
    }

    double dot_f0_x = 0.0;
    for (int j = 0; j < nblocks; ++j) dot_f0_x += frob_dot(blocks[j].f0, st.X[j]);
    const double res_g = -c.dot(st.y) - dot_f0_x - st.kappa;

    double gap_xs = 0.0;
    for (int j = 0; j < nblocks; ++j) gap_xs += frob_dot(st.X[j], st.S[j]);
    const double mu = (gap_xs + st.tau * st.kappa) / nu;

    const double rel_p = inf_norm(res_p) / (st.tau * (1.0 + inf_norm(c)));
    const double rel_d = norm_d / st.tau;
    const double obj_pd = std::abs(c.dot(st.y) / st.tau) + std::abs(dot_f0_x / st.tau);
    const double rel_gap = gap_xs / (st.tau * st.tau) / (1.0 + obj_pd);

    const double merit = std::max({rel_p, rel_d, rel_gap});
    if (merit < best_merit) {
      best_merit = merit;
      best_y = st.y / st.tau;
      best_gap = rel_gap;
    }
    // Endgame detection: the barrier parameter has stopped contracting.
    if (mu > 0.97 * prev_mu) {
      if (++mu_stall >= 12) return stalled_finish(iter);
    } else {
      mu_stall = 0;
    }
    prev_mu = mu;

    if (opts.verbose) {
      std::cerr << "iter " << iter << " mu=" << mu << " rp=" << rel_p << " rd=" << rel_d
                << " gap=" << rel_gap << " tau=" << st.tau << " kappa=" << st.kappa << "\n";
    }

    if (rel_p <= tol && rel_d <= tol && rel_gap <= tol) {
      return finish(SdpStatus::kOptimal, st.y / st.tau, iter, rel_gap);
    }

    // Ray detection: embedding collapsing onto tau = 0.
    if (st.tau <= 1e-10 * std::max(1.0, st.kappa) && mu <= 1e-10) {
      double x_norm = 0.0;
      for (int j = 0; j < nblocks; ++j) x_norm = std::max(x_norm, st.X[j].cwiseAbs().maxCoeff());
      VectorXd ax = res_p + c * st.tau;  // <F_i, X>
      if (dot_f0_x < -1e-9 * x_norm && inf_norm(ax) <= 1e-7 * std::max(1.0, x_norm)) {
        for (int j = 0; j < nblocks; ++j) sol.ray_blocks.push_back(st.X[j] / x_norm);
        return finish(SdpStatus::kInfeasible, best_y, iter, best_gap);
      }
      const double y_norm = std::max(1.0, inf_norm(st.y));
      double ray_min = std::numeric_limits<double>::infinity();
      for (int j = 0; j < nblocks; ++j) {
        MatrixXd fy = MatrixXd::Zero(blocks[j].size, blocks[j].size);
        for (size_t k = 0; k < blocks[j].coords.size(); ++k) {
          fy += st.y(blocks[j].coords[k]) * blocks[j].fis[k];
        }
        ray_min = std::min(ray_min, min_eigenvalue(fy));
      }
      if (c.dot(st.y) < -1e-9 * y_norm && ray_min >= -1e-7 * y_norm) {
        sol.ray_y = st.y / y_norm;
        return finish(SdpStatus::kUnbounded, best_y, iter, best_gap);
      }
      return finish(SdpStatus::kNumericalFailure, best_y, iter, best_gap);
    }

    // NT scalings.
    std::vector<BlockScaling> scal(nblocks);
    bool scaling_ok = true;
    for (int j = 0; j < nblocks && scaling_ok; ++j) {
      scaling_ok = compute_nt_scaling(st.X[j], st.S[j], scal[j]);
    }
    if (!scaling_ok) return stalled_finish(iter);

    // Schur complement pieces shared by predictor and corrector.
    Eigen::MatrixXd schur = MatrixXd::Zero(p, p);
    VectorXd u = VectorXd::Zero(p);
    double v_f0 = 0.0;
    for (int j = 0; j < nblocks; ++j) {
      const auto& bj = blocks[j];
      const int nt = static_cast<int>(bj.coords.size());
      std::vector<MatrixXd> wfw(nt);
      for (int k = 0; k < nt; ++k) {
        wfw[k] = scal[j].w * bj.fis[k] * scal[j].w;
        symmetrize_in_place(wfw[k]);
      }
      const MatrixXd wf0w = scal[j].w * bj.f0 * scal[j].w;
      for (int k = 0; k < nt; ++k) {
        u(bj.coords[k]) += frob_dot(bj.fis[k], wf0w);
        for (int l = 0; l <= k; ++l) {
          const double mij = frob_dot(bj.fis[k], wfw[l]);
          schur(bj.coords[k], bj.coords[l]) += mij;
          if (l != k) schur(bj.coords[l], bj.coords[k]) += mij;
        }
      }
      v_f0 += frob_dot(bj.f0, wf0w);
    }

    Eigen::LDLT<MatrixXd> schur_fact(schur);
    if (schur_fact.info() != Eigen::Success) {
      schur += 1e-12 * (1.0 + schur.diagonal().cwiseAbs().maxCoeff()) *
               MatrixXd::Identity(p, p);
      schur_fact.compute(schur);
      if (schur_fact.info() != Eigen::Success) {
        return stalled_finish(iter);
      }
    }

    auto solve_direction = [&](const std::vector<MatrixXd>& rc, double rtk) -> Direction {
      Direction dir;
      VectorXd q = VectorXd::Zero(p);
      double w0 = 0.0;
      std::vector<MatrixXd> rc_minus_wdw(nblocks);
      for (int j = 0; j < nblocks; ++j) {
        MatrixXd rw = rc[j] - scal[j].w * res_d[j] * scal[j].w;
        symmetrize_in_place(rw);
        for (size_t k = 0; k < blocks[j].coords.size(); ++k) {
          q(blocks[j].coords[k]) += frob_dot(blocks[j].fis[k], rw);
        }
        w0 += frob_dot(blocks[j].f0, rw);
        rc_minus_wdw[j] = std::move(rw);
      }
      const VectorXd b1 = res_p + q;
      const double b2 = -res_g + w0 + rtk / st.tau;
      const VectorXd h1 = p > 0 ? VectorXd(schur_fact.solve(b1)) : VectorXd();
      const VectorXd h2 = p > 0 ? VectorXd(schur_fact.solve(u + c)) : VectorXd();
      const double denom = v_f0 + st.kappa / st.tau -
                           (p > 0 ? (u - c).dot(h2) : 0.0);
      double num = b2 - (p > 0 ? (u - c).dot(h1) : 0.0);
      dir.dtau = std::abs(denom) > 1e-300 ? num / denom : 0.0;
      dir.dy = p > 0 ? VectorXd(h1 - h2 * dir.dtau) : VectorXd();
      dir.dkappa = (rtk - st.kappa * dir.dtau) / st.tau;
      dir.dS.resize(nblocks);
      dir.dX.resize(nblocks);
      for (int j = 0; j < nblocks; ++j) {
        MatrixXd ds = blocks[j].f0 * dir.dtau + res_d[j];
        for (size_t k = 0; k < blocks[j].coords.size(); ++k) {
          ds += dir.dy(blocks[j].coords[k]) * blocks[j].fis[k];
        }
        symmetrize_in_place(ds);
        MatrixXd dx = rc[j] - scal[j].w * ds * scal[j].w;
        symmetrize_in_place(dx);
        dir.dS[j] = std::move(ds);
        dir.dX[j] = std::move(dx);
      }
      return dir;
    };

    auto max_step = [&](const Direction& dir) {
      double alpha = 1.0 / 0.98;  // allow a full step after the safety factor
      for (int j = 0; j < nblocks; ++j) {
        alpha = std::min(alpha, step_to_boundary(st.X[j], dir.dX[j]));
        alpha = std::min(alpha, step_to_boundary(st.S[j], dir.dS[j]));
      }
      if (dir.dtau < 0.0) alpha = std::min(alpha, -st.tau / dir.dtau);
      if (dir.dkappa < 0.0) alpha = std::min(alpha, -st.kappa / dir.dkappa);
      return alpha;
    };

    // Predictor.
    std::vector<MatrixXd> rc_aff(nblocks);
    for (int j = 0; j < nblocks; ++j) rc_aff[j] = -st.X[j];
    Direction aff = solve_direction(rc_aff, -st.tau * st.kappa);
    const double alpha_aff = std::min(1.0, 0.98 * max_step(aff));

    double gap_aff = 0.0;
    for (int j = 0; j < nblocks; ++j) {
      gap_aff += frob_dot(st.X[j] + alpha_aff * aff.dX[j], st.S[j] + alpha_aff * aff.dS[j]);
    }
    gap_aff += (st.tau + alpha_aff * aff.dtau) * (st.kappa + alpha_aff * aff.dkappa);
    const double mu_aff = std::max(gap_aff / nu, 0.0);
    double sigma = std::pow(mu_aff / mu, 3.0);
    sigma = std::clamp(sigma, 1e-8, 1.0);

    // Corrector.
    std::vector<MatrixXd> rc(nblocks);
    for (int j = 0; j < nblocks; ++j) {
      const MatrixXd dxt = scal[j].ginv * aff.dX[j] * scal[j].ginv;
      const MatrixXd dst = scal[j].g * aff.dS[j] * scal[j].g;
      MatrixXd corr = 0.5 * (dxt * dst + dst * dxt);
      const MatrixXd v = scal[j].g * st.S[j] * scal[j].g;
      MatrixXd rhs = sigma * mu * MatrixXd::Identity(blocks[j].size, blocks[j].size) -
                     v * v - corr;
      symmetrize_in_place(rhs);
      rc[j] = scal[j].g * lyapunov_solve(scal[j].v_eig, rhs) * scal[j].g;
      symmetrize_in_place(rc[j]);
    }
    const double rtk = sigma * mu - st.tau * st.kappa - aff.dtau * aff.dkappa;
    Direction dir = solve_direction(rc, rtk);

    double alpha = std::min(1.0, 0.98 * max_step(dir));
    if (!std::isfinite(alpha) || alpha <= 1e-12) {
      return stalled_finish(iter);
    }

    for (int j = 0; j < nblocks; ++j) {
      st.X[j] += alpha * dir.dX[j];
      st.S[j] += alpha * dir.dS[j];
      symmetrize_in_place(st.X[j]);
      symmetrize_in_place(st.S[j]);
    }
    st.y += alpha * dir.dy;
    st.tau += alpha * dir.dtau;
    st.kappa += alpha * dir.dkappa;
    if (st.tau <= 0.0 || st.kappa <= 0.0 || !std::isfinite(st.tau)) {
      return stalled_finish(iter);
    }
  }

  if (best_merit <= opts.accept_tolerance) {
    return finish(SdpStatus::kOptimal, best_y, iter, best_gap);
  }
  return finish(SdpStatus::kMaxIter, best_y, iter, best_gap);
}

SdpSolution solve(const LmiProblem& problem, const SolverOptions& opts) {
  InteriorPointSolver solver;
  return solver.solve(problem, opts);
}

// ---------------------------------------------------------------------------
// Debug dump
// ---------------------------------------------------------------------------

namespace {
nlohmann::json triplets(const MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (int c = 0; c < m.cols(); ++c) {
    for (int r = 0; r <= c; ++r) {
      if (m(r, c) != 0.0) out.push_back({r, c, m(r, c)});
    }
  }
  return out;
}

const char* kind_name(VarKind k) {
  switch (k) {
    case VarKind::kScalar: return "scalar";
    case VarKind::kVector: return "vector";
    case VarKind::kMatrix: return "matrix";
    case VarKind::kSymmetric: return "symmetric";
  }
  return "unknown";
}
}  // namespace

nlohmann::json dump_problem_json(const LmiProblem& problem, const VariableSet* vars) {
  nlohmann::json j;
  j["schema"] = "rddp-lmi/1";
  j["num_coords"] = problem.num_coords;
  j["objective"] = std::vector<double>(problem.c.data(), problem.c.data() + problem.c.size());
  j["objective_offset"] = problem.objective_offset;
  if (vars != nullptr) {
    nlohmann::json vt = nlohmann::json::array();
    for (const auto& v : vars->vars()) {
      vt.push_back({{"name", v.name},
                    {"kind", kind_name(v.kind)},
                    {"rows", v.rows},
                    {"cols", v.cols},
                    {"offset", v.offset},
                    {"count", v.count}});
    }
    j["variables"] = vt;
  }
  nlohmann::json jb = nlohmann::json::array();
  for (const auto& b : problem.blocks) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [coord, fi] : b.terms) {
      terms.push_back({{"coord", coord}, {"entries", triplets(fi)}});
    }
    jb.push_back({{"size", b.size},
                  {"margin", b.margin},
                  {"f0", triplets(b.f0)},
                  {"terms", terms}});
  }
  j["blocks"] = jb;
  nlohmann::json lo = nlohmann::json::array();
  nlohmann::json hi = nlohmann::json::array();
  for (int i = 0; i < problem.num_coords; ++i) {
    if (problem.lower_bounds[i]) lo.push_back({i, *problem.lower_bounds[i]});
    if (problem.upper_bounds[i]) hi.push_back({i, *problem.upper_bounds[i]});
  }
  j["lower_bounds"] = lo;
  j["upper_bounds"] = hi;
  return j;
}

}  // namespace rddp
