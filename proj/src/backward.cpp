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
#include "rddp/backward.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace rddp {

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kAuto: return "auto";
    case Strategy::kSimple: return "simple";
    case Strategy::kDual: return "dual";
    case Strategy::kCanonical: return "canonical";
  }
  return "unknown";
}

const char* to_string(QMethod q) {
  return q == QMethod::kTaylor ? "taylor" : "linearized";
}

const char* to_string(StepStatus s) {
  switch (s) {
    case StepStatus::kOptimal: return "optimal";
    case StepStatus::kNotApplicable: return "not_applicable";
    case StepStatus::kRegularityViolated: return "regularity_violated";
    case StepStatus::kRankDeficient: return "rank_deficient";
    case StepStatus::kInfeasible: return "infeasible";
    case StepStatus::kPrimalCheckFailed: return "primal_check_failed";
    case StepStatus::kNumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

MatrixXd SigmaSchedule::at(int n) const {
  if (fixed) return *fixed;
  MatrixXd sigma = rho * MatrixXd::Identity(1 + n, 1 + n);
  sigma(0, 0) = 1.0;
  return sigma;
}

namespace {

// J(K): (1, dx, dw) -> (1, dx, u(K), dw).
MatrixXd policy_embed(const VectorXd& k1, const MatrixXd& k2, const BlockDims& dims) {
  const int n = dims.n, m = dims.m, d = dims.d;
  MatrixXd j = MatrixXd::Zero(dims.total(), 1 + n + d);
  j(0, 0) = 1.0;
  j.block(1, 1, n, n).setIdentity();
  j.block(1 + n, 0, m, 1) = k1;
  j.block(1 + n, 1, m, n) = k2;
  j.block(1 + n + m, 1 + n, d, d).setIdentity();
  return j;
}

MatrixXd embed_value(const MatrixXd& p, const BlockDims& dims) {
  MatrixXd out = MatrixXd::Zero(dims.total(), dims.total());
  out.topLeftCorner(1 + dims.n, 1 + dims.n) = p;
  return out;
}

double q_scale(const PartitionedQuad& q) {
  return 1.0 + q.matrix().cwiseAbs().maxCoeff();
}

struct Perturbation {
  bool violated = false;
  double epsilon = 0.0;
  MatrixXd q;  // Q + eps I
};

// Q must be positive definite for the inverse parametrizations. Thin or
// mildly indefinite spectra are lifted to the floor as long as the shift
// stays within the budget; lifting only raises the Q model, so the bound
// stays valid. A smaller floor trades Bellman bias for inversion noise;
// the equivalence route tolerates a thin inverse, the factorization route
// prefers the budget end.
Perturbation perturb_to_pd(const PartitionedQuad& q, double floor_scale,
                           double budget_scale) {
  Perturbation out;
  const double scale = q_scale(q);
  const double lam = min_eigenvalue(q.matrix());
  const double floor = floor_scale * scale;
  const double needed = std::max(0.0, floor - lam);
  if (needed > budget_scale * scale + 1e-9 * scale) {
    out.violated = true;
    return out;
  }
  out.epsilon = needed;
  out.q = q.matrix();
  if (out.epsilon > 0.0) {
    out.q += out.epsilon * MatrixXd::Identity(q.matrix().rows(), q.matrix().cols());
  }
  return out;
}

MatrixXd sym_inverse(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  MatrixXd inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                 es.eigenvectors().transpose();
  symmetrize_in_place(inv);
  return inv;
}

// Shared post-solve bookkeeping: evaluates the realized inequality and the
// derivation-side conditions, then re-extracts the policy and value as the
// analytic optimum given the solved multipliers. The LMI pins K and P only
// up to the square root of the solver tolerance along flat directions of
// the trace objective; the explicit minimizer
//   du* = -(Qbar_uu - Qbar_uw Qbar_ww^{-1} Qbar_wu)^{-1} [eliminated rows]
// with the Bellman update at du* is exact given (P_next, lambda) and is
// strictly feasible by construction.
void finalize_step(BackwardStepResult& result, const PartitionedQuad& q_effective,
                   const MultiplierSet& m, const MatrixXd& sigma, double margin,
                   const BlockDims& dims) {
  MatrixXd qbar_mat = q_effective.matrix();
  if (result.lambda.size() > 0) qbar_mat += m.combine(result.lambda);
  const PartitionedQuad qbar(qbar_mat, dims);
  const int n = dims.n, mm = dims.m;
  const double scale = 1.0 + qbar_mat.cwiseAbs().maxCoeff();
  const double strictness = 1e-9 * scale;

  result.qbar44_max_eig = dims.d > 0 ? max_eigenvalue(qbar.Q44()) : -1.0;
  MatrixXd reduced;  // over (1, dx, du) after eliminating dw
  if (dims.d > 0 && result.qbar44_max_eig < 0.0) {
    const int keep = 1 + n + mm;
    const MatrixXd q44inv = sym_inverse(qbar.Q44());
    const MatrixXd a = qbar.matrix().topLeftCorner(keep, keep);
    const MatrixXd b = qbar.matrix().topRightCorner(keep, dims.d);
    reduced = a - b * q44inv * b.transpose();
    symmetrize_in_place(reduced);
  } else {
    reduced = qbar.matrix().topLeftCorner(1 + n + mm, 1 + n + mm);
  }
  const MatrixXd schur_u = reduced.block(1 + n, 1 + n, mm, mm);
  result.u_schur_min_eig = min_eigenvalue(schur_u);

  double best_margin = max_eigenvalue(
      realized_backward_inequality(qbar, result.p, result.k1, result.k2));
  const double trace_sdp = (sigma.cwiseProduct(result.p)).sum();

  if ((dims.d == 0 || result.qbar44_max_eig < 0.0) && result.u_schur_min_eig > 0.0) {
    const auto fact = schur_u.ldlt();
    const VectorXd k1_ref = -fact.solve(reduced.block(1 + n, 0, mm, 1)).col(0);
    const MatrixXd k2_ref = -fact.solve(reduced.block(1 + n, 1, mm, n));

    MatrixXd jxu = MatrixXd::Zero(1 + n + mm, 1 + n);
    jxu(0, 0) = 1.0;
    jxu.block(1, 1, n, n).setIdentity();
    jxu.block(1 + n, 0, mm, 1) = k1_ref;
    jxu.block(1 + n, 1, mm, n) = k2_ref;
    MatrixXd p_ref = jxu.transpose() * reduced * jxu;
    symmetrize_in_place(p_ref);
    // Strictness pad: wide enough to clear the certificate check, thin
    // enough not to accumulate visibly through the recursion.
    p_ref += 0.2 * margin * MatrixXd::Identity(1 + n, 1 + n);

    const double margin_pair = max_eigenvalue(
        realized_backward_inequality(qbar, p_ref, k1_ref, k2_ref));
    const double trace_ref = (sigma.cwiseProduct(p_ref)).sum();
    if (margin_pair <= -strictness && min_eigenvalue(p_ref) > 0.0 &&
        trace_ref <= trace_sdp + 1e-6 * (1.0 + std::abs(trace_sdp))) {
      result.k1 = k1_ref;
      result.k2 = k2_ref;
      result.p = p_ref;
      best_margin = margin_pair;
    } else {
      // Keep the solved value; still prefer the analytic gain when it does
      // not worsen the certificate.
      const double margin_kref = max_eigenvalue(
          realized_backward_inequality(qbar, result.p, k1_ref, k2_ref));
      if (margin_kref <= best_margin + 1e-12) {
        result.k1 = k1_ref;
        result.k2 = k2_ref;
        best_margin = margin_kref;
      }
    }
  }
  result.certificate_margin = best_margin;

  // Interior-point solutions can graze the boundary. Raising P by a small
  // multiple of the identity keeps the bound valid (the certified value
  // only grows) and restores a strict certificate when the active
  // direction involves the value block.
  if (result.certificate_margin > -strictness) {
    const double delta = result.certificate_margin + 2.0 * strictness;
    const MatrixXd p_lifted =
        result.p + delta * MatrixXd::Identity(1 + n, 1 + n);
    const MatrixXd realized_lifted =
        realized_backward_inequality(qbar, p_lifted, result.k1, result.k2);
    const double margin_lifted = max_eigenvalue(realized_lifted);
    if (margin_lifted <= -strictness) {
      result.p = p_lifted;
      result.certificate_margin = margin_lifted;
    }
  }
  result.trace_objective = (sigma.cwiseProduct(result.p)).sum();

  if (result.certificate_margin > -strictness) {
    result.status = StepStatus::kPrimalCheckFailed;
    result.note = "realized backward inequality not negative definite";
  }
}

StepStatus map_solver_status(SdpStatus status) {
  switch (status) {
    case SdpStatus::kOptimal: return StepStatus::kOptimal;
    case SdpStatus::kInfeasible: return StepStatus::kInfeasible;
    default: return StepStatus::kNumericalFailure;
  }
}

}  // namespace

MatrixXd realized_backward_inequality(const PartitionedQuad& qbar, const MatrixXd& p,
                                      const VectorXd& k1, const MatrixXd& k2) {
  const BlockDims& dims = qbar.dims();
  const MatrixXd j = policy_embed(k1, k2, dims);
  MatrixXd realized = j.transpose() * (qbar.matrix() - embed_value(p, dims)) * j;
  symmetrize_in_place(realized);
  return realized;
}

BackwardStepResult backward_step_simple(const PartitionedQuad& q, const MultiplierSet& m,
                                        const MatrixXd& sigma, const StepOptions& opts) {
  const BlockDims dims = q.dims();
  const int n = dims.n, mm = dims.m, d = dims.d;
  BackwardStepResult result;
  result.strategy_used = Strategy::kSimple;

  // Structural precondition: generators never touch the du row, so the
  // third block row of Qbar carries no decision variables.
  const int u_off = 1 + n;
  for (const auto& gen : m.generators) {
    const double row_mag = gen.m.block(u_off, 0, mm, dims.total()).cwiseAbs().maxCoeff();
    if (row_mag > 1e-12 * (1.0 + gen.m.cwiseAbs().maxCoeff())) {
      result.status = StepStatus::kNotApplicable;
      result.note = "generator has entries in the du row";
      return result;
    }
  }
  const MatrixXd q33 = q.Q33();
  if (!is_positive_definite(q33)) {
    result.status = StepStatus::kNotApplicable;
    result.note = "Q33 is not positive definite";
    return result;
  }
  const MatrixXd q33_inv = sym_inverse(q33);

  const int s = m.size();
  const double margin = opts.margin_scale * q_scale(q);

  VariableSet vars;
  vars.add_symmetric("P", 1 + n);
  vars.add_vector("k1", mm);
  if (n > 0) vars.add_matrix("K2", mm, n);
  if (s > 0) vars.add_vector("lambda", s);

  auto qbar_zero33 = [&](const Assignment& a) {
    MatrixXd qa = q.matrix();
    if (s > 0) {
      const VectorXd lam = a.vec("lambda");
      for (int i = 0; i < s; ++i) qa += lam(i) * m.generators[i].m;
    }
    qa.block(u_off, u_off, mm, mm).setZero();
    return qa;
  };

  std::vector<ConstraintSpec> constraints;
  constraints.push_back(
      {[&, q33_inv](const Assignment& a) -> MatrixXd {
         const VectorXd k1 = a.vec("k1");
         const MatrixXd k2 = n > 0 ? a.mat("K2") : MatrixXd::Zero(mm, 0);
         const MatrixXd j = policy_embed(k1, k2, dims);
         MatrixXd p(1 + n, 1 + n);
         p = a.mat("P");
         const MatrixXd l = j.transpose() * (qbar_zero33(a) - embed_value(p, dims)) * j;
         MatrixXd k_stack = MatrixXd::Zero(mm, 1 + n + d);
         k_stack.col(0) = k1;
         k_stack.block(0, 1, mm, n) = k2;
         const int sz = (1 + n + d) + mm;
         MatrixXd big(sz, sz);
         big.topLeftCorner(1 + n + d, 1 + n + d) = -l;
         big.topRightCorner(1 + n + d, mm) = -k_stack.transpose();
         big.bottomLeftCorner(mm, 1 + n + d) = -k_stack;
         big.bottomRightCorner(mm, mm) = q33_inv;
         return big;
       },
       margin});
  constraints.push_back(
      {[&](const Assignment& a) -> MatrixXd { return a.mat("P"); }, 1e-9 * q_scale(q)});

  const auto objective = [&](const Assignment& a) {
    return (sigma.cwiseProduct(a.mat("P"))).sum();
  };

  LmiProblem problem = assemble(vars, constraints, objective, margin);
  if (s > 0) set_lower_bound(problem, vars, "lambda", 0.0);

  const SdpSolution sol = solve(problem, opts.solver);
  result.status = map_solver_status(sol.status);
  result.solver_status = sol.status;
  if (result.status != StepStatus::kOptimal) return result;

  const Assignment out = Assignment::from_coords(vars, sol.y);
  result.k1 = out.vec("k1");
  result.k2 = n > 0 ? out.mat("K2") : MatrixXd::Zero(mm, 0);
  result.p = out.mat("P");
  result.lambda = s > 0 ? VectorXd(out.vec("lambda")) : VectorXd();
  finalize_step(result, q, m, sigma, margin, dims);
  return result;
}

namespace {

// Box-channel structure shared by the dual strategy: z rows stacked in
// generator order and the per-coordinate channel index over dw.
struct ChannelStructure {
  bool ok = false;
  MatrixXd hz;                   // d x (1+n+m+d)
  std::vector<int> channel_of;   // w coordinate -> generator index
  std::vector<int> z_rows_of;    // generator -> number of rows
  std::string why;
};

ChannelStructure channel_structure(const MultiplierSet& m, const BlockDims& dims) {
  ChannelStructure cs;
  const int d = dims.d;
  cs.channel_of.assign(d, -1);
  int total_rows = 0;
  for (const auto& gen : m.generators) total_rows += static_cast<int>(gen.w_indices.size());
  if (total_rows != d) {
    cs.why = "channels do not cover every disturbance coordinate";
    return cs;
  }
  cs.hz = MatrixXd::Zero(d, dims.total());
  int row = 0;
  for (int i = 0; i < m.size(); ++i) {
    const auto& gen = m.generators[i];
    if (gen.w_indices.empty() ||
        gen.mp.rows() != static_cast<Eigen::Index>(gen.w_indices.size())) {
      cs.why = "generator is not a box channel";
      return cs;
    }
    for (size_t k = 0; k < gen.w_indices.size(); ++k) {
      const int w = gen.w_indices[k];
      if (w < 0 || w >= d || cs.channel_of[w] != -1) {
        cs.why = "channels overlap or index out of range";
        return cs;
      }
      cs.channel_of[w] = i;
      cs.hz.row(row++) = gen.mp.row(static_cast<int>(k));
    }
    cs.z_rows_of.push_back(static_cast<int>(gen.w_indices.size()));
  }
  cs.ok = true;
  return cs;
}

}  // namespace

BackwardStepResult backward_step_dual(const PartitionedQuad& q, const MultiplierSet& m,
                                      const MatrixXd& sigma, const StepOptions& opts) {
  const BlockDims dims = q.dims();
  const int n = dims.n, mm = dims.m, d = dims.d;
  BackwardStepResult result;
  result.strategy_used = Strategy::kDual;

  ChannelStructure cs;
  if (d > 0) {
    cs = channel_structure(m, dims);
    if (!cs.ok) {
      result.status = StepStatus::kNotApplicable;
      result.note = cs.why;
      return result;
    }
  }

  // The equivalence route tolerates a thin inverse, so the lift stays two
  // decades under the budget to keep the Bellman bias negligible.
  const Perturbation pert = perturb_to_pd(q, 0.01 * opts.epsilon_budget, opts.epsilon_budget);
  if (pert.violated) {
    result.status = StepStatus::kRegularityViolated;
    result.note = "Q indefinite beyond the perturbation budget";
    return result;
  }
  result.epsilon_perturbation = pert.epsilon;
  const PartitionedQuad q_eff(pert.q, dims);
  const MatrixXd q_tilde = sym_inverse(pert.q);

  const int s = m.size();
  const int b = d + dims.total();  // z rows plus the full (1,dx,du,dw) rows
  // Strictness on the dual side maps through the dualization congruence
  // with an instance-dependent factor; keep it nearly neutral and let the
  // a-posteriori certificate check carry the strictness requirement.
  const double margin = 1e-2 * opts.margin_scale * q_scale(q);

  VariableSet vars;
  vars.add_symmetric("P", 1 + n);
  vars.add_vector("k1", mm);
  if (n > 0) vars.add_matrix("K2", mm, n);
  if (s > 0) vars.add_vector("lt", s);  // inverted multipliers 1/lambda_i

  std::vector<ConstraintSpec> constraints;
  constraints.push_back(
      {[&, q_tilde](const Assignment& a) -> MatrixXd {
         const VectorXd k1 = a.vec("k1");
         const MatrixXd k2 = n > 0 ? a.mat("K2") : MatrixXd::Zero(mm, 0);
         const MatrixXd j = policy_embed(k1, k2, dims);

         // W(K) = [Hz J; J] over columns (1, dx | dw).
         MatrixXd w(b, 1 + n + d);
         if (d > 0) w.topRows(d) = cs.hz * j;
         w.bottomRows(dims.total()) = j;

         const MatrixXd v_cols = w.leftCols(1 + n);
         const MatrixXd rw = w.rightCols(d).transpose();  // d x b

         MatrixXd phi = MatrixXd::Zero(b, b);
         phi.bottomRightCorner(dims.total(), dims.total()) = q_tilde;
         if (s > 0) {
           const VectorXd lt = a.vec("lt");
           int row = 0;
           for (int i = 0; i < s; ++i) {
             for (int r = 0; r < cs.z_rows_of[i]; ++r) phi(row + r, row + r) += lt(i);
             row += cs.z_rows_of[i];
           }
           VectorXd dw_diag(d);
           for (int wcoord = 0; wcoord < d; ++wcoord) dw_diag(wcoord) = lt(cs.channel_of[wcoord]);
           phi -= rw.transpose() * dw_diag.asDiagonal() * rw;
         }

         const int sz = b + 1 + n;
         MatrixXd big(sz, sz);
         big.topLeftCorner(b, b) = phi;
         big.topRightCorner(b, 1 + n) = v_cols;
         big.bottomLeftCorner(1 + n, b) = v_cols.transpose();
         big.bottomRightCorner(1 + n, 1 + n) = a.mat("P");
         return big;
       },
       margin});

  const auto objective = [&](const Assignment& a) {
    return (sigma.cwiseProduct(a.mat("P"))).sum();
  };

  LmiProblem problem = assemble(vars, constraints, objective, margin);
  if (s > 0) {
    set_lower_bound(problem, vars, "lt", 1e-9);
    set_upper_bound(problem, vars, "lt", 1e9);
  }

  const SdpSolution sol = solve(problem, opts.solver);
  result.solver_status = sol.status;
  result.status = map_solver_status(sol.status);
  if (result.status != StepStatus::kOptimal) return result;

  const Assignment out = Assignment::from_coords(vars, sol.y);
  result.k1 = out.vec("k1");
  result.k2 = n > 0 ? out.mat("K2") : MatrixXd::Zero(mm, 0);
  result.p = out.mat("P");
  if (s > 0) {
    const VectorXd lt = out.vec("lt");
    result.lambda = lt.cwiseInverse();
  }
  finalize_step(result, q_eff, m, sigma, margin, dims);
  if (result.status == StepStatus::kPrimalCheckFailed) {
    // The dualization lemma makes the two sides equivalent; a failure here
    // is a numerical artifact, not a structural one.
    result.status = StepStatus::kNumericalFailure;
  }
  return result;
}

BackwardStepResult backward_step_canonical(const PartitionedQuad& q, const MultiplierSet& m,
                                           const MatrixXd& sigma, const StepOptions& opts) {
  const BlockDims dims = q.dims();
  const int n = dims.n, mm = dims.m, d = dims.d;
  const int total = dims.total();
  BackwardStepResult result;
  result.strategy_used = Strategy::kCanonical;

  const int s = m.size();
  int r_mp = 0, r_mm = 0;
  for (const auto& gen : m.generators) {
    r_mp += static_cast<int>(gen.mp.rows());
    r_mm += static_cast<int>(gen.mm.rows());
  }
  MatrixXd mp_stack(r_mp, total), mm_stack(r_mm, total);
  {
    int rp = 0, rm = 0;
    for (const auto& gen : m.generators) {
      mp_stack.middleRows(rp, gen.mp.rows()) = gen.mp;
      rp += static_cast<int>(gen.mp.rows());
      mm_stack.middleRows(rm, gen.mm.rows()) = gen.mm;
      rm += static_cast<int>(gen.mm.rows());
    }
  }

  const int w_off = 1 + n + mm;
  const MatrixXd w12 = mm_stack.middleCols(w_off, d);  // r_mm x d
  if (d > 0) {
    if (r_mm == 0) {
      result.status = StepStatus::kRankDeficient;
      result.note = "no factor rows cover the disturbance block";
      return result;
    }
    Eigen::JacobiSVD<MatrixXd> svd(w12);
    if (svd.singularValues().size() < d || svd.singularValues()(d - 1) <= 1e-9) {
      result.status = StepStatus::kRankDeficient;
      result.note = "W12 factor is column-rank deficient";
      return result;
    }
  }

  const Perturbation pert = perturb_to_pd(q, opts.epsilon_budget, opts.epsilon_budget);
  if (pert.violated) {
    result.status = StepStatus::kRegularityViolated;
    result.note = "Q indefinite beyond the perturbation budget";
    return result;
  }
  result.epsilon_perturbation = pert.epsilon;
  const PartitionedQuad q_eff(pert.q, dims);
  const MatrixXd q_tilde = sym_inverse(pert.q);

  const MatrixXd w12_pinv =
      d > 0 ? MatrixXd((w12.transpose() * w12).ldlt().solve(w12.transpose()))
            : MatrixXd::Zero(0, r_mm);
  const MatrixXd w22 = mp_stack.middleCols(w_off, d);  // r_mp x d
  MatrixXd w32 = MatrixXd::Zero(total, d);
  w32.block(w_off, 0, d, d).setIdentity();
  const MatrixXd wt12 = w22 * w12_pinv;  // r_mp x r_mm
  const MatrixXd wt22 = w32 * w12_pinv;  // total x r_mm

  const double margin = 1e-2 * opts.margin_scale * q_scale(q);

  VariableSet vars;
  vars.add_symmetric("P", 1 + n);
  vars.add_vector("k1", mm);
  if (n > 0) vars.add_matrix("K2", mm, n);
  if (s > 0) vars.add_vector("lt", s);

  auto policy_xu = [&](const VectorXd& k1, const MatrixXd& k2) {
    MatrixXd jxu = MatrixXd::Zero(total, 1 + n);
    jxu(0, 0) = 1.0;
    jxu.block(1, 1, n, n).setIdentity();
    jxu.block(1 + n, 0, mm, 1) = k1;
    jxu.block(1 + n, 1, mm, n) = k2;
    return jxu;
  };

  std::vector<ConstraintSpec> constraints;
  constraints.push_back(
      {[&, q_tilde](const Assignment& a) -> MatrixXd {
         const VectorXd k1 = a.vec("k1");
         const MatrixXd k2 = n > 0 ? a.mat("K2") : MatrixXd::Zero(mm, 0);
         const MatrixXd jxu = policy_xu(k1, k2);
         const MatrixXd w11 = mm_stack * jxu;  // r_mm x (1+n)
         const MatrixXd w21 = mp_stack * jxu;  // r_mp x (1+n)
         const MatrixXd w31 = jxu;             // total x (1+n)
         const MatrixXd wt11 = w21 - wt12 * w11;  // r_mp x (1+n)
         const MatrixXd wt21 = w31 - wt22 * w11;  // total x (1+n)

         VectorXd s1_diag = VectorXd::Zero(r_mp);
         VectorXd s2_diag = VectorXd::Zero(r_mm);
         if (s > 0) {
           const VectorXd lt = a.vec("lt");
           int rp = 0, rm = 0;
           for (int i = 0; i < s; ++i) {
             const int np = static_cast<int>(m.generators[i].mp.rows());
             const int nm2 = static_cast<int>(m.generators[i].mm.rows());
             s1_diag.segment(rp, np).setConstant(lt(i));
             s2_diag.segment(rm, nm2).setConstant(lt(i));
             rp += np;
             rm += nm2;
           }
         }

         const int sz = r_mp + total + 1 + n;
         MatrixXd big = MatrixXd::Zero(sz, sz);
         big.topLeftCorner(r_mp, r_mp) =
             MatrixXd(s1_diag.asDiagonal()) - wt12 * s2_diag.asDiagonal() * wt12.transpose();
         big.block(0, r_mp, r_mp, total) = -wt12 * s2_diag.asDiagonal() * wt22.transpose();
         big.block(r_mp, 0, total, r_mp) = big.block(0, r_mp, r_mp, total).transpose();
         big.block(r_mp, r_mp, total, total) =
             q_tilde - wt22 * s2_diag.asDiagonal() * wt22.transpose();
         big.block(0, r_mp + total, r_mp, 1 + n) = wt11;
         big.block(r_mp + total, 0, 1 + n, r_mp) = wt11.transpose();
         big.block(r_mp, r_mp + total, total, 1 + n) = wt21;
         big.block(r_mp + total, r_mp, 1 + n, total) = wt21.transpose();
         big.bottomRightCorner(1 + n, 1 + n) = a.mat("P");
         return big;
       },
       margin});

  const auto objective = [&](const Assignment& a) {
    return (sigma.cwiseProduct(a.mat("P"))).sum();
  };

  LmiProblem problem = assemble(vars, constraints, objective, margin);
  if (s > 0) {
    set_lower_bound(problem, vars, "lt", 1e-9);
    set_upper_bound(problem, vars, "lt", 1e9);
  }

  const SdpSolution sol = solve(problem, opts.solver);
  result.solver_status = sol.status;
  result.status = map_solver_status(sol.status);
  if (result.status != StepStatus::kOptimal) return result;

  const Assignment out = Assignment::from_coords(vars, sol.y);
  result.k1 = out.vec("k1");
  result.k2 = n > 0 ? out.mat("K2") : MatrixXd::Zero(mm, 0);
  result.p = out.mat("P");
  if (s > 0) result.lambda = out.vec("lt").cwiseInverse();
  finalize_step(result, q_eff, m, sigma, margin, dims);
  return result;
}

BackwardPassResult run_backward_pass(const GeneralizedPlant& plant,
                                     const std::vector<VectorXd>& xs,
                                     const std::vector<VectorXd>& us,
                                     const ValueQuad& v_terminal,
                                     const BackwardOptions& opts) {
  const int T = plant.horizon;
  if (static_cast<int>(xs.size()) != T + 1 || static_cast<int>(us.size()) != T) {
    throw DimensionMismatch("run_backward_pass: trajectory needs T+1 states and T inputs");
  }
  // Algorithm requirement: the terminal model dominates the terminal cost.
  {
    const ValueQuad vt_plant = plant.terminal_value().reanchored(xs[T]);
    const MatrixXd diff = v_terminal.matrix() - vt_plant.matrix();
    if (!is_positive_semidefinite(diff, 1e-7)) {
      throw std::invalid_argument("run_backward_pass: v_terminal does not dominate V_T");
    }
  }

  BackwardPassResult out;
  out.values.assign(T + 1, ValueQuad());
  out.values[T] = v_terminal;
  out.steps.resize(T);
  out.policies.resize(T);

  const BlockDims dims{plant.n, plant.m, plant.d};
  const VectorXd w0 = VectorXd::Zero(plant.d);
  const MatrixXd sigma = opts.sigma.at(plant.n);

  for (int t = T - 1; t >= 0; --t) {
    PartitionedQuad q = opts.qmethod == QMethod::kTaylor
                            ? taylor_q(plant, xs[t], us[t], w0, out.values[t + 1])
                            : linearized_q_at(plant, xs[t], us[t], w0, out.values[t + 1]);
    if (opts.regularization_mu) {
      q = regularize(q, *opts.regularization_mu).q;
    }

    MultiplierSet mset;
    mset.dims = dims;
    if (plant.d > 0 && !plant.channels.empty()) {
      const MatrixXd z_rows = linearize_output(plant, xs[t], us[t], w0);
      mset = box_multipliers(z_rows, plant.channels, dims);
    }

    BackwardStepResult step;
    auto attempt = [&](Strategy strat) {
      switch (strat) {
        case Strategy::kSimple: return backward_step_simple(q, mset, sigma, opts.step);
        case Strategy::kDual: return backward_step_dual(q, mset, sigma, opts.step);
        default: return backward_step_canonical(q, mset, sigma, opts.step);
      }
    };
    if (opts.strategy == Strategy::kAuto) {
      step = attempt(Strategy::kSimple);
      const auto fallthrough = [](StepStatus st) {
        return st == StepStatus::kNotApplicable || st == StepStatus::kRegularityViolated ||
               st == StepStatus::kRankDeficient;
      };
      if (fallthrough(step.status)) step = attempt(Strategy::kDual);
      if (fallthrough(step.status)) step = attempt(Strategy::kCanonical);
    } else {
      step = attempt(opts.strategy);
    }

    out.steps[t] = step;
    if (opts.strategy == Strategy::kAuto || true) {
      BackwardStepTrace tr;
      tr.t = t;
      tr.strategy = step.strategy_used;
      tr.status = step.status;
      tr.trace_objective = step.trace_objective;
      tr.certificate_margin = step.certificate_margin;
      if (step.lambda.size() > 0) {
        tr.lambda.assign(step.lambda.data(), step.lambda.data() + step.lambda.size());
      }
      out.trace.push_back(tr);
    }
    if (step.status != StepStatus::kOptimal) {
      out.ok = false;
      out.failed_t = t;
      out.message = std::string("backward step failed at t = ") + std::to_string(t) + ": " +
                    to_string(step.status) + (step.note.empty() ? "" : " (" + step.note + ")");
      return out;
    }

    out.values[t] = ValueQuad(step.p, xs[t]);
    out.policies[t] = AffinePolicy{xs[t], us[t], step.k1, step.k2};
  }
  out.ok = true;
  return out;
}

}  // namespace rddp
