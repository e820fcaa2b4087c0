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
#include "rddp/qapprox.hpp"

#include <cmath>

namespace rddp {

namespace {

double fd_step(double coord) { return 1e-6 * (1.0 + std::abs(coord)); }

// d(jacobian columns)/d(coordinate) by differencing the provider output.
std::vector<MatrixXd> dynamics_hessians(const GeneralizedPlant& plant, const VectorXd& x,
                                        const VectorXd& u, const VectorXd& w) {
  const int n = plant.n, m = plant.m, d = plant.d;
  const int dim = n + m + d;
  std::vector<MatrixXd> hess(n, MatrixXd::Zero(dim, dim));

  auto stacked_jacobian = [&](const VectorXd& xv, const VectorXd& uv, const VectorXd& wv) {
    const PlantDerivatives der = plant_derivatives(plant, xv, uv, wv);
    MatrixXd j(n, dim);
    j.leftCols(n) = der.a;
    j.middleCols(n, m) = der.bu;
    j.rightCols(d) = der.bw;
    return j;
  };

  VectorXd point(dim);
  point.head(n) = x;
  point.segment(n, m) = u;
  point.tail(d) = w;
  auto jac_at = [&](const VectorXd& v) {
    return stacked_jacobian(v.head(n), v.segment(n, m), v.tail(d));
  };

  for (int i = 0; i < dim; ++i) {
    const double h = fd_step(point(i));
    VectorXd vp = point, vm = point;
    vp(i) += h;
    vm(i) -= h;
    const MatrixXd dj = (jac_at(vp) - jac_at(vm)) / (2.0 * h);
    // dj(k, j) = d^2 f_k / (dv_j dv_i)
    for (int k = 0; k < n; ++k) {
      for (int j = 0; j < dim; ++j) {
        hess[k](j, i) = dj(k, j);
      }
    }
  }
  for (int k = 0; k < n; ++k) {
    MatrixXd sym = 0.5 * (hess[k] + hess[k].transpose());
    hess[k] = std::move(sym);
  }
  return hess;
}

// Hessians of f components by second differences of the dynamics itself.
std::vector<MatrixXd> dynamics_hessians_fd(const GeneralizedPlant& plant, const VectorXd& x,
                                           const VectorXd& u, const VectorXd& w) {
  const int n = plant.n, m = plant.m, d = plant.d;
  const int dim = n + m + d;
  std::vector<MatrixXd> hess(n, MatrixXd::Zero(dim, dim));

  VectorXd point(dim);
  point.head(n) = x;
  point.segment(n, m) = u;
  point.tail(d) = w;
  auto f_at = [&](const VectorXd& v) {
    return plant.dynamics(v.head(n), v.segment(n, m), v.tail(d));
  };
  const VectorXd f0 = f_at(point);

  for (int i = 0; i < dim; ++i) {
    const double hi = 1e-4 * (1.0 + std::abs(point(i)));
    for (int j = 0; j <= i; ++j) {
      const double hj = 1e-4 * (1.0 + std::abs(point(j)));
      VectorXd dij;
      if (i == j) {
        VectorXd vp = point, vm = point;
        vp(i) += hi;
        vm(i) -= hi;
        dij = (f_at(vp) - 2.0 * f0 + f_at(vm)) / (hi * hi);
      } else {
        VectorXd vpp = point, vpm = point, vmp = point, vmm = point;
        vpp(i) += hi;
        vpp(j) += hj;
        vpm(i) += hi;
        vpm(j) -= hj;
        vmp(i) -= hi;
        vmp(j) += hj;
        vmm(i) -= hi;
        vmm(j) -= hj;
        dij = (f_at(vpp) - f_at(vpm) - f_at(vmp) + f_at(vmm)) / (4.0 * hi * hj);
      }
      for (int k = 0; k < n; ++k) {
        hess[k](i, j) = dij(k);
        hess[k](j, i) = dij(k);
      }
    }
  }
  return hess;
}

}  // namespace

PartitionedQuad taylor_q(const GeneralizedPlant& plant, const VectorXd& x, const VectorXd& u,
                         const VectorXd& w, const ValueQuad& v_next) {
  const BlockDims dims{plant.n, plant.m, plant.d};
  const int n = plant.n, m = plant.m, d = plant.d;
  const int dim = n + m + d;

  const PlantDerivatives der = plant_derivatives(plant, x, u, w);
  const std::vector<MatrixXd> f_hess = plant.derivative_provider
                                           ? dynamics_hessians(plant, x, u, w)
                                           : dynamics_hessians_fd(plant, x, u, w);

  const VectorXd y = der.f;
  const double vy = v_next.value(y);
  const VectorXd gy = v_next.gradient(y);
  const MatrixXd p22 = v_next.P22();

  MatrixXd jac(n, dim);
  jac.leftCols(n) = der.a;
  jac.middleCols(n, m) = der.bu;
  jac.rightCols(d) = der.bw;

  // Value, gradient and Hessian of h = f0 + V_next(f) over (dx, du, dw).
  const double h0 = der.stage_quad(0, 0) + vy;
  VectorXd grad = VectorXd::Zero(dim);
  grad.head(n + m) = 2.0 * der.stage_quad.block(0, 1, 1, n + m).transpose();
  grad += jac.transpose() * gy;
  MatrixXd hess = MatrixXd::Zero(dim, dim);
  hess.topLeftCorner(n + m, n + m) = 2.0 * der.stage_quad.block(1, 1, n + m, n + m);
  hess += 2.0 * jac.transpose() * p22 * jac;
  for (int k = 0; k < n; ++k) hess += gy(k) * f_hess[k];

  MatrixXd q = MatrixXd::Zero(dims.total(), dims.total());
  q(0, 0) = h0;
  q.block(0, 1, 1, dim) = 0.5 * grad.transpose();
  q.block(1, 0, dim, 1) = 0.5 * grad;
  q.block(1, 1, dim, dim) = 0.5 * hess;
  if (!q.allFinite()) {
    throw NonFiniteDerivative("taylor_q: derivative evaluation produced NaN/inf");
  }
  return PartitionedQuad(q, dims);
}

PartitionedQuad linearized_q(const Linearization& lin, const StageQuadCost& cost,
                             const ValueQuad& v_next, BlockDims dims) {
  const int n = dims.n, m = dims.m, d = dims.d;
  if (lin.a.rows() != n || lin.a.cols() != n || lin.bu.cols() != m || lin.bw.cols() != d ||
      lin.f.size() != n || cost.matrix.rows() != 1 + n + m ||
      v_next.state_dim() != n) {
    throw DimensionMismatch("linearized_q: inconsistent dimensions");
  }
  const int total = dims.total();

  MatrixXd s1 = MatrixXd::Zero(1 + n, total);
  s1(0, 0) = 1.0;
  s1.block(1, 0, n, 1) = lin.f - v_next.anchor();
  s1.block(1, 1, n, n) = lin.a;
  s1.block(1, 1 + n, n, m) = lin.bu;
  s1.block(1, 1 + n + m, n, d) = lin.bw;

  MatrixXd s2 = MatrixXd::Zero(1 + n + m, total);
  s2.topLeftCorner(1 + n + m, 1 + n + m).setIdentity();

  MatrixXd q = s1.transpose() * v_next.matrix() * s1 + s2.transpose() * cost.matrix * s2;
  if (!q.allFinite()) {
    throw NonFiniteDerivative("linearized_q: model evaluation produced NaN/inf");
  }
  return PartitionedQuad(q, dims);
}

PartitionedQuad linearized_q_at(const GeneralizedPlant& plant, const VectorXd& x,
                                const VectorXd& u, const VectorXd& w,
                                const ValueQuad& v_next) {
  const PlantDerivatives der = plant_derivatives(plant, x, u, w);
  Linearization lin{der.f, der.a, der.bu, der.bw};
  StageQuadCost cost{der.stage_quad, plant.n, plant.m};
  return linearized_q(lin, cost, v_next, BlockDims{plant.n, plant.m, plant.d});
}

RegularizeResult regularize(const PartitionedQuad& q, double mu_min) {
  if (mu_min <= 0.0) throw std::invalid_argument("regularize: mu_min must be positive");
  const int sub = q.dims().n + q.dims().m + q.dims().d;
  const MatrixXd block = q.matrix().bottomRightCorner(sub, sub);
  const double lam = min_eigenvalue(block);
  double sigma = 0.0;
  if (lam < mu_min) {
    const double needed = mu_min - lam;
    int k = 0;
    while (mu_min * std::pow(2.0, k) < needed) ++k;
    sigma = mu_min * std::pow(2.0, k);
  }
  MatrixXd out = q.matrix();
  out.bottomRightCorner(sub, sub) += sigma * MatrixXd::Identity(sub, sub);
  return RegularizeResult{PartitionedQuad(out, q.dims()), sigma};
}

}  // namespace rddp
