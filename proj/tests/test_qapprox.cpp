#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "rddp/qapprox.hpp"

using namespace rddp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Scalar plant f = x + u + w, f0 = u^2 with an exact derivative provider.
GeneralizedPlant scalar_sum_plant(bool with_provider) {
  GeneralizedPlant plant;
  plant.n = 1;
  plant.m = 1;
  plant.d = 1;
  plant.l = 0;
  plant.horizon = 1;
  plant.dynamics = [](const VectorXd& x, const VectorXd& u, const VectorXd& w) {
    VectorXd f(1);
    f << x(0) + u(0) + w(0);
    return f;
  };
  plant.stage_cost = [](const VectorXd&, const VectorXd& u) { return u(0) * u(0); };
  plant.terminal_cost = MatrixXd::Zero(2, 2);
  if (with_provider) {
    plant.derivative_provider = [](const VectorXd& x, const VectorXd& u, const VectorXd& w) {
      PlantDerivatives der;
      der.f = VectorXd::Constant(1, x(0) + u(0) + w(0));
      der.a = MatrixXd::Constant(1, 1, 1.0);
      der.bu = MatrixXd::Constant(1, 1, 1.0);
      der.bw = MatrixXd::Constant(1, 1, 1.0);
      der.stage_quad = MatrixXd::Zero(3, 3);
      der.stage_quad(0, 0) = u(0) * u(0);
      der.stage_quad(0, 2) = u(0);
      der.stage_quad(2, 0) = u(0);
      der.stage_quad(2, 2) = 1.0;
      return der;
    };
  }
  return plant;
}

double compose_value(const GeneralizedPlant& plant, const ValueQuad& v, const VectorXd& x,
                     const VectorXd& u, const VectorXd& w) {
  return plant.stage_cost(x, u) + v.value(plant.dynamics(x, u, w));
}

}  // namespace

TEST_SUITE_BEGIN("qapprox");

TEST_CASE("taylor_q on the scalar sum plant matches the hand expansion") {
  const GeneralizedPlant plant = scalar_sum_plant(false);
  // V_next(x) = x^2 anchored at the origin.
  MatrixXd p(2, 2);
  p << 0, 0, 0, 1;
  const ValueQuad v(p, VectorXd::Zero(1));
  const VectorXd zero = VectorXd::Zero(1);
  const PartitionedQuad q = taylor_q(plant, zero, zero, zero, v);

  // (x+u+w)^2 + u^2: all pairwise couplings are 1, Q33 picks up the cost.
  CHECK(q.q11() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(q.Q22()(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(q.Q33()(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(q.Q44()(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(q.Q23()(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(q.Q24()(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(q.Q34()(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("taylor_q equals linearized_q exactly on affine-quadratic plants") {
  const GeneralizedPlant plant = scalar_sum_plant(true);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    MatrixXd p(2, 2);
    p << dist(rng), dist(rng), 0, dist(rng);
    p = MatrixXd(0.5 * (p + p.transpose()));
    p(1, 1) = std::abs(p(1, 1)) + 0.5;
    VectorXd anchor(1);
    anchor << dist(rng);
    const ValueQuad v(p, anchor);
    VectorXd x(1), u(1), w(1);
    x << dist(rng);
    u << dist(rng);
    w << dist(rng);

    const PartitionedQuad qt = taylor_q(plant, x, u, w, v);
    const PartitionedQuad ql = linearized_q_at(plant, x, u, w, v);
    const double scale = 1.0 + ql.matrix().cwiseAbs().maxCoeff();
    CHECK((qt.matrix() - ql.matrix()).cwiseAbs().maxCoeff() <= 1e-10 * scale);
  }
}

TEST_CASE("taylor_q agrees with an independent finite-difference oracle") {
  GeneralizedPlant plant;
  plant.n = 2;
  plant.m = 1;
  plant.d = 1;
  plant.l = 0;
  plant.horizon = 1;
  plant.dynamics = [](const VectorXd& x, const VectorXd& u, const VectorXd& w) {
    VectorXd f(2);
    f << std::sin(x(1)) + 0.3 * u(0) + w(0) * x(0), std::cos(x(0)) * u(0) - 0.5 * x(1);
    return f;
  };
  plant.stage_cost = [](const VectorXd& x, const VectorXd& u) {
    return std::exp(0.1 * x(0)) * u(0) * u(0) + x(1) * x(1);
  };
  plant.terminal_cost = MatrixXd::Zero(3, 3);

  MatrixXd p(3, 3);
  p << 0.5, 0.1, -0.2, 0.1, 2.0, 0.3, -0.2, 0.3, 1.5;
  VectorXd anchor(2);
  anchor << 0.2, -0.1;
  const ValueQuad v(p, anchor);

  VectorXd x(2), u(1), w(1);
  x << 0.4, 0.9;
  u << -0.6;
  w << 0.1;
  const PartitionedQuad q = taylor_q(plant, x, u, w, v);

  // Oracle: central differences of the composed scalar, step 1e-4.
  const int dim = 4;
  VectorXd point(dim);
  point << x(0), x(1), u(0), w(0);
  auto h_at = [&](const VectorXd& v4) {
    return compose_value(plant, v, v4.head(2), v4.segment(2, 1), v4.tail(1));
  };
  const double h0 = h_at(point);
  CHECK(q.q11() == doctest::Approx(h0).epsilon(1e-9));

  const double step = 1e-4;
  for (int i = 0; i < dim; ++i) {
    VectorXd vp = point, vm = point;
    vp(i) += step;
    vm(i) -= step;
    const double grad_fd = (h_at(vp) - h_at(vm)) / (2.0 * step);
    const double grad_model = 2.0 * q.matrix()(0, 1 + i);
    CHECK(grad_model == doctest::Approx(grad_fd).epsilon(1e-5));
  }
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      double hess_fd;
      if (i == j) {
        VectorXd vp = point, vm = point;
        vp(i) += step;
        vm(i) -= step;
        hess_fd = (h_at(vp) - 2.0 * h0 + h_at(vm)) / (step * step);
      } else {
        VectorXd vpp = point, vpm = point, vmp = point, vmm = point;
        vpp(i) += step;
        vpp(j) += step;
        vpm(i) += step;
        vpm(j) -= step;
        vmp(i) -= step;
        vmp(j) += step;
        vmm(i) -= step;
        vmm(j) -= step;
        hess_fd = (h_at(vpp) - h_at(vpm) - h_at(vmp) + h_at(vmm)) / (4.0 * step * step);
      }
      const double hess_model = 2.0 * q.matrix()(1 + i, 1 + j);
      CHECK(hess_model == doctest::Approx(hess_fd).epsilon(1e-4).scale(1.0));
    }
  }
}

TEST_CASE("linearized_q reproduces the one-step LQR hand computation") {
  const int n = 2, m = 2, d = 1;
  Linearization lin;
  lin.f = VectorXd::Zero(n);
  lin.a = MatrixXd::Identity(n, n);
  lin.bu = MatrixXd::Identity(n, m);
  lin.bw = MatrixXd::Zero(n, d);
  StageQuadCost cost;
  cost.n = n;
  cost.m = m;
  cost.matrix = MatrixXd::Zero(1 + n + m, 1 + n + m);
  cost.matrix.bottomRightCorner(m, m).setIdentity();
  MatrixXd p = MatrixXd::Identity(1 + n, 1 + n);
  p(0, 0) = 0.0;
  const ValueQuad v(p, VectorXd::Zero(n));

  const PartitionedQuad q = linearized_q(lin, cost, v, BlockDims{n, m, d});
  CHECK((q.Q22() - MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((q.Q33() - 2.0 * MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((q.Q23() - MatrixXd::Identity(n, m)).cwiseAbs().maxCoeff() < 1e-14);
  // B^w = 0 wipes every disturbance block.
  CHECK(q.q14().cwiseAbs().maxCoeff() == 0.0);
  CHECK(q.Q24().cwiseAbs().maxCoeff() == 0.0);
  CHECK(q.Q34().cwiseAbs().maxCoeff() == 0.0);
  CHECK(q.Q44().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linearized_q is PSD for PSD cost and value") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2, m = 1, d = 1;
    Linearization lin;
    lin.f = VectorXd::Zero(n).unaryExpr([&](double) { return dist(rng); });
    lin.a = MatrixXd::Zero(n, n).unaryExpr([&](double) { return dist(rng); });
    lin.bu = MatrixXd::Zero(n, m).unaryExpr([&](double) { return dist(rng); });
    lin.bw = MatrixXd::Zero(n, d).unaryExpr([&](double) { return dist(rng); });

    MatrixXd rroot = MatrixXd::Zero(1 + n + m, 1 + n + m).unaryExpr([&](double) {
      return dist(rng);
    });
    StageQuadCost cost{MatrixXd(rroot * rroot.transpose()), n, m};
    MatrixXd proot = MatrixXd::Zero(1 + n, 1 + n).unaryExpr([&](double) { return dist(rng); });
    VectorXd anchor = VectorXd::Zero(n).unaryExpr([&](double) { return dist(rng); });
    const ValueQuad v(MatrixXd(proot * proot.transpose()), anchor);

    const PartitionedQuad q = linearized_q(lin, cost, v, BlockDims{n, m, d});
    CHECK(min_eigenvalue(q.matrix()) >= -1e-9 * (1.0 + q.matrix().cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("regularize ladder and idempotence") {
  BlockDims dims{1, 1, 1};

  // Already positive enough: untouched.
  MatrixXd good = MatrixXd::Identity(4, 4);
  good(0, 0) = -5.0;  // q11 must not matter
  const RegularizeResult r0 = regularize(PartitionedQuad(good, dims), 1e-6);
  CHECK(r0.sigma == 0.0);
  CHECK((r0.q.matrix() - PartitionedQuad(good, dims).matrix()).cwiseAbs().maxCoeff() == 0.0);

  // Minimum eigenvalue -1: sigma lands in (1, 2] on the doubling ladder.
  MatrixXd neg = MatrixXd::Identity(4, 4);
  neg(3, 3) = -1.0;
  const RegularizeResult r1 = regularize(PartitionedQuad(neg, dims), 1e-6);
  CHECK(r1.sigma > 1.0);
  CHECK(r1.sigma <= 2.0);
  const MatrixXd sub = r1.q.matrix().bottomRightCorner(3, 3);
  CHECK(min_eigenvalue(sub) >= 1e-6 - 1e-12);
  CHECK(r1.q.q11() == neg(0, 0));

  // Zero matrix: smallest rung.
  const RegularizeResult r2 = regularize(PartitionedQuad(MatrixXd::Zero(4, 4), dims), 1e-6);
  CHECK(r2.sigma == doctest::Approx(1e-6));

  // Idempotent on its own output.
  const RegularizeResult r3 = regularize(r1.q, 1e-6);
  CHECK(r3.sigma == 0.0);
}

TEST_SUITE_END();
