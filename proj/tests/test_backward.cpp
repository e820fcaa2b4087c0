#include <Eigen/Dense>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "rddp/backward.hpp"

using namespace rddp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Linear-quadratic plant x+ = A x + B u (+ Bw w), cost x'Qx + u'Ru,
// terminal x' Qf x, with an exact derivative provider.
GeneralizedPlant lq_plant(const MatrixXd& a, const MatrixXd& b, const MatrixXd& bw,
                          const MatrixXd& q, const MatrixXd& r, const MatrixXd& qf,
                          int horizon) {
  GeneralizedPlant plant;
  plant.n = static_cast<int>(a.rows());
  plant.m = static_cast<int>(b.cols());
  plant.d = static_cast<int>(bw.cols());
  plant.l = 0;
  plant.horizon = horizon;
  plant.dynamics = [a, b, bw](const VectorXd& x, const VectorXd& u, const VectorXd& w) {
    VectorXd next = a * x + b * u;
    if (w.size() > 0) next += bw * w;
    return next;
  };
  plant.stage_cost = [q, r](const VectorXd& x, const VectorXd& u) {
    return x.dot(q * x) + u.dot(r * u);
  };
  const int n = plant.n;
  plant.terminal_cost = MatrixXd::Zero(1 + n, 1 + n);
  plant.terminal_cost.bottomRightCorner(n, n) = qf;
  plant.terminal_anchor = VectorXd::Zero(n);
  plant.derivative_provider = [a, b, bw, q, r, n](const VectorXd& x, const VectorXd& u,
                                                  const VectorXd& w) {
    PlantDerivatives der;
    VectorXd next = a * x + b * u;
    if (w.size() > 0) next += bw * w;
    der.f = next;
    der.a = a;
    der.bu = b;
    der.bw = bw;
    const int m = static_cast<int>(b.cols());
    der.stage_quad = MatrixXd::Zero(1 + n + m, 1 + n + m);
    der.stage_quad(0, 0) = x.dot(q * x) + u.dot(r * u);
    der.stage_quad.block(0, 1, 1, n) = (q * x).transpose();
    der.stage_quad.block(1, 0, n, 1) = q * x;
    der.stage_quad.block(0, 1 + n, 1, m) = (r * u).transpose();
    der.stage_quad.block(1 + n, 0, m, 1) = r * u;
    der.stage_quad.block(1, 1, n, n) = q;
    der.stage_quad.block(1 + n, 1 + n, m, m) = r;
    return der;
  };
  return plant;
}

MatrixXd random_pd(int n, std::mt19937_64& rng, double shift = 0.3) {
  std::normal_distribution<double> dist(0.0, 1.0);
  MatrixXd r(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r(i, j) = dist(rng);
  return r * r.transpose() + shift * MatrixXd::Identity(n, n);
}

// Healthy PD Q over (1, dx, du, dw) with a single state-only box channel.
struct ConsistencyInstance {
  PartitionedQuad q;
  MultiplierSet mset;
  MatrixXd sigma;
};

ConsistencyInstance consistency_instance(uint64_t seed) {
  std::mt19937_64 rng(seed);
  const BlockDims dims{2, 1, 1};
  MatrixXd q = random_pd(dims.total(), rng, 0.5);
  MatrixXd z_rows = MatrixXd::Zero(1, dims.total());
  std::normal_distribution<double> dist(0.0, 1.0);
  z_rows(0, 0) = 0.3 * dist(rng);
  z_rows(0, 1) = dist(rng);
  z_rows(0, 2) = dist(rng);
  // no du or dw dependence: keeps the simple strategy applicable
  SigmaSchedule sched;
  return ConsistencyInstance{PartitionedQuad(q, dims),
                             box_multipliers(z_rows, {ChannelSpec{{0}, {0}}}, dims),
                             sched.at(dims.n)};
}

}  // namespace

TEST_SUITE_BEGIN("backward");

TEST_CASE("simple step with block-diagonal Q keeps the value block and zero gain") {
  const BlockDims dims{2, 1, 1};
  MatrixXd q = MatrixXd::Zero(dims.total(), dims.total());
  q(0, 0) = 3.0;
  q.block(1, 1, 2, 2) = (MatrixXd(2, 2) << 2.0, 0.0, 0.0, 1.5).finished();
  q(3, 3) = 1.0;   // Q33 > 0
  q(4, 4) = -1.0;  // Q44 < 0, no multiplier needed
  const PartitionedQuad quad(q, dims);
  MultiplierSet empty;
  empty.dims = dims;

  const BackwardStepResult res =
      backward_step_simple(quad, empty, MatrixXd::Identity(3, 3));
  REQUIRE(res.status == StepStatus::kOptimal);
  CHECK(res.k1.cwiseAbs().maxCoeff() < 1e-5);
  CHECK(res.k2.cwiseAbs().maxCoeff() < 1e-5);
  MatrixXd expect(3, 3);
  expect << 3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.5;
  CHECK((res.p - expect).cwiseAbs().maxCoeff() < 1e-4);
  CHECK(res.certificate_margin < 0.0);
}

TEST_CASE("one-step certain LQR matches the Riccati update for every strategy") {
  // x+ = 0.9 x + u, cost x^2 + u^2, terminal 2 x^2.
  const MatrixXd a = MatrixXd::Constant(1, 1, 0.9);
  const MatrixXd b = MatrixXd::Constant(1, 1, 1.0);
  const MatrixXd q1 = MatrixXd::Constant(1, 1, 1.0);
  const MatrixXd r1 = MatrixXd::Constant(1, 1, 1.0);
  const MatrixXd qf = MatrixXd::Constant(1, 1, 2.0);
  const auto oracle = oracles::riccati_recursion(a, b, q1, r1, qf, 1);

  GeneralizedPlant plant = lq_plant(a, b, MatrixXd::Zero(1, 0), q1, r1, qf, 1);
  const ValueQuad vt(plant.terminal_cost, VectorXd::Zero(1));
  const PartitionedQuad q = linearized_q_at(plant, VectorXd::Zero(1), VectorXd::Zero(1),
                                            VectorXd::Zero(0), vt);
  MultiplierSet empty;
  empty.dims = q.dims();
  SigmaSchedule sched;
  const MatrixXd sigma = sched.at(1);

  for (auto strat : {Strategy::kSimple, Strategy::kDual, Strategy::kCanonical}) {
    BackwardStepResult res;
    switch (strat) {
      case Strategy::kSimple: res = backward_step_simple(q, empty, sigma); break;
      case Strategy::kDual: res = backward_step_dual(q, empty, sigma); break;
      default: res = backward_step_canonical(q, empty, sigma); break;
    }
    INFO(std::string(to_string(strat)));
    REQUIRE(res.status == StepStatus::kOptimal);
    CHECK(res.k2(0, 0) == doctest::Approx(-oracle.k[0](0, 0)).epsilon(1e-5));
    CHECK(res.p(1, 1) == doctest::Approx(oracle.p[0](0, 0)).epsilon(1e-5));
    CHECK(std::abs(res.p(0, 0)) < 1e-4);
    CHECK(res.certificate_margin < 0.0);
  }
}

TEST_CASE("random applicable instances solve with negative certificates") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const ConsistencyInstance inst = consistency_instance(100 + trial);
    const BackwardStepResult res = backward_step_simple(inst.q, inst.mset, inst.sigma);
    REQUIRE(res.status == StepStatus::kOptimal);
    CHECK(res.certificate_margin < 0.0);
    CHECK(res.qbar44_max_eig < 0.0);
    CHECK(res.u_schur_min_eig > 0.0);
    CHECK(res.lambda.minCoeff() >= 0.0);
    CHECK(min_eigenvalue(res.p) > 0.0);
  }
}

TEST_CASE("simple and dual strategies agree; canonical is no tighter than dual") {
  for (int trial = 0; trial < 10; ++trial) {
    const ConsistencyInstance inst = consistency_instance(500 + trial);
    const BackwardStepResult simple = backward_step_simple(inst.q, inst.mset, inst.sigma);
    const BackwardStepResult dual = backward_step_dual(inst.q, inst.mset, inst.sigma);
    const BackwardStepResult canonical =
        backward_step_canonical(inst.q, inst.mset, inst.sigma);
    CAPTURE(trial);
    REQUIRE(simple.status == StepStatus::kOptimal);
    REQUIRE(dual.status == StepStatus::kOptimal);
    REQUIRE(canonical.status == StepStatus::kOptimal);
    CHECK(dual.epsilon_perturbation == 0.0);

    const double scale = 1.0 + std::abs(simple.trace_objective);
    CHECK(std::abs(simple.trace_objective - dual.trace_objective) <= 1e-6 * scale);
    CHECK(canonical.trace_objective >= dual.trace_objective - 1e-8);

    // Multipliers active: the channel must push Qbar44 negative.
    CHECK(dual.lambda.minCoeff() > 0.0);

    // Inversion round trip on the dual side.
    const MatrixXd p_tilde = dual.p.inverse();
    CHECK((p_tilde * dual.p - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("dual rejects Q indefinite beyond the perturbation budget") {
  const BlockDims dims{2, 1, 1};
  MatrixXd q = MatrixXd::Identity(dims.total(), dims.total());
  q(2, 2) = -0.5;
  MatrixXd z_rows = MatrixXd::Zero(1, dims.total());
  z_rows(0, 1) = 1.0;
  const MultiplierSet mset = box_multipliers(z_rows, {ChannelSpec{{0}, {0}}}, dims);
  SigmaSchedule sched;
  const BackwardStepResult res =
      backward_step_dual(PartitionedQuad(q, dims), mset, sched.at(2));
  CHECK(res.status == StepStatus::kRegularityViolated);
  const BackwardStepResult res2 =
      backward_step_canonical(PartitionedQuad(q, dims), mset, sched.at(2));
  CHECK(res2.status == StepStatus::kRegularityViolated);
}

TEST_CASE("simple is not applicable when generators touch the du row") {
  const BlockDims dims{1, 1, 1};
  MatrixXd z_rows = MatrixXd::Zero(1, dims.total());
  z_rows(0, 1) = 1.0;
  z_rows(0, 2) = 0.5;  // z depends on u
  const MultiplierSet mset = box_multipliers(z_rows, {ChannelSpec{{0}, {0}}}, dims);
  MatrixXd q = MatrixXd::Identity(dims.total(), dims.total());
  SigmaSchedule sched;
  const BackwardStepResult res =
      backward_step_simple(PartitionedQuad(q, dims), mset, sched.at(1));
  CHECK(res.status == StepStatus::kNotApplicable);
}

TEST_CASE("input-dependent uncertainty output: simple aborts, auto falls through") {
  const int n = 2, m = 1, d = 1, T = 4;
  MatrixXd a(2, 2), b(2, 1), bw(2, 1);
  a << 0.9, 0.1, 0.0, 0.8;
  b << 0.0, 1.0;
  bw << 0.3, 0.0;
  GeneralizedPlant plant = lq_plant(a, b, bw, MatrixXd::Identity(n, n),
                                    MatrixXd::Identity(m, m),
                                    2.0 * MatrixXd::Identity(n, n), T);
  plant.d = d;
  plant.l = 1;
  plant.uncertainty_output = [](const VectorXd& x, const VectorXd& u, const VectorXd&) {
    return VectorXd(VectorXd::Constant(1, 0.4 * x(0) + 0.2 * u(0)));
  };
  plant.channels = {ChannelSpec{{0}, {0}}};

  std::vector<VectorXd> xs(T + 1, VectorXd::Zero(n));
  std::vector<VectorXd> us(T, VectorXd::Zero(m));
  const ValueQuad vt(plant.terminal_cost, VectorXd::Zero(n));

  BackwardOptions simple_only;
  simple_only.strategy = Strategy::kSimple;
  const BackwardPassResult forced = run_backward_pass(plant, xs, us, vt, simple_only);
  CHECK_FALSE(forced.ok);
  CHECK(forced.failed_t == T - 1);
  CHECK(forced.steps[T - 1].status == StepStatus::kNotApplicable);

  BackwardOptions auto_opts;
  const BackwardPassResult fallen = run_backward_pass(plant, xs, us, vt, auto_opts);
  REQUIRE_MESSAGE(fallen.ok, fallen.message);
  for (int t = 0; t < T; ++t) {
    CHECK(fallen.steps[t].strategy_used == Strategy::kDual);
    CHECK(fallen.steps[t].certificate_margin < 0.0);
  }
}

TEST_CASE("canonical flags rank-deficient W12") {
  const BlockDims dims{1, 1, 2};
  // One channel covering only one of two disturbance coordinates.
  MatrixXd z_rows = MatrixXd::Zero(1, dims.total());
  z_rows(0, 1) = 1.0;
  const MultiplierSet mset = box_multipliers(z_rows, {ChannelSpec{{0}, {0}}}, dims);
  MatrixXd q = MatrixXd::Identity(dims.total(), dims.total());
  SigmaSchedule sched;
  const BackwardStepResult res =
      backward_step_canonical(PartitionedQuad(q, dims), mset, sched.at(1));
  CHECK(res.status == StepStatus::kRankDeficient);
}

TEST_CASE("full certain recursion reproduces Riccati gains and values") {
  std::mt19937_64 rng(2);
  const int n = 2, m = 1, T = 8;
  MatrixXd a(2, 2);
  a << 0.95, 0.1, -0.05, 0.85;
  MatrixXd b(2, 1);
  b << 0.0, 1.0;
  const MatrixXd q = random_pd(n, rng, 0.5);
  const MatrixXd r = MatrixXd::Identity(m, m);
  const MatrixXd qf = 5.0 * MatrixXd::Identity(n, n);
  const auto oracle = oracles::riccati_recursion(a, b, q, r, qf, T);

  GeneralizedPlant plant = lq_plant(a, b, MatrixXd::Zero(n, 0), q, r, qf, T);
  std::vector<VectorXd> xs(T + 1, VectorXd::Zero(n));
  std::vector<VectorXd> us(T, VectorXd::Zero(m));
  const ValueQuad vt(plant.terminal_cost, VectorXd::Zero(n));

  for (auto strat : {Strategy::kSimple, Strategy::kDual, Strategy::kCanonical}) {
    BackwardOptions opts;
    opts.strategy = strat;
    const BackwardPassResult pass = run_backward_pass(plant, xs, us, vt, opts);
    INFO(std::string(to_string(strat)));
    REQUIRE_MESSAGE(pass.ok, pass.message);
    // The factorization route inverts a perturbed singular Q, which costs
    // a few digits; the Schur and dual routes track the oracle tightly.
    const double tol = strat == Strategy::kCanonical ? 1e-4 : 1e-6;
    for (int t = 0; t < T; ++t) {
      const double kscale = 1.0 + oracle.k[t].norm();
      const double pscale = 1.0 + oracle.p[t].norm();
      CHECK((pass.policies[t].k2 + oracle.k[t]).norm() <= tol * kscale);
      CHECK((pass.values[t].P22() - oracle.p[t]).norm() <= tol * pscale);
      CHECK(pass.policies[t].k1.cwiseAbs().maxCoeff() <= tol * kscale);
    }
  }
}

TEST_CASE("uncertain linear fixture: robust pass certifies every step") {
  // x+ = A x + B u + Bw w, z = 0.4 x_1, one box channel.
  const int n = 2, m = 1, d = 1, T = 6;
  MatrixXd a(2, 2);
  a << 0.9, 0.2, 0.0, 0.8;
  MatrixXd b(2, 1);
  b << 0.1, 1.0;
  MatrixXd bw(2, 1);
  bw << 0.5, 0.0;
  GeneralizedPlant plant = lq_plant(a, b, bw, MatrixXd::Identity(n, n),
                                    MatrixXd::Identity(m, m),
                                    3.0 * MatrixXd::Identity(n, n), T);
  plant.d = d;
  plant.l = 1;
  plant.uncertainty_output = [](const VectorXd& x, const VectorXd&, const VectorXd&) {
    return VectorXd(VectorXd::Constant(1, 0.4 * x(0)));
  };
  plant.channels = {ChannelSpec{{0}, {0}}};

  std::vector<VectorXd> xs(T + 1, VectorXd::Zero(n));
  std::vector<VectorXd> us(T, VectorXd::Zero(m));
  const ValueQuad vt(plant.terminal_cost, VectorXd::Zero(n));
  BackwardOptions opts;
  const BackwardPassResult pass = run_backward_pass(plant, xs, us, vt, opts);
  REQUIRE_MESSAGE(pass.ok, pass.message);

  for (int t = 0; t < T; ++t) {
    const auto& step = pass.steps[t];
    CHECK(step.status == StepStatus::kOptimal);
    CHECK(step.strategy_used == Strategy::kSimple);  // z does not touch u
    CHECK(step.certificate_margin < 0.0);
    CHECK(step.lambda.minCoeff() >= 0.0);
    CHECK(min_eigenvalue(pass.values[t].matrix()) > 0.0);
  }

  // S-procedure soundness on a grid: for admissible w = delta * z and the
  // solved policy, the Q model never exceeds the certified value.
  const VectorXd w0 = VectorXd::Zero(d);
  for (int t = 0; t < T; ++t) {
    const PartitionedQuad q =
        linearized_q_at(plant, xs[t], us[t], w0, pass.values[t + 1]);
    const double scale = 1.0 + q.matrix().cwiseAbs().maxCoeff();
    for (int ix = 0; ix <= 10; ++ix) {
      for (int iy = 0; iy <= 10; ++iy) {
        VectorXd dx(2);
        dx << -1.0 + 0.2 * ix, -1.0 + 0.2 * iy;
        const VectorXd du = pass.policies[t].k1 + pass.policies[t].k2 * dx;
        const double z = 0.4 * (xs[t](0) + dx(0));
        for (int id = 0; id <= 20; ++id) {
          const double delta = -1.0 + 0.1 * id;
          VectorXd dw(1);
          dw << delta * z;
          const double qval = q.value(dx, du, dw);
          const double vval = pass.values[t].value(xs[t] + dx);
          CHECK(qval <= vval + 1e-8 * scale);
        }
      }
    }
  }
}

TEST_SUITE_END();
