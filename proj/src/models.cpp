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
#include "rddp/models.hpp"

#include <cmath>

namespace rddp {
namespace models {

namespace {

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

// Linear-quadratic plant with exact derivatives; shared by the fixtures.
GeneralizedPlant make_lq(const MatrixXd& a, const MatrixXd& b, const MatrixXd& bw,
                         const MatrixXd& q, const MatrixXd& r, const MatrixXd& qf,
                         int horizon) {
  GeneralizedPlant plant;
  plant.n = static_cast<int>(a.rows());
  plant.m = static_cast<int>(b.cols());
  plant.d = static_cast<int>(bw.cols());
  plant.l = 0;
  plant.horizon = horizon;
  plant.affine_quadratic = true;
  plant.dynamics = [a, b, bw](const VectorXd& x, const VectorXd& u, const VectorXd& w) {
    VectorXd next = a * x + b * u;
    if (w.size() > 0) next += bw * w;
    return next;
  };
  plant.stage_cost = [q, r](const VectorXd& x, const VectorXd& u) {
    return x.dot(q * x) + u.dot(r * u);
  };
  const int n = plant.n;
  const int m = plant.m;
  plant.terminal_cost = MatrixXd::Zero(1 + n, 1 + n);
  plant.terminal_cost.bottomRightCorner(n, n) = qf;
  plant.terminal_anchor = VectorXd::Zero(n);
  plant.derivative_provider = [a, b, bw, q, r, n, m](const VectorXd& x, const VectorXd& u,
                                                     const VectorXd& w) {
    PlantDerivatives der;
    VectorXd next = a * x + b * u;
    if (w.size() > 0) next += bw * w;
    der.f = next;
    der.a = a;
    der.bu = b;
    der.bw = bw;
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

}  // namespace

VectorXd pendulum_derivative(const VectorXd& state, double u, const PendulumParams& params,
                             double d1, double d2) {
  const double omega = state(1);
  const double v = state(3);
  const double v_dot = -d2 * v + u;
  VectorXd out(4);
  out(0) = omega;
  out(1) = -d1 * omega + params.gravity / params.length * std::sin(state(0)) +
           std::cos(state(0)) * v_dot;
  out(2) = v;
  out(3) = v_dot;
  return out;
}

VectorXd pendulum_channel_derivative(const VectorXd& state, double u, const VectorXd& w,
                                     const PendulumParams& params) {
  const double omega = state(1);
  const double v = state(3);
  const double v_dot = -params.d2_nominal * v - w(1) + u;
  VectorXd out(4);
  out(0) = omega;
  out(1) = -params.d1_nominal * omega - w(0) +
           params.gravity / params.length * std::sin(state(0)) +
           std::cos(state(0)) * v_dot;
  out(2) = v;
  out(3) = v_dot;
  return out;
}

VectorXd rk4_step(const Derivative& derivative, const VectorXd& state, const VectorXd& u,
                  double dt) {
  const VectorXd k1 = derivative(state, u);
  const VectorXd k2 = derivative(state + 0.5 * dt * k1, u);
  const VectorXd k3 = derivative(state + 0.5 * dt * k2, u);
  const VectorXd k4 = derivative(state + dt * k3, u);
  VectorXd next = state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) {
    throw std::runtime_error("rk4_step: state is no longer finite");
  }
  return next;
}

GeneralizedPlant build_pendulum_plant(const PendulumParams& params) {
  if (params.radius < 0.0) throw std::invalid_argument("pendulum: radius must be >= 0");
  if (params.steps < 1) throw std::invalid_argument("pendulum: steps must be >= 1");
  GeneralizedPlant plant;
  plant.n = 4;
  plant.m = 1;
  plant.d = 2;
  plant.l = 2;
  plant.horizon = params.steps;
  const double dt = params.dt();

  plant.dynamics = [params, dt](const VectorXd& x, const VectorXd& u, const VectorXd& w) {
    const Derivative deriv = [&params, &w](const VectorXd& state, const VectorXd& uu) {
      return pendulum_channel_derivative(state, uu(0), w, params);
    };
    return rk4_step(deriv, x, u, dt);
  };
  plant.uncertainty_output = [params](const VectorXd& x, const VectorXd&, const VectorXd&) {
    VectorXd z(2);
    z << params.radius * x(1), params.radius * x(3);
    return z;
  };
  plant.stage_cost = [dt](const VectorXd&, const VectorXd& u) { return u(0) * u(0) * dt; };
  plant.terminal_cost = MatrixXd::Zero(5, 5);
  plant.terminal_cost.bottomRightCorner(4, 4) =
      params.terminal_weight * MatrixXd::Identity(4, 4);
  plant.terminal_anchor = VectorXd::Zero(4);
  plant.channels = {ChannelSpec{{0}, {0}}, ChannelSpec{{1}, {1}}};

  // Stage-level channel closure: equals parametric integration exactly for
  // static gains, which the generic per-step fixed point cannot achieve.
  plant.closed_loop_step = [params, dt](const VectorXd& x, const VectorXd& u,
                                        const DeltaFn& delta) {
    const Derivative deriv = [&params, &delta](const VectorXd& state, const VectorXd& uu) {
      VectorXd z(2);
      z << params.radius * state(1), params.radius * state(3);
      return pendulum_channel_derivative(state, uu(0), delta(z), params);
    };
    return rk4_step(deriv, x, u, dt);
  };
  return plant;
}

GeneralizedPlant scalar_fixture(int horizon) {
  return make_lq(MatrixXd::Constant(1, 1, 0.9), MatrixXd::Constant(1, 1, 1.0),
                 MatrixXd::Zero(1, 0), MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1),
                 10.0 * MatrixXd::Identity(1, 1), horizon);
}

GeneralizedPlant double_integrator_fixture(int horizon) {
  const double dt = 0.1;
  MatrixXd a(2, 2);
  a << 1.0, dt, 0.0, 1.0;
  MatrixXd b(2, 1);
  b << 0.5 * dt * dt, dt;
  return make_lq(a, b, MatrixXd::Zero(2, 0), MatrixXd::Identity(2, 2),
                 MatrixXd::Identity(1, 1), 10.0 * MatrixXd::Identity(2, 2), horizon);
}

GeneralizedPlant random_stable_fixture(uint64_t seed, int horizon, bool with_uncertainty) {
  SplitMix64 rng(seed);
  const int n = 3, m = 1;
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.symmetric();
  const double radius = a.eigenvalues().cwiseAbs().maxCoeff();
  a *= (0.6 + 0.3 * rng.uniform()) / std::max(radius, 1e-6);

  MatrixXd b(n, m);
  for (int i = 0; i < n; ++i) b(i, 0) = rng.symmetric();
  const MatrixXd q = MatrixXd::Identity(n, n);
  const MatrixXd r = MatrixXd::Identity(m, m);
  const MatrixXd qf = 5.0 * MatrixXd::Identity(n, n);

  MatrixXd bw = MatrixXd::Zero(n, 0);
  if (with_uncertainty) {
    bw.resize(n, 1);
    for (int i = 0; i < n; ++i) bw(i, 0) = 0.3 * rng.symmetric();
  }
  GeneralizedPlant plant = make_lq(a, b, bw, q, r, qf, horizon);
  if (with_uncertainty) {
    VectorXd c(n);
    for (int i = 0; i < n; ++i) c(i) = 0.4 * rng.symmetric();
    plant.l = 1;
    plant.uncertainty_output = [c](const VectorXd& x, const VectorXd&, const VectorXd&) {
      return VectorXd(VectorXd::Constant(1, c.dot(x)));
    };
    plant.channels = {ChannelSpec{{0}, {0}}};
  }
  return plant;
}

}  // namespace models
}  // namespace rddp
