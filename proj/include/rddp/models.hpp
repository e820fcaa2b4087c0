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
#ifndef RDDP_MODELS_HPP
#define RDDP_MODELS_HPP

#include "rddp/plant.hpp"

namespace rddp {
namespace models {

/// Cart-pendulum with uncertain viscous friction on the pendulum rate and
/// the cart velocity. State (theta, omega, s, v) with theta measured from
/// the upright position, so the origin is the target.
struct PendulumParams {
  double gravity = 9.81;       // m/s^2
  double length = 1.0;         // m
  double d1_nominal = 0.05;    // 1/s, midpoint of [0, 0.1]
  double d2_nominal = 0.05;
  double radius = 0.05;        // half-width of the friction interval
  double horizon_seconds = 10.0;
  int steps = 50;
  double terminal_weight = 1000.0;

  double dt() const { return horizon_seconds / steps; }
};

/// Continuous-time right-hand side with explicit friction parameters.
VectorXd pendulum_derivative(const VectorXd& state, double u, const PendulumParams& params,
                             double d1, double d2);

/// Channel form: nominal friction plus additive disturbances (w1, w2) on
/// the omega and v equations, so d_i = nominal + radius * delta_i maps to
/// w_i = delta_i * z_i with z = radius * (omega, v).
VectorXd pendulum_channel_derivative(const VectorXd& state, double u, const VectorXd& w,
                                     const PendulumParams& params);

using Derivative = std::function<VectorXd(const VectorXd&, const VectorXd&)>;

/// Classical fixed-step fourth-order Runge-Kutta update with the input held
/// constant over the step. Throws NonFiniteDerivative-compatible
/// std::runtime_error when the state leaves the finite range.
VectorXd rk4_step(const Derivative& derivative, const VectorXd& state, const VectorXd& u,
                  double dt);

/// Discrete uncertain generalized plant for the pendulum: RK4 dynamics with
/// the disturbance held constant over the step like the input, z measured at
/// the step start, stage cost u^2 dt and terminal weight ||x_T||^2. The
/// plant also carries a closed-loop stepper that closes the channel inside
/// each RK4 stage, which reproduces parametric integration exactly.
GeneralizedPlant build_pendulum_plant(const PendulumParams& params = {});

/// x+ = 0.9 x + u, cost x^2 + u^2, terminal 10 x^2.
GeneralizedPlant scalar_fixture(int horizon = 20);

/// Double integrator, exact dt = 0.1 discretization.
GeneralizedPlant double_integrator_fixture(int horizon = 20);

/// Seeded stable system (spectral radius < 0.95) with quadratic costs and,
/// optionally, one normalized box uncertainty channel.
GeneralizedPlant random_stable_fixture(uint64_t seed, int horizon = 20,
                                       bool with_uncertainty = false);

}  // namespace models
}  // namespace rddp

#endif  // RDDP_MODELS_HPP
