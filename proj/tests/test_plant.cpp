#include <Eigen/Dense>

#include "doctest.h"
#include "rddp/plant.hpp"

using namespace rddp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

GeneralizedPlant certain_linear_plant() {
  GeneralizedPlant plant;
  plant.n = 2;
  plant.m = 1;
  plant.d = 0;
  plant.l = 0;
  plant.horizon = 5;
  MatrixXd a(2, 2);
  a << 0.9, 0.1, 0.0, 0.8;
  VectorXd b(2);
  b << 0.0, 1.0;
  plant.dynamics = [a, b](const VectorXd& x, const VectorXd& u, const VectorXd&) {
    return VectorXd(a * x + b * u(0));
  };
  plant.stage_cost = [](const VectorXd& x, const VectorXd& u) {
    return x.squaredNorm() + u.squaredNorm();
  };
  plant.terminal_cost = MatrixXd::Identity(3, 3);
  plant.terminal_cost(0, 0) = 0.0;
  plant.terminal_anchor = VectorXd::Zero(2);
  return plant;
}

}  // namespace

TEST_SUITE_BEGIN("plant");

TEST_CASE("validate passes a certain linear plant and skips the probe") {
  const GeneralizedPlant plant = certain_linear_plant();
  const ValidationReport report = validate_plant(plant);
  CHECK(report.ok);
  CHECK(report.probe_skipped);
  CHECK(report.issues.empty());
}

TEST_CASE("validate flags wrong uncertainty output dimension") {
  GeneralizedPlant plant = certain_linear_plant();
  plant.d = 1;
  plant.l = 1;
  plant.uncertainty_output = [](const VectorXd& x, const VectorXd&, const VectorXd&) {
    return VectorXd(VectorXd::Zero(2));  // l + 1 entries
  };
  const ValidationReport report = validate_plant(plant);
  CHECK_FALSE(report.ok);
  CHECK(report.has(ValidationIssue::Kind::kDimensionMismatch));
}

TEST_CASE("validate flags asymmetric and indefinite terminal costs") {
  GeneralizedPlant plant = certain_linear_plant();
  plant.terminal_cost(0, 1) = 0.5;  // symmetric counterpart untouched
  ValidationReport report = validate_plant(plant);
  CHECK(report.has(ValidationIssue::Kind::kNonSymmetricTerminalCost));

  plant = certain_linear_plant();
  plant.terminal_cost(1, 1) = -1.0;
  report = validate_plant(plant);
  CHECK(report.has(ValidationIssue::Kind::kTerminalCostNotPsd));
}

TEST_CASE("validate runs a deterministic well-posedness probe") {
  GeneralizedPlant plant = certain_linear_plant();
  plant.d = 1;
  plant.l = 1;
  plant.channels = {ChannelSpec{{0}, {0}}};
  plant.uncertainty_output = [](const VectorXd& x, const VectorXd&, const VectorXd&) {
    VectorXd z(1);
    z << 0.3 * x(0);
    return z;
  };
  plant.dynamics = [base = plant.dynamics](const VectorXd& x, const VectorXd& u,
                                           const VectorXd& w) {
    VectorXd next = base(x, u, VectorXd());
    next(0) += w(0);
    return next;
  };
  const ValidationReport r1 = validate_plant(plant);
  const ValidationReport r2 = validate_plant(plant);
  CHECK(r1.ok);
  CHECK(r1.probes_run == 32);
  CHECK(r1.ok == r2.ok);
  CHECK(r1.probes_run == r2.probes_run);

  // An expansive loop (z depends on w with gain > 1) must fail the probe.
  GeneralizedPlant bad = plant;
  bad.uncertainty_output = [](const VectorXd& x, const VectorXd&, const VectorXd& w) {
    VectorXd z(1);
    z << 0.3 * x(0) + 3.0 * w(0) + 1.0;
    return z;
  };
  const ValidationReport rb = validate_plant(bad);
  CHECK_FALSE(rb.ok);
  CHECK(rb.has(ValidationIssue::Kind::kWellPosednessProbeFailed));
}

TEST_CASE("box_multipliers: identity z row yields the textbook generator") {
  BlockDims dims{2, 1, 1};
  MatrixXd z_rows = MatrixXd::Zero(1, dims.total());
  z_rows(0, 1) = 1.0;  // z = dx_1
  const MultiplierSet set = box_multipliers(z_rows, {ChannelSpec{{0}, {0}}}, dims);
  REQUIRE(set.size() == 1);
  MatrixXd expect = MatrixXd::Zero(5, 5);
  expect(1, 1) = 1.0;
  expect(4, 4) = -1.0;
  CHECK((set.generators[0].m - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("box_multipliers: independent channels stay block-disjoint") {
  BlockDims dims{2, 1, 2};
  MatrixXd z_rows = MatrixXd::Zero(2, dims.total());
  z_rows(0, 1) = 2.0;   // z1 = 2 dx_1
  z_rows(1, 2) = -1.5;  // z2 = -1.5 dx_2
  const MultiplierSet set =
      box_multipliers(z_rows, {ChannelSpec{{0}, {0}}, ChannelSpec{{1}, {1}}}, dims);
  REQUIRE(set.size() == 2);
  // Generator 0 touches only dx_1 and dw_1 coordinates, generator 1 the rest.
  const MatrixXd& g0 = set.generators[0].m;
  const MatrixXd& g1 = set.generators[1].m;
  CHECK(g0(1, 1) == doctest::Approx(4.0));
  CHECK(g0(4, 4) == doctest::Approx(-1.0));
  CHECK(g0(2, 2) == 0.0);
  CHECK(g1(2, 2) == doctest::Approx(2.25));
  CHECK(g1(5, 5) == doctest::Approx(-1.0));
  CHECK((g0.cwiseProduct(g1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("box_multipliers generators are nonnegative on gridded admissible points") {
  // Affine z rows with state and input dependence; w enters through the box.
  BlockDims dims{2, 1, 2};
  MatrixXd z_rows = MatrixXd::Zero(2, dims.total());
  z_rows(0, 0) = 0.4;
  z_rows(0, 1) = 1.0;
  z_rows(0, 3) = -0.3;
  z_rows(1, 0) = -0.2;
  z_rows(1, 2) = 0.7;
  z_rows(1, 3) = 0.5;
  const MultiplierSet set =
      box_multipliers(z_rows, {ChannelSpec{{0}, {0}}, ChannelSpec{{1}, {1}}}, dims);

  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; j <= 20; ++j) {
      const double d1 = -1.0 + 0.1 * i;
      const double d2 = -1.0 + 0.1 * j;
      // A few sample (dx, du) points per delta grid node.
      for (int pt = 0; pt < 3; ++pt) {
        VectorXd xi(dims.total());
        xi << 1.0, 0.3 * pt - 0.2, 0.7 - 0.4 * pt, 0.1 * pt, 0.0, 0.0;
        const double z1 = z_rows.row(0).dot(xi);
        const double z2 = z_rows.row(1).dot(xi);
        xi(4) = d1 * z1;
        xi(5) = d2 * z2;
        // z rows are w-independent here, so the loop closes in one pass.
        for (const auto& gen : set.generators) {
          CHECK(xi.dot(gen.m * xi) >= -1e-9);
        }
      }
    }
  }
}

TEST_CASE("box_multipliers factorization round-trips and rejects rank-deficient rows") {
  BlockDims dims{2, 1, 1};
  MatrixXd z_rows = MatrixXd::Zero(1, dims.total());
  z_rows(0, 1) = 0.8;
  z_rows(0, 2) = -0.1;
  const MultiplierSet set = box_multipliers(z_rows, {ChannelSpec{{0}, {0}}}, dims);
  const auto& gen = set.generators[0];
  const MatrixXd rebuilt = gen.mp.transpose() * gen.mp - gen.mm.transpose() * gen.mm;
  CHECK((rebuilt - gen.m).norm() <= 1e-10 * (1.0 + gen.m.norm()));

  MatrixXd zero_rows = MatrixXd::Zero(1, dims.total());
  CHECK_THROWS_AS(box_multipliers(zero_rows, {ChannelSpec{{0}, {0}}}, dims),
                  RankDeficientFactor);
}

TEST_CASE("box samples validate the parameter box") {
  std::vector<ChannelSpec> channels{ChannelSpec{{0}, {0}}};
  VectorXd ok(1), bad(1);
  ok << 0.7;
  bad << 1.2;
  const UncertaintySample s = UncertaintySample::from_box(channels, ok, 3, 1, 1);
  CHECK(s.gains.size() == 3);
  CHECK(s.gains[0](0, 0) == doctest::Approx(0.7));
  CHECK_THROWS_AS(UncertaintySample::from_box(channels, bad, 3, 1, 1), std::invalid_argument);
}

TEST_CASE("finite differences recover analytic jacobians and cost quadratics") {
  GeneralizedPlant plant;
  plant.n = 2;
  plant.m = 1;
  plant.d = 1;
  plant.l = 1;
  plant.horizon = 3;
  plant.dynamics = [](const VectorXd& x, const VectorXd& u, const VectorXd& w) {
    VectorXd f(2);
    f << std::sin(x(1)) + u(0) * w(0), x(0) * x(1) + 0.5 * u(0);
    return f;
  };
  plant.uncertainty_output = [](const VectorXd& x, const VectorXd&, const VectorXd&) {
    VectorXd z(1);
    z << 0.2 * x(0);
    return z;
  };
  plant.stage_cost = [](const VectorXd& x, const VectorXd& u) {
    return x(0) * x(0) + 2.0 * x(0) * u(0) + 3.0 * u(0) * u(0) + 0.4 * x(1);
  };
  plant.terminal_cost = MatrixXd::Zero(3, 3);

  VectorXd x(2), u(1), w(1);
  x << 0.3, -0.8;
  u << 0.5;
  w << 0.2;
  const PlantDerivatives der = finite_difference_derivatives(plant, x, u, w);

  MatrixXd a_true(2, 2);
  a_true << 0.0, std::cos(x(1)), x(1), x(0);
  CHECK((der.a - a_true).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(der.bu(0, 0) == doctest::Approx(w(0)).epsilon(1e-7));
  CHECK(der.bu(1, 0) == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(der.bw(0, 0) == doctest::Approx(u(0)).epsilon(1e-7));

  // Hand-expanded quadratic model of the (already quadratic) stage cost.
  const MatrixXd& r = der.stage_quad;
  CHECK(r(0, 0) == doctest::Approx(plant.stage_cost(x, u)));
  CHECK(2.0 * r(0, 1) == doctest::Approx(2.0 * x(0) + 2.0 * u(0)).epsilon(1e-6));
  CHECK(2.0 * r(1, 1) == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(2.0 * r(1, 3) == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(2.0 * r(3, 3) == doctest::Approx(6.0).epsilon(1e-4));
}

TEST_SUITE_END();
