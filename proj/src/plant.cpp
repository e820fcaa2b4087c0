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
#include "rddp/plant.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace rddp {

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
  VectorXd vector(int size, double scale) {
    VectorXd v(size);
    for (int i = 0; i < size; ++i) v(i) = scale * symmetric();
    return v;
  }
};

double fd_step(double coord) { return 1e-6 * (1.0 + std::abs(coord)); }

}  // namespace

ValueQuad GeneralizedPlant::terminal_value() const {
  VectorXd anchor = terminal_anchor;
  if (anchor.size() == 0) anchor = VectorXd::Zero(n);
  return ValueQuad(terminal_cost, anchor);
}

MatrixXd MultiplierSet::combine(const VectorXd& lambda) const {
  if (lambda.size() != size()) {
    throw DimensionMismatch("MultiplierSet::combine: lambda size mismatch");
  }
  MatrixXd out = MatrixXd::Zero(dims.total(), dims.total());
  for (int i = 0; i < size(); ++i) out += lambda(i) * generators[i].m;
  return out;
}

void MultiplierSet::check() const {
  for (const auto& gen : generators) {
    const int t = dims.total();
    if (gen.m.rows() != t || gen.m.cols() != t) {
      throw DimensionMismatch("MultiplierSet: generator size does not match block layout");
    }
    if ((gen.m - gen.m.transpose()).cwiseAbs().maxCoeff() >
        1e-12 * (1.0 + gen.m.cwiseAbs().maxCoeff())) {
      throw DimensionMismatch("MultiplierSet: generator is not symmetric");
    }
    const MatrixXd rebuilt = gen.mp.transpose() * gen.mp - gen.mm.transpose() * gen.mm;
    const double err = (rebuilt - gen.m).norm();
    if (err > 1e-10 * (1.0 + gen.m.norm())) {
      throw RankDeficientFactor("MultiplierSet: factorization does not reconstruct M");
    }
  }
}

UncertaintySample UncertaintySample::nominal(int horizon, int d, int l) {
  UncertaintySample s;
  s.provenance = Provenance::kNominal;
  s.gains.assign(horizon, MatrixXd::Zero(d, l));
  return s;
}

UncertaintySample UncertaintySample::from_box(const std::vector<ChannelSpec>& channels,
                                              const VectorXd& delta, int horizon, int d,
                                              int l, Provenance provenance) {
  if (delta.size() != static_cast<Eigen::Index>(channels.size())) {
    throw std::invalid_argument("UncertaintySample::from_box: one delta per channel");
  }
  for (int i = 0; i < delta.size(); ++i) {
    if (std::abs(delta(i)) > 1.0 + 1e-12) {
      throw std::invalid_argument("UncertaintySample::from_box: delta outside [-1, 1]");
    }
  }
  MatrixXd gain = MatrixXd::Zero(d, l);
  for (size_t c = 0; c < channels.size(); ++c) {
    const auto& ch = channels[c];
    if (ch.z_indices.size() != ch.w_indices.size()) {
      throw std::invalid_argument("UncertaintySample::from_box: channel index size mismatch");
    }
    for (size_t k = 0; k < ch.z_indices.size(); ++k) {
      gain(ch.w_indices[k], ch.z_indices[k]) = delta(static_cast<int>(c));
    }
  }
  UncertaintySample s;
  s.provenance = provenance;
  s.gains.assign(horizon, gain);
  return s;
}

bool ValidationReport::has(ValidationIssue::Kind kind) const {
  for (const auto& issue : issues) {
    if (issue.kind == kind) return true;
  }
  return false;
}

ValidationReport validate_plant(const GeneralizedPlant& plant, const ValidationOptions& opts) {
  ValidationReport report;
  auto add = [&](ValidationIssue::Kind kind, std::string message) {
    report.ok = false;
    report.issues.push_back({kind, std::move(message)});
  };

  if (plant.horizon < 1) {
    add(ValidationIssue::Kind::kBadHorizon, "horizon must be >= 1");
  }

  const MatrixXd& vt = plant.terminal_cost;
  if (vt.rows() != plant.n + 1 || vt.cols() != plant.n + 1) {
    add(ValidationIssue::Kind::kDimensionMismatch, "terminal cost must be (1+n) x (1+n)");
  } else {
    const double scale = 1.0 + vt.cwiseAbs().maxCoeff();
    if ((vt - vt.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
      add(ValidationIssue::Kind::kNonSymmetricTerminalCost, "terminal cost is not symmetric");
    } else if (!is_positive_semidefinite(vt)) {
      add(ValidationIssue::Kind::kTerminalCostNotPsd,
          "terminal cost is not positive semi-definite");
    }
  }

  SplitMix64 rng(opts.seed);
  const VectorXd x0 = rng.vector(plant.n, 1.0);
  const VectorXd u0 = rng.vector(plant.m, 1.0);
  const VectorXd w0 = rng.vector(plant.d, 1.0);

  if (plant.dynamics) {
    const VectorXd fx = plant.dynamics(x0, u0, w0);
    if (fx.size() != plant.n) {
      add(ValidationIssue::Kind::kDimensionMismatch,
          "dynamics returned " + std::to_string(fx.size()) + " entries, expected n = " +
              std::to_string(plant.n));
    }
  } else {
    add(ValidationIssue::Kind::kDimensionMismatch, "dynamics evaluator missing");
  }
  if (plant.l > 0) {
    if (!plant.uncertainty_output) {
      add(ValidationIssue::Kind::kDimensionMismatch, "uncertainty output evaluator missing");
    } else {
      const VectorXd z = plant.uncertainty_output(x0, u0, w0);
      if (z.size() != plant.l) {
        add(ValidationIssue::Kind::kDimensionMismatch,
            "uncertainty output returned " + std::to_string(z.size()) +
                " entries, expected l = " + std::to_string(plant.l));
      }
    }
  }

  // Sampled well-posedness probe of w = Delta(g(x, u, w)).
  if (plant.d == 0 || plant.l == 0 || !report.ok) {
    report.probe_skipped = true;
    return report;
  }
  const int s = static_cast<int>(plant.channels.size());
  for (int probe = 0; probe < opts.probes; ++probe) {
    const VectorXd x = rng.vector(plant.n, 2.0);
    const VectorXd u = rng.vector(plant.m, 2.0);
    MatrixXd gain;
    if (s > 0) {
      VectorXd delta(s);
      for (int i = 0; i < s; ++i) delta(i) = rng.symmetric();
      gain = UncertaintySample::from_box(plant.channels, delta, 1, plant.d, plant.l).gains[0];
    } else {
      gain = MatrixXd::Zero(plant.d, plant.l);
      for (int i = 0; i < plant.d; ++i)
        for (int j = 0; j < plant.l; ++j) gain(i, j) = rng.symmetric();
      const double norm = gain.norm();
      if (norm > 1.0) gain /= norm;  // contraction as the default probe class
    }

    auto iterate = [&](VectorXd w) {
      for (int it = 0; it < opts.fixed_point_iters; ++it) {
        const VectorXd next = gain * plant.uncertainty_output(x, u, w);
        if ((next - w).cwiseAbs().maxCoeff() < opts.fixed_point_tol) return next;
        w = next;
      }
      return VectorXd(VectorXd::Constant(plant.d, std::nan("")));
    };

    const VectorXd fix1 = iterate(VectorXd::Zero(plant.d));
    const VectorXd fix2 = iterate(rng.vector(plant.d, 1.0));
    ++report.probes_run;
    if (!fix1.allFinite() || !fix2.allFinite()) {
      add(ValidationIssue::Kind::kWellPosednessProbeFailed,
          "fixed-point iteration did not converge on probe " + std::to_string(probe));
      break;
    }
    if ((fix1 - fix2).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + fix1.cwiseAbs().maxCoeff())) {
      add(ValidationIssue::Kind::kWellPosednessProbeFailed,
          "fixed-point limit depends on the starting point on probe " + std::to_string(probe));
      break;
    }
  }
  return report;
}

MatrixXd linearize_output(const GeneralizedPlant& plant, const VectorXd& x, const VectorXd& u,
                          const VectorXd& w) {
  const int cols = 1 + plant.n + plant.m + plant.d;
  MatrixXd rows = MatrixXd::Zero(plant.l, cols);
  if (plant.l == 0) return rows;
  rows.col(0) = plant.uncertainty_output(x, u, w);

  auto diff = [&](auto&& eval, const VectorXd& v, int offset) {
    for (int i = 0; i < v.size(); ++i) {
      const double h = fd_step(v(i));
      VectorXd vp = v, vm = v;
      vp(i) += h;
      vm(i) -= h;
      rows.col(offset + i) = (eval(vp) - eval(vm)) / (2.0 * h);
    }
  };
  diff([&](const VectorXd& xv) { return plant.uncertainty_output(xv, u, w); }, x, 1);
  diff([&](const VectorXd& uv) { return plant.uncertainty_output(x, uv, w); }, u, 1 + plant.n);
  diff([&](const VectorXd& wv) { return plant.uncertainty_output(x, u, wv); }, w,
       1 + plant.n + plant.m);
  return rows;
}

MultiplierSet box_multipliers(const MatrixXd& z_rows, const std::vector<ChannelSpec>& channels,
                              BlockDims dims) {
  const int total = dims.total();
  if (z_rows.cols() != total) {
    throw DimensionMismatch("box_multipliers: z rows must span (1, dx, du, dw)");
  }
  MultiplierSet set;
  set.dims = dims;
  const int w_offset = 1 + dims.n + dims.m;
  for (const auto& ch : channels) {
    if (ch.z_indices.size() != ch.w_indices.size()) {
      throw DimensionMismatch("box_multipliers: channel z/w index count mismatch");
    }
    const int c = static_cast<int>(ch.z_indices.size());
    MatrixXd zi(c, total);
    MatrixXd ei = MatrixXd::Zero(c, total);
    for (int k = 0; k < c; ++k) {
      zi.row(k) = z_rows.row(ch.z_indices[k]);
      ei(k, w_offset + ch.w_indices[k]) = 1.0;
    }
    Eigen::JacobiSVD<MatrixXd> svd(zi);
    if (svd.singularValues().size() < c || svd.singularValues()(c - 1) <= 1e-12) {
      throw RankDeficientFactor("box_multipliers: channel z rows are rank deficient");
    }
    MultiplierGenerator gen;
    gen.mp = zi;
    gen.mm = ei;
    gen.m = zi.transpose() * zi - ei.transpose() * ei;
    gen.w_indices = ch.w_indices;
    set.generators.push_back(std::move(gen));
  }
  set.check();
  return set;
}

PlantDerivatives finite_difference_derivatives(const GeneralizedPlant& plant, const VectorXd& x,
                                               const VectorXd& u, const VectorXd& w) {
  PlantDerivatives out;
  out.f = plant.dynamics(x, u, w);
  out.a.resize(plant.n, plant.n);
  out.bu.resize(plant.n, plant.m);
  out.bw.resize(plant.n, plant.d);

  auto jac = [&](auto&& eval, const VectorXd& v, MatrixXd& target) {
    for (int i = 0; i < v.size(); ++i) {
      const double h = fd_step(v(i));
      VectorXd vp = v, vm = v;
      vp(i) += h;
      vm(i) -= h;
      target.col(i) = (eval(vp) - eval(vm)) / (2.0 * h);
    }
  };
  jac([&](const VectorXd& xv) { return plant.dynamics(xv, u, w); }, x, out.a);
  jac([&](const VectorXd& uv) { return plant.dynamics(x, uv, w); }, u, out.bu);
  jac([&](const VectorXd& wv) { return plant.dynamics(x, u, wv); }, w, out.bw);

  // Quadratic stage-cost model over (1, dx, du).
  const int q = 1 + plant.n + plant.m;
  MatrixXd quad = MatrixXd::Zero(q, q);
  quad(0, 0) = plant.stage_cost(x, u);

  VectorXd xu(plant.n + plant.m);
  xu.head(plant.n) = x;
  xu.tail(plant.m) = u;
  auto cost_at = [&](const VectorXd& v) {
    return plant.stage_cost(v.head(plant.n), v.tail(plant.m));
  };
  const int nm = plant.n + plant.m;
  VectorXd grad(nm);
  for (int i = 0; i < nm; ++i) {
    const double h = fd_step(xu(i));
    VectorXd vp = xu, vm = xu;
    vp(i) += h;
    vm(i) -= h;
    grad(i) = (cost_at(vp) - cost_at(vm)) / (2.0 * h);
  }
  MatrixXd hess(nm, nm);
  for (int i = 0; i < nm; ++i) {
    const double hi = 1e-4 * (1.0 + std::abs(xu(i)));
    for (int j = 0; j <= i; ++j) {
      const double hj = 1e-4 * (1.0 + std::abs(xu(j)));
      if (i == j) {
        VectorXd vp = xu, vm = xu;
        vp(i) += hi;
        vm(i) -= hi;
        hess(i, i) = (cost_at(vp) - 2.0 * quad(0, 0) + cost_at(vm)) / (hi * hi);
      } else {
        VectorXd vpp = xu, vpm = xu, vmp = xu, vmm = xu;
        vpp(i) += hi;
        vpp(j) += hj;
        vpm(i) += hi;
        vpm(j) -= hj;
        vmp(i) -= hi;
        vmp(j) += hj;
        vmm(i) -= hi;
        vmm(j) -= hj;
        hess(i, j) = (cost_at(vpp) - cost_at(vpm) - cost_at(vmp) + cost_at(vmm)) /
                     (4.0 * hi * hj);
        hess(j, i) = hess(i, j);
      }
    }
  }
  quad.block(0, 1, 1, nm) = 0.5 * grad.transpose();
  quad.block(1, 0, nm, 1) = 0.5 * grad;
  quad.block(1, 1, nm, nm) = 0.5 * hess;
  out.stage_quad = quad;
  return out;
}

PlantDerivatives plant_derivatives(const GeneralizedPlant& plant, const VectorXd& x,
                                   const VectorXd& u, const VectorXd& w) {
  if (plant.derivative_provider) return (*plant.derivative_provider)(x, u, w);
  return finite_difference_derivatives(plant, x, u, w);
}

}  // namespace rddp
