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
#include "rddp/serialize.hpp"

#include <cstdio>

namespace rddp {

namespace {

nlohmann::json vec_json(const VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

nlohmann::json mat_json(const MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

VectorXd vec_from(const nlohmann::json& j) {
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

MatrixXd mat_from(const nlohmann::json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

Strategy strategy_from(const std::string& s) {
  if (s == "simple") return Strategy::kSimple;
  if (s == "dual") return Strategy::kDual;
  if (s == "canonical") return Strategy::kCanonical;
  return Strategy::kAuto;
}

StepStatus step_status_from(const std::string& s) {
  if (s == "optimal") return StepStatus::kOptimal;
  if (s == "not_applicable") return StepStatus::kNotApplicable;
  if (s == "regularity_violated") return StepStatus::kRegularityViolated;
  if (s == "rank_deficient") return StepStatus::kRankDeficient;
  if (s == "infeasible") return StepStatus::kInfeasible;
  if (s == "primal_check_failed") return StepStatus::kPrimalCheckFailed;
  return StepStatus::kNumericalFailure;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::json plan_to_json(const RobustPlan& plan) {
  nlohmann::json doc;
  doc["schema"] = kPlanSchema;
  doc["status"] = to_string(plan.status);
  doc["certificate"] = to_string(plan.certificate);
  doc["iterations"] = plan.iterations;

  nlohmann::json policies = nlohmann::json::array();
  for (const auto& p : plan.policies) {
    policies.push_back({{"x_anchor", vec_json(p.x_anchor)},
                        {"u_anchor", vec_json(p.u_anchor)},
                        {"k1", vec_json(p.k1)},
                        {"K2", mat_json(p.k2)}});
  }
  doc["policies"] = policies;

  nlohmann::json values = nlohmann::json::array();
  for (const auto& v : plan.values) {
    values.push_back({{"anchor", vec_json(v.anchor())}, {"matrix", mat_json(v.matrix())}});
  }
  doc["values"] = values;

  nlohmann::json traj;
  nlohmann::json xs = nlohmann::json::array();
  for (const auto& x : plan.trajectory.xs) xs.push_back(vec_json(x));
  nlohmann::json us = nlohmann::json::array();
  for (const auto& u : plan.trajectory.us) us.push_back(vec_json(u));
  traj["x"] = xs;
  traj["u"] = us;
  doc["trajectory"] = traj;

  nlohmann::json log = nlohmann::json::array();
  for (const auto& rec : plan.log) {
    log.push_back({{"dx_norm", rec.dx_norm},
                   {"nominal_cost", rec.nominal_cost},
                   {"certified_bound", rec.certified_bound}});
  }
  doc["log"] = log;

  nlohmann::json trace = nlohmann::json::array();
  for (const auto& tr : plan.backward_trace) {
    trace.push_back({{"t", tr.t},
                     {"strategy", to_string(tr.strategy)},
                     {"status", to_string(tr.status)},
                     {"trace_objective", tr.trace_objective},
                     {"certificate_margin", tr.certificate_margin},
                     {"lambda", tr.lambda}});
  }
  doc["backward_trace"] = trace;
  return doc;
}

RobustPlan plan_from_json(const nlohmann::json& doc) {
  if (!doc.contains("schema") || doc["schema"] != kPlanSchema) {
    throw SchemaMismatch("plan_from_json: expected schema " + std::string(kPlanSchema));
  }
  RobustPlan plan;
  const std::string status = doc["status"].get<std::string>();
  plan.status = status == "converged"   ? PlanStatus::kConverged
                : status == "max_iters" ? PlanStatus::kMaxIters
                                        : PlanStatus::kBackwardFailed;
  plan.certificate = doc["certificate"] == "exact" ? CertificateLabel::kExact
                                                   : CertificateLabel::kLocal;
  plan.iterations = doc["iterations"].get<int>();

  for (const auto& p : doc["policies"]) {
    AffinePolicy policy;
    policy.x_anchor = vec_from(p["x_anchor"]);
    policy.u_anchor = vec_from(p["u_anchor"]);
    policy.k1 = vec_from(p["k1"]);
    policy.k2 = mat_from(p["K2"]);
    plan.policies.push_back(std::move(policy));
  }
  for (const auto& v : doc["values"]) {
    plan.values.emplace_back(mat_from(v["matrix"]), vec_from(v["anchor"]));
  }
  for (const auto& x : doc["trajectory"]["x"]) plan.trajectory.xs.push_back(vec_from(x));
  for (const auto& u : doc["trajectory"]["u"]) plan.trajectory.us.push_back(vec_from(u));
  for (const auto& rec : doc["log"]) {
    plan.log.push_back({rec["dx_norm"].get<double>(), rec["nominal_cost"].get<double>(),
                        rec["certified_bound"].get<double>()});
  }
  if (doc.contains("backward_trace")) {
    for (const auto& tr : doc["backward_trace"]) {
      BackwardStepTrace step;
      step.t = tr["t"].get<int>();
      step.strategy = strategy_from(tr["strategy"].get<std::string>());
      step.status = step_status_from(tr["status"].get<std::string>());
      step.trace_objective = tr["trace_objective"].get<double>();
      step.certificate_margin = tr["certificate_margin"].get<double>();
      step.lambda = tr["lambda"].get<std::vector<double>>();
      plan.backward_trace.push_back(std::move(step));
    }
  }
  return plan;
}

std::string trajectory_csv(const Trajectory& trajectory,
                           const std::vector<std::string>& state_names,
                           const std::vector<std::string>& input_names) {
  std::string out = "t";
  for (const auto& s : state_names) out += "," + s;
  for (const auto& s : input_names) out += "," + s;
  out += "\n";
  for (size_t t = 0; t < trajectory.xs.size(); ++t) {
    out += std::to_string(t);
    const VectorXd& x = trajectory.xs[t];
    for (int i = 0; i < x.size(); ++i) out += "," + format_double(x(i));
    if (t < trajectory.us.size()) {
      const VectorXd& u = trajectory.us[t];
      for (int i = 0; i < u.size(); ++i) out += "," + format_double(u(i));
    } else {
      for (size_t i = 0; i < input_names.size(); ++i) out += ",";
    }
    out += "\n";
  }
  return out;
}

}  // namespace rddp
