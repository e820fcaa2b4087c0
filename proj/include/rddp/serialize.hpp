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
#ifndef RDDP_SERIALIZE_HPP
#define RDDP_SERIALIZE_HPP

#include <string>
#include <vector>

#include "json.hpp"
#include "rddp/driver.hpp"

namespace rddp {

struct SchemaMismatch : std::runtime_error {
  explicit SchemaMismatch(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr const char* kPlanSchema = "rddp-plan/1";

/// Versioned plan document: policies, value matrices, trajectory and the
/// iteration log. Round-trips through plan_from_json.
nlohmann::json plan_to_json(const RobustPlan& plan);

/// Throws SchemaMismatch unless the document carries kPlanSchema.
RobustPlan plan_from_json(const nlohmann::json& doc);

/// CSV with header "t,<states...>,<inputs...>"; the input columns are empty
/// on the terminal row. Doubles are printed round-trip exact.
std::string trajectory_csv(const Trajectory& trajectory,
                           const std::vector<std::string>& state_names,
                           const std::vector<std::string>& input_names);

std::string format_double(double v);

}  // namespace rddp

#endif  // RDDP_SERIALIZE_HPP
