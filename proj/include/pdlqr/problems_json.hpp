#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "pdlqr/lqr_json.hpp"
#include "pdlqr/problems.hpp"

namespace pdlqr::problems {

// ProblemSpec JSON schema; omitted fields keep the registry defaults for
// the named problem:
// {
//   "name": "pendulum_swingup", "N": 100, "dt": 0.05,
//   "mass": 1.0, "cart_mass": 1.0, "length": 1.0,
//   "gravity": 9.81, "damping": 0.1,
//   "start": [...], "goal": [...],
//   "state_weights": [...], "control_weight": 0.05,
//   "terminal_weights": [...],
//   "discretization": "rk4" | "euler"
// }
inline ProblemSpec spec_from_json(const nlohmann::json& j) {
  if (!j.contains("name") || !j["name"].is_string()) {
    throw JsonFormatError("field 'name' must be a string");
  }
  ProblemSpec spec = default_spec(j["name"].get<std::string>());
  auto get_double = [&](const char* field, double& target) {
    if (!j.contains(field)) return;
    if (!j[field].is_number()) throw JsonFormatError(std::string("field '") + field + "' must be a number");
    target = j[field].get<double>();
  };
  auto get_vector = [&](const char* field, Vector& target) {
    if (!j.contains(field)) return;
    target = json_detail::read_vector(j, field, static_cast<int>(target.size()));
  };
  if (j.contains("N")) spec.N = json_detail::read_positive_int(j, "N");
  get_double("dt", spec.dt);
  get_double("mass", spec.mass);
  get_double("cart_mass", spec.cart_mass);
  get_double("length", spec.length);
  get_double("gravity", spec.gravity);
  get_double("damping", spec.damping);
  get_double("control_weight", spec.control_weight);
  get_vector("start", spec.start);
  get_vector("goal", spec.goal);
  get_vector("state_weights", spec.state_weights);
  get_vector("terminal_weights", spec.terminal_weights);
  if (j.contains("discretization")) {
    const std::string disc = j["discretization"].get<std::string>();
    if (disc == "euler") {
      spec.discretization = Discretization::Euler;
    } else if (disc == "rk4") {
      spec.discretization = Discretization::Rk4;
    } else {
      throw JsonFormatError("field 'discretization' must be 'euler' or 'rk4'");
    }
  }
  spec.validate();
  return spec;
}

}  // namespace pdlqr::problems
