#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "pdlqr/solver.hpp"

namespace pdlqr {

inline std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::MaxIterations: return "MaxIterations";
    case SolveStatus::LineSearchFailure: return "LineSearchFailure";
    case SolveStatus::RegularizationFailure: return "RegularizationFailure";
  }
  return "Unknown";
}

inline nlohmann::json config_to_json(const SolverConfig& config) {
  nlohmann::json j;
  j["max_iterations"] = config.max_iterations;
  j["tol_step"] = config.tol_step;
  j["tol_feas"] = config.tol_feas;
  j["armijo_factor"] = config.armijo_factor;
  j["backtrack_factor"] = config.backtrack_factor;
  j["max_linesearch_steps"] = config.max_linesearch_steps;
  j["d_small"] = config.d_small;
  j["default_rho"] = config.default_rho;
  j["mu_init"] = config.mu_init;
  j["reg_factor"] = config.reg_factor;
  j["mu_min"] = config.mu_min;
  j["mu_max"] = config.mu_max;
  j["penalty_mode"] =
      config.penalty_mode == PenaltyMode::RecomputeEachIter ? "recompute" : "npsqp";
  j["hessian_mode"] =
      config.hessian_mode == HessianMode::GaussNewton ? "gauss_newton" : "exact";
  j["lqr_backend"] = config.lqr_backend == LqrBackend::Sequential ? "sequential" : "parallel";
  j["clamp_hessian"] = config.clamp_hessian;
  j["clamp_floor"] = config.clamp_floor;
  return j;
}

// Column order mirrors the solver log table, then the extras.
inline nlohmann::json trace_to_json(const std::vector<TraceRecord>& trace) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : trace) {
    nlohmann::json row;
    row["iteration"] = r.iteration;
    row["objective"] = r.objective;
    row["cnorm2"] = r.cnorm2;
    row["dir_derivative"] = r.dir_derivative;
    row["alpha"] = r.alpha;
    row["rho"] = r.rho;
    row["mu_max"] = r.mu_max;
    row["linesearch_steps"] = r.linesearch_steps;
    row["merit_before"] = r.merit_before;
    row["merit_after"] = r.merit_after;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace pdlqr
