#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pdlqr/lqr.hpp"
#include "pdlqr/nlp.hpp"

namespace pdlqr {

enum class PenaltyMode { RecomputeEachIter, NpsqpMonotone };

struct SolverConfig {
  int max_iterations = 200;
  double tol_step = 1e-8;      // on max(|dx|_inf, |du|_inf, |dlambda|_inf)
  double tol_feas = 1e-8;      // on |d|_inf
  double armijo_factor = 1e-4;
  double backtrack_factor = 0.5;
  int max_linesearch_steps = 20;
  double d_small = 1e-12;      // Euclidean threshold for the penalty branch
  double default_rho = 0.01;
  double mu_init = 0.0;
  double reg_factor = 10.0;
  double mu_min = 1e-8;
  double mu_max = 1e8;
  PenaltyMode penalty_mode = PenaltyMode::RecomputeEachIter;
  HessianMode hessian_mode = HessianMode::GaussNewton;
  LqrBackend lqr_backend = LqrBackend::Sequential;
  bool clamp_hessian = false;
  double clamp_floor = 1e-8;

  void validate() const {
    if (!(armijo_factor > 0.0 && armijo_factor < 1.0))
      throw std::invalid_argument("SolverConfig: armijo_factor must be in (0, 1)");
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
      throw std::invalid_argument("SolverConfig: backtrack_factor must be in (0, 1)");
    if (!(reg_factor > 1.0))
      throw std::invalid_argument("SolverConfig: reg_factor must be > 1");
    if (!(mu_min <= mu_max))
      throw std::invalid_argument("SolverConfig: mu_min must be <= mu_max");
  }
};

struct TraceRecord {
  int iteration = 0;
  double objective = 0.0;        // at the post-step iterate
  double cnorm2 = 0.0;           // ||c||^2 at the post-step iterate
  double dir_derivative = 0.0;   // merit directional derivative of the step
  double alpha = 0.0;
  double rho = 0.0;
  double mu_max = 0.0;
  int linesearch_steps = 0;
  double merit_before = 0.0;
  double merit_after = 0.0;
};

enum class SolveStatus { Converged, MaxIterations, LineSearchFailure, RegularizationFailure };

struct SolveResult {
  Iterate iterate;
  SolveStatus status = SolveStatus::MaxIterations;
  std::vector<TraceRecord> trace;
};

struct SqpStep {
  std::vector<Vector> dx;       // N+1
  std::vector<Vector> du;       // N
  std::vector<Vector> dlambda;  // N+1
};

class RegularizationLimitReached : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline double inf_norm(const std::vector<Vector>& vs) {
  double out = 0.0;
  for (const auto& v : vs) {
    if (v.size() > 0) out = std::max(out, v.lpNorm<Eigen::Infinity>());
  }
  return out;
}

inline double euclidean_norm(const std::vector<Vector>& vs) {
  double sq = 0.0;
  for (const auto& v : vs) sq += v.squaredNorm();
  return std::sqrt(sq);
}

}  // namespace detail

/// Penalty rule: rho = 2 |dlambda| / |d| when the residual is not
/// acceptably close to zero, otherwise the default 0.01.
inline double penalty_update(const std::vector<Vector>& dlambda, const std::vector<Vector>& d,
                             const SolverConfig& config) {
  const double dnorm = detail::euclidean_norm(d);
  if (dnorm > config.d_small) {
    return 2.0 * detail::euclidean_norm(dlambda) / dnorm;
  }
  return config.default_rho;
}

/// Monotone variant: rho never decreases; when the directional
/// derivative would be nonnegative at the current rho, rho is set to
/// twice the minimal value restoring negativity.
inline double penalty_update_monotone(double rho_prev, double quad_term, double cross_term,
                                      double d_squared) {
  if (d_squared <= 0.0) return rho_prev;
  // D(rho) = -quad + 2 cross - rho * |d|^2 < 0  iff  rho > (2 cross - quad) / |d|^2.
  const double needed = (2.0 * cross_term - quad_term) / d_squared;
  if (-quad_term + 2.0 * cross_term - rho_prev * d_squared < 0.0) return rho_prev;
  return std::max(rho_prev, 2.0 * std::max(needed, 0.0));
}

enum class RegEvent { FactorizationFailed, Succeeded };

/// Per-stage regularization schedule: failures scale mu up by the
/// configured factor (throwing once the cap is exhausted); successes
/// scale it down, snapping to exactly zero below mu_min.
inline double regularization_update(double mu, RegEvent event, const SolverConfig& config) {
  if (event == RegEvent::FactorizationFailed) {
    if (mu >= config.mu_max) {
      throw RegularizationLimitReached("regularization_update: mu_max exhausted");
    }
    return std::min(config.mu_max, std::max(config.mu_min, mu) * config.reg_factor);
  }
  const double next = mu / config.reg_factor;
  return next < config.mu_min ? 0.0 : next;
}

inline bool check_convergence(const SqpStep& step, const std::vector<Vector>& d,
                              const SolverConfig& config) {
  const double step_norm = std::max(
      {detail::inf_norm(step.dx), detail::inf_norm(step.du), detail::inf_norm(step.dlambda)});
  return step_norm <= config.tol_step && detail::inf_norm(d) <= config.tol_feas;
}

struct LineSearchResult {
  bool success = false;
  double alpha = 0.0;
  int steps = 0;  // number of merit evaluations performed
  double merit_before = 0.0;
  double merit_after = 0.0;
  Iterate next;
};

namespace detail {

inline Iterate apply_step(const Iterate& z, const SqpStep& step, double alpha) {
  Iterate out = z;
  for (std::size_t i = 0; i < out.x.size(); ++i) out.x[i] += alpha * step.dx[i];
  for (std::size_t i = 0; i < out.u.size(); ++i) out.u[i] += alpha * step.du[i];
  for (std::size_t i = 0; i < out.lambda.size(); ++i)
    out.lambda[i] += alpha * step.dlambda[i];
  return out;
}

}  // namespace detail

/// Armijo backtracking: alpha in {1, 1/2, 1/4, ...} until
/// m(z + alpha dz) < m(z) + k alpha D. When the primal step and the
/// residual are both exactly zero but dlambda is not, a full step is
/// taken without evaluating the merit function.
inline LineSearchResult line_search(const OcpProblem& problem, const Iterate& z,
                                    const SqpStep& step, const std::vector<Vector>& d,
                                    double rho, double dir_derivative,
                                    const SolverConfig& config) {
  LineSearchResult out;
  const double primal_norm = std::max(detail::inf_norm(step.dx), detail::inf_norm(step.du));
  if (primal_norm == 0.0 && detail::inf_norm(d) == 0.0 &&
      detail::inf_norm(step.dlambda) > 0.0) {
    out.success = true;
    out.alpha = 1.0;
    out.next = detail::apply_step(z, step, 1.0);
    out.merit_before = out.merit_after = 0.0;
    return out;
  }
  const double m0 = merit(problem, z, rho);
  out.merit_before = m0;
  // Below the merit's rounding noise the Armijo comparison carries no
  // information; accept the full step rather than backtracking on noise.
  if (std::abs(dir_derivative) <=
      64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(m0))) {
    out.success = true;
    out.alpha = 1.0;
    out.next = detail::apply_step(z, step, 1.0);
    out.merit_after = m0;
    return out;
  }
  double alpha = 1.0;
  for (int i = 0; i < config.max_linesearch_steps; ++i) {
    Iterate cand = detail::apply_step(z, step, alpha);
    const double m1 = merit(problem, cand, rho);
    ++out.steps;
    if (m1 < m0 + config.armijo_factor * alpha * dir_derivative) {
      out.success = true;
      out.alpha = alpha;
      out.merit_after = m1;
      out.next = std::move(cand);
      return out;
    }
    alpha *= config.backtrack_factor;
  }
  return out;
}

/// The outer SQP loop. Per iteration: assemble residuals, gradient, and
/// regularized Hessian blocks; solve the LQR-shaped Newton-KKT
/// subproblem (retrying with more regularization on factorization
/// failures); stop if the step and residual already meet the tolerances;
/// otherwise update the penalty, backtrack along the step, apply it, and
/// decay the regularization.
inline SolveResult solve(const OcpProblem& problem, const Iterate& init,
                         const SolverConfig& config = {}) {
  config.validate();
  SolveResult result;
  Iterate z = init;
  if (z.lambda.empty()) {
    z.lambda.assign(problem.N + 1, Vector::Zero(problem.n));
  }
  std::vector<double> mu(problem.N + 1, config.mu_init);
  double rho = config.default_rho;
  result.status = SolveStatus::MaxIterations;

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    const auto d = constraint_residuals(problem, z);
    const auto l = lagrangian_gradient(problem, z);

    HessianBlocks blocks;
    SqpStep step;
    bool converged = false;
    bool rejected = false;
    double dir_derivative = 0.0;
    LineSearchResult ls;
    // Retry with more regularization until the subproblem both factors
    // and yields a usable (descent or pure-dual) direction. Indefinite
    // exact-Hessian blocks can factor yet produce an ascent direction
    // for the merit; both events consume the same mu schedule.
    for (;;) {
      blocks = hessian_blocks(problem, z, config.hessian_mode, mu,
                              config.clamp_hessian ? config.clamp_floor : 0.0);
      const LqrData sub = build_lqr_subproblem(problem, z, blocks, d, l);
      bool factored = false;
      int failed_stage = 0;
      try {
        const LqrSolution sol = solve_lqr(sub, config.lqr_backend);
        step.dx = sol.x;
        step.du = sol.u;
        step.dlambda = sol.lambda;
        factored = true;
      } catch (const NotPositiveDefinite& e) {
        failed_stage = e.stage();
      }
      if (factored) {
        if (check_convergence(step, d, config)) {
          converged = true;
          break;
        }
        double quad = 0.0, cross = 0.0, dsq = 0.0;
        const int N = problem.N;
        for (int i = 0; i < N; ++i) {
          quad += step.dx[i].dot(blocks.stage[i].xx * step.dx[i]) +
                  step.du[i].dot(blocks.stage[i].uu * step.du[i]) +
                  2.0 * step.dx[i].dot(blocks.stage[i].xu * step.du[i]);
        }
        quad += step.dx[N].dot(blocks.terminal * step.dx[N]);
        for (int i = 0; i <= N; ++i) {
          cross += d[i].dot(step.dlambda[i]);
          dsq += d[i].squaredNorm();
        }
        if (config.penalty_mode == PenaltyMode::RecomputeEachIter) {
          rho = penalty_update(step.dlambda, d, config);
        } else {
          rho = penalty_update_monotone(rho, quad, cross, dsq);
        }
        dir_derivative = -quad + 2.0 * cross - rho * dsq;
        const double primal_norm =
            std::max(detail::inf_norm(step.dx), detail::inf_norm(step.du));
        // Primal already at tolerance: the merit is flat in lambda up to
        // ||dlambda||*||d||, so take the full dual step without a search
        // (exact-zero case included). One more iteration then converges.
        if (primal_norm <= config.tol_step && detail::inf_norm(d) <= config.tol_feas) {
          ls = LineSearchResult{};
          ls.success = true;
          ls.alpha = 1.0;
          ls.next = detail::apply_step(z, step, 1.0);
          ls.merit_before = ls.merit_after = merit(problem, z, rho);
          break;
        }
        if (dir_derivative < 0.0) {
          ls = line_search(problem, z, step, d, rho, dir_derivative, config);
          if (ls.success) break;
          rejected = true;
        }
      }
      try {
        if (factored) {
          // Ascent direction or rejected step: stiffen every stage.
          for (auto& mi : mu)
            mi = regularization_update(mi, RegEvent::FactorizationFailed, config);
        } else {
          mu[failed_stage] =
              regularization_update(mu[failed_stage], RegEvent::FactorizationFailed, config);
        }
      } catch (const RegularizationLimitReached&) {
        result.status =
            rejected ? SolveStatus::LineSearchFailure : SolveStatus::RegularizationFailure;
        result.iterate = std::move(z);
        return result;
      }
    }

    if (converged) {
      result.status = SolveStatus::Converged;
      break;
    }

    z = std::move(ls.next);

    TraceRecord rec;
    rec.iteration = iter;
    rec.objective = objective(problem, z);
    double cnorm2 = 0.0;
    for (const auto& di : constraint_residuals(problem, z)) cnorm2 += di.squaredNorm();
    rec.cnorm2 = cnorm2;
    rec.dir_derivative = dir_derivative;
    rec.alpha = ls.alpha;
    rec.rho = rho;
    rec.mu_max = mu.empty() ? 0.0 : *std::max_element(mu.begin(), mu.end());
    rec.linesearch_steps = ls.steps;
    rec.merit_before = ls.merit_before;
    rec.merit_after = ls.merit_after;
    result.trace.push_back(rec);

    for (auto& mi : mu) mi = regularization_update(mi, RegEvent::Succeeded, config);
  }

  result.iterate = std::move(z);
  return result;
}

}  // namespace pdlqr
