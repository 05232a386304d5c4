#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "pdlqr/lqr.hpp"

namespace pdlqr {

// Nonlinear optimal control problem
//   min sum_i g_i(x_i, u_i) + g_N(x_N)
//   s.t. x_0 = s_0,  x_{i+1} = f_i(x_i, u_i).
// Evaluators must be pure, deterministic, and safe to call concurrently
// across stages. Every derivative is supplied by the problem; without
// `dynamics_hessian` the solver runs in Gauss-Newton mode.
struct OcpProblem {
  struct CostGradient {
    Vector gx;  // n
    Vector gu;  // m
  };
  struct CostHessian {
    Matrix xx;  // n x n
    Matrix uu;  // m x m
    Matrix xu;  // n x m
  };
  struct DynamicsJacobians {
    Matrix A;  // n x n
    Matrix B;  // n x m
  };

  int N = 0;
  int n = 0;
  int m = 0;
  Vector s0;

  std::function<double(int, const Vector&, const Vector&)> stage_cost;
  std::function<CostGradient(int, const Vector&, const Vector&)> stage_cost_gradient;
  std::function<CostHessian(int, const Vector&, const Vector&)> stage_cost_hessian;
  std::function<double(const Vector&)> terminal_cost;
  std::function<Vector(const Vector&)> terminal_cost_gradient;
  std::function<Matrix(const Vector&)> terminal_cost_hessian;
  std::function<Vector(int, const Vector&, const Vector&)> dynamics;
  std::function<DynamicsJacobians(int, const Vector&, const Vector&)> dynamics_jacobians;
  // Contraction of the dynamics second derivatives with a multiplier:
  // the (x,u)-Hessian of lambda' f_i(x, u). Optional.
  std::function<CostHessian(int, const Vector&, const Vector&, const Vector&)>
      dynamics_hessian;

  bool has_exact_dynamics_hessian() const { return static_cast<bool>(dynamics_hessian); }
};

struct Iterate {
  std::vector<Vector> x;       // N+1
  std::vector<Vector> u;       // N
  std::vector<Vector> lambda;  // N+1

  static Iterate zeros(const OcpProblem& problem) {
    Iterate it;
    it.x.assign(problem.N + 1, Vector::Zero(problem.n));
    it.u.assign(problem.N, Vector::Zero(problem.m));
    it.lambda.assign(problem.N + 1, Vector::Zero(problem.n));
    return it;
  }
};

// Stagewise gradient of the Lagrangian; lx has N+1 entries, lu has N.
struct LagrangianGradient {
  std::vector<Vector> lx;
  std::vector<Vector> lu;
};

enum class HessianMode { GaussNewton, Exact };

struct HessianBlocks {
  std::vector<OcpProblem::CostHessian> stage;  // N entries
  Matrix terminal;                             // n x n
};

namespace detail {

// Neumaier-compensated accumulator. The merit comparison in the Armijo
// test operates on decreases near machine precision; naive summation of
// a hundred stage terms loses ~2 decimal digits there.
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

}  // namespace detail

inline double objective(const OcpProblem& problem, const Iterate& it) {
  detail::KahanSum v;
  for (int i = 0; i < problem.N; ++i) v.add(problem.stage_cost(i, it.x[i], it.u[i]));
  v.add(problem.terminal_cost(it.x[problem.N]));
  return v.value();
}

/// d_0 = s_0 - x_0, d_{i+1} = f_i(x_i, u_i) - x_{i+1}.
inline std::vector<Vector> constraint_residuals(const OcpProblem& problem, const Iterate& it) {
  std::vector<Vector> d(problem.N + 1);
  d[0] = problem.s0 - it.x[0];
  for (int i = 0; i < problem.N; ++i) {
    d[i + 1] = problem.dynamics(i, it.x[i], it.u[i]) - it.x[i + 1];
  }
  return d;
}

/// Stagewise gradient of L(x, lambda):
///   lx_i = dg/dx + A_i' lambda_{i+1} - lambda_i,  lu_i = dg/du + B_i' lambda_{i+1},
///   lx_N = dg_N/dx - lambda_N.
inline LagrangianGradient lagrangian_gradient(const OcpProblem& problem, const Iterate& it) {
  LagrangianGradient out;
  out.lx.resize(problem.N + 1);
  out.lu.resize(problem.N);
  for (int i = 0; i < problem.N; ++i) {
    const auto grad = problem.stage_cost_gradient(i, it.x[i], it.u[i]);
    const auto jac = problem.dynamics_jacobians(i, it.x[i], it.u[i]);
    out.lx[i] = grad.gx + jac.A.transpose() * it.lambda[i + 1] - it.lambda[i];
    out.lu[i] = grad.gu + jac.B.transpose() * it.lambda[i + 1];
  }
  out.lx[problem.N] = problem.terminal_cost_gradient(it.x[problem.N]) - it.lambda[problem.N];
  return out;
}

namespace detail {

// Clamps eigenvalues of a symmetric matrix from below.
inline Matrix eigenvalue_clamped(const Matrix& X, double floor) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(X);
  Vector ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Per-stage Hessian blocks of the Lagrangian. Gauss-Newton mode uses
/// cost Hessians only; Exact mode adds the dynamics-Hessian contraction
/// with lambda_{i+1}. Each block is symmetrized and shifted by mu_i * I;
/// with clamp_floor > 0 negative eigenvalues are raised to the floor
/// before the shift.
inline HessianBlocks hessian_blocks(const OcpProblem& problem, const Iterate& it,
                                    HessianMode mode, const std::vector<double>& mu,
                                    double clamp_floor = 0.0) {
  if (mode == HessianMode::Exact && !problem.has_exact_dynamics_hessian()) {
    throw std::invalid_argument("hessian_blocks: exact mode needs dynamics_hessian");
  }
  HessianBlocks out;
  out.stage.resize(problem.N);
  for (int i = 0; i < problem.N; ++i) {
    auto block = problem.stage_cost_hessian(i, it.x[i], it.u[i]);
    if (mode == HessianMode::Exact) {
      const auto dyn = problem.dynamics_hessian(i, it.x[i], it.u[i], it.lambda[i + 1]);
      block.xx += dyn.xx;
      block.uu += dyn.uu;
      block.xu += dyn.xu;
    }
    block.xx = detail::symmetrized(block.xx);
    block.uu = detail::symmetrized(block.uu);
    if (clamp_floor > 0.0) {
      Matrix full(problem.n + problem.m, problem.n + problem.m);
      full << block.xx, block.xu, block.xu.transpose(), block.uu;
      full = detail::eigenvalue_clamped(full, clamp_floor);
      block.xx = full.topLeftCorner(problem.n, problem.n);
      block.xu = full.topRightCorner(problem.n, problem.m);
      block.uu = full.bottomRightCorner(problem.m, problem.m);
    }
    const double shift = mu[i];
    block.xx.diagonal().array() += shift;
    block.uu.diagonal().array() += shift;
    out.stage[i] = std::move(block);
  }
  out.terminal = detail::symmetrized(problem.terminal_cost_hessian(it.x[problem.N]));
  if (clamp_floor > 0.0) {
    out.terminal = detail::eigenvalue_clamped(out.terminal, clamp_floor);
  }
  out.terminal.diagonal().array() += mu[problem.N];
  return out;
}

/// Maps the Newton-KKT system onto an LQR instance whose solution is the
/// primal-dual step (dx, du, dlambda): quadratic cost from the Hessian
/// blocks, linear cost from the Lagrangian gradient, linearized dynamics
/// with offsets c_i = d_{i+1}, and initial residual d_0 in the s0 slot.
inline LqrData build_lqr_subproblem(const OcpProblem& problem, const Iterate& it,
                                    const HessianBlocks& blocks,
                                    const std::vector<Vector>& d,
                                    const LagrangianGradient& l) {
  LqrData data;
  data.N = problem.N;
  data.n = problem.n;
  data.m = problem.m;
  data.s0 = d[0];
  data.stages.resize(problem.N);
  for (int i = 0; i < problem.N; ++i) {
    const auto jac = problem.dynamics_jacobians(i, it.x[i], it.u[i]);
    auto& s = data.stages[i];
    s.Q = blocks.stage[i].xx;
    s.R = blocks.stage[i].uu;
    s.M = blocks.stage[i].xu;
    s.q = l.lx[i];
    s.r = l.lu[i];
    s.A = jac.A;
    s.B = jac.B;
    s.c = d[i + 1];
  }
  data.QN = blocks.terminal;
  data.qN = l.lx[problem.N];
  return data;
}

/// m_rho(x, lambda) = L(x, lambda) + rho/2 ||c(x)||^2, with
/// L = objective + sum_i lambda_i' d_i.
inline double merit(const OcpProblem& problem, const Iterate& it, double rho) {
  const auto d = constraint_residuals(problem, it);
  detail::KahanSum acc;
  for (int i = 0; i < problem.N; ++i) acc.add(problem.stage_cost(i, it.x[i], it.u[i]));
  acc.add(problem.terminal_cost(it.x[problem.N]));
  for (int i = 0; i <= problem.N; ++i) {
    acc.add(it.lambda[i].dot(d[i]));
    acc.add(0.5 * rho * d[i].squaredNorm());
  }
  return acc.value();
}

/// Closed-form directional derivative of the merit function along the
/// SQP step: -dp' Qhat dp + 2 d' dlambda - rho ||d||^2. Valid for steps
/// satisfying the Newton-KKT relations at the current iterate.
inline double merit_directional_derivative(const HessianBlocks& blocks,
                                           const std::vector<Vector>& dx,
                                           const std::vector<Vector>& du,
                                           const std::vector<Vector>& dlambda,
                                           const std::vector<Vector>& d, double rho) {
  const int N = static_cast<int>(du.size());
  double quad = 0.0;
  for (int i = 0; i < N; ++i) {
    quad += dx[i].dot(blocks.stage[i].xx * dx[i]) + du[i].dot(blocks.stage[i].uu * du[i]) +
            2.0 * dx[i].dot(blocks.stage[i].xu * du[i]);
  }
  quad += dx[N].dot(blocks.terminal * dx[N]);
  double cross = 0.0;
  double dsq = 0.0;
  for (int i = 0; i <= N; ++i) {
    cross += d[i].dot(dlambda[i]);
    dsq += d[i].squaredNorm();
  }
  return -quad + 2.0 * cross - rho * dsq;
}

}  // namespace pdlqr
