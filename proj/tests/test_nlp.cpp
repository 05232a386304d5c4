#include "pdlqr/nlp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kkt_oracle.hpp"

namespace {

using namespace pdlqr;
namespace pt = pdlqr::testing;

// Wraps an LqrData instance as an OcpProblem (quadratic costs, affine
// dynamics, exact Hessians).
OcpProblem lqr_as_nlp(const LqrData& data) {
  OcpProblem p;
  p.N = data.N;
  p.n = data.n;
  p.m = data.m;
  p.s0 = data.s0;
  p.stage_cost = [data](int i, const Vector& x, const Vector& u) {
    const auto& s = data.stages[i];
    return 0.5 * x.dot(s.Q * x) + s.q.dot(x) + 0.5 * u.dot(s.R * u) + s.r.dot(u) +
           x.dot(s.M * u);
  };
  p.stage_cost_gradient = [data](int i, const Vector& x, const Vector& u) {
    const auto& s = data.stages[i];
    return OcpProblem::CostGradient{s.Q * x + s.q + s.M * u,
                                    s.R * u + s.r + s.M.transpose() * x};
  };
  p.stage_cost_hessian = [data](int i, const Vector&, const Vector&) {
    const auto& s = data.stages[i];
    return OcpProblem::CostHessian{s.Q, s.R, s.M};
  };
  p.terminal_cost = [data](const Vector& x) {
    return 0.5 * x.dot(data.QN * x) + data.qN.dot(x);
  };
  p.terminal_cost_gradient = [data](const Vector& x) { return Vector(data.QN * x + data.qN); };
  p.terminal_cost_hessian = [data](const Vector&) { return data.QN; };
  p.dynamics = [data](int i, const Vector& x, const Vector& u) {
    const auto& s = data.stages[i];
    return Vector(s.A * x + s.B * u + s.c);
  };
  p.dynamics_jacobians = [data](int i, const Vector&, const Vector&) {
    const auto& s = data.stages[i];
    return OcpProblem::DynamicsJacobians{s.A, s.B};
  };
  p.dynamics_hessian = [](int, const Vector& x, const Vector& u, const Vector&) {
    return OcpProblem::CostHessian{Matrix::Zero(x.size(), x.size()),
                                   Matrix::Zero(u.size(), u.size()),
                                   Matrix::Zero(x.size(), u.size())};
  };
  return p;
}

// Small nonlinear test problem: n = m = 1, f_i(x, u) = x + sin(x) u.
OcpProblem nonlinear_problem(int N) {
  OcpProblem p;
  p.N = N;
  p.n = 1;
  p.m = 1;
  p.s0 = Vector::Constant(1, 0.7);
  p.stage_cost = [](int, const Vector& x, const Vector& u) {
    return 0.5 * x(0) * x(0) * u(0) + 0.25 * u(0) * u(0) + 0.1 * std::cos(x(0));
  };
  p.stage_cost_gradient = [](int, const Vector& x, const Vector& u) {
    return OcpProblem::CostGradient{
        Vector::Constant(1, x(0) * u(0) - 0.1 * std::sin(x(0))),
        Vector::Constant(1, 0.5 * x(0) * x(0) + 0.5 * u(0))};
  };
  p.stage_cost_hessian = [](int, const Vector& x, const Vector& u) {
    return OcpProblem::CostHessian{Matrix::Constant(1, 1, u(0) - 0.1 * std::cos(x(0))),
                                   Matrix::Constant(1, 1, 0.5),
                                   Matrix::Constant(1, 1, x(0))};
  };
  p.terminal_cost = [](const Vector& x) { return std::cosh(x(0)); };
  p.terminal_cost_gradient = [](const Vector& x) {
    return Vector::Constant(1, std::sinh(x(0)));
  };
  p.terminal_cost_hessian = [](const Vector& x) { return Matrix::Constant(1, 1, std::cosh(x(0))); };
  p.dynamics = [](int, const Vector& x, const Vector& u) {
    return Vector::Constant(1, x(0) + std::sin(x(0)) * u(0));
  };
  p.dynamics_jacobians = [](int, const Vector& x, const Vector& u) {
    return OcpProblem::DynamicsJacobians{Matrix::Constant(1, 1, 1.0 + std::cos(x(0)) * u(0)),
                                         Matrix::Constant(1, 1, std::sin(x(0)))};
  };
  p.dynamics_hessian = [](int, const Vector& x, const Vector& u, const Vector& lambda) {
    return OcpProblem::CostHessian{
        Matrix::Constant(1, 1, lambda(0) * (-std::sin(x(0)) * u(0))),
        Matrix::Zero(1, 1), Matrix::Constant(1, 1, lambda(0) * std::cos(x(0)))};
  };
  return p;
}

Iterate random_iterate(const OcpProblem& p, std::mt19937& rng, double scale = 1.0) {
  Iterate it = Iterate::zeros(p);
  for (auto& v : it.x) v = pt::random_vector(rng, p.n, scale);
  for (auto& v : it.u) v = pt::random_vector(rng, p.m, scale);
  for (auto& v : it.lambda) v = pt::random_vector(rng, p.n, scale);
  return it;
}

// Full Lagrangian, for finite-difference checks.
double lagrangian(const OcpProblem& p, const Iterate& it) {
  const auto d = constraint_residuals(p, it);
  double v = objective(p, it);
  for (int i = 0; i <= p.N; ++i) v += it.lambda[i].dot(d[i]);
  return v;
}

TEST(ConstraintResiduals, WarmStartedInitialStateGivesZero) {
  const auto p = nonlinear_problem(3);
  std::mt19937 rng(1);
  auto it = random_iterate(p, rng);
  it.x[0] = p.s0;
  const auto d = constraint_residuals(p, it);
  EXPECT_NEAR(d[0].lpNorm<Eigen::Infinity>(), 0.0, 0.0);
}

TEST(ConstraintResiduals, RolledOutTrajectoryIsFeasible) {
  const auto p = nonlinear_problem(5);
  std::mt19937 rng(2);
  auto it = random_iterate(p, rng);
  it.x[0] = p.s0;
  for (int i = 0; i < p.N; ++i) it.x[i + 1] = p.dynamics(i, it.x[i], it.u[i]);
  for (const auto& di : constraint_residuals(p, it)) {
    EXPECT_NEAR(di.lpNorm<Eigen::Infinity>(), 0.0, 1e-15);
  }
}

TEST(ConstraintResiduals, ScalarExample) {
  // f_0(x, u) = x + u, s_0 = 1, x = (0, 0), u = (3) -> d = (1, 3).
  OcpProblem p;
  p.N = 1;
  p.n = 1;
  p.m = 1;
  p.s0 = Vector::Ones(1);
  p.dynamics = [](int, const Vector& x, const Vector& u) { return Vector(x + u); };
  Iterate it;
  it.x = {Vector::Zero(1), Vector::Zero(1)};
  it.u = {Vector::Constant(1, 3.0)};
  it.lambda = {Vector::Zero(1), Vector::Zero(1)};
  const auto d = constraint_residuals(p, it);
  EXPECT_DOUBLE_EQ(d[0](0), 1.0);
  EXPECT_DOUBLE_EQ(d[1](0), 3.0);
}

TEST(LagrangianGradient, ZeroMultipliersReduceToCostGradient) {
  const auto p = nonlinear_problem(4);
  std::mt19937 rng(3);
  auto it = random_iterate(p, rng);
  for (auto& l : it.lambda) l.setZero();
  const auto l = lagrangian_gradient(p, it);
  for (int i = 0; i < p.N; ++i) {
    const auto g = p.stage_cost_gradient(i, it.x[i], it.u[i]);
    EXPECT_TRUE(l.lx[i].isApprox(g.gx));
    EXPECT_TRUE(l.lu[i].isApprox(g.gu));
  }
  EXPECT_TRUE(l.lx[p.N].isApprox(p.terminal_cost_gradient(it.x[p.N])));
}

TEST(LagrangianGradient, VanishesAtLqrKktPoint) {
  std::mt19937 rng(4);
  const auto data = pt::random_lqr_instance(rng, 6, 3, 2);
  const auto p = lqr_as_nlp(data);
  const auto sol = solve_lqr(data);
  Iterate it{sol.x, sol.u, sol.lambda};
  const auto l = lagrangian_gradient(p, it);
  for (int i = 0; i < p.N; ++i) {
    EXPECT_LT(l.lx[i].lpNorm<Eigen::Infinity>(), 1e-8);
    EXPECT_LT(l.lu[i].lpNorm<Eigen::Infinity>(), 1e-8);
  }
  EXPECT_LT(l.lx[p.N].lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(LagrangianGradient, MatchesFiniteDifferences) {
  const auto p = nonlinear_problem(4);
  std::mt19937 rng(5);
  const double step = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const auto it = random_iterate(p, rng);
    const auto l = lagrangian_gradient(p, it);
    double max_err = 0.0, scale = 1.0;
    for (int i = 0; i <= p.N; ++i) {
      for (int j = 0; j < p.n; ++j) {
        Iterate plus = it, minus = it;
        plus.x[i](j) += step;
        minus.x[i](j) -= step;
        const double fd = (lagrangian(p, plus) - lagrangian(p, minus)) / (2 * step);
        max_err = std::max(max_err, std::abs(l.lx[i](j) - fd));
        scale = std::max(scale, std::abs(fd));
      }
    }
    for (int i = 0; i < p.N; ++i) {
      for (int j = 0; j < p.m; ++j) {
        Iterate plus = it, minus = it;
        plus.u[i](j) += step;
        minus.u[i](j) -= step;
        const double fd = (lagrangian(p, plus) - lagrangian(p, minus)) / (2 * step);
        max_err = std::max(max_err, std::abs(l.lu[i](j) - fd));
        scale = std::max(scale, std::abs(fd));
      }
    }
    EXPECT_LT(max_err / scale, 1e-5);
  }
}

TEST(HessianBlocks, QuadraticProblemModesCoincide) {
  std::mt19937 rng(6);
  const auto data = pt::random_lqr_instance(rng, 4, 2, 2);
  const auto p = lqr_as_nlp(data);
  const auto it = random_iterate(p, rng);
  const std::vector<double> mu(p.N + 1, 0.0);
  const auto gn = hessian_blocks(p, it, HessianMode::GaussNewton, mu);
  const auto exact = hessian_blocks(p, it, HessianMode::Exact, mu);
  for (int i = 0; i < p.N; ++i) {
    EXPECT_TRUE(gn.stage[i].xx.isApprox(exact.stage[i].xx));
    EXPECT_TRUE(gn.stage[i].uu.isApprox(exact.stage[i].uu));
    EXPECT_TRUE(gn.stage[i].xu.isApprox(exact.stage[i].xu));
  }
  EXPECT_TRUE(gn.terminal.isApprox(exact.terminal));
}

TEST(HessianBlocks, PureRegularization) {
  OcpProblem p = nonlinear_problem(2);
  p.stage_cost_hessian = [](int, const Vector&, const Vector&) {
    return OcpProblem::CostHessian{Matrix::Zero(1, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
  };
  p.terminal_cost_hessian = [](const Vector&) { return Matrix::Zero(1, 1); };
  std::mt19937 rng(7);
  const auto it = random_iterate(p, rng);
  const std::vector<double> mu(p.N + 1, 0.1);
  const auto blocks = hessian_blocks(p, it, HessianMode::GaussNewton, mu);
  for (int i = 0; i < p.N; ++i) {
    EXPECT_DOUBLE_EQ(blocks.stage[i].xx(0, 0), 0.1);
    EXPECT_DOUBLE_EQ(blocks.stage[i].uu(0, 0), 0.1);
    EXPECT_DOUBLE_EQ(blocks.stage[i].xu(0, 0), 0.0);
  }
  EXPECT_DOUBLE_EQ(blocks.terminal(0, 0), 0.1);
}

TEST(HessianBlocks, ExactModeMatchesFiniteDifferencesOfGradient) {
  const auto p = nonlinear_problem(3);
  std::mt19937 rng(8);
  const auto it = random_iterate(p, rng);
  const std::vector<double> mu(p.N + 1, 0.0);
  const auto blocks = hessian_blocks(p, it, HessianMode::Exact, mu);
  const double step = 1e-6;
  // Stage 0 block vs FD of the stagewise pieces of grad L in (x_0, u_0).
  auto grad_stage0 = [&](const Iterate& z) {
    const auto g = p.stage_cost_gradient(0, z.x[0], z.u[0]);
    const auto jac = p.dynamics_jacobians(0, z.x[0], z.u[0]);
    Vector out(2);
    out(0) = g.gx(0) + (jac.A.transpose() * z.lambda[1])(0);
    out(1) = g.gu(0) + (jac.B.transpose() * z.lambda[1])(0);
    return out;
  };
  Matrix fd(2, 2);
  {
    Iterate plus = it, minus = it;
    plus.x[0](0) += step;
    minus.x[0](0) -= step;
    fd.col(0) = (grad_stage0(plus) - grad_stage0(minus)) / (2 * step);
  }
  {
    Iterate plus = it, minus = it;
    plus.u[0](0) += step;
    minus.u[0](0) -= step;
    fd.col(1) = (grad_stage0(plus) - grad_stage0(minus)) / (2 * step);
  }
  EXPECT_NEAR(blocks.stage[0].xx(0, 0), fd(0, 0), 1e-5 * (1 + std::abs(fd(0, 0))));
  EXPECT_NEAR(blocks.stage[0].uu(0, 0), fd(1, 1), 1e-5 * (1 + std::abs(fd(1, 1))));
  EXPECT_NEAR(blocks.stage[0].xu(0, 0), 0.5 * (fd(0, 1) + fd(1, 0)),
              1e-5 * (1 + std::abs(fd(0, 1))));
}

TEST(HessianBlocks, EigenvalueClampEnforcesFloor) {
  OcpProblem p = nonlinear_problem(1);
  p.stage_cost_hessian = [](int, const Vector&, const Vector&) {
    return OcpProblem::CostHessian{Matrix::Constant(1, 1, -2.0), Matrix::Constant(1, 1, 1.0),
                                   Matrix::Zero(1, 1)};
  };
  std::mt19937 rng(9);
  const auto it = random_iterate(p, rng);
  const std::vector<double> mu(p.N + 1, 0.0);
  const auto blocks = hessian_blocks(p, it, HessianMode::GaussNewton, mu, 1e-8);
  Matrix full(2, 2);
  full << blocks.stage[0].xx, blocks.stage[0].xu, blocks.stage[0].xu.transpose(),
      blocks.stage[0].uu;
  Eigen::SelfAdjointEigenSolver<Matrix> es(full);
  EXPECT_GE(es.eigenvalues().minCoeff(), 1e-8 * (1 - 1e-12));
}

TEST(BuildLqrSubproblem, KktPointGivesZeroStep) {
  std::mt19937 rng(10);
  const auto data = pt::random_lqr_instance(rng, 5, 3, 2);
  const auto p = lqr_as_nlp(data);
  const auto sol = solve_lqr(data);
  const Iterate it{sol.x, sol.u, sol.lambda};
  const auto d = constraint_residuals(p, it);
  const auto l = lagrangian_gradient(p, it);
  const std::vector<double> mu(p.N + 1, 0.0);
  const auto blocks = hessian_blocks(p, it, HessianMode::Exact, mu);
  const auto sub = build_lqr_subproblem(p, it, blocks, d, l);
  const auto step = solve_lqr(sub);
  for (const auto& v : step.x) EXPECT_LT(v.lpNorm<Eigen::Infinity>(), 1e-7);
  for (const auto& v : step.u) EXPECT_LT(v.lpNorm<Eigen::Infinity>(), 1e-7);
  for (const auto& v : step.lambda) EXPECT_LT(v.lpNorm<Eigen::Infinity>(), 1e-7);
}

TEST(BuildLqrSubproblem, LqrProblemAtZeroReproducesOriginalData) {
  std::mt19937 rng(11);
  const auto data = pt::random_lqr_instance(rng, 4, 2, 1);
  const auto p = lqr_as_nlp(data);
  const Iterate it = Iterate::zeros(p);
  const auto d = constraint_residuals(p, it);
  const auto l = lagrangian_gradient(p, it);
  const std::vector<double> mu(p.N + 1, 0.0);
  const auto blocks = hessian_blocks(p, it, HessianMode::Exact, mu);
  const auto sub = build_lqr_subproblem(p, it, blocks, d, l);
  // At x = u = lambda = 0 the linear terms are exactly the original ones.
  for (int i = 0; i < data.N; ++i) {
    EXPECT_TRUE(sub.stages[i].Q.isApprox(data.stages[i].Q, 1e-12));
    EXPECT_TRUE(sub.stages[i].R.isApprox(data.stages[i].R, 1e-12));
    EXPECT_TRUE(sub.stages[i].M.isApprox(data.stages[i].M, 1e-12));
    EXPECT_TRUE(sub.stages[i].q.isApprox(data.stages[i].q, 1e-12));
    EXPECT_TRUE(sub.stages[i].r.isApprox(data.stages[i].r, 1e-12));
    EXPECT_TRUE(sub.stages[i].A.isApprox(data.stages[i].A, 1e-12));
    EXPECT_TRUE(sub.stages[i].B.isApprox(data.stages[i].B, 1e-12));
    EXPECT_TRUE(sub.stages[i].c.isApprox(data.stages[i].c, 1e-12));
  }
  EXPECT_TRUE(sub.s0.isApprox(data.s0, 1e-12));
  // Its solution is the original optimum.
  const auto orig = solve_lqr(data);
  const auto step = solve_lqr(sub);
  EXPECT_LT(pt::rel_err(step.x, orig.x), 1e-10);
  EXPECT_LT(pt::rel_err(step.lambda, orig.lambda), 1e-10);
}

TEST(BuildLqrSubproblem, StepSatisfiesDenseNewtonKkt) {
  const auto p = nonlinear_problem(5);
  std::mt19937 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto it = random_iterate(p, rng);
    const auto d = constraint_residuals(p, it);
    const auto l = lagrangian_gradient(p, it);
    std::vector<double> mu(p.N + 1, 0.0);
    auto blocks = hessian_blocks(p, it, HessianMode::Exact, mu);
    LqrData sub;
    // The exact blocks may be indefinite; regularize until factorizable.
    for (double shift = 0.0;; shift = shift == 0.0 ? 1.0 : shift * 10) {
      std::vector<double> mus(p.N + 1, shift);
      blocks = hessian_blocks(p, it, HessianMode::Exact, mus);
      sub = build_lqr_subproblem(p, it, blocks, d, l);
      try {
        solve_lqr(sub);
        break;
      } catch (const NotPositiveDefinite&) {
        continue;
      }
    }
    const auto step = solve_lqr(sub);
    // Verify against the dense Newton-KKT system assembled directly.
    const auto oracle = pt::solve_dense_kkt(sub);
    EXPECT_LT(pt::rel_err(step.x, oracle.x), 1e-8);
    EXPECT_LT(pt::rel_err(step.u, oracle.u), 1e-8);
    EXPECT_LT(pt::rel_err(step.lambda, oracle.lambda), 1e-8);
  }
}

TEST(Merit, FeasibleIterateEqualsObjective) {
  const auto p = nonlinear_problem(4);
  std::mt19937 rng(13);
  auto it = random_iterate(p, rng);
  it.x[0] = p.s0;
  for (int i = 0; i < p.N; ++i) it.x[i + 1] = p.dynamics(i, it.x[i], it.u[i]);
  EXPECT_NEAR(merit(p, it, 7.5), objective(p, it), 1e-12);
}

TEST(Merit, RhoZeroEqualsLagrangian) {
  const auto p = nonlinear_problem(4);
  std::mt19937 rng(14);
  const auto it = random_iterate(p, rng);
  EXPECT_NEAR(merit(p, it, 0.0), lagrangian(p, it), 1e-12);
}

TEST(Merit, ScalarHandComputedExample) {
  // d = (1, 3), lambda = (1, 1), objective 2, rho = 2 -> 2 + 4 + 10 = 16.
  OcpProblem p;
  p.N = 1;
  p.n = 1;
  p.m = 1;
  p.s0 = Vector::Ones(1);
  p.stage_cost = [](int, const Vector&, const Vector&) { return 2.0; };
  p.terminal_cost = [](const Vector&) { return 0.0; };
  p.dynamics = [](int, const Vector& x, const Vector& u) { return Vector(x + u); };
  Iterate it;
  it.x = {Vector::Zero(1), Vector::Zero(1)};
  it.u = {Vector::Constant(1, 3.0)};
  it.lambda = {Vector::Ones(1), Vector::Ones(1)};
  EXPECT_DOUBLE_EQ(merit(p, it, 2.0), 16.0);
}

// Directional derivative checks live with the solver tests, which have a
// subproblem solve on hand; the trivial zero case is asserted here.
TEST(MeritDirectionalDerivative, ZeroStepZeroResidual) {
  HessianBlocks blocks;
  blocks.stage.resize(1, OcpProblem::CostHessian{Matrix::Identity(1, 1),
                                                 Matrix::Identity(1, 1), Matrix::Zero(1, 1)});
  blocks.terminal = Matrix::Identity(1, 1);
  const std::vector<Vector> zero2(2, Vector::Zero(1));
  const std::vector<Vector> zero1(1, Vector::Zero(1));
  EXPECT_DOUBLE_EQ(
      merit_directional_derivative(blocks, zero2, zero1, zero2, zero2, 3.0), 0.0);
}

}  // namespace
