#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pdlqr/nlp.hpp"

namespace pdlqr::problems {

enum class Discretization { Euler, Rk4 };

// Continuous-time control system with analytic derivatives. `hessians`
// returns, per state component l, the full (n+m)x(n+m) second-derivative
// matrix of that component with respect to (x, u).
struct ContinuousModel {
  int n = 0;
  int m = 0;
  std::function<Vector(const Vector&, const Vector&)> f;
  std::function<void(const Vector&, const Vector&, Matrix&, Matrix&)> jacobians;
  std::function<std::vector<Matrix>(const Vector&, const Vector&)> hessians;
};

struct ProblemSpec {
  std::string name;
  int N = 50;
  double dt = 0.05;
  double mass = 1.0;        // pendulum bob / cartpole pole mass (kg)
  double cart_mass = 1.0;   // cartpole cart mass (kg)
  double length = 1.0;      // pendulum / pole length (m)
  double gravity = 9.81;    // m/s^2
  double damping = 0.0;
  Vector start;
  Vector goal;
  Vector state_weights;     // diagonal stage state weights
  double control_weight = 0.1;
  Vector terminal_weights;  // diagonal terminal weights
  Discretization discretization = Discretization::Rk4;

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("ProblemSpec: dt must be > 0");
    if (N < 1) throw std::invalid_argument("ProblemSpec: N must be >= 1");
    if (!(control_weight > 0.0))
      throw std::invalid_argument("ProblemSpec: control_weight must be > 0");
    if ((state_weights.array() < 0.0).any() || (terminal_weights.array() < 0.0).any())
      throw std::invalid_argument("ProblemSpec: weights must be >= 0");
  }
};

namespace detail {

// Value, Jacobian, and per-component Hessians of one integrator stage,
// all with respect to the step inputs z = (x, u).
struct StageDeriv {
  Vector k;                // n
  Matrix J;                // n x (n+m)
  std::vector<Matrix> H;   // n of (n+m) x (n+m)
};

inline StageDeriv eval_stage(const ContinuousModel& model, const Vector& x, const Vector& u,
                             double a, const StageDeriv* prev, bool with_hessian) {
  const int n = model.n, m = model.m;
  StageDeriv out;
  const Vector y = prev ? Vector(x + a * prev->k) : x;
  Matrix W = Matrix::Zero(n, n + m);  // dy/dz
  W.leftCols(n) = Matrix::Identity(n, n);
  if (prev) W += a * prev->J;
  Matrix fx(n, n), fu(n, m);
  model.jacobians(y, u, fx, fu);
  out.k = model.f(y, u);
  out.J = fx * W;
  out.J.rightCols(m) += fu;
  if (with_hessian) {
    Matrix V = Matrix::Zero(n + m, n + m);  // d(y,u)/dz
    V.topRows(n) = W;
    V.bottomRightCorner(m, m) = Matrix::Identity(m, m);
    const auto Hf = model.hessians(y, u);
    out.H.resize(n);
    for (int l = 0; l < n; ++l) {
      out.H[l] = V.transpose() * Hf[l] * V;
      if (prev) {
        for (int s = 0; s < n; ++s) {
          if (fx(l, s) != 0.0) out.H[l] += a * fx(l, s) * prev->H[s];
        }
      }
    }
  }
  return out;
}

struct DiscreteDeriv {
  Vector next;
  Matrix A;  // n x n
  Matrix B;  // n x m
  std::vector<Matrix> H;  // empty unless requested
};

inline DiscreteDeriv discretize(const ContinuousModel& model, Discretization disc, double h,
                                const Vector& x, const Vector& u, bool with_hessian) {
  const int n = model.n, m = model.m;
  DiscreteDeriv out;
  Matrix J;  // n x (n+m) Jacobian of the state increment
  if (disc == Discretization::Euler) {
    const auto s1 = eval_stage(model, x, u, 0.0, nullptr, with_hessian);
    out.next = x + h * s1.k;
    J = h * s1.J;
    if (with_hessian) {
      out.H.resize(n);
      for (int l = 0; l < n; ++l) out.H[l] = h * s1.H[l];
    }
  } else {
    const auto s1 = eval_stage(model, x, u, 0.0, nullptr, with_hessian);
    const auto s2 = eval_stage(model, x, u, 0.5 * h, &s1, with_hessian);
    const auto s3 = eval_stage(model, x, u, 0.5 * h, &s2, with_hessian);
    const auto s4 = eval_stage(model, x, u, h, &s3, with_hessian);
    out.next = x + (h / 6.0) * (s1.k + 2.0 * s2.k + 2.0 * s3.k + s4.k);
    J = (h / 6.0) * (s1.J + 2.0 * s2.J + 2.0 * s3.J + s4.J);
    if (with_hessian) {
      out.H.resize(n);
      for (int l = 0; l < n; ++l) {
        out.H[l] = (h / 6.0) * (s1.H[l] + 2.0 * s2.H[l] + 2.0 * s3.H[l] + s4.H[l]);
      }
    }
  }
  out.A = J.leftCols(n);
  out.A += Matrix::Identity(n, n);
  out.B = J.rightCols(m);
  return out;
}

inline ContinuousModel double_integrator_model() {
  ContinuousModel model;
  model.n = 2;
  model.m = 1;
  model.f = [](const Vector& x, const Vector& u) {
    Vector out(2);
    out << x(1), u(0);
    return out;
  };
  model.jacobians = [](const Vector&, const Vector&, Matrix& fx, Matrix& fu) {
    fx.setZero();
    fx(0, 1) = 1.0;
    fu.setZero();
    fu(1, 0) = 1.0;
  };
  model.hessians = [](const Vector&, const Vector&) {
    return std::vector<Matrix>(2, Matrix::Zero(3, 3));
  };
  return model;
}

inline ContinuousModel pendulum_model(double mass, double length, double gravity,
                                      double damping) {
  ContinuousModel model;
  model.n = 2;
  model.m = 1;
  const double inertia = mass * length * length;
  model.f = [=](const Vector& x, const Vector& u) {
    Vector out(2);
    out << x(1), (u(0) - damping * x(1)) / inertia - (gravity / length) * std::sin(x(0));
    return out;
  };
  model.jacobians = [=](const Vector& x, const Vector&, Matrix& fx, Matrix& fu) {
    fx.setZero();
    fx(0, 1) = 1.0;
    fx(1, 0) = -(gravity / length) * std::cos(x(0));
    fx(1, 1) = -damping / inertia;
    fu.setZero();
    fu(1, 0) = 1.0 / inertia;
  };
  model.hessians = [=](const Vector& x, const Vector&) {
    std::vector<Matrix> H(2, Matrix::Zero(3, 3));
    H[1](0, 0) = (gravity / length) * std::sin(x(0));
    return H;
  };
  return model;
}

inline ContinuousModel cartpole_model(double cart_mass, double pole_mass, double length,
                                      double gravity) {
  // State (p, th, pd, thd); th = 0 hanging down, th = pi upright.
  ContinuousModel model;
  model.n = 4;
  model.m = 1;
  const double mc = cart_mass, mp = pole_mass, l = length, g = gravity;
  model.f = [=](const Vector& x, const Vector& u) {
    const double th = x(1), thd = x(3), F = u(0);
    const double s = std::sin(th), c = std::cos(th);
    const double den = mc + mp * s * s;
    Vector out(4);
    out(0) = x(2);
    out(1) = thd;
    out(2) = (F + mp * s * (l * thd * thd + g * c)) / den;
    out(3) = (-F * c - mp * l * thd * thd * c * s - (mc + mp) * g * s) / (l * den);
    return out;
  };
  model.jacobians = [=](const Vector& x, const Vector& u, Matrix& fx, Matrix& fu) {
    const double th = x(1), thd = x(3), F = u(0);
    fx.setZero();
    fu.setZero();
    fx(0, 2) = 1.0;
    fx(1, 3) = 1.0;
    const double den = mc + mp * std::pow(std::sin(th), 2);
    fx(2, 1) = (1.0 / 4.0) * mp *
               (-4 * F * std::sin(2 * th) + 4 * g * mc * std::cos(2 * th) +
                2 * g * mp * std::cos(2 * th) - 2 * g * mp +
                4 * l * mc * std::pow(thd, 2) * std::cos(th) -
                l * mp * std::pow(thd, 2) * std::cos(th) +
                l * mp * std::pow(thd, 2) * std::cos(3 * th)) /
               std::pow(den, 2);
    fx(2, 3) = 2 * l * mp * thd * std::sin(th) / den;
    fu(2, 0) = 1.0 / den;
    fx(3, 1) = (mp *
                    (2 * F * std::cos(th) + 2 * g * (mc + mp) * std::sin(th) +
                     l * mp * std::pow(thd, 2) * std::sin(2 * th)) *
                    std::sin(th) * std::cos(th) +
                den * (F * std::sin(th) - g * (mc + mp) * std::cos(th) +
                       l * mp * std::pow(thd, 2) * std::pow(std::sin(th), 2) -
                       l * mp * std::pow(thd, 2) * std::pow(std::cos(th), 2))) /
               (l * std::pow(den, 2));
    fx(3, 3) = -mp * thd * std::sin(2 * th) / den;
    fu(3, 0) = -std::cos(th) / (l * den);
  };
  model.hessians = [=](const Vector& x, const Vector& u) {
    const double th = x(1), thd = x(3), F = u(0);
    std::vector<Matrix> H(4, Matrix::Zero(5, 5));
    const double den = mc + mp * std::pow(std::sin(th), 2);
    H[2](1, 1) = -mp *
                 (4 * mp * den *
                      (-2 * g * std::pow(std::sin(th), 2) + g +
                       l * std::pow(thd, 2) * std::cos(th)) *
                      std::sin(th) * std::cos(th) +
                  (F + mp * (g * std::cos(th) + l * std::pow(thd, 2)) * std::sin(th)) *
                      (mp * (std::cos(4 * th) - 1) + 2 * den * std::cos(2 * th)) +
                  std::pow(den, 2) * (4 * g * std::cos(th) + l * std::pow(thd, 2)) *
                      std::sin(th)) /
                 std::pow(den, 3);
    H[2](1, 3) = 2 * l * mp * thd * (mc - mp * std::pow(std::sin(th), 2)) * std::cos(th) /
                 std::pow(den, 2);
    H[2](1, 4) = -mp * std::sin(2 * th) / std::pow(den, 2);
    H[2](3, 3) = 2 * l * mp * std::sin(th) / den;
    H[3](1, 1) = (1.0 / 2.0) *
                 (-8 * mp * den *
                      (F * std::sin(th) - g * (mc + mp) * std::cos(th) +
                       l * mp * std::pow(thd, 2) * std::pow(std::sin(th), 2) -
                       l * mp * std::pow(thd, 2) * std::pow(std::cos(th), 2)) *
                      std::sin(th) * std::cos(th) +
                  mp * (mp * (std::cos(4 * th) - 1) + 2 * den * std::cos(2 * th)) *
                      (2 * F * std::cos(th) + 2 * g * (mc + mp) * std::sin(th) +
                       l * mp * std::pow(thd, 2) * std::sin(2 * th)) +
                  2 * std::pow(den, 2) *
                      (F * std::cos(th) + g * (mc + mp) * std::sin(th) +
                       2 * l * mp * std::pow(thd, 2) * std::sin(2 * th))) /
                 (l * std::pow(den, 3));
    H[3](1, 3) = 2 * mp * thd *
                 (2 * mc * std::pow(std::sin(th), 2) - mc + mp * std::pow(std::sin(th), 2)) /
                 std::pow(den, 2);
    H[3](1, 4) = (mc + mp * std::pow(std::cos(th), 2) + mp) * std::sin(th) /
                 (l * std::pow(den, 2));
    H[3](3, 3) = -mp * std::sin(2 * th) / den;
    // Fill the symmetric halves.
    for (auto& Hl : H) Hl = Matrix(Hl.selfadjointView<Eigen::Upper>());
    return H;
  };
  return model;
}

inline ContinuousModel model_for_spec(const ProblemSpec& spec) {
  if (spec.name == "double_integrator") return double_integrator_model();
  if (spec.name == "pendulum_swingup")
    return pendulum_model(spec.mass, spec.length, spec.gravity, spec.damping);
  if (spec.name == "cartpole_swingup")
    return cartpole_model(spec.cart_mass, spec.mass, spec.length, spec.gravity);
  throw std::out_of_range("unknown problem name: " + spec.name);
}

}  // namespace detail

inline ProblemSpec default_spec(const std::string& name) {
  ProblemSpec spec;
  spec.name = name;
  if (name == "double_integrator") {
    spec.N = 40;
    spec.dt = 0.1;
    spec.start = (Vector(2) << 1.0, 0.0).finished();
    spec.goal = Vector::Zero(2);
    spec.state_weights = (Vector(2) << 1.0, 0.1).finished();
    spec.control_weight = 0.1;
    spec.terminal_weights = (Vector(2) << 10.0, 1.0).finished();
  } else if (name == "pendulum_swingup") {
    spec.N = 100;
    spec.dt = 0.05;
    spec.mass = 1.0;
    spec.length = 1.0;
    spec.damping = 0.1;
    spec.start = Vector::Zero(2);
    spec.goal = (Vector(2) << M_PI, 0.0).finished();
    spec.state_weights = (Vector(2) << 5.0, 5.0).finished();
    spec.control_weight = 0.5;
    spec.terminal_weights = (Vector(2) << 100.0, 100.0).finished();
  } else if (name == "cartpole_swingup") {
    spec.N = 100;
    spec.dt = 0.04;
    spec.cart_mass = 1.0;
    spec.mass = 0.3;
    spec.length = 0.5;
    spec.start = Vector::Zero(4);
    spec.goal = (Vector(4) << 0.0, M_PI, 0.0, 0.0).finished();
    spec.state_weights = (Vector(4) << 0.5, 2.0, 0.1, 0.1).finished();
    spec.control_weight = 0.05;
    spec.terminal_weights = (Vector(4) << 50.0, 100.0, 10.0, 10.0).finished();
  } else {
    throw std::out_of_range("unknown problem name: " + name);
  }
  return spec;
}

inline std::vector<std::string> registered_problems() {
  return {"double_integrator", "pendulum_swingup", "cartpole_swingup"};
}

inline OcpProblem make_problem(const ProblemSpec& spec) {
  spec.validate();
  const auto model = detail::model_for_spec(spec);
  OcpProblem problem;
  problem.N = spec.N;
  problem.n = model.n;
  problem.m = model.m;
  problem.s0 = spec.start;

  const Vector goal = spec.goal;
  const Vector wx = spec.state_weights * spec.dt;
  const double wu = spec.control_weight * spec.dt;
  const Vector wf = spec.terminal_weights;
  const auto disc = spec.discretization;
  const double dt = spec.dt;

  problem.stage_cost = [wx, wu, goal](int, const Vector& x, const Vector& u) {
    const Vector e = x - goal;
    return 0.5 * e.dot(wx.asDiagonal() * e) + 0.5 * wu * u.squaredNorm();
  };
  problem.stage_cost_gradient = [wx, wu, goal](int, const Vector& x, const Vector& u) {
    OcpProblem::CostGradient g;
    g.gx = wx.asDiagonal() * (x - goal);
    g.gu = wu * u;
    return g;
  };
  problem.stage_cost_hessian = [wx, wu](int, const Vector& x, const Vector& u) {
    OcpProblem::CostHessian h;
    h.xx = wx.asDiagonal();
    h.uu = wu * Matrix::Identity(u.size(), u.size());
    h.xu = Matrix::Zero(x.size(), u.size());
    return h;
  };
  problem.terminal_cost = [wf, goal](const Vector& x) {
    const Vector e = x - goal;
    return 0.5 * e.dot(wf.asDiagonal() * e);
  };
  problem.terminal_cost_gradient = [wf, goal](const Vector& x) {
    return Vector(wf.asDiagonal() * (x - goal));
  };
  problem.terminal_cost_hessian = [wf](const Vector&) { return Matrix(wf.asDiagonal()); };
  problem.dynamics = [model, disc, dt](int, const Vector& x, const Vector& u) {
    return detail::discretize(model, disc, dt, x, u, false).next;
  };
  problem.dynamics_jacobians = [model, disc, dt](int, const Vector& x, const Vector& u) {
    const auto d = detail::discretize(model, disc, dt, x, u, false);
    return OcpProblem::DynamicsJacobians{d.A, d.B};
  };
  problem.dynamics_hessian = [model, disc, dt](int, const Vector& x, const Vector& u,
                                               const Vector& lambda) {
    const auto d = detail::discretize(model, disc, dt, x, u, true);
    const int n = model.n, m = model.m;
    Matrix full = Matrix::Zero(n + m, n + m);
    for (int l = 0; l < n; ++l) full += lambda(l) * d.H[l];
    OcpProblem::CostHessian out;
    out.xx = full.topLeftCorner(n, n);
    out.uu = full.bottomRightCorner(m, m);
    out.xu = full.topRightCorner(n, m);
    return out;
  };
  return problem;
}

inline OcpProblem make_problem(const std::string& name) {
  return make_problem(default_spec(name));
}

/// Cold-start iterate: states linearly interpolated from start to goal,
/// controls and multipliers zero.
inline Iterate cold_start_iterate(const OcpProblem& problem, const Vector& start,
                                  const Vector& goal) {
  Iterate it = Iterate::zeros(problem);
  for (int i = 0; i <= problem.N; ++i) {
    const double t = problem.N == 0 ? 0.0 : static_cast<double>(i) / problem.N;
    it.x[i] = (1.0 - t) * start + t * goal;
  }
  return it;
}

struct EvaluatorCheck {
  std::string evaluator;
  double max_rel_err = 0.0;
  Vector worst_x;
  Vector worst_u;
};

struct DerivativeReport {
  std::vector<EvaluatorCheck> checks;

  double max_rel_err() const {
    double out = 0.0;
    for (const auto& c : checks) out = std::max(out, c.max_rel_err);
    return out;
  }
  const EvaluatorCheck& get(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.evaluator == name) return c;
    }
    throw std::out_of_range("no such evaluator check: " + name);
  }
};

/// Validates every analytic derivative of `problem` against central
/// finite differences at `num_points` random states/controls.
inline DerivativeReport derivative_check(const OcpProblem& problem, int num_points = 100,
                                         double step = 1e-6, unsigned seed = 0) {
  if (!(step > 0.0)) throw std::invalid_argument("derivative_check: step must be > 0");
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  auto random_vec = [&](int size) {
    Vector v(size);
    for (int i = 0; i < size; ++i) v(i) = dist(rng);
    return v;
  };

  DerivativeReport report;
  auto record = [&](const std::string& name, double err, const Vector& x, const Vector& u) {
    for (auto& c : report.checks) {
      if (c.evaluator == name) {
        if (err > c.max_rel_err) {
          c.max_rel_err = err;
          c.worst_x = x;
          c.worst_u = u;
        }
        return;
      }
    }
    report.checks.push_back({name, err, x, u});
  };
  auto rel = [](const Matrix& got, const Matrix& want) {
    return (got - want).cwiseAbs().maxCoeff() / (1.0 + want.cwiseAbs().maxCoeff());
  };

  const int stage = 0;
  for (int p = 0; p < num_points; ++p) {
    const Vector x = random_vec(problem.n);
    const Vector u = random_vec(problem.m);

    {
      const auto jac = problem.dynamics_jacobians(stage, x, u);
      Matrix fdA(problem.n, problem.n), fdB(problem.n, problem.m);
      for (int j = 0; j < problem.n; ++j) {
        Vector xp = x, xm = x;
        xp(j) += step;
        xm(j) -= step;
        fdA.col(j) =
            (problem.dynamics(stage, xp, u) - problem.dynamics(stage, xm, u)) / (2 * step);
      }
      for (int j = 0; j < problem.m; ++j) {
        Vector up = u, um = u;
        up(j) += step;
        um(j) -= step;
        fdB.col(j) =
            (problem.dynamics(stage, x, up) - problem.dynamics(stage, x, um)) / (2 * step);
      }
      record("dynamics_jacobian_A", rel(jac.A, fdA), x, u);
      record("dynamics_jacobian_B", rel(jac.B, fdB), x, u);
    }

    {
      const auto grad = problem.stage_cost_gradient(stage, x, u);
      Vector fdx(problem.n), fdu(problem.m);
      for (int j = 0; j < problem.n; ++j) {
        Vector xp = x, xm = x;
        xp(j) += step;
        xm(j) -= step;
        fdx(j) =
            (problem.stage_cost(stage, xp, u) - problem.stage_cost(stage, xm, u)) / (2 * step);
      }
      for (int j = 0; j < problem.m; ++j) {
        Vector up = u, um = u;
        up(j) += step;
        um(j) -= step;
        fdu(j) =
            (problem.stage_cost(stage, x, up) - problem.stage_cost(stage, x, um)) / (2 * step);
      }
      record("stage_cost_gradient", std::max(rel(grad.gx, fdx), rel(grad.gu, fdu)), x, u);
    }

    {
      const Vector gN = problem.terminal_cost_gradient(x);
      Vector fd(problem.n);
      for (int j = 0; j < problem.n; ++j) {
        Vector xp = x, xm = x;
        xp(j) += step;
        xm(j) -= step;
        fd(j) = (problem.terminal_cost(xp) - problem.terminal_cost(xm)) / (2 * step);
      }
      record("terminal_cost_gradient", rel(gN, fd), x, u);
    }

    if (problem.has_exact_dynamics_hessian()) {
      const Vector lambda = random_vec(problem.n);
      const auto contraction = problem.dynamics_hessian(stage, x, u, lambda);
      // FD of the gradient of lambda' f, built from analytic Jacobians.
      auto lam_grad = [&](const Vector& xx, const Vector& uu) {
        const auto jac = problem.dynamics_jacobians(stage, xx, uu);
        Vector g(problem.n + problem.m);
        g.head(problem.n) = jac.A.transpose() * lambda;
        g.tail(problem.m) = jac.B.transpose() * lambda;
        return g;
      };
      Matrix fd(problem.n + problem.m, problem.n + problem.m);
      for (int j = 0; j < problem.n; ++j) {
        Vector xp = x, xm = x;
        xp(j) += step;
        xm(j) -= step;
        fd.col(j) = (lam_grad(xp, u) - lam_grad(xm, u)) / (2 * step);
      }
      for (int j = 0; j < problem.m; ++j) {
        Vector up = u, um = u;
        up(j) += step;
        um(j) -= step;
        fd.col(problem.n + j) = (lam_grad(x, up) - lam_grad(x, um)) / (2 * step);
      }
      Matrix full(problem.n + problem.m, problem.n + problem.m);
      full << contraction.xx, contraction.xu, contraction.xu.transpose(), contraction.uu;
      record("dynamics_hessian_contraction", rel(full, 0.5 * (fd + fd.transpose())), x, u);
    }
  }
  return report;
}

}  // namespace pdlqr::problems
