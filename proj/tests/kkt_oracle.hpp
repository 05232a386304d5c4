// Test-only oracle: assembles the full Newton-KKT system of an LQR
// instance as one dense linear system and solves it generically. Kept
// independent of the Riccati/scan implementation paths it checks.
#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "pdlqr/lqr.hpp"
#include "pdlqr/nlp.hpp"

namespace pdlqr::testing {

struct KktSolution {
  std::vector<Vector> x;       // N+1
  std::vector<Vector> u;       // N
  std::vector<Vector> lambda;  // N+1
};

// Solves [[Q, A'], [A, 0]] (z, lambda) = -(l, d) for the LQR instance,
// where z stacks (x_0, u_0, ..., x_{N-1}, u_{N-1}, x_N), l stacks the
// linear cost terms, and d stacks (s_0, c_0, ..., c_{N-1}).
inline KktSolution solve_dense_kkt(const LqrData& data) {
  const int N = data.N, n = data.n, m = data.m;
  const int nz = N * (n + m) + n;
  const int nc = (N + 1) * n;

  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(nz, nz);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nc, nz);
  Eigen::VectorXd l = Eigen::VectorXd::Zero(nz);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(nc);

  for (int i = 0; i < N; ++i) {
    const auto& s = data.stages[i];
    const int zi = i * (n + m);
    Q.block(zi, zi, n, n) = s.Q;
    Q.block(zi, zi + n, n, m) = s.M;
    Q.block(zi + n, zi, m, n) = s.M.transpose();
    Q.block(zi + n, zi + n, m, m) = s.R;
    l.segment(zi, n) = s.q;
    l.segment(zi + n, m) = s.r;
  }
  Q.block(N * (n + m), N * (n + m), n, n) = data.QN;
  l.segment(N * (n + m), n) = data.qN;

  // Row 0: s_0 - x_0 = 0.
  A.block(0, 0, n, n) = -Eigen::MatrixXd::Identity(n, n);
  d.segment(0, n) = data.s0;
  for (int i = 0; i < N; ++i) {
    const auto& s = data.stages[i];
    const int row = (i + 1) * n;
    const int zi = i * (n + m);
    A.block(row, zi, n, n) = s.A;
    A.block(row, zi + n, n, m) = s.B;
    A.block(row, zi + n + m, n, n) = -Eigen::MatrixXd::Identity(n, n);
    d.segment(row, n) = s.c;
  }

  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nz + nc, nz + nc);
  kkt.topLeftCorner(nz, nz) = Q;
  kkt.topRightCorner(nz, nc) = A.transpose();
  kkt.bottomLeftCorner(nc, nz) = A;
  Eigen::VectorXd rhs(nz + nc);
  rhs << -l, -d;

  const Eigen::VectorXd sol = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(rhs);

  KktSolution out;
  out.x.resize(N + 1);
  out.u.resize(N);
  out.lambda.resize(N + 1);
  for (int i = 0; i < N; ++i) {
    out.x[i] = sol.segment(i * (n + m), n);
    out.u[i] = sol.segment(i * (n + m) + n, m);
  }
  out.x[N] = sol.segment(N * (n + m), n);
  for (int i = 0; i <= N; ++i) {
    out.lambda[i] = sol.segment(nz + i * n, n);
  }
  return out;
}

inline Matrix random_matrix(std::mt19937& rng, int rows, int cols, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = scale * dist(rng);
  return out;
}

inline Vector random_vector(std::mt19937& rng, int size, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vector out(size);
  for (int i = 0; i < size; ++i) out(i) = scale * dist(rng);
  return out;
}

inline Matrix random_spd(std::mt19937& rng, int size, double margin) {
  const Matrix L = random_matrix(rng, size, size);
  return Matrix(L * L.transpose() + margin * Matrix::Identity(size, size));
}

// Well-conditioned random LQR instance: R strictly positive definite and
// Q - M R^{-1} M' positive semi-definite by construction (Q is built as
// that Schur complement plus M R^{-1} M').
inline LqrData random_lqr_instance(std::mt19937& rng, int N, int n, int m) {
  LqrData data;
  data.N = N;
  data.n = n;
  data.m = m;
  data.s0 = random_vector(rng, n);
  data.stages.resize(N);
  for (auto& s : data.stages) {
    s.R = random_spd(rng, m, 0.5);
    s.M = random_matrix(rng, n, m, 0.3);
    const Matrix schur = random_spd(rng, n, 0.1);
    s.Q = schur + s.M * s.R.llt().solve(s.M.transpose());
    s.q = random_vector(rng, n);
    s.r = random_vector(rng, m);
    s.A = random_matrix(rng, n, n, 0.8);
    s.B = random_matrix(rng, n, m, 0.8);
    s.c = random_vector(rng, n, 0.5);
  }
  data.QN = random_spd(rng, n, 0.1);
  data.qN = random_vector(rng, n);
  return data;
}

inline double rel_err(const std::vector<Vector>& got, const std::vector<Vector>& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num = std::max(num, (got[i] - want[i]).lpNorm<Eigen::Infinity>());
    den = std::max(den, want[i].lpNorm<Eigen::Infinity>());
  }
  return num / std::max(1.0, den);
}

inline double rel_err(const Matrix& got, const Matrix& want) {
  return (got - want).cwiseAbs().maxCoeff() / std::max(1.0, want.cwiseAbs().maxCoeff());
}

/// Wraps an LQR instance as a general OcpProblem with exact derivatives.
inline OcpProblem lqr_as_nlp(const LqrData& data) {
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

}  // namespace pdlqr::testing
