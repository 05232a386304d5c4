#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pdlqr/scan.hpp"

namespace pdlqr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when a matrix required to be positive definite fails its
/// Cholesky factorization. `stage` identifies the offending stage so the
/// caller's regularization schedule can react locally.
class NotPositiveDefinite : public std::runtime_error {
 public:
  NotPositiveDefinite(const std::string& what, int stage)
      : std::runtime_error(what + " at stage " + std::to_string(stage)), stage_(stage) {}
  int stage() const { return stage_; }

 private:
  int stage_;
};

/// Thrown when (I + P C) in a value-function combination is singular.
class SingularCombination : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One stage of a discrete-time LQR problem. Cost convention:
//   0.5 x'Qx + q'x + 0.5 u'Ru + r'u + x'Mu      (no 1/2 on the cross term)
// Dynamics: x_next = A x + B u + c.
struct LqrStage {
  Matrix Q;  // n x n
  Matrix R;  // m x m, required positive definite
  Matrix M;  // n x m
  Vector q;  // n
  Vector r;  // m
  Matrix A;  // n x n
  Matrix B;  // n x m
  Vector c;  // n
};

struct LqrData {
  int N = 0;  // horizon, >= 1
  int n = 0;  // state dimension
  int m = 0;  // control dimension
  Vector s0;                     // initial state (or initial-state residual)
  std::vector<LqrStage> stages;  // length N
  Matrix QN;                     // n x n terminal cost
  Vector qN;                     // n

  void validate() const {
    if (N < 1 || static_cast<int>(stages.size()) != N) {
      throw std::invalid_argument("LqrData: horizon/stage count mismatch");
    }
    auto bad = [&](bool cond, const char* what) {
      if (cond) throw std::invalid_argument(std::string("LqrData: bad dimension for ") + what);
    };
    bad(s0.size() != n, "s0");
    bad(QN.rows() != n || QN.cols() != n, "QN");
    bad(qN.size() != n, "qN");
    for (const auto& s : stages) {
      bad(s.Q.rows() != n || s.Q.cols() != n, "Q");
      bad(s.R.rows() != m || s.R.cols() != m, "R");
      bad(s.M.rows() != n || s.M.cols() != m, "M");
      bad(s.q.size() != n, "q");
      bad(s.r.size() != m, "r");
      bad(s.A.rows() != n || s.A.cols() != n, "A");
      bad(s.B.rows() != n || s.B.cols() != m, "B");
      bad(s.c.size() != n, "c");
    }
  }

  double objective(const std::vector<Vector>& x, const std::vector<Vector>& u) const {
    double v = 0.0;
    for (int i = 0; i < N; ++i) {
      const auto& s = stages[i];
      v += 0.5 * x[i].dot(s.Q * x[i]) + s.q.dot(x[i]) + 0.5 * u[i].dot(s.R * u[i]) +
           s.r.dot(u[i]) + x[i].dot(s.M * u[i]);
    }
    v += 0.5 * x[N].dot(QN * x[N]) + qN.dot(x[N]);
    return v;
  }
};

// Value function parameters V_i(x) = 0.5 x'P_i x + p_i'x (constant dropped)
// and the feedback law u_i = K_i x_i + k_i.
struct RiccatiSolution {
  std::vector<Matrix> P;  // N+1
  std::vector<Vector> p;  // N+1
  std::vector<Matrix> K;  // N
  std::vector<Vector> k;  // N
};

struct LqrSolution {
  std::vector<Vector> x;       // N+1
  std::vector<Vector> u;       // N
  std::vector<Vector> lambda;  // N+1
};

// Interval value function V_{i->j} parameterized by (P, p, A, C, c):
//   V(x_i, x_j) = max_l 0.5 x_i'P x_i + p'x_i - 0.5 l'C l - l'(x_j - A x_i - c).
struct ValueElement {
  Matrix P;
  Vector p;
  Matrix A;
  Matrix C;
  Vector c;
};

namespace detail {

inline Matrix symmetrized(const Matrix& X) { return 0.5 * (X + X.transpose()); }

inline Eigen::LLT<Matrix> checked_llt(const Matrix& X, const char* what, int stage) {
  Eigen::LLT<Matrix> llt(X);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite(what, stage);
  }
  return llt;
}

}  // namespace detail

/// Backward Riccati recursion. P_N = Q_N, p_N = q_N, then per stage
///   G = R + B'P+ B,  H = B'P+ A + M',  h = B'(p+ + P+ c) + r,
///   K = -G^{-1} H,   k = -G^{-1} h,
///   P = Q + A'P+ A + K'H,  p = q + A'(p+ + P+ c) + K'h.
inline RiccatiSolution riccati_backward(const LqrData& data) {
  RiccatiSolution out;
  out.P.resize(data.N + 1);
  out.p.resize(data.N + 1);
  out.K.resize(data.N);
  out.k.resize(data.N);
  out.P[data.N] = detail::symmetrized(data.QN);
  out.p[data.N] = data.qN;
  for (int i = data.N - 1; i >= 0; --i) {
    const auto& s = data.stages[i];
    const Matrix& Pn = out.P[i + 1];
    const Vector pc = out.p[i + 1] + Pn * s.c;
    const Matrix G = s.R + s.B.transpose() * Pn * s.B;
    const Matrix H = s.B.transpose() * Pn * s.A + s.M.transpose();
    const Vector h = s.B.transpose() * pc + s.r;
    auto llt = detail::checked_llt(detail::symmetrized(G), "riccati_backward: G", i);
    out.K[i] = -llt.solve(H);
    out.k[i] = -llt.solve(h);
    out.P[i] = detail::symmetrized(s.Q + s.A.transpose() * Pn * s.A +
                                   out.K[i].transpose() * H);
    out.p[i] = s.q + s.A.transpose() * pc + out.K[i].transpose() * h;
  }
  return out;
}

/// LQR forward pass: x_0 = s_0, u_i = K_i x_i + k_i, x_{i+1} = A x + B u + c.
inline std::pair<std::vector<Vector>, std::vector<Vector>> riccati_forward(
    const LqrData& data, const RiccatiSolution& gains) {
  std::vector<Vector> x(data.N + 1), u(data.N);
  x[0] = data.s0;
  for (int i = 0; i < data.N; ++i) {
    const auto& s = data.stages[i];
    u[i] = gains.K[i] * x[i] + gains.k[i];
    x[i + 1] = s.A * x[i] + s.B * u[i] + s.c;
  }
  return {std::move(x), std::move(u)};
}

/// Single-interval value elements. Stages 0..N-1 eliminate the control:
///   P = Q - M R^{-1} M',  p = q - M R^{-1} r,  A = A - B R^{-1} M',
///   C = B R^{-1} B',      c = c - B R^{-1} r;
/// the terminal element is (Q_N, q_N, 0, 0, 0).
inline std::vector<ValueElement> make_leaf_elements(const LqrData& data) {
  std::vector<ValueElement> leaves(data.N + 1);
  for (int i = 0; i < data.N; ++i) {
    const auto& s = data.stages[i];
    auto llt = detail::checked_llt(detail::symmetrized(s.R), "make_leaf_elements: R", i);
    const Matrix RinvMt = llt.solve(s.M.transpose());
    const Matrix RinvBt = llt.solve(s.B.transpose());
    const Vector Rinvr = llt.solve(s.r);
    auto& e = leaves[i];
    e.P = detail::symmetrized(s.Q - s.M * RinvMt);
    e.p = s.q - s.M * Rinvr;
    e.A = s.A - s.B * RinvMt;
    e.C = detail::symmetrized(s.B * RinvBt);
    e.c = s.c - s.B * Rinvr;
  }
  auto& t = leaves[data.N];
  t.P = detail::symmetrized(data.QN);
  t.p = data.qN;
  t.A = Matrix::Zero(data.n, data.n);
  t.C = Matrix::Zero(data.n, data.n);
  t.c = Vector::Zero(data.n);
  return leaves;
}

/// Combination rule producing V_{i->k} from V_{i->j} and V_{j->k}.
inline ValueElement combine_value(const ValueElement& first, const ValueElement& second) {
  const auto n = first.P.rows();
  const Matrix I = Matrix::Identity(n, n);
  Eigen::FullPivLU<Matrix> lu(I + second.P * first.C);
  if (!lu.isInvertible()) {
    throw SingularCombination("combine_value: I + P C is singular");
  }
  const Matrix PA = lu.solve(second.P * first.A);
  ValueElement out;
  out.P = detail::symmetrized(first.A.transpose() * PA + first.P);
  out.p = first.A.transpose() * lu.solve(second.p + second.P * first.c) + first.p;
  Eigen::FullPivLU<Matrix> lu2(I + first.C * second.P);
  if (!lu2.isInvertible()) {
    throw SingularCombination("combine_value: I + C P is singular");
  }
  out.A = second.A * lu2.solve(first.A);
  out.C = detail::symmetrized(second.A * lu2.solve(first.C) * second.A.transpose() +
                              second.C);
  out.c = second.A * lu2.solve(first.c - first.C * second.p) + second.c;
  return out;
}

/// Parallel back-end value computation: a reverse scan over the interval
/// value elements yields the suffix P_i, p_i; gains then follow stagewise
/// from the same formulas as the sequential recursion, each stage
/// independent of the others.
inline RiccatiSolution parallel_value_scan(
    const LqrData& data, scan::Backend backend = scan::Backend::Tree) {
  const auto leaves = make_leaf_elements(data);
  const auto suffix = scan::reverse_scan(
      leaves, [](const ValueElement& a, const ValueElement& b) { return combine_value(a, b); },
      backend);
  RiccatiSolution out;
  out.P.resize(data.N + 1);
  out.p.resize(data.N + 1);
  out.K.resize(data.N);
  out.k.resize(data.N);
  for (int i = 0; i <= data.N; ++i) {
    out.P[i] = suffix[i].P;
    out.p[i] = suffix[i].p;
  }
  for (int i = 0; i < data.N; ++i) {
    const auto& s = data.stages[i];
    const Matrix& Pn = out.P[i + 1];
    const Vector pc = out.p[i + 1] + Pn * s.c;
    const Matrix G = s.R + s.B.transpose() * Pn * s.B;
    const Matrix H = s.B.transpose() * Pn * s.A + s.M.transpose();
    const Vector h = s.B.transpose() * pc + s.r;
    auto llt = detail::checked_llt(detail::symmetrized(G), "parallel_value_scan: G", i);
    out.K[i] = -llt.solve(H);
    out.k[i] = -llt.solve(h);
  }
  return out;
}

/// The affine map x -> linear x + offset, the element of the rollout scan.
struct AffineMap {
  Vector offset;
  Matrix linear;
};

/// Composition g after f: x -> g.linear (f.linear x + f.offset) + g.offset.
inline AffineMap compose_affine(const AffineMap& f, const AffineMap& g) {
  return AffineMap{g.linear * f.offset + g.offset, g.linear * f.linear};
}

/// Closed-loop rollout via affine-map composition. The stage maps
/// x_{i+1} = (A + B K) x + (B k + c) are prefix-composed with a forward
/// scan, so each x_i is the composed prefix applied directly to s_0.
inline std::pair<std::vector<Vector>, std::vector<Vector>> affine_rollout(
    const LqrData& data, const RiccatiSolution& gains,
    scan::Backend backend = scan::Backend::Tree) {
  std::vector<AffineMap> maps(data.N);
  for (int i = 0; i < data.N; ++i) {
    const auto& s = data.stages[i];
    maps[i].linear = s.A + s.B * gains.K[i];
    maps[i].offset = s.B * gains.k[i] + s.c;
  }
  const auto prefixes = scan::forward_scan(
      maps, [](const AffineMap& f, const AffineMap& g) { return compose_affine(f, g); },
      backend);
  std::vector<Vector> x(data.N + 1), u(data.N);
  x[0] = data.s0;
  for (int i = 0; i < data.N; ++i) {
    x[i + 1] = prefixes[i].linear * data.s0 + prefixes[i].offset;
  }
  for (int i = 0; i < data.N; ++i) {
    u[i] = gains.K[i] * x[i] + gains.k[i];
  }
  return {std::move(x), std::move(u)};
}

/// Dual recovery by backward recursion:
///   lambda_N = Q_N x_N + q_N,
///   lambda_i = Q_i x_i + M_i u_i + A_i' lambda_{i+1} + q_i.
inline std::vector<Vector> dual_backward(const LqrData& data, const std::vector<Vector>& x,
                                         const std::vector<Vector>& u) {
  std::vector<Vector> lambda(data.N + 1);
  lambda[data.N] = data.QN * x[data.N] + data.qN;
  for (int i = data.N - 1; i >= 0; --i) {
    const auto& s = data.stages[i];
    lambda[i] = s.Q * x[i] + s.M * u[i] + s.A.transpose() * lambda[i + 1] + s.q;
  }
  return lambda;
}

/// Dual recovery from the value parameters: lambda_i = P_i x_i + p_i,
/// every stage independent.
inline std::vector<Vector> dual_direct(const std::vector<Vector>& x,
                                       const RiccatiSolution& value) {
  std::vector<Vector> lambda(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    lambda[i] = value.P[i] * x[i] + value.p[i];
  }
  return lambda;
}

enum class LqrBackend { Sequential, Parallel };

/// Full primal-dual solve with the selected back-end.
inline LqrSolution solve_lqr(const LqrData& data, LqrBackend backend = LqrBackend::Sequential) {
  LqrSolution sol;
  if (backend == LqrBackend::Sequential) {
    const auto gains = riccati_backward(data);
    auto [x, u] = riccati_forward(data, gains);
    sol.lambda = dual_backward(data, x, u);
    sol.x = std::move(x);
    sol.u = std::move(u);
  } else {
    const auto gains = parallel_value_scan(data);
    auto [x, u] = affine_rollout(data, gains);
    sol.lambda = dual_direct(x, gains);
    sol.x = std::move(x);
    sol.u = std::move(u);
  }
  return sol;
}

}  // namespace pdlqr
