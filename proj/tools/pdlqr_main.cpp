// Command-line harness: benchmark solves, standalone LQR solves, and the
// randomized oracle cross-check suite.
//
// Exit codes (frozen contract):
//   0 success / Converged
//   1 MaxIterations
//   2 LineSearchFailure
//   3 RegularizationFailure or LQR factorization failure
//   4 usage or input-file error
//   5 cross-check comparison failure

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <string>

#include "pdlqr/lqr_json.hpp"
#include "pdlqr/problems_json.hpp"
#include "pdlqr/solver_json.hpp"

namespace {

using namespace pdlqr;

constexpr int kExitOk = 0;
constexpr int kExitMaxIterations = 1;
constexpr int kExitLineSearchFailure = 2;
constexpr int kExitFactorization = 3;
constexpr int kExitUsage = 4;
constexpr int kExitCheckFailed = 5;

int status_exit_code(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return kExitOk;
    case SolveStatus::MaxIterations: return kExitMaxIterations;
    case SolveStatus::LineSearchFailure: return kExitLineSearchFailure;
    case SolveStatus::RegularizationFailure: return kExitFactorization;
  }
  return kExitUsage;
}

void print_trace_table(const std::vector<TraceRecord>& trace) {
  std::printf("%-10s %-14s %-14s %-14s %-6s\n", "Iteration", "Objective", "|c|^2", "m_rho'",
              "alpha");
  for (const auto& r : trace) {
    std::printf("%-10d %-14.6g %-14.6g %-14.6g %-6.4g\n", r.iteration, r.objective, r.cnorm2,
                r.dir_derivative, r.alpha);
  }
}

void write_trace_csv(const std::vector<TraceRecord>& trace, const std::string& path) {
  std::ofstream out(path);
  out << "iteration,objective,cnorm2,dir_derivative,alpha,rho,mu_max,linesearch_steps\n";
  char buf[512];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                  r.iteration, r.objective, r.cnorm2, r.dir_derivative, r.alpha, r.rho,
                  r.mu_max, r.linesearch_steps);
    out << buf;
  }
}

struct SolveOptions {
  std::string problem;
  std::string spec_file;
  std::string backend = "sequential";
  std::string hessian = "gauss_newton";
  std::string penalty_mode = "recompute";
  bool clamp = false;
  int max_iters = 200;
  double tol_step = 1e-8;
  double tol_feas = 1e-8;
  std::string trace_out;
  std::string trace_csv;
};

int run_solve(const SolveOptions& opt) {
  problems::ProblemSpec spec;
  try {
    if (!opt.spec_file.empty()) {
      std::ifstream in(opt.spec_file);
      if (!in) {
        std::cerr << "error: cannot open spec file " << opt.spec_file << "\n";
        return kExitUsage;
      }
      spec = problems::spec_from_json(nlohmann::json::parse(in));
    } else {
      spec = problems::default_spec(opt.problem);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  SolverConfig config;
  config.max_iterations = opt.max_iters;
  config.tol_step = opt.tol_step;
  config.tol_feas = opt.tol_feas;
  config.lqr_backend = opt.backend == "parallel" ? LqrBackend::Parallel : LqrBackend::Sequential;
  config.hessian_mode = opt.hessian == "exact" ? HessianMode::Exact : HessianMode::GaussNewton;
  config.penalty_mode = opt.penalty_mode == "npsqp" ? PenaltyMode::NpsqpMonotone
                                                    : PenaltyMode::RecomputeEachIter;
  config.clamp_hessian = opt.clamp;

  const auto problem = problems::make_problem(spec);
  const auto init = problems::cold_start_iterate(problem, spec.start, spec.goal);
  const auto result = solve(problem, init, config);

  print_trace_table(result.trace);
  std::printf("status: %s\n", to_string(result.status).c_str());

  if (!opt.trace_out.empty()) {
    nlohmann::json j;
    j["problem"] = spec.name;
    j["status"] = to_string(result.status);
    j["config"] = config_to_json(config);
    j["trace"] = trace_to_json(result.trace);
    std::ofstream out(opt.trace_out);
    out << j.dump(2) << "\n";
  }
  if (!opt.trace_csv.empty()) {
    write_trace_csv(result.trace, opt.trace_csv);
  }
  return status_exit_code(result.status);
}

int run_lqr(const std::string& input, const std::string& backend, const std::string& out_path) {
  LqrData data;
  try {
    std::ifstream in(input);
    if (!in) {
      std::cerr << "error: cannot open " << input << "\n";
      return kExitUsage;
    }
    data = lqr_from_json(nlohmann::json::parse(in));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  LqrSolution sol;
  try {
    sol = solve_lqr(data,
                    backend == "parallel" ? LqrBackend::Parallel : LqrBackend::Sequential);
  } catch (const NotPositiveDefinite& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFactorization;
  } catch (const SingularCombination& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFactorization;
  }
  const auto j = lqr_solution_to_json(sol);
  if (out_path.empty() || out_path == "-") {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream out(out_path);
    out << j.dump(2) << "\n";
  }
  return kExitOk;
}

int run_check(unsigned seed, int num_instances) {
  if (num_instances == 0) {
    std::cout << "warning: num_instances is 0; nothing checked (vacuous pass)\n";
    return kExitOk;
  }
  int failures = 0;
  const auto report = [&](const char* what, unsigned inst_seed, double err, double tol) {
    if (err > tol) {
      ++failures;
      std::printf("FAIL %-28s seed=%u err=%.3e tol=%.1e\n", what, inst_seed, err, tol);
    }
  };
  for (int k = 0; k < num_instances; ++k) {
    const unsigned inst_seed = seed + static_cast<unsigned>(k);
    std::mt19937 rng(inst_seed);
    // Inline generator mirroring the test-suite instance family.
    auto rand_mat = [&rng](int rows, int cols, double scale) {
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      Matrix out(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out(r, c) = scale * dist(rng);
      return out;
    };
    auto rand_vec = [&rand_mat](int size, double scale = 1.0) {
      return Vector(rand_mat(size, 1, scale));
    };
    auto rand_spd = [&rand_mat](int size, double margin) {
      const Matrix L = rand_mat(size, size, 1.0);
      return Matrix(L * L.transpose() + margin * Matrix::Identity(size, size));
    };
    const int N = 8, n = 3, m = 2;
    LqrData data;
    data.N = N;
    data.n = n;
    data.m = m;
    data.s0 = rand_vec(n);
    data.stages.resize(N);
    for (auto& s : data.stages) {
      s.R = rand_spd(m, 0.5);
      s.M = rand_mat(n, m, 0.3);
      s.Q = rand_spd(n, 0.1) + s.M * s.R.llt().solve(s.M.transpose());
      s.q = rand_vec(n);
      s.r = rand_vec(m);
      s.A = rand_mat(n, n, 0.8);
      s.B = rand_mat(n, m, 0.8);
      s.c = rand_vec(n, 0.5);
    }
    data.QN = rand_spd(n, 0.1);
    data.qN = rand_vec(n);

    const auto seq = solve_lqr(data, LqrBackend::Sequential);
    const auto par = solve_lqr(data, LqrBackend::Parallel);
    auto rel = [](const std::vector<Vector>& a, const std::vector<Vector>& b) {
      double num = 0.0, den = 1.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, (a[i] - b[i]).lpNorm<Eigen::Infinity>());
        den = std::max(den, b[i].lpNorm<Eigen::Infinity>());
      }
      return num / den;
    };
    report("backend_equivalence_x", inst_seed, rel(par.x, seq.x), 1e-8);
    report("backend_equivalence_u", inst_seed, rel(par.u, seq.u), 1e-8);
    report("backend_equivalence_lambda", inst_seed, rel(par.lambda, seq.lambda), 1e-8);

    // Dual route agreement.
    const auto gains = riccati_backward(data);
    const auto [x, u] = riccati_forward(data, gains);
    report("dual_agreement", inst_seed, rel(dual_direct(x, gains), dual_backward(data, x, u)),
           1e-9);

    // KKT stationarity of the sequential solution.
    double kkt_err = 0.0;
    for (int i = 0; i < N; ++i) {
      const auto& s = data.stages[i];
      kkt_err = std::max(kkt_err, (s.Q * seq.x[i] + s.M * seq.u[i] + s.q +
                                   s.A.transpose() * seq.lambda[i + 1] - seq.lambda[i])
                                      .lpNorm<Eigen::Infinity>());
      kkt_err = std::max(kkt_err, (s.M.transpose() * seq.x[i] + s.R * seq.u[i] + s.r +
                                   s.B.transpose() * seq.lambda[i + 1])
                                      .lpNorm<Eigen::Infinity>());
    }
    kkt_err = std::max(kkt_err, (data.QN * seq.x[N] + data.qN - seq.lambda[N])
                                    .lpNorm<Eigen::Infinity>());
    report("kkt_stationarity", inst_seed, kkt_err, 1e-8);

    // Associativity of the value-combination operator on this instance.
    const auto leaves = make_leaf_elements(data);
    const auto left = combine_value(combine_value(leaves[0], leaves[1]), leaves[2]);
    const auto right = combine_value(leaves[0], combine_value(leaves[1], leaves[2]));
    auto mrel = [](const Matrix& a, const Matrix& b) {
      return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
    };
    const double assoc = std::max({mrel(left.P, right.P), mrel(left.A, right.A),
                                   mrel(left.C, right.C), mrel(Matrix(left.p), Matrix(right.p)),
                                   mrel(Matrix(left.c), Matrix(right.c))});
    report("combine_associativity", inst_seed, assoc, 1e-9);
  }
  if (failures == 0) {
    std::printf("all checks passed (%d instances, base seed %u)\n", num_instances, seed);
    return kExitOk;
  }
  std::printf("%d check(s) failed; rerun with the printed seed to reproduce\n", failures);
  return kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Primal-dual LQR/SQP trajectory optimization toolkit"};
  app.require_subcommand(1);

  SolveOptions solve_opt;
  auto* solve_cmd = app.add_subcommand("solve", "Solve a benchmark problem and print the iteration table");
  solve_cmd->add_option("--problem", solve_opt.problem, "Registered problem name");
  solve_cmd->add_option("--spec", solve_opt.spec_file, "Problem spec JSON file");
  solve_cmd->add_option("--backend", solve_opt.backend, "LQR back-end")
      ->check(CLI::IsMember({"sequential", "parallel"}));
  solve_cmd->add_option("--hessian", solve_opt.hessian, "Hessian mode")
      ->check(CLI::IsMember({"gauss_newton", "exact"}));
  solve_cmd->add_option("--penalty-mode", solve_opt.penalty_mode, "Penalty update rule")
      ->check(CLI::IsMember({"recompute", "npsqp"}));
  solve_cmd->add_flag("--clamp", solve_opt.clamp, "Eigenvalue-clamp indefinite Hessian blocks");
  solve_cmd->add_option("--max-iters", solve_opt.max_iters, "Iteration limit");
  solve_cmd->add_option("--tol-step", solve_opt.tol_step, "Step tolerance (inf-norm)");
  solve_cmd->add_option("--tol-feas", solve_opt.tol_feas, "Feasibility tolerance (inf-norm)");
  solve_cmd->add_option("--trace-out", solve_opt.trace_out, "Write full JSON trace here");
  solve_cmd->add_option("--trace-csv", solve_opt.trace_csv, "Write plot-ready CSV trace here");

  std::string lqr_input, lqr_backend = "sequential", lqr_out;
  auto* lqr_cmd = app.add_subcommand("lqr", "Solve a standalone LQR JSON instance");
  lqr_cmd->add_option("input", lqr_input, "LqrData JSON file")->required();
  lqr_cmd->add_option("--backend", lqr_backend, "LQR back-end")
      ->check(CLI::IsMember({"sequential", "parallel"}));
  lqr_cmd->add_option("--out", lqr_out, "Output JSON path ('-' for stdout)");

  unsigned check_seed = 42;
  int check_instances = 100;
  auto* check_cmd = app.add_subcommand("check", "Run randomized oracle cross-checks");
  check_cmd->add_option("--seed", check_seed, "Base RNG seed");
  check_cmd->add_option("--num-instances", check_instances, "Number of random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (solve_cmd->parsed()) {
    if (solve_opt.problem.empty() && solve_opt.spec_file.empty()) {
      std::cerr << "error: one of --problem or --spec is required\n";
      return kExitUsage;
    }
    return run_solve(solve_opt);
  }
  if (lqr_cmd->parsed()) {
    return run_lqr(lqr_input, lqr_backend, lqr_out);
  }
  return run_check(check_seed, check_instances);
}
