#pragma once

#include <vector>

#include <Eigen/Core>

namespace cacc {

enum class QpStatus {
  kOptimal,
  kInfeasible,
  kIterationLimit,
  kUnbounded,
};

// Convex quadratic program
//   min 0.5 z'Hz + g'z  s.t.  Aeq z = beq,  Ain z <= bin
// with H symmetric positive semidefinite and independent equality rows.
struct QpProblem {
  Eigen::MatrixXd hess;
  Eigen::VectorXd lin;
  Eigen::MatrixXd eq_a;
  Eigen::VectorXd eq_b;
  Eigen::MatrixXd in_a;
  Eigen::VectorXd in_b;

  int n() const { return static_cast<int>(lin.size()); }
  int num_eq() const { return static_cast<int>(eq_b.size()); }
  int num_in() const { return static_cast<int>(in_b.size()); }
};

struct QpWarmStart {
  Eigen::VectorXd point;
  std::vector<int> working_set;  // inequality rows believed active
};

struct QpOptions {
  int max_iter = 0;  // 0 picks a bound from the problem size
  double feas_tol = 1e-7;
  const QpWarmStart* warm = nullptr;
};

struct QpSolution {
  QpStatus status = QpStatus::kIterationLimit;
  Eigen::VectorXd point;
  Eigen::VectorXd eq_dual;
  Eigen::VectorXd in_dual;
  double objective = 0.0;

  // KKT residuals recomputed from the problem data at the returned point.
  double stationarity = 0.0;
  double primal_residual = 0.0;
  double complementarity = 0.0;

  // Phase-1 certificate: largest constraint relaxation still needed after
  // minimizing the total violation. Above feas_tol means infeasible.
  double phase1_residual = 0.0;

  int iterations = 0;
  std::vector<int> working_set;
};

QpSolution solve_qp(const QpProblem& p, const QpOptions& opt = {});

}  // namespace cacc
