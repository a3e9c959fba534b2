#pragma once

#include <vector>

#include <Eigen/Core>

#include "cacc/mld.hpp"
#include "cacc/qp.hpp"

namespace cacc {

enum class MiqpStatus { kOptimal, kInfeasible, kNodeBudget };

// A program with some binaries substituted out. Rows left without any
// variable are dropped; a dropped row that cannot hold marks the fixing
// contradictory.
struct ReducedQp {
  QpProblem qp;
  std::vector<int> free_cols;  // reduced column -> original column
  std::vector<int> eq_rows;    // reduced row -> original equality row
  std::vector<int> in_rows;    // reduced row -> original inequality row
  double constant = 0.0;       // objective constant collected on the way
  bool contradiction = false;
};

// fix is indexed like prog.binaries: -1 free, otherwise the pinned value.
ReducedQp reduce_program(const MldProgram& prog, const std::vector<int>& fix);

struct NodeLogEntry {
  long id = 0;
  long parent = -1;
  int depth = 0;
  double bound = 0.0;
  // R relaxation solved, I infeasible, C contradiction, B bound-pruned,
  // * incumbent, H heuristic incumbent, L iteration-limited.
  char outcome = '?';
};

struct MiqpOptions {
  long node_budget = 20000;
  double gap_rel = 1e-6;  // relative optimality gap at which search stops
  double int_tol = 1e-6;
  bool root_heuristic = true;
  std::vector<NodeLogEntry>* node_log = nullptr;
};

struct MiqpSolution {
  MiqpStatus status = MiqpStatus::kInfeasible;
  Eigen::VectorXd point;           // full-length variable vector
  std::vector<int> binary_values;  // indexed like prog.binaries
  double objective = 0.0;          // includes the program constant
  double bound = 0.0;              // proven lower bound at exit
  long nodes = 0;
  long solver_warnings = 0;  // QP iteration limits and failed candidates
};

// Best-first branch and bound over the convex relaxation, with unit
// propagation of the switch logic and of the one-hot selector rows.
MiqpSolution solve_miqp(const MldProgram& prog, const MiqpOptions& opt = {});

// Exhaustive reference solver walking every logic-consistent binary
// assignment. Intended for small programs; throws when more than 18
// binaries are free.
MiqpSolution enumerate_solve(const MldProgram& prog);

}  // namespace cacc
