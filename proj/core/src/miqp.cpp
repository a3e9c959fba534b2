#include "cacc/miqp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

namespace cacc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kVerifyTol = 1e-6;

// Lookup from (role, step, level) to the index within prog.binaries.
struct BinIndex {
  std::vector<int> gap, speed, brake;
  std::vector<std::vector<int>> select;

  explicit BinIndex(const MldProgram& prog)
      : gap(prog.horizon, -1),
        speed(prog.horizon, -1),
        brake(prog.horizon, -1),
        select(prog.horizon, std::vector<int>(prog.levels, -1)) {
    for (int i = 0; i < static_cast<int>(prog.binaries.size()); ++i) {
      const auto& b = prog.binaries[i];
      switch (b.role) {
        case VarRole::kSwitchGap: gap[b.step] = i; break;
        case VarRole::kSwitchSpeed: speed[b.step] = i; break;
        case VarRole::kSwitchBrake: brake[b.step] = i; break;
        case VarRole::kSelect: select[b.step][b.level] = i; break;
        default: break;
      }
    }
  }
};

// Fixpoint of the switch conjunction rules and the one-hot selector rules,
// plus a bound check on the best attainable scenario probability.
bool propagate(const MldProgram& prog, const BinIndex& ix,
               std::vector<int>* fix) {
  auto& f = *fix;
  bool ok = true;
  bool changed = true;
  const auto assign = [&](int idx, int v) {
    if (idx < 0 || !ok) return;
    if (f[idx] == -1) {
      f[idx] = v;
      changed = true;
    } else if (f[idx] != v) {
      ok = false;
    }
  };

  while (changed && ok) {
    changed = false;
    for (int k = 0; k < prog.horizon && ok; ++k) {
      const int g = f[ix.gap[k]];
      const int s = f[ix.speed[k]];
      const int b = f[ix.brake[k]];
      if (g == 1 && s == 1) assign(ix.brake[k], 1);
      if (g == 0 || s == 0) assign(ix.brake[k], 0);
      if (b == 1) {
        assign(ix.gap[k], 1);
        assign(ix.speed[k], 1);
      }
      if (b == 0) {
        if (g == 1) assign(ix.speed[k], 0);
        if (s == 1) assign(ix.gap[k], 0);
      }
    }
    if (prog.levels > 1) {
      for (int k = 0; k < prog.horizon && ok; ++k) {
        int ones = 0, zeros = 0, last_free = -1;
        for (int j = 0; j < prog.levels; ++j) {
          const int v = f[ix.select[k][j]];
          if (v == 1) ++ones;
          else if (v == 0) ++zeros;
          else last_free = j;
        }
        if (ones > 1 || zeros == prog.levels) {
          ok = false;
          break;
        }
        if (ones == 1) {
          for (int j = 0; j < prog.levels; ++j)
            if (f[ix.select[k][j]] == -1) assign(ix.select[k][j], 0);
        } else if (zeros == prog.levels - 1 && last_free >= 0) {
          assign(ix.select[k][last_free], 1);
        }
      }
    }
  }
  if (!ok) return false;

  if (prog.levels > 1) {
    double best_total = 0.0;
    for (int k = 0; k < prog.horizon; ++k) {
      double best = -kInf;
      for (int j = 0; j < prog.levels; ++j) {
        const int v = f[ix.select[k][j]];
        if (v == 1) {
          best = prog.log_prob[k][j];
          break;
        }
        if (v == -1) best = std::max(best, prog.log_prob[k][j]);
      }
      if (best == -kInf) return false;
      best_total += best;
    }
    if (best_total < prog.log_chance_bound - 1e-12) return false;
  }
  return true;
}

Eigen::VectorXd reconstruct(const MldProgram& prog, const ReducedQp& red,
                            const Eigen::VectorXd& reduced_point,
                            const std::vector<int>& fix) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(prog.n_var);
  for (int i = 0; i < static_cast<int>(red.free_cols.size()); ++i)
    z[red.free_cols[i]] = reduced_point[i];
  for (int i = 0; i < static_cast<int>(prog.binaries.size()); ++i)
    if (fix[i] >= 0) z[prog.binaries[i].col] = static_cast<double>(fix[i]);
  return z;
}

bool verify_point(const MldProgram& prog, const Eigen::VectorXd& z,
                  double tol) {
  if (prog.eq_a.rows() > 0 &&
      (prog.eq_a * z - prog.eq_b).lpNorm<Eigen::Infinity>() > tol)
    return false;
  if (prog.in_a.rows() > 0 && (prog.in_a * z - prog.in_b).maxCoeff() > tol)
    return false;
  return true;
}

double full_objective(const MldProgram& prog, const Eigen::VectorXd& z) {
  return 0.5 * z.dot(prog.hess * z) + prog.lin.dot(z) + prog.constant;
}

std::vector<int> round_binaries(const MldProgram& prog,
                                const Eigen::VectorXd& z) {
  std::vector<int> vals(prog.binaries.size(), 0);
  for (int i = 0; i < static_cast<int>(prog.binaries.size()); ++i)
    vals[i] = z[prog.binaries[i].col] >= 0.5 ? 1 : 0;
  return vals;
}

}  // namespace

ReducedQp reduce_program(const MldProgram& prog, const std::vector<int>& fix) {
  if (fix.size() != prog.binaries.size())
    throw std::invalid_argument("fix vector must match the binary count");

  const int n = prog.n_var;
  std::vector<char> fixed(n, 0);
  Eigen::VectorXd value = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < static_cast<int>(prog.binaries.size()); ++i) {
    if (fix[i] < 0) continue;
    fixed[prog.binaries[i].col] = 1;
    value[prog.binaries[i].col] = static_cast<double>(fix[i]);
  }

  ReducedQp red;
  red.free_cols.reserve(n);
  for (int c = 0; c < n; ++c)
    if (!fixed[c]) red.free_cols.push_back(c);
  const int nf = static_cast<int>(red.free_cols.size());

  red.qp.hess.setZero(nf, nf);
  red.qp.lin.resize(nf);
  for (int i = 0; i < nf; ++i) {
    const int ci = red.free_cols[i];
    red.qp.lin[i] = prog.lin[ci] + prog.hess.row(ci).dot(value);
    for (int j = 0; j < nf; ++j)
      red.qp.hess(i, j) = prog.hess(ci, red.free_cols[j]);
  }
  red.constant = prog.constant + prog.lin.dot(value) +
                 0.5 * value.dot(prog.hess * value);

  const auto reduce_rows = [&](const Eigen::MatrixXd& a,
                               const Eigen::VectorXd& b, bool is_eq,
                               Eigen::MatrixXd* out_a, Eigen::VectorXd* out_b,
                               std::vector<int>* rows) {
    std::vector<int> keep;
    for (int r = 0; r < a.rows(); ++r) {
      bool has_free = false;
      for (int c = 0; c < n && !has_free; ++c)
        if (a(r, c) != 0.0 && !fixed[c]) has_free = true;
      if (has_free) {
        keep.push_back(r);
        continue;
      }
      const double resid = b[r] - a.row(r).dot(value);
      if (is_eq ? std::abs(resid) > 1e-9 : resid < -1e-9)
        red.contradiction = true;
    }
    out_a->setZero(static_cast<int>(keep.size()), nf);
    out_b->resize(static_cast<int>(keep.size()));
    rows->clear();
    for (int i = 0; i < static_cast<int>(keep.size()); ++i) {
      const int r = keep[i];
      for (int c = 0; c < nf; ++c) (*out_a)(i, c) = a(r, red.free_cols[c]);
      (*out_b)[i] = b[r] - a.row(r).dot(value);
      rows->push_back(r);
    }
  };

  reduce_rows(prog.eq_a, prog.eq_b, true, &red.qp.eq_a, &red.qp.eq_b,
              &red.eq_rows);
  reduce_rows(prog.in_a, prog.in_b, false, &red.qp.in_a, &red.qp.in_b,
              &red.in_rows);
  return red;
}

MiqpSolution solve_miqp(const MldProgram& prog, const MiqpOptions& opt) {
  const BinIndex ix(prog);
  const int nbin = static_cast<int>(prog.binaries.size());

  struct NodeData {
    std::vector<int> fix;
    long parent = -1;
    int depth = 0;
    bool has_warm = false;
    Eigen::VectorXd warm_point;     // original coordinates
    std::vector<int> warm_working;  // original inequality rows
  };
  struct QueueEntry {
    double bound;
    long id;
    bool operator<(const QueueEntry& o) const {
      // Inverted for std::priority_queue: smallest bound, then oldest, first.
      return bound > o.bound || (bound == o.bound && id > o.id);
    }
  };

  std::vector<NodeData> store;
  std::priority_queue<QueueEntry> open;

  MiqpSolution best;
  best.objective = kInf;
  bool have_incumbent = false;
  bool proven = false;
  double last_bound = -kInf;

  const auto log_node = [&](long id, long parent, int depth, double bound,
                            char outcome) {
    if (opt.node_log != nullptr)
      opt.node_log->push_back({id, parent, depth, bound, outcome});
  };
  const auto gap_closed = [&](double bound) {
    return have_incumbent &&
           bound >= best.objective -
                        opt.gap_rel * std::max(1.0, std::abs(best.objective));
  };

  {
    NodeData root;
    root.fix.assign(nbin, -1);
    for (int i = 0; i < nbin; ++i) root.fix[i] = prog.binaries[i].fixed;
    if (!propagate(prog, ix, &root.fix)) {
      best.status = MiqpStatus::kInfeasible;
      log_node(0, -1, 0, kInf, 'C');
      return best;
    }
    store.push_back(std::move(root));
    open.push({-kInf, 0});
  }

  const auto try_candidate = [&](const ReducedQp& red, const QpSolution& qsol,
                                 const std::vector<int>& fix, long id,
                                 long parent, int depth, char tag) {
    Eigen::VectorXd z = reconstruct(prog, red, qsol.point, fix);
    std::vector<int> vals = round_binaries(prog, z);
    for (int i = 0; i < nbin; ++i)
      z[prog.binaries[i].col] = static_cast<double>(vals[i]);
    double obj = full_objective(prog, z);
    if (!verify_point(prog, z, kVerifyTol)) {
      // Rounding broke feasibility; re-solve with everything pinned.
      const std::vector<int> fix_all(vals.begin(), vals.end());
      const ReducedQp red2 = reduce_program(prog, fix_all);
      if (red2.contradiction) return;
      const QpSolution qs2 = solve_qp(red2.qp);
      if (qs2.status != QpStatus::kOptimal) {
        ++best.solver_warnings;
        return;
      }
      z = reconstruct(prog, red2, qs2.point, fix_all);
      if (!verify_point(prog, z, kVerifyTol)) {
        ++best.solver_warnings;
        return;
      }
      obj = full_objective(prog, z);
    }
    if (obj < best.objective) {
      best.objective = obj;
      best.point = z;
      best.binary_values = vals;
      have_incumbent = true;
      log_node(id, parent, depth, obj, tag);
    }
  };

  long next_id = 1;
  while (!open.empty()) {
    if (best.nodes >= opt.node_budget) break;
    const QueueEntry top = open.top();
    open.pop();
    last_bound = top.bound;
    if (gap_closed(top.bound)) {
      proven = true;
      break;
    }

    const long id = top.id;
    ++best.nodes;
    const NodeData node = store[id];
    store[id] = NodeData{};  // free the bulk of the processed node

    const ReducedQp red = reduce_program(prog, node.fix);
    if (red.contradiction) {
      log_node(id, node.parent, node.depth, kInf, 'C');
      continue;
    }

    QpWarmStart warm;
    QpOptions qopt;
    if (node.has_warm) {
      warm.point.resize(static_cast<int>(red.free_cols.size()));
      for (int i = 0; i < static_cast<int>(red.free_cols.size()); ++i)
        warm.point[i] = node.warm_point[red.free_cols[i]];
      std::vector<int> orig2red(prog.in_a.rows(), -1);
      for (int i = 0; i < static_cast<int>(red.in_rows.size()); ++i)
        orig2red[red.in_rows[i]] = i;
      for (int w : node.warm_working)
        if (orig2red[w] >= 0) warm.working_set.push_back(orig2red[w]);
      qopt.warm = &warm;
    }

    const QpSolution qsol = solve_qp(red.qp, qopt);
    if (qsol.status == QpStatus::kInfeasible) {
      log_node(id, node.parent, node.depth, kInf, 'I');
      continue;
    }
    if (qsol.status != QpStatus::kOptimal) {
      ++best.solver_warnings;
      log_node(id, node.parent, node.depth, kInf, 'L');
      continue;
    }
    const double bound = qsol.objective + red.constant;
    if (gap_closed(bound)) {
      log_node(id, node.parent, node.depth, bound, 'B');
      continue;
    }
    log_node(id, node.parent, node.depth, bound, 'R');

    std::vector<int> col2red(prog.n_var, -1);
    for (int i = 0; i < static_cast<int>(red.free_cols.size()); ++i)
      col2red[red.free_cols[i]] = i;

    // Branching choice: selectors before switches, then most fractional,
    // then lowest index.
    int branch = -1;
    double branch_frac = -1.0;
    int branch_rank = 2;
    for (int i = 0; i < nbin; ++i) {
      if (node.fix[i] >= 0) continue;
      const double v =
          std::clamp(qsol.point[col2red[prog.binaries[i].col]], 0.0, 1.0);
      const double frac = std::min(v, 1.0 - v);
      if (frac <= opt.int_tol) continue;
      const int rank = prog.binaries[i].role == VarRole::kSelect ? 0 : 1;
      if (rank < branch_rank ||
          (rank == branch_rank && frac > branch_frac + 1e-15)) {
        branch_rank = rank;
        branch_frac = frac;
        branch = i;
      }
    }

    if (branch < 0) {
      try_candidate(red, qsol, node.fix, id, node.parent, node.depth, '*');
      continue;
    }

    // One-time rounding heuristic at the root: pin each step's most likely
    // free selector and accept the result when the switches come out integral.
    if (id == 0 && opt.root_heuristic && prog.levels > 1) {
      std::vector<int> guess = node.fix;
      for (int k = 0; k < prog.horizon; ++k) {
        bool fixed_one = false;
        for (int j = 0; j < prog.levels; ++j)
          if (guess[ix.select[k][j]] == 1) fixed_one = true;
        if (fixed_one) continue;
        int pick = -1;
        double pick_val = -1.0;
        for (int j = 0; j < prog.levels; ++j) {
          const int bi = ix.select[k][j];
          if (guess[bi] == 0) continue;
          const int rc = col2red[prog.binaries[bi].col];
          const double v = rc >= 0 ? qsol.point[rc] : 0.0;
          if (v > pick_val + 1e-15) {
            pick_val = v;
            pick = j;
          }
        }
        for (int j = 0; j < prog.levels; ++j)
          if (guess[ix.select[k][j]] == -1)
            guess[ix.select[k][j]] = j == pick ? 1 : 0;
      }
      if (propagate(prog, ix, &guess)) {
        const ReducedQp redh = reduce_program(prog, guess);
        if (!redh.contradiction) {
          const QpSolution qh = solve_qp(redh.qp);
          if (qh.status == QpStatus::kOptimal) {
            std::vector<int> c2r(prog.n_var, -1);
            for (int i = 0; i < static_cast<int>(redh.free_cols.size()); ++i)
              c2r[redh.free_cols[i]] = i;
            bool integral = true;
            for (int i = 0; i < nbin && integral; ++i) {
              if (guess[i] >= 0) continue;
              const double v = qh.point[c2r[prog.binaries[i].col]];
              if (std::min(v, 1.0 - v) > opt.int_tol) integral = false;
            }
            if (integral)
              try_candidate(redh, qh, guess, id, node.parent, node.depth, 'H');
          }
        }
      }
    }

    // Children: value 0 first, then value 1, both warm-started from here.
    const Eigen::VectorXd warm_full = reconstruct(prog, red, qsol.point, node.fix);
    std::vector<int> working_orig;
    working_orig.reserve(qsol.working_set.size());
    for (int w : qsol.working_set) working_orig.push_back(red.in_rows[w]);

    for (int value = 0; value <= 1; ++value) {
      std::vector<int> child_fix = node.fix;
      child_fix[branch] = value;
      if (!propagate(prog, ix, &child_fix)) continue;
      NodeData child;
      child.fix = std::move(child_fix);
      child.parent = id;
      child.depth = node.depth + 1;
      child.has_warm = true;
      child.warm_point = warm_full;
      child.warm_working = working_orig;
      store.push_back(std::move(child));
      open.push({bound, next_id});
      ++next_id;
    }
  }

  if (proven) {
    best.status = MiqpStatus::kOptimal;
    best.bound = last_bound;
  } else if (!open.empty()) {
    best.status = MiqpStatus::kNodeBudget;
    best.bound = open.top().bound;
  } else {
    best.status = have_incumbent ? MiqpStatus::kOptimal : MiqpStatus::kInfeasible;
    best.bound = have_incumbent ? best.objective : kInf;
  }
  return best;
}

MiqpSolution enumerate_solve(const MldProgram& prog) {
  const BinIndex ix(prog);
  const int nbin = static_cast<int>(prog.binaries.size());

  std::vector<int> base(nbin, -1);
  for (int i = 0; i < nbin; ++i) base[i] = prog.binaries[i].fixed;
  int free_count = 0;
  for (int v : base)
    if (v < 0) ++free_count;
  if (free_count > 18)
    throw std::invalid_argument("enumerate_solve: too many free binaries");

  static constexpr int kTriples[4][3] = {
      {0, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 1}};

  MiqpSolution best;
  best.objective = kInf;
  bool found = false;

  std::vector<int> fix = base;
  const std::function<void(int)> walk = [&](int k) {
    if (k == prog.horizon) {
      std::vector<int> full = fix;
      if (!propagate(prog, ix, &full)) return;
      const ReducedQp red = reduce_program(prog, full);
      ++best.nodes;
      if (red.contradiction) return;
      const QpSolution qsol = solve_qp(red.qp);
      if (qsol.status != QpStatus::kOptimal) return;
      const Eigen::VectorXd z = reconstruct(prog, red, qsol.point, full);
      if (!verify_point(prog, z, kVerifyTol)) return;
      const double obj = full_objective(prog, z);
      if (obj < best.objective) {
        best.objective = obj;
        best.point = z;
        best.binary_values = round_binaries(prog, z);
        found = true;
      }
      return;
    }
    const int bg = ix.gap[k], bs = ix.speed[k], bb = ix.brake[k];
    for (const auto& t : kTriples) {
      if (base[bg] >= 0 && base[bg] != t[0]) continue;
      if (base[bs] >= 0 && base[bs] != t[1]) continue;
      if (base[bb] >= 0 && base[bb] != t[2]) continue;
      fix[bg] = t[0];
      fix[bs] = t[1];
      fix[bb] = t[2];
      if (prog.levels == 1) {
        walk(k + 1);
      } else {
        for (int j = 0; j < prog.levels; ++j) {
          bool legal = true;
          for (int l = 0; l < prog.levels; ++l) {
            const int want = l == j ? 1 : 0;
            if (base[ix.select[k][l]] >= 0 && base[ix.select[k][l]] != want)
              legal = false;
          }
          if (!legal) continue;
          for (int l = 0; l < prog.levels; ++l)
            fix[ix.select[k][l]] = l == j ? 1 : 0;
          walk(k + 1);
          for (int l = 0; l < prog.levels; ++l)
            fix[ix.select[k][l]] = base[ix.select[k][l]];
        }
      }
      fix[bg] = base[bg];
      fix[bs] = base[bs];
      fix[bb] = base[bb];
    }
  };
  walk(0);

  best.status = found ? MiqpStatus::kOptimal : MiqpStatus::kInfeasible;
  best.bound = best.objective;
  return best;
}

}  // namespace cacc
