#include "cacc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace cacc {

namespace {

constexpr double kDepTol = 1e-10;   // dependent working-set row rejection
constexpr double kDualTol = 1e-8;   // multiplier sign tolerance
constexpr double kInf = std::numeric_limits<double>::infinity();

struct ActiveRow {
  bool is_eq = false;
  int idx = 0;
};

// Null-space active-set core.
//
// Invariants kept across updates:
//   * q_ is orthogonal; its leading c columns span the working-set normals,
//     with A_W' = q_.leftCols(c) * r_.topLeftCorner(c, c) upper triangular;
//   * t_ = q_' H q_, so the reduced Hessian is t_.bottomRightCorner(k, k).
// Rows enter through a Householder reflection on the trailing columns and
// leave through a Givens sweep, both O(n * k).
class ActiveSet {
 public:
  ActiveSet(const QpProblem& p, double feas_tol)
      : p_(&p), n_(p.n()), feas_tol_(feas_tol) {
    q_ = Eigen::MatrixXd::Identity(n_, n_);
    r_ = Eigen::MatrixXd::Zero(n_, n_);
    t_ = p.hess;
    in_working_.assign(p.num_in(), 0);
    in_row_norm_.resize(p.num_in());
    for (int i = 0; i < p.num_in(); ++i)
      in_row_norm_[i] = p.in_a.row(i).norm();
  }

  // Equality rows must be independent by contract.
  void add_equality(int idx) {
    if (!push_normal(p_->eq_a.row(idx).transpose()))
      throw std::invalid_argument("equality rows are linearly dependent");
    act_.push_back({true, idx});
  }

  bool add_inequality(int idx) {
    if (!push_normal(p_->in_a.row(idx).transpose())) return false;
    act_.push_back({false, idx});
    in_working_[idx] = 1;
    return true;
  }

  // Minimum-norm correction moving z onto the working-set manifold.
  Eigen::VectorXd project(const Eigen::VectorXd& z) const {
    const int c = static_cast<int>(act_.size());
    if (c == 0) return z;
    Eigen::VectorXd resid(c);
    for (int i = 0; i < c; ++i) {
      const auto& row = act_[i];
      resid[i] = row.is_eq
                     ? p_->eq_b[row.idx] - p_->eq_a.row(row.idx).dot(z)
                     : p_->in_b[row.idx] - p_->in_a.row(row.idx).dot(z);
    }
    const Eigen::VectorXd y = r_.topLeftCorner(c, c)
                                  .transpose()
                                  .triangularView<Eigen::Lower>()
                                  .solve(resid);
    return z + q_.leftCols(c) * y;
  }

  struct RunResult {
    QpStatus status = QpStatus::kIterationLimit;
    Eigen::VectorXd z;
    Eigen::VectorXd eq_dual;
    Eigen::VectorXd in_dual;
    int iterations = 0;
  };

  // Active-set iteration from a feasible z lying on the working manifold.
  RunResult run(Eigen::VectorXd z, int max_iter) {
    const int m_in = p_->num_in();
    Eigen::VectorXd hz = p_->hess * z;
    Eigen::VectorXd slack = p_->in_b - p_->in_a * z;
    const double g_scale = 1.0 + p_->lin.lpNorm<Eigen::Infinity>();

    RunResult out;
    int degenerate_streak = 0;
    bool bland = false;

    for (int iter = 0; iter < max_iter; ++iter) {
      out.iterations = iter + 1;
      const int c = static_cast<int>(act_.size());
      const int k = n_ - c;
      const Eigen::VectorXd rhs = -(hz + p_->lin);

      bool ray = false;
      Eigen::VectorXd p = Eigen::VectorXd::Zero(n_);
      if (k > 0) {
        const Eigen::VectorXd rz = q_.rightCols(k).transpose() * rhs;
        if (rz.lpNorm<Eigen::Infinity>() >
            1e-10 * (g_scale + hz.lpNorm<Eigen::Infinity>())) {
          const Eigen::VectorXd pz = reduced_step(rz, k, &ray);
          p = q_.rightCols(k) * pz;
        }
      }

      if (p.lpNorm<Eigen::Infinity>() <=
          1e-11 * (1.0 + z.lpNorm<Eigen::Infinity>())) {
        // No progress inside the current subspace: inspect multipliers.
        const Eigen::VectorXd w = multipliers(rhs);
        const int drop = pick_drop(w, bland);
        if (drop < 0) {
          out.status = QpStatus::kOptimal;
          out.z = z;
          fill_duals(w, &out);
          return out;
        }
        in_working_[act_[drop].idx] = 0;
        remove_position(drop);
        continue;
      }

      // Ratio test; ascending scan makes ties resolve to the lowest index.
      const Eigen::VectorXd dir = p_->in_a * p;
      const double p_norm = p.norm();
      double alpha = ray ? kInf : 1.0;
      int block = -1;
      for (int i = 0; i < m_in; ++i) {
        if (in_working_[i]) continue;
        if (dir[i] <= 1e-12 * (1.0 + in_row_norm_[i] * p_norm)) continue;
        const double ratio = std::max(slack[i], 0.0) / dir[i];
        if (ratio < alpha) {
          alpha = ratio;
          block = i;
        }
      }
      if (!std::isfinite(alpha)) {
        out.status = QpStatus::kUnbounded;
        out.z = z;
        return out;
      }

      if (alpha > 0.0) {
        z += alpha * p;
        hz += alpha * (p_->hess * p);
        slack -= alpha * dir;
        degenerate_streak = 0;
      } else if (++degenerate_streak > 40) {
        bland = true;
      }
      if (block >= 0) {
        slack[block] = 0.0;
        if (!add_inequality(block) && ++degenerate_streak > 40) bland = true;
      }
    }

    out.status = QpStatus::kIterationLimit;
    out.z = z;
    return out;
  }

  const std::vector<ActiveRow>& active() const { return act_; }

 private:
  // Direction solve on the reduced Hessian. Falls back to an
  // eigendecomposition when the regularized factorization does not reproduce
  // the system; an inconsistent right-hand side there yields a descent ray
  // along a curvature-free direction.
  Eigen::VectorXd reduced_step(const Eigen::VectorXd& rz, int k, bool* ray) {
    const Eigen::MatrixXd red = t_.bottomRightCorner(k, k);
    const double ridge = 1e-12 * (1.0 + red.trace() / k);
    Eigen::MatrixXd shifted = red;
    shifted.diagonal().array() += ridge;
    Eigen::VectorXd pz = shifted.ldlt().solve(rz);
    if ((red * pz - rz).lpNorm<Eigen::Infinity>() <=
        1e-7 * (1.0 + rz.lpNorm<Eigen::Infinity>())) {
      *ray = false;
      return pz;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(red);
    const Eigen::VectorXd& lam = es.eigenvalues();
    const Eigen::MatrixXd& v = es.eigenvectors();
    const double thresh = 1e-10 * std::max(1.0, lam[k - 1]);
    const Eigen::VectorXd proj = v.transpose() * rz;
    pz.setZero();
    for (int i = 0; i < k; ++i)
      if (lam[i] > thresh) pz += (proj[i] / lam[i]) * v.col(i);
    const Eigen::VectorXd left = rz - red * pz;
    if (left.lpNorm<Eigen::Infinity>() >
        1e-7 * (1.0 + rz.lpNorm<Eigen::Infinity>())) {
      *ray = true;
      return left / left.norm();
    }
    *ray = false;
    return pz;
  }

  // Lagrange multipliers of the working rows: solves A_W' w = rhs.
  Eigen::VectorXd multipliers(const Eigen::VectorXd& rhs) const {
    const int c = static_cast<int>(act_.size());
    if (c == 0) return Eigen::VectorXd();
    const Eigen::VectorXd y = q_.leftCols(c).transpose() * rhs;
    return r_.topLeftCorner(c, c).triangularView<Eigen::Upper>().solve(y);
  }

  int pick_drop(const Eigen::VectorXd& w, bool bland) const {
    int drop = -1;
    if (bland) {
      for (int i = 0; i < static_cast<int>(act_.size()); ++i) {
        if (act_[i].is_eq || w[i] >= -kDualTol) continue;
        if (drop < 0 || act_[i].idx < act_[drop].idx) drop = i;
      }
    } else {
      double most = -kDualTol;
      for (int i = 0; i < static_cast<int>(act_.size()); ++i) {
        if (act_[i].is_eq) continue;
        if (w[i] < most) {
          most = w[i];
          drop = i;
        }
      }
    }
    return drop;
  }

  void fill_duals(const Eigen::VectorXd& w, RunResult* out) const {
    out->eq_dual = Eigen::VectorXd::Zero(p_->num_eq());
    out->in_dual = Eigen::VectorXd::Zero(p_->num_in());
    for (int i = 0; i < static_cast<int>(act_.size()); ++i) {
      if (act_[i].is_eq)
        out->eq_dual[act_[i].idx] = w[i];
      else
        out->in_dual[act_[i].idx] = w[i];
    }
  }

  // QR append of one normal via a Householder reflection on the null block.
  bool push_normal(const Eigen::VectorXd& a) {
    const int c = static_cast<int>(act_.size());
    const int k = n_ - c;
    if (k == 0) return false;
    const Eigen::VectorXd u = q_.transpose() * a;
    Eigen::VectorXd h = u.tail(k);
    const double beta = h.norm();
    if (beta <= kDepTol * (1.0 + a.norm())) return false;

    const double sign = h[0] >= 0.0 ? 1.0 : -1.0;
    h[0] += sign * beta;
    const double tau = 2.0 / h.squaredNorm();

    q_.rightCols(k) -= tau * (q_.rightCols(k) * h) * h.transpose();
    t_.rightCols(k) -= tau * (t_.rightCols(k) * h) * h.transpose();
    t_.bottomRows(k) -= tau * h * (h.transpose() * t_.bottomRows(k));

    r_.col(c).head(c) = u.head(c);
    r_(c, c) = -sign * beta;
    return true;
  }

  // QR delete of the working row at position pos via a Givens sweep.
  void remove_position(int pos) {
    const int c = static_cast<int>(act_.size());
    for (int col = pos; col + 1 < c; ++col)
      r_.col(col).head(c) = r_.col(col + 1).head(c);
    r_.col(c - 1).head(c).setZero();

    for (int i = pos; i + 1 < c; ++i) {
      const double a = r_(i, i);
      const double b = r_(i + 1, i);
      const double rad = std::hypot(a, b);
      if (rad <= 0.0) continue;
      const double cs = a / rad;
      const double sn = b / rad;

      for (int col = i; col + 1 < c; ++col) {
        const double top = r_(i, col);
        const double bot = r_(i + 1, col);
        r_(i, col) = cs * top + sn * bot;
        r_(i + 1, col) = -sn * top + cs * bot;
      }

      const Eigen::VectorXd qi = q_.col(i);
      q_.col(i) = cs * qi + sn * q_.col(i + 1);
      q_.col(i + 1) = -sn * qi + cs * q_.col(i + 1);

      const Eigen::RowVectorXd ti = t_.row(i);
      t_.row(i) = cs * ti + sn * t_.row(i + 1);
      t_.row(i + 1) = -sn * ti + cs * t_.row(i + 1);
      const Eigen::VectorXd tc = t_.col(i);
      t_.col(i) = cs * tc + sn * t_.col(i + 1);
      t_.col(i + 1) = -sn * tc + cs * t_.col(i + 1);
    }
    act_.erase(act_.begin() + pos);
  }

  const QpProblem* p_;
  int n_;
  double feas_tol_;
  Eigen::MatrixXd q_, r_, t_;
  std::vector<ActiveRow> act_;
  std::vector<char> in_working_;
  Eigen::VectorXd in_row_norm_;
};

int default_max_iter(const QpProblem& p) {
  return 200 + 3 * (p.n() + p.num_in());
}

// Minimizes the summed squared violation with slacks on the rows violated at
// z0. Returns the repaired point; *residual gets the worst violation left.
Eigen::VectorXd phase1(const QpProblem& p, const Eigen::VectorXd& z0,
                       const std::vector<int>& seed, double feas_tol,
                       double* residual, std::vector<int>* active_out,
                       bool* iteration_limit) {
  const int n = p.n();
  const int m_in = p.num_in();

  const Eigen::VectorXd viol = p.in_a * z0 - p.in_b;
  std::vector<int> relaxed;
  for (int i = 0; i < m_in; ++i)
    if (viol[i] > feas_tol) relaxed.push_back(i);
  const int nv = static_cast<int>(relaxed.size());

  QpProblem p1;
  p1.hess = Eigen::MatrixXd::Zero(n + nv, n + nv);
  p1.hess.bottomRightCorner(nv, nv).setIdentity();
  p1.lin = Eigen::VectorXd::Zero(n + nv);
  p1.eq_a = Eigen::MatrixXd::Zero(p.num_eq(), n + nv);
  p1.eq_a.leftCols(n) = p.eq_a;
  p1.eq_b = p.eq_b;
  p1.in_a = Eigen::MatrixXd::Zero(m_in + nv, n + nv);
  p1.in_a.topLeftCorner(m_in, n) = p.in_a;
  p1.in_b.resize(m_in + nv);
  p1.in_b.head(m_in) = p.in_b;
  for (int q = 0; q < nv; ++q) {
    p1.in_a(relaxed[q], n + q) = -1.0;
    p1.in_a(m_in + q, n + q) = -1.0;
    p1.in_b[m_in + q] = 0.0;
  }

  ActiveSet core(p1, feas_tol);
  for (int i = 0; i < p.num_eq(); ++i) core.add_equality(i);
  for (int idx : seed) core.add_inequality(idx);
  for (int idx : relaxed) core.add_inequality(idx);

  Eigen::VectorXd z1 = Eigen::VectorXd::Zero(n + nv);
  z1.head(n) = z0;
  for (int q = 0; q < nv; ++q) z1[n + q] = std::max(viol[relaxed[q]], 0.0);
  z1 = core.project(z1);
  for (int q = 0; q < nv; ++q) z1[n + q] = std::max(z1[n + q], 0.0);

  const auto res = core.run(z1, default_max_iter(p1));
  *iteration_limit = res.status == QpStatus::kIterationLimit;

  Eigen::VectorXd z = res.z.head(n);
  *residual = m_in > 0 ? std::max(0.0, (p.in_a * z - p.in_b).maxCoeff()) : 0.0;
  active_out->clear();
  for (const auto& row : core.active())
    if (!row.is_eq && row.idx < m_in) active_out->push_back(row.idx);
  return z;
}

}  // namespace

QpSolution solve_qp(const QpProblem& p, const QpOptions& opt) {
  const int n = p.n();
  if (p.hess.rows() != n || p.hess.cols() != n)
    throw std::invalid_argument("hessian dimension mismatch");
  if (p.eq_a.rows() != p.eq_b.size() ||
      (p.eq_a.rows() > 0 && p.eq_a.cols() != n))
    throw std::invalid_argument("equality dimension mismatch");
  if (p.in_a.rows() != p.in_b.size() ||
      (p.in_a.rows() > 0 && p.in_a.cols() != n))
    throw std::invalid_argument("inequality dimension mismatch");

  const double feas_tol = opt.feas_tol;
  const int max_iter = opt.max_iter > 0 ? opt.max_iter : default_max_iter(p);

  const auto build = [&](const std::vector<int>& want, std::vector<int>* got) {
    auto core = std::make_unique<ActiveSet>(p, feas_tol);
    for (int i = 0; i < p.num_eq(); ++i) core->add_equality(i);
    for (int idx : want)
      if (idx >= 0 && idx < p.num_in() && core->add_inequality(idx) && got)
        got->push_back(idx);
    return core;
  };

  QpSolution sol;
  std::vector<int> seed;
  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(n);
  std::unique_ptr<ActiveSet> core;
  if (opt.warm != nullptr && opt.warm->point.size() == n) {
    z0 = opt.warm->point;
    core = build(opt.warm->working_set, &seed);
  } else {
    core = build({}, nullptr);
  }
  z0 = core->project(z0);

  const double worst =
      p.num_in() > 0 ? (p.in_a * z0 - p.in_b).maxCoeff() : 0.0;
  if (worst > feas_tol) {
    bool p1_limit = false;
    std::vector<int> p1_active;
    z0 = phase1(p, z0, seed, feas_tol, &sol.phase1_residual, &p1_active,
                &p1_limit);
    if (sol.phase1_residual > feas_tol) {
      sol.status = p1_limit ? QpStatus::kIterationLimit : QpStatus::kInfeasible;
      sol.point = z0;
      sol.eq_dual = Eigen::VectorXd::Zero(p.num_eq());
      sol.in_dual = Eigen::VectorXd::Zero(p.num_in());
      return sol;
    }
    core = build(p1_active, nullptr);
    z0 = core->project(z0);
    if (p.num_in() > 0 &&
        (p.in_a * z0 - p.in_b).maxCoeff() > 10.0 * feas_tol) {
      // Projection onto the seeded manifold pushed the repaired point back
      // out; fall back to a cold working set.
      core = build({}, nullptr);
      z0 = core->project(z0);
    }
  }

  const auto res = core->run(z0, max_iter);
  sol.status = res.status;
  sol.point = res.z;
  sol.iterations = res.iterations;
  sol.eq_dual = res.eq_dual.size() > 0 ? res.eq_dual
                                       : Eigen::VectorXd::Zero(p.num_eq());
  sol.in_dual = res.in_dual.size() > 0 ? res.in_dual
                                       : Eigen::VectorXd::Zero(p.num_in());
  sol.working_set.clear();
  for (const auto& row : core->active())
    if (!row.is_eq) sol.working_set.push_back(row.idx);

  sol.objective = 0.5 * sol.point.dot(p.hess * sol.point) + p.lin.dot(sol.point);

  // Honest KKT residuals from the original data.
  Eigen::VectorXd grad = p.hess * sol.point + p.lin;
  if (p.num_eq() > 0) grad += p.eq_a.transpose() * sol.eq_dual;
  if (p.num_in() > 0) grad += p.in_a.transpose() * sol.in_dual;
  const double scale = 1.0 + p.lin.lpNorm<Eigen::Infinity>();
  sol.stationarity = grad.lpNorm<Eigen::Infinity>() / scale;
  double primal = 0.0;
  double compl_resid = 0.0;
  if (p.num_in() > 0) {
    const Eigen::VectorXd s = p.in_b - p.in_a * sol.point;
    primal = std::max(0.0, -s.minCoeff());
    for (int i = 0; i < p.num_in(); ++i)
      compl_resid =
          std::max(compl_resid, std::abs(sol.in_dual[i] * s[i]) / scale);
  }
  if (p.num_eq() > 0)
    primal = std::max(
        primal, (p.eq_a * sol.point - p.eq_b).lpNorm<Eigen::Infinity>());
  sol.primal_residual = primal;
  sol.complementarity = compl_resid;
  return sol;
}

}  // namespace cacc
