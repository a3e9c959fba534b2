#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cacc/qp.hpp"

using namespace cacc;

namespace {

// Reference solver: enumerate every working set, solve the corresponding
// equality-constrained KKT system, and keep the best primal-dual feasible
// candidate. Exponential, so only for tiny problems.
struct Reference {
  bool feasible = false;
  Eigen::VectorXd point;
  double objective = 0.0;
};

Reference enumerate_qp(const QpProblem& p) {
  Reference best;
  const int m = p.num_in();
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> rows;
    for (int i = 0; i < m; ++i)
      if (mask & (1 << i)) rows.push_back(i);

    const int c = p.num_eq() + static_cast<int>(rows.size());
    Eigen::MatrixXd a(c, p.n());
    Eigen::VectorXd b(c);
    a.topRows(p.num_eq()) = p.eq_a;
    b.head(p.num_eq()) = p.eq_b;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      a.row(p.num_eq() + static_cast<int>(k)) = p.in_a.row(rows[k]);
      b[p.num_eq() + static_cast<int>(k)] = p.in_b[rows[k]];
    }

    Eigen::MatrixXd kkt(p.n() + c, p.n() + c);
    kkt.setZero();
    kkt.topLeftCorner(p.n(), p.n()) = p.hess;
    if (c > 0) {
      kkt.topRightCorner(p.n(), c) = a.transpose();
      kkt.bottomLeftCorner(c, p.n()) = a;
    }
    Eigen::VectorXd rhs(p.n() + c);
    rhs.head(p.n()) = -p.lin;
    rhs.tail(c) = b;

    const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    const Eigen::VectorXd sol = lu.solve(rhs);
    if ((kkt * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-8) continue;

    const Eigen::VectorXd z = sol.head(p.n());
    bool ok = true;
    for (int i = 0; i < m && ok; ++i)
      if (p.in_a.row(i).dot(z) > p.in_b[i] + 1e-7) ok = false;
    for (std::size_t k = 0; k < rows.size() && ok; ++k)
      if (sol[p.n() + p.num_eq() + static_cast<int>(k)] < -1e-7) ok = false;
    if (!ok) continue;

    const double obj = 0.5 * z.dot(p.hess * z) + p.lin.dot(z);
    if (!best.feasible || obj < best.objective) {
      best.feasible = true;
      best.point = z;
      best.objective = obj;
    }
  }
  return best;
}

QpProblem random_qp(std::mt19937& rng, bool force_feasible) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> dn(2, 4);
  std::uniform_int_distribution<int> dm(1, 6);
  std::uniform_int_distribution<int> deq(0, 1);

  QpProblem p;
  const int n = dn(rng);
  const int m = dm(rng);
  const int e = deq(rng);

  Eigen::MatrixXd root(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) root(i, j) = gauss(rng);
  p.hess = root.transpose() * root + 0.1 * Eigen::MatrixXd::Identity(n, n);
  p.lin = Eigen::VectorXd::NullaryExpr(n, [&](int) { return gauss(rng); });

  p.in_a = Eigen::MatrixXd::NullaryExpr(m, n, [&](int, int) { return gauss(rng); });
  p.eq_a = Eigen::MatrixXd::NullaryExpr(e, n, [&](int, int) { return gauss(rng); });

  if (force_feasible) {
    const Eigen::VectorXd z0 =
        Eigen::VectorXd::NullaryExpr(n, [&](int) { return gauss(rng); });
    p.in_b = p.in_a * z0;
    for (int i = 0; i < m; ++i) p.in_b[i] += std::abs(gauss(rng));
    p.eq_b = p.eq_a * z0;
  } else {
    p.in_b = Eigen::VectorXd::NullaryExpr(m, [&](int) { return gauss(rng); });
    p.eq_b = Eigen::VectorXd::NullaryExpr(e, [&](int) { return gauss(rng); });
  }
  return p;
}

}  // namespace

TEST_CASE("active-set solver matches working-set enumeration") {
  std::mt19937 rng(101);
  int infeasible_seen = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const QpProblem p = random_qp(rng, trial % 2 == 0);
    const Reference ref = enumerate_qp(p);
    const QpSolution sol = solve_qp(p);
    CAPTURE(trial);

    if (ref.feasible) {
      REQUIRE(sol.status == QpStatus::kOptimal);
      CHECK(std::abs(sol.objective - ref.objective) <=
            1e-6 * std::max(1.0, std::abs(ref.objective)));
      CHECK((sol.point - ref.point).lpNorm<Eigen::Infinity>() <= 1e-5);
      CHECK(sol.stationarity <= 1e-6);
      CHECK(sol.primal_residual <= 1e-6);
      CHECK(sol.complementarity <= 1e-6);
    } else {
      ++infeasible_seen;
      REQUIRE(sol.status == QpStatus::kInfeasible);
      CHECK(sol.phase1_residual > 1e-7);
    }
  }
  CHECK(infeasible_seen > 0);  // the random mix must exercise both branches
}

TEST_CASE("equality-constrained minimizer solves the KKT system") {
  QpProblem p;
  p.hess = Eigen::Matrix3d::Identity();
  p.hess(0, 0) = 4.0;
  p.lin = Eigen::Vector3d(1.0, -2.0, 0.5);
  p.eq_a = Eigen::MatrixXd(1, 3);
  p.eq_a << 1.0, 1.0, 1.0;
  p.eq_b = Eigen::VectorXd::Constant(1, 3.0);

  const QpSolution sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::kOptimal);
  CHECK((p.eq_a * sol.point - p.eq_b).lpNorm<Eigen::Infinity>() <= 1e-9);
  const Eigen::Vector3d grad = p.hess * sol.point + p.lin;
  // Stationarity: gradient parallel to the constraint normal.
  CHECK(std::abs(grad[0] - grad[1]) <= 1e-8);
  CHECK(std::abs(grad[0] - grad[2]) <= 1e-8);
  REQUIRE(sol.eq_dual.size() == 1);
  CHECK(std::abs(grad[0]) ==
        doctest::Approx(std::abs(sol.eq_dual[0])).epsilon(1e-8));
}

TEST_CASE("box-clamped target") {
  QpProblem p;
  p.hess = Eigen::Matrix2d::Identity();
  p.lin = Eigen::Vector2d(-3.0, -0.2);  // pulls toward (3, 0.2)
  p.in_a = Eigen::MatrixXd(4, 2);
  p.in_a << 1, 0, -1, 0, 0, 1, 0, -1;
  p.in_b = Eigen::VectorXd::Ones(4);

  const QpSolution sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::kOptimal);
  CHECK(sol.point[0] == doctest::Approx(1.0));
  CHECK(sol.point[1] == doctest::Approx(0.2));
}

TEST_CASE("contradictory bounds are certified infeasible") {
  QpProblem p;
  p.hess = Eigen::MatrixXd::Identity(1, 1);
  p.lin = Eigen::VectorXd::Zero(1);
  p.in_a = Eigen::MatrixXd(2, 1);
  p.in_a << 1.0, -1.0;
  p.in_b = Eigen::VectorXd(2);
  p.in_b << 0.0, -1.0;  // x <= 0 and x >= 1

  const QpSolution sol = solve_qp(p);
  CHECK(sol.status == QpStatus::kInfeasible);
  CHECK(sol.phase1_residual >= 0.5 - 1e-6);
}

TEST_CASE("curvature-free descent ray is reported unbounded") {
  QpProblem p;
  p.hess = Eigen::MatrixXd::Zero(1, 1);
  p.lin = Eigen::VectorXd::Ones(1);
  CHECK(solve_qp(p).status == QpStatus::kUnbounded);

  QpProblem boxed = p;
  boxed.in_a = Eigen::MatrixXd(1, 1);
  boxed.in_a << -1.0;
  boxed.in_b = Eigen::VectorXd::Zero(1);  // x >= 0 blocks the ray
  const QpSolution sol = solve_qp(boxed);
  REQUIRE(sol.status == QpStatus::kOptimal);
  CHECK(sol.point[0] == doctest::Approx(0.0));
}

TEST_CASE("warm starts reproduce the cold optimum in fewer iterations") {
  std::mt19937 rng(103);
  for (int trial = 0; trial < 10; ++trial) {
    const QpProblem p = random_qp(rng, true);
    const QpSolution cold = solve_qp(p);
    REQUIRE(cold.status == QpStatus::kOptimal);

    QpWarmStart warm;
    warm.point = cold.point;
    warm.working_set = cold.working_set;
    QpOptions opt;
    opt.warm = &warm;
    const QpSolution hot = solve_qp(p, opt);
    REQUIRE(hot.status == QpStatus::kOptimal);
    CHECK(hot.objective ==
          doctest::Approx(cold.objective).epsilon(1e-9));
    CHECK(hot.iterations <= cold.iterations);
  }
}

TEST_CASE("duplicate inequality rows do not break the working set") {
  QpProblem p;
  p.hess = Eigen::Matrix2d::Identity();
  p.lin = Eigen::Vector2d(-4.0, -4.0);
  p.in_a = Eigen::MatrixXd(3, 2);
  p.in_a << 1, 1, 1, 1, 1, 0;  // first two rows identical
  p.in_b = Eigen::VectorXd(3);
  p.in_b << 2.0, 2.0, 1.5;

  const QpSolution sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::kOptimal);
  CHECK(sol.point[0] + sol.point[1] == doctest::Approx(2.0));
  CHECK(sol.stationarity <= 1e-7);
}
