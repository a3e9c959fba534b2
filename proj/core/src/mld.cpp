#include "cacc/mld.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "cacc/miqp.hpp"
#include "cacc/qp.hpp"

namespace cacc {

namespace {

struct PendingRow {
  RowInfo info;
  Eigen::VectorXd coef;
  double rhs = 0.0;
};

class ProgramBuilder {
 public:
  explicit ProgramBuilder(int n) : n_(n) {}

  Eigen::VectorXd blank() const { return Eigen::VectorXd::Zero(n_); }

  void eq(RowInfo info, Eigen::VectorXd coef, double rhs) {
    eq_.push_back({info, std::move(coef), rhs});
  }
  void in(RowInfo info, Eigen::VectorXd coef, double rhs) {
    in_.push_back({info, std::move(coef), rhs});
  }

  // Packs collected rows; inequality rows whose support lies entirely in
  // pinned columns are dropped, counted as satisfied or unenforceable.
  void finish(const std::vector<int>& pinned_cols,
              const std::vector<double>& pinned_vals, MldProgram* prog) const {
    std::vector<char> pinned(n_, 0);
    Eigen::VectorXd pin_val = Eigen::VectorXd::Zero(n_);
    for (std::size_t i = 0; i < pinned_cols.size(); ++i) {
      pinned[pinned_cols[i]] = 1;
      pin_val[pinned_cols[i]] = pinned_vals[i];
    }

    prog->eq_a.setZero(static_cast<int>(eq_.size()), n_);
    prog->eq_b.resize(static_cast<int>(eq_.size()));
    prog->eq_rows.clear();
    for (std::size_t i = 0; i < eq_.size(); ++i) {
      prog->eq_a.row(static_cast<int>(i)) = eq_[i].coef.transpose();
      prog->eq_b[static_cast<int>(i)] = eq_[i].rhs;
      prog->eq_rows.push_back(eq_[i].info);
    }

    std::vector<const PendingRow*> kept;
    kept.reserve(in_.size());
    for (const auto& row : in_) {
      bool has_free = false;
      for (int c = 0; c < n_; ++c) {
        if (row.coef[c] != 0.0 && !pinned[c]) {
          has_free = true;
          break;
        }
      }
      if (has_free) {
        kept.push_back(&row);
        continue;
      }
      const double lhs = row.coef.dot(pin_val);
      if (lhs <= row.rhs + 1e-12)
        ++prog->skipped_rows;
      else
        ++prog->unenforceable_rows;
    }

    prog->in_a.setZero(static_cast<int>(kept.size()), n_);
    prog->in_b.resize(static_cast<int>(kept.size()));
    prog->in_rows.clear();
    for (std::size_t i = 0; i < kept.size(); ++i) {
      prog->in_a.row(static_cast<int>(i)) = kept[i]->coef.transpose();
      prog->in_b[static_cast<int>(i)] = kept[i]->rhs;
      prog->in_rows.push_back(kept[i]->info);
    }
  }

 private:
  int n_;
  std::vector<PendingRow> eq_;
  std::vector<PendingRow> in_;
};

const char* kind_name(RowKind k) {
  switch (k) {
    case RowKind::kDynamics: return "dynamics";
    case RowKind::kStatePin: return "state-pin";
    case RowKind::kSwitchPin: return "switch-pin";
    case RowKind::kSelectSum: return "select-sum";
    case RowKind::kSwitchGapOn: return "gap-switch-on";
    case RowKind::kSwitchGapOff: return "gap-switch-off";
    case RowKind::kSwitchSpeedOn: return "speed-switch-on";
    case RowKind::kSwitchSpeedOff: return "speed-switch-off";
    case RowKind::kBrakeConj: return "brake-conj";
    case RowKind::kBrakeLeGap: return "brake-le-gap";
    case RowKind::kBrakeLeSpeed: return "brake-le-speed";
    case RowKind::kInputCeiling: return "input-ceiling";
    case RowKind::kComfortUp: return "comfort-up";
    case RowKind::kComfortDown: return "comfort-down";
    case RowKind::kInputHi: return "input-hi";
    case RowKind::kInputLo: return "input-lo";
    case RowKind::kAccelHi: return "accel-hi";
    case RowKind::kAccelLo: return "accel-lo";
    case RowKind::kSpeedHi: return "speed-hi";
    case RowKind::kSpeedLo: return "speed-lo";
    case RowKind::kGapFloor: return "gap-floor";
    case RowKind::kEnvelopeHi: return "envelope-hi";
    case RowKind::kEnvelopeLo: return "envelope-lo";
    case RowKind::kChance: return "chance";
    case RowKind::kBinaryHi: return "binary-hi";
    case RowKind::kBinaryLo: return "binary-lo";
  }
  return "?";
}

const char* role_name(VarRole r) {
  switch (r) {
    case VarRole::kGapErr: return "gap_err";
    case VarRole::kSpeedErr: return "speed_err";
    case VarRole::kAccel: return "accel";
    case VarRole::kInput: return "input";
    case VarRole::kSwitchGap: return "switch_gap";
    case VarRole::kSwitchSpeed: return "switch_speed";
    case VarRole::kSwitchBrake: return "switch_brake";
    case VarRole::kSelect: return "select";
  }
  return "?";
}

}  // namespace

BigMBounds big_m_bounds(const VehicleParams& p, const MldLimits& lim) {
  BigMBounds b;
  b.gap_hi = lim.gap_err_max + p.brake_gap_slack;
  b.gap_lo = -lim.gap_err_max + p.brake_gap_slack;
  b.speed_hi = p.brake_speed_floor;
  b.speed_lo = p.brake_speed_floor - p.speed_max;
  return b;
}

MldProgram build_mld(const MldInputs& in) {
  in.params.validate();
  const int n_steps = in.horizon;
  if (n_steps < 1) throw std::invalid_argument("horizon must be at least 1");
  if (!(in.sys.ts > 0.0)) throw std::invalid_argument("sample time must be positive");
  if (static_cast<int>(in.plan.accel.size()) != n_steps)
    throw std::invalid_argument("plan length must match the horizon");
  if (!in.plan.noise.empty() &&
      static_cast<int>(in.plan.noise.size()) != n_steps)
    throw std::invalid_argument("noise length must match the horizon");
  if (!(in.chance_bound > 0.0 && in.chance_bound <= 1.0))
    throw std::invalid_argument("chance bound must lie in (0, 1]");

  const bool stochastic = !in.plan.noise.empty();
  const int m = stochastic ? 3 : 1;

  MldProgram prog;
  prog.horizon = n_steps;
  prog.levels = m;
  prog.n_var = 3 * (n_steps + 1) + 4 * n_steps + m * n_steps;
  prog.log_chance_bound = std::log(in.chance_bound);

  const VehicleParams& par = in.params;
  const double ts = in.sys.ts;
  const double tau = par.time_gap_s;
  const double u_span = par.input_max - par.input_min;
  BigMBounds big = big_m_bounds(par, in.limits);
  if (in.drop_speed_floor) {
    // Without the floor rows the planned speed can undershoot zero, so the
    // switch envelope has to cover the deepest reachable value.
    big.speed_hi = std::max(
        big.speed_hi, par.brake_speed_floor -
                          (in.speed0 + n_steps * ts * par.accel_min));
  }
  const double eps = in.limits.eps;

  // Variable metadata.
  prog.vars.resize(prog.n_var);
  for (int k = 0; k <= n_steps; ++k) {
    prog.vars[prog.col_state(k, 0)] = {VarRole::kGapErr, k, 0};
    prog.vars[prog.col_state(k, 1)] = {VarRole::kSpeedErr, k, 0};
    prog.vars[prog.col_state(k, 2)] = {VarRole::kAccel, k, 0};
  }
  for (int k = 0; k < n_steps; ++k) {
    prog.vars[prog.col_input(k)] = {VarRole::kInput, k, 0};
    prog.vars[prog.col_switch_gap(k)] = {VarRole::kSwitchGap, k, 0};
    prog.vars[prog.col_switch_speed(k)] = {VarRole::kSwitchSpeed, k, 0};
    prog.vars[prog.col_switch_brake(k)] = {VarRole::kSwitchBrake, k, 0};
    for (int j = 0; j < m; ++j)
      prog.vars[prog.col_select(k, j)] = {VarRole::kSelect, k, j};
  }

  // Step-0 switch values follow directly from the measured state.
  const bool gap0 = in.x0.gap_err + par.brake_gap_slack <= 0.0;
  const bool speed0_hi = in.speed0 >= par.brake_speed_floor;
  const bool brake0 = gap0 && speed0_hi;

  prog.binaries.clear();
  for (int k = 0; k < n_steps; ++k) {
    prog.binaries.push_back({prog.col_switch_gap(k), VarRole::kSwitchGap, k, 0,
                             k == 0 ? (gap0 ? 1 : 0) : -1});
    prog.binaries.push_back({prog.col_switch_speed(k), VarRole::kSwitchSpeed, k,
                             0, k == 0 ? (speed0_hi ? 1 : 0) : -1});
    prog.binaries.push_back({prog.col_switch_brake(k), VarRole::kSwitchBrake, k,
                             0, k == 0 ? (brake0 ? 1 : 0) : -1});
  }
  for (int k = 0; k < n_steps; ++k)
    for (int j = 0; j < m; ++j)
      prog.binaries.push_back(
          {prog.col_select(k, j), VarRole::kSelect, k, j, m == 1 ? 1 : -1});

  // Per-step disturbance levels and log-probabilities.
  std::vector<std::array<double, 3>> eta(n_steps, {0.0, 0.0, 0.0});
  prog.log_prob.assign(n_steps, std::vector<double>(m, 0.0));
  if (stochastic) {
    for (int k = 0; k < n_steps; ++k) {
      for (int j = 0; j < m; ++j) {
        eta[k][j] = in.plan.noise[k].level[j];
        prog.log_prob[k][j] = std::log(in.plan.noise[k].prob[j].value());
      }
    }
  }

  // Switches forced by reachability: when every admissible trajectory keeps
  // an indicator argument strictly on one side of its dead band, the binary
  // value is known up front and the integer search never sees it. Interval
  // bounds only ever widen, so a pin is sound for the full feasible set.
  {
    const double slop = 1e-9;
    const double keep = 1.0 - ts * par.driveline_rate;
    const double gain = ts * par.driveline_rate;
    double dd_lo = in.x0.gap_err, dd_hi = in.x0.gap_err;
    double dv_lo = in.x0.speed_err, dv_hi = in.x0.speed_err;
    double a_lo = in.x0.accel, a_hi = in.x0.accel;
    double v_lo = in.speed0, v_hi = in.speed0;
    for (int k = 1; k < n_steps; ++k) {
      const auto& lv = eta[k - 1];
      const double eta_lo = std::min({lv[0], lv[1], lv[2]});
      const double eta_hi = std::max({lv[0], lv[1], lv[2]});
      const double ap = in.plan.accel[k - 1];
      const double dd_lo_next = dd_lo + ts * dv_lo - tau * ts * a_hi;
      const double dd_hi_next = dd_hi + ts * dv_hi - tau * ts * a_lo;
      dv_lo = dv_lo + ts * (ap - a_hi) + eta_lo;
      dv_hi = dv_hi + ts * (ap - a_lo) + eta_hi;
      dd_lo = dd_lo_next;
      dd_hi = dd_hi_next;
      v_lo += ts * a_lo;
      v_hi += ts * a_hi;
      a_lo = std::max(par.accel_min, keep * a_lo + gain * par.input_min);
      a_hi = std::min(par.accel_max, keep * a_hi + gain * par.input_max);

      auto& gap_bin = prog.binaries[static_cast<std::size_t>(3 * k)];
      auto& speed_bin = prog.binaries[static_cast<std::size_t>(3 * k + 1)];
      auto& brake_bin = prog.binaries[static_cast<std::size_t>(3 * k + 2)];
      if (dd_hi + par.brake_gap_slack <= -slop)
        gap_bin.fixed = 1;
      else if (dd_lo + par.brake_gap_slack >= eps + slop)
        gap_bin.fixed = 0;
      if (par.brake_speed_floor - v_lo <= -slop)
        speed_bin.fixed = 1;
      else if (par.brake_speed_floor - v_hi >= eps + slop)
        speed_bin.fixed = 0;
      if (gap_bin.fixed == 0 || speed_bin.fixed == 0)
        brake_bin.fixed = 0;
      else if (gap_bin.fixed == 1 && speed_bin.fixed == 1)
        brake_bin.fixed = 1;
    }
  }

  // Objective.
  prog.hess = Eigen::MatrixXd::Zero(prog.n_var, prog.n_var);
  prog.lin = Eigen::VectorXd::Zero(prog.n_var);
  for (int k = 0; k < n_steps; ++k)
    for (int i = 0; i < 3; ++i)
      prog.hess(prog.col_state(k, i), prog.col_state(k, i)) =
          2.0 * in.weights.state[i];
  for (int k = 0; k < n_steps; ++k) {
    prog.hess(prog.col_input(k), prog.col_input(k)) =
        2.0 * (in.weights.input + in.weights.reg);
    for (int c : {prog.col_switch_gap(k), prog.col_switch_speed(k),
                  prog.col_switch_brake(k)})
      prog.hess(c, c) = 2.0 * in.weights.reg;
    for (int j = 0; j < m; ++j) {
      const int c = prog.col_select(k, j);
      prog.hess(c, c) = 2.0 * in.weights.reg;
      prog.lin[c] = -in.weights.prob * prog.log_prob[k][j];
    }
  }

  ProgramBuilder rows(prog.n_var);

  // speed(k) = speed0 + ts * sum_{j<k} accel(j); returns the constant part.
  const auto put_speed = [&](Eigen::VectorXd& row, double coef, int k) {
    for (int j = 0; j < k; ++j) row[prog.col_state(j, 2)] += coef * ts;
    return coef * in.speed0;
  };

  // Initial state and switch pins.
  for (int i = 0; i < 3; ++i) {
    auto r = rows.blank();
    r[prog.col_state(0, i)] = 1.0;
    const double v = i == 0 ? in.x0.gap_err : (i == 1 ? in.x0.speed_err : in.x0.accel);
    rows.eq({RowKind::kStatePin, 0, i}, std::move(r), v);
  }
  {
    auto r = rows.blank();
    r[prog.col_switch_gap(0)] = 1.0;
    rows.eq({RowKind::kSwitchPin, 0, 0}, std::move(r), gap0 ? 1.0 : 0.0);
    r = rows.blank();
    r[prog.col_switch_speed(0)] = 1.0;
    rows.eq({RowKind::kSwitchPin, 0, 1}, std::move(r), speed0_hi ? 1.0 : 0.0);
    r = rows.blank();
    r[prog.col_switch_brake(0)] = 1.0;
    rows.eq({RowKind::kSwitchPin, 0, 2}, std::move(r), brake0 ? 1.0 : 0.0);
  }

  // Dynamics x(k+1) = A x(k) + B u(k) + D plan(k) + E eta w(k).
  for (int k = 0; k < n_steps; ++k) {
    for (int i = 0; i < 3; ++i) {
      auto r = rows.blank();
      r[prog.col_state(k + 1, i)] = 1.0;
      for (int l = 0; l < 3; ++l) r[prog.col_state(k, l)] -= in.sys.a(i, l);
      r[prog.col_input(k)] -= in.sys.b[i];
      for (int j = 0; j < m; ++j)
        r[prog.col_select(k, j)] -= in.sys.e[i] * eta[k][j];
      rows.eq({RowKind::kDynamics, k, i}, std::move(r),
              in.sys.d[i] * in.plan.accel[k]);
    }
  }

  // Exactly one disturbance level per step.
  for (int k = 0; k < n_steps; ++k) {
    auto r = rows.blank();
    for (int j = 0; j < m; ++j) r[prog.col_select(k, j)] = 1.0;
    rows.eq({RowKind::kSelectSum, k, 0}, std::move(r), 1.0);
  }

  // Switch indicator rows for k >= 1: [c <= 0] <-> switch = 1 with
  //   on:  c + c_hi * s <= c_hi
  //   off: -c + (c_lo - eps) * s <= -eps.
  for (int k = 1; k < n_steps; ++k) {
    // Gap switch, c = gap_err(k) + brake_gap_slack.
    auto r = rows.blank();
    r[prog.col_state(k, 0)] = 1.0;
    r[prog.col_switch_gap(k)] = big.gap_hi;
    rows.in({RowKind::kSwitchGapOn, k, 0}, std::move(r),
            big.gap_hi - par.brake_gap_slack);

    r = rows.blank();
    r[prog.col_state(k, 0)] = -1.0;
    r[prog.col_switch_gap(k)] = big.gap_lo - eps;
    rows.in({RowKind::kSwitchGapOff, k, 0}, std::move(r),
            -eps + par.brake_gap_slack);

    // Speed switch, c = brake_speed_floor - speed(k).
    r = rows.blank();
    double c0 = put_speed(r, -1.0, k);
    r[prog.col_switch_speed(k)] = big.speed_hi;
    rows.in({RowKind::kSwitchSpeedOn, k, 0}, std::move(r),
            big.speed_hi - par.brake_speed_floor - c0);

    r = rows.blank();
    c0 = put_speed(r, 1.0, k);
    r[prog.col_switch_speed(k)] = big.speed_lo - eps;
    rows.in({RowKind::kSwitchSpeedOff, k, 0}, std::move(r),
            par.brake_speed_floor - eps - c0);
  }

  // Brake switch equals the conjunction of the other two.
  for (int k = 0; k < n_steps; ++k) {
    auto r = rows.blank();
    r[prog.col_switch_brake(k)] = -1.0;
    r[prog.col_switch_gap(k)] = 1.0;
    r[prog.col_switch_speed(k)] = 1.0;
    rows.in({RowKind::kBrakeConj, k, 0}, std::move(r), 1.0);

    r = rows.blank();
    r[prog.col_switch_brake(k)] = 1.0;
    r[prog.col_switch_gap(k)] = -1.0;
    rows.in({RowKind::kBrakeLeGap, k, 0}, std::move(r), 0.0);

    r = rows.blank();
    r[prog.col_switch_brake(k)] = 1.0;
    r[prog.col_switch_speed(k)] = -1.0;
    rows.in({RowKind::kBrakeLeSpeed, k, 0}, std::move(r), 0.0);
  }

  // Engaged brake pushes the admissible input down to its minimum.
  for (int k = 0; k < n_steps; ++k) {
    auto r = rows.blank();
    r[prog.col_input(k)] = 1.0;
    r[prog.col_switch_brake(k)] = u_span;
    rows.in({RowKind::kInputCeiling, k, 0}, std::move(r), par.input_max);
  }

  // Rate-of-change comfort bounds, relaxed while braking.
  for (int k = 0; k < n_steps; ++k) {
    auto r = rows.blank();
    r[prog.col_input(k)] = 1.0;
    double rhs_up = ts * par.input_max;
    if (k == 0)
      rhs_up += in.u_prev;
    else
      r[prog.col_input(k - 1)] = -1.0;
    r[prog.col_switch_brake(k)] = ts * par.input_max - u_span;
    rows.in({RowKind::kComfortUp, k, 0}, std::move(r), rhs_up);

    r = rows.blank();
    r[prog.col_input(k)] = -1.0;
    double rhs_dn = -ts * par.input_min;
    if (k == 0)
      rhs_dn -= in.u_prev;
    else
      r[prog.col_input(k - 1)] = 1.0;
    r[prog.col_switch_brake(k)] = -(ts * par.input_min + u_span);
    rows.in({RowKind::kComfortDown, k, 0}, std::move(r), rhs_dn);
  }

  // Input and acceleration boxes.
  for (int k = 0; k < n_steps; ++k) {
    auto r = rows.blank();
    r[prog.col_input(k)] = 1.0;
    rows.in({RowKind::kInputHi, k, 0}, std::move(r), par.input_max);
    r = rows.blank();
    r[prog.col_input(k)] = -1.0;
    rows.in({RowKind::kInputLo, k, 0}, std::move(r), -par.input_min);
  }
  for (int k = 1; k <= n_steps; ++k) {
    auto r = rows.blank();
    r[prog.col_state(k, 2)] = 1.0;
    rows.in({RowKind::kAccelHi, k, 0}, std::move(r), par.accel_max);
    r = rows.blank();
    r[prog.col_state(k, 2)] = -1.0;
    rows.in({RowKind::kAccelLo, k, 0}, std::move(r), -par.accel_min);
  }

  // Own speed stays on the road range. The k = 1 value is fixed by the
  // measured state, so rows begin where the input has authority.
  for (int k = 2; k <= n_steps; ++k) {
    auto r = rows.blank();
    double c0 = put_speed(r, 1.0, k);
    rows.in({RowKind::kSpeedHi, k, 0}, std::move(r), par.speed_max - c0);
    if (in.drop_speed_floor) continue;
    r = rows.blank();
    c0 = put_speed(r, -1.0, k);
    rows.in({RowKind::kSpeedLo, k, 0}, std::move(r), -c0);
  }

  // Hard floor on the bumper gap: gap_err + tau * speed + standstill >= margin.
  for (int k = 2; k <= n_steps; ++k) {
    auto r = rows.blank();
    r[prog.col_state(k, 0)] = -1.0;
    const double c0 = put_speed(r, -tau, k);
    rows.in({RowKind::kGapFloor, k, 0}, std::move(r),
            par.standstill_gap_m - in.limits.gap_margin - c0);
  }

  // Envelope keeping the switching bounds valid.
  for (int k = 2; k <= n_steps; ++k) {
    auto r = rows.blank();
    r[prog.col_state(k, 0)] = 1.0;
    rows.in({RowKind::kEnvelopeHi, k, 0}, std::move(r), in.limits.gap_err_max);
    r = rows.blank();
    r[prog.col_state(k, 0)] = -1.0;
    rows.in({RowKind::kEnvelopeLo, k, 0}, std::move(r), in.limits.gap_err_max);
  }

  // Scenario probability must stay above the chance bound.
  if (m > 1) {
    auto r = rows.blank();
    for (int k = 0; k < n_steps; ++k)
      for (int j = 0; j < m; ++j)
        r[prog.col_select(k, j)] = -prog.log_prob[k][j];
    rows.in({RowKind::kChance, 0, 0}, std::move(r), -prog.log_chance_bound);
  }

  // Unit boxes on every binary.
  for (const auto& b : prog.binaries) {
    auto r = rows.blank();
    r[b.col] = 1.0;
    rows.in({RowKind::kBinaryHi, b.step, b.level}, std::move(r), 1.0);
    r = rows.blank();
    r[b.col] = -1.0;
    rows.in({RowKind::kBinaryLo, b.step, b.level}, std::move(r), 0.0);
  }

  // Pinned columns: the measured state and the prefixed binaries.
  std::vector<int> pin_cols = {prog.col_state(0, 0), prog.col_state(0, 1),
                               prog.col_state(0, 2)};
  std::vector<double> pin_vals = {in.x0.gap_err, in.x0.speed_err, in.x0.accel};
  for (const auto& b : prog.binaries) {
    if (b.fixed >= 0) {
      pin_cols.push_back(b.col);
      pin_vals.push_back(static_cast<double>(b.fixed));
    }
  }
  rows.finish(pin_cols, pin_vals, &prog);
  return prog;
}

MldReport validate_mld(const MldProgram& prog) {
  MldReport rep;
  rep.n_binary = static_cast<int>(prog.binaries.size());
  for (const auto& b : prog.binaries)
    if (b.fixed < 0) ++rep.n_free_binary;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(prog.hess,
                                                    Eigen::EigenvaluesOnly);
  rep.hess_min_eig = es.eigenvalues().minCoeff();
  if (rep.hess_min_eig < -1e-9)
    rep.notes.push_back("hessian has a negative eigenvalue");

  rep.probabilities_normalized = true;
  for (const auto& step : prog.log_prob) {
    double total = 0.0;
    for (double lp : step) total += std::exp(lp);
    if (std::abs(total - 1.0) > 1e-9) rep.probabilities_normalized = false;
  }
  if (!rep.probabilities_normalized)
    rep.notes.push_back("selector probabilities do not sum to one");

  // Every free binary needs both unit box rows.
  rep.binaries_boxed = true;
  for (const auto& b : prog.binaries) {
    if (b.fixed >= 0) continue;
    bool hi = false;
    bool lo = false;
    for (int r = 0; r < prog.in_a.rows(); ++r) {
      if (prog.in_rows[r].kind == RowKind::kBinaryHi &&
          prog.in_a(r, b.col) == 1.0 && prog.in_b[r] == 1.0)
        hi = true;
      if (prog.in_rows[r].kind == RowKind::kBinaryLo &&
          prog.in_a(r, b.col) == -1.0 && prog.in_b[r] == 0.0)
        lo = true;
    }
    if (!hi || !lo) {
      rep.binaries_boxed = false;
      break;
    }
  }
  if (!rep.binaries_boxed) rep.notes.push_back("a free binary lacks box rows");

  // The quiet assignment (no braking, most probable level everywhere,
  // speed switches matching free dynamics) should admit a feasible input.
  {
    std::vector<int> fix(prog.binaries.size(), -1);
    for (std::size_t i = 0; i < prog.binaries.size(); ++i) {
      const auto& b = prog.binaries[i];
      if (b.fixed >= 0) {
        fix[i] = b.fixed;
      } else if (b.role == VarRole::kSelect) {
        int best = 0;
        for (int j = 0; j < prog.levels; ++j)
          if (prog.log_prob[b.step][j] > prog.log_prob[b.step][best]) best = j;
        fix[i] = b.level == best ? 1 : 0;
      } else if (b.role == VarRole::kSwitchGap || b.role == VarRole::kSwitchBrake) {
        fix[i] = 0;
      }
      // Speed switches stay free so the relaxation can match the profile.
    }
    const ReducedQp red = reduce_program(prog, fix);
    if (red.contradiction) {
      rep.safe_assignment_feasible = false;
    } else {
      const QpSolution sol = solve_qp(red.qp);
      rep.safe_assignment_feasible = sol.status == QpStatus::kOptimal;
    }
    if (!rep.safe_assignment_feasible)
      rep.notes.push_back("quiet binary assignment is infeasible");
  }

  rep.ok = rep.hess_min_eig >= -1e-9 && rep.probabilities_normalized &&
           rep.binaries_boxed && rep.safe_assignment_feasible;
  return rep;
}

void dump_mld(const MldProgram& prog, std::ostream& os) {
  os << "mld program: n=" << prog.n_var << " horizon=" << prog.horizon
     << " levels=" << prog.levels << " eq=" << prog.eq_a.rows()
     << " in=" << prog.in_a.rows() << " skipped=" << prog.skipped_rows
     << " unenforceable=" << prog.unenforceable_rows << "\n";
  os << "binaries:";
  for (const auto& b : prog.binaries) {
    os << " " << role_name(b.role) << "[" << b.step;
    if (b.role == VarRole::kSelect) os << "," << b.level;
    os << "]";
    if (b.fixed >= 0) os << "=" << b.fixed;
  }
  os << "\n";
  for (int r = 0; r < prog.eq_a.rows(); ++r) {
    os << "eq " << kind_name(prog.eq_rows[r].kind) << " k="
       << prog.eq_rows[r].step << " rhs=" << prog.eq_b[r] << "\n";
  }
  for (int r = 0; r < prog.in_a.rows(); ++r) {
    os << "in " << kind_name(prog.in_rows[r].kind) << " k="
       << prog.in_rows[r].step << " rhs=" << prog.in_b[r] << "\n";
  }
}

}  // namespace cacc
