#include "cacc/controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "cacc/qp.hpp"

namespace cacc {

const char* policy_name(Policy p) {
  switch (p) {
    case Policy::kDhmpc: return "dhmpc";
    case Policy::kDhsmpc: return "dhsmpc";
    case Policy::kDhDhsmpc: return "dh-dhsmpc";
  }
  return "?";
}

const char* source_name(PlanSourceUsed s) {
  switch (s) {
    case PlanSourceUsed::kFreshComm: return "fresh-comm";
    case PlanSourceUsed::kShiftedComm: return "shifted-comm";
    case PlanSourceUsed::kGp: return "gp";
    case PlanSourceUsed::kAcc: return "acc";
  }
  return "?";
}

void RollingWindow::push(double time_s, double speed) {
  if (count < kGpWindow) {
    data.time_s[count] = time_s;
    data.speed[count] = speed;
    ++count;
    return;
  }
  for (int i = 0; i + 1 < kGpWindow; ++i) {
    data.time_s[i] = data.time_s[i + 1];
    data.speed[i] = data.speed[i + 1];
  }
  data.time_s[kGpWindow - 1] = time_s;
  data.speed[kGpWindow - 1] = speed;
}

std::vector<double> shifted_profile(const std::vector<double>& profile,
                                    long received_step, long now_step,
                                    int horizon, double accel_min,
                                    double accel_max) {
  if (profile.empty())
    throw std::invalid_argument("no profile to shift");
  if (now_step < received_step)
    throw std::invalid_argument("profile received in the future");
  const int n = static_cast<int>(profile.size());
  const double last = profile[n - 1];
  const double slope = n >= 2 ? profile[n - 1] - profile[n - 2] : 0.0;
  std::vector<double> out(horizon);
  for (int j = 0; j < horizon; ++j) {
    const long k = now_step - received_step + j;
    if (k < n)
      out[j] = profile[k];
    else
      out[j] = std::clamp(last + slope * static_cast<double>(k - (n - 1)),
                          accel_min, accel_max);
  }
  return out;
}

std::optional<GpPayload> window_payload(const RollingWindow& w) {
  if (!w.full()) return std::nullopt;
  return payload_from_model(fit_gp(w.data));
}

VehicleController::VehicleController(const VehicleParams& params, double ts,
                                     const ControllerConfig& cfg)
    : params_(params), ts_(ts), cfg_(cfg), sys_(discrete_system(params, ts)) {
  params_.validate();
  if (cfg_.horizon < 1)
    throw std::invalid_argument("horizon must be at least 1");
}

void VehicleController::observe_predecessor(double time_s, double speed) {
  store_.observed.push(time_s, speed);
}

void VehicleController::observe_self(double time_s, double speed) {
  own_window_.push(time_s, speed);
}

void VehicleController::receive(const Packet& pkt) {
  const long step = static_cast<long>(pkt.step);
  if (pkt.profile && step >= store_.profile_step) {
    store_.profile = *pkt.profile;
    store_.profile_step = step;
  }
  if (pkt.gp && step >= store_.gp_step) {
    store_.gp = *pkt.gp;
    store_.gp_step = step;
  }
}

PredecessorPlan VehicleController::select_plan(long step, PlanSourceUsed* used) {
  const int n = cfg_.horizon;
  PredecessorPlan plan;
  plan.source = PlanSource::kAccFallback;
  plan.accel.assign(n, 0.0);
  *used = PlanSourceUsed::kAcc;

  const bool have_profile = store_.profile_step >= 0 && !store_.profile.empty();
  const bool fresh = have_profile && store_.profile_step == step;
  const long staleness = have_profile ? step - store_.profile_step : 0;

  const auto use_comm = [&] {
    plan.accel = shifted_profile(store_.profile, store_.profile_step, step, n,
                                 params_.accel_min, params_.accel_max);
    plan.source = PlanSource::kCommunicated;
    *used = fresh ? PlanSourceUsed::kFreshComm : PlanSourceUsed::kShiftedComm;
  };
  const auto use_gp = [&]() -> bool {
    if (store_.gp_step < 0) return false;
    // Local refits track the ranging sensor, so the window advances every
    // step; the received model only changes when a payload lands.
    const bool local = cfg_.refit_local_gp && store_.observed.full();
    const long want = local ? step : store_.gp_step;
    if (gp_model_step_ != want) {
      if (local)
        gp_model_ = fit_gp(store_.observed.data);
      else
        gp_model_ = model_from_payload(*store_.gp);
      gp_model_step_ = want;
    }
    const SpeedForecast f =
        forecast(*gp_model_, static_cast<double>(step) * ts_, n, ts_,
                 params_.speed_max);
    plan.accel = implied_accel(f, ts_, params_.accel_min, params_.accel_max);
    plan.noise.resize(n);
    for (int j = 0; j < n; ++j) plan.noise[j] = discretize(f.stdev[j + 1]);
    plan.source = PlanSource::kGp;
    *used = PlanSourceUsed::kGp;
    return true;
  };

  switch (cfg_.policy) {
    case Policy::kDhmpc:
      if (have_profile && staleness <= n) use_comm();
      break;
    case Policy::kDhsmpc:
      use_gp();
      break;
    case Policy::kDhDhsmpc:
      if (fresh)
        use_comm();
      else
        use_gp();
      break;
  }
  return plan;
}

PlanResult VehicleController::plan(const ErrorState& x0, double speed0,
                                   long step) {
  const auto t0 = std::chrono::steady_clock::now();
  PlanResult out;

  MldInputs in;
  in.x0 = x0;
  in.speed0 = speed0;
  in.u_prev = u_prev_;
  in.params = params_;
  in.sys = sys_;
  in.plan = select_plan(step, &out.source);
  in.weights = cfg_.weights;
  in.limits = cfg_.limits;
  in.horizon = cfg_.horizon;
  in.chance_bound = cfg_.chance_bound;

  MldProgram prog = build_mld(in);
  MiqpSolution sol = solve_miqp(prog, cfg_.miqp);
  if (sol.status == MiqpStatus::kInfeasible) {
    // Hard braking near standstill can leave no input ramp that keeps the
    // planned speed nonnegative; the plant clamps at zero, so retry against
    // the physical floor instead of the modeled one.
    in.drop_speed_floor = true;
    prog = build_mld(in);
    sol = solve_miqp(prog, cfg_.miqp);
    out.solver_warnings = 1;
  }
  out.status = sol.status;
  out.nodes = sol.nodes;
  out.solver_warnings += sol.solver_warnings;

  const int n = cfg_.horizon;
  const bool usable = sol.point.size() == prog.n_var &&
                      (sol.status == MiqpStatus::kOptimal ||
                       sol.status == MiqpStatus::kNodeBudget);
  if (usable) {
    out.input = std::clamp(sol.point[prog.col_input(0)], params_.input_min,
                           params_.input_max);
    out.objective = sol.objective;
    out.emergency = sol.point[prog.col_switch_brake(0)] >= 0.5;
    out.predicted.resize(n + 1);
    for (int k = 0; k <= n; ++k)
      out.predicted[k] = {sol.point[prog.col_state(k, 0)],
                          sol.point[prog.col_state(k, 1)],
                          sol.point[prog.col_state(k, 2)]};
    out.predicted_accel.resize(n);
    for (int k = 1; k <= n; ++k)
      out.predicted_accel[k - 1] = sol.point[prog.col_state(k, 2)];
  } else {
    out.failsafe = true;
    out.emergency = true;
    out.input = params_.input_min;
    out.predicted_accel.resize(n);
    double a = x0.accel;
    for (int k = 0; k < n; ++k) {
      a = sys_.a(2, 2) * a + sys_.b(2) * params_.input_min;
      out.predicted_accel[k] = a;
    }
  }

  last_predicted_accel_ = out.predicted_accel;
  u_prev_ = out.input;
  out.solve_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  return out;
}

std::optional<GpPayload> VehicleController::own_payload() const {
  return window_payload(own_window_);
}

LeaderController::LeaderController(const VehicleParams& params, double ts,
                                   int horizon, double speed_weight,
                                   double accel_weight)
    : params_(params),
      ts_(ts),
      horizon_(horizon),
      w_speed_(speed_weight),
      w_accel_(accel_weight) {
  params_.validate();
  if (ts <= 0.0) throw std::invalid_argument("sample period must be positive");
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (speed_weight <= 0.0 || accel_weight < 0.0)
    throw std::invalid_argument("leader weights must be positive");
}

void LeaderController::observe_self(double time_s, double speed) {
  own_window_.push(time_s, speed);
}

PlanResult LeaderController::plan(const KinematicState& state,
                                  const std::vector<double>& v_ref) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = horizon_;
  if (static_cast<int>(v_ref.size()) != n)
    throw std::invalid_argument("reference length must match the horizon");

  // Columns: v(0..N), a(0..N), u(0..N-1).
  const int cv = 0, ca = n + 1, cu = 2 * (n + 1);
  const int nv = 3 * n + 2;
  const double tsf = ts_ * params_.driveline_rate;

  QpProblem qp;
  qp.hess = Eigen::MatrixXd::Zero(nv, nv);
  qp.lin = Eigen::VectorXd::Zero(nv);
  for (int k = 1; k <= n; ++k) {
    qp.hess(cv + k, cv + k) = 2.0 * w_speed_;
    qp.lin[cv + k] = -2.0 * w_speed_ * v_ref[k - 1];
    qp.hess(ca + k, ca + k) = 2.0 * w_accel_;
  }
  for (int k = 0; k < n; ++k) qp.hess(cu + k, cu + k) = 2.0e-5;

  const int n_eq = 2 + 2 * n;
  qp.eq_a = Eigen::MatrixXd::Zero(n_eq, nv);
  qp.eq_b = Eigen::VectorXd::Zero(n_eq);
  int er = 0;
  qp.eq_a(er, cv) = 1.0;
  qp.eq_b[er++] = state.speed;
  qp.eq_a(er, ca) = 1.0;
  qp.eq_b[er++] = state.accel;
  for (int k = 0; k < n; ++k) {
    qp.eq_a(er, cv + k + 1) = 1.0;
    qp.eq_a(er, cv + k) = -1.0;
    qp.eq_a(er, ca + k) = -ts_;
    ++er;
    qp.eq_a(er, ca + k + 1) = 1.0;
    qp.eq_a(er, ca + k) = -(1.0 - tsf);
    qp.eq_a(er, cu + k) = -tsf;
    ++er;
  }

  // Input box, comfort ramp, acceleration box, speed floor (k >= 2, the
  // first state the input can still influence).
  std::vector<std::pair<Eigen::VectorXd, double>> ineq;
  const auto add = [&](const Eigen::VectorXd& row, double rhs) {
    ineq.emplace_back(row, rhs);
  };
  // No comfort ramp on the lead vehicle: reference transitions are executed
  // as sharply as the actuation box allows.
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(nv);
    r[cu + k] = 1.0;
    add(r, params_.input_max);
    add(-r, -params_.input_min);
  }
  for (int k = 1; k <= n; ++k) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(nv);
    r[ca + k] = 1.0;
    add(r, params_.accel_max);
    add(-r, -params_.accel_min);
  }
  for (int k = 2; k <= n; ++k) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(nv);
    r[cv + k] = -1.0;
    add(r, 0.0);
  }

  const auto assemble = [&](std::size_t rows) {
    qp.in_a = Eigen::MatrixXd::Zero(static_cast<int>(rows), nv);
    qp.in_b = Eigen::VectorXd::Zero(static_cast<int>(rows));
    for (std::size_t i = 0; i < rows; ++i) {
      qp.in_a.row(static_cast<int>(i)) = ineq[i].first.transpose();
      qp.in_b[static_cast<int>(i)] = ineq[i].second;
    }
  };
  assemble(ineq.size());

  PlanResult out;
  QpSolution sol = solve_qp(qp);
  if (sol.status != QpStatus::kOptimal) {
    // The speed floor can pinch against the measured acceleration when
    // stopping; tracking alone keeps the speed nonnegative in that regime.
    assemble(ineq.size() - static_cast<std::size_t>(n - 1));
    sol = solve_qp(qp);
    ++out.solver_warnings;
  }

  if (sol.status == QpStatus::kOptimal) {
    out.status = MiqpStatus::kOptimal;
    out.input = std::clamp(sol.point[cu], params_.input_min, params_.input_max);
    out.objective = sol.objective;
    out.predicted_accel.resize(n);
    for (int k = 1; k <= n; ++k)
      out.predicted_accel[k - 1] = sol.point[ca + k];
  } else {
    out.status = MiqpStatus::kInfeasible;
    out.failsafe = true;
    out.input = std::clamp(u_prev_, params_.input_min, params_.input_max);
    out.predicted_accel.assign(n, state.accel);
  }

  last_predicted_accel_ = out.predicted_accel;
  u_prev_ = out.input;
  out.solve_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  return out;
}

std::optional<GpPayload> LeaderController::own_payload() const {
  return window_payload(own_window_);
}

}  // namespace cacc
