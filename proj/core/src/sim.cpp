#include "cacc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace cacc {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kSettleTol = 0.1;  // |v_i - v_0| threshold [m/s]

const char* status_name(MiqpStatus s) {
  switch (s) {
    case MiqpStatus::kOptimal: return "optimal";
    case MiqpStatus::kInfeasible: return "infeasible";
    case MiqpStatus::kNodeBudget: return "node-budget";
  }
  return "?";
}

void put(std::ostream& os, double v) {
  if (std::isnan(v)) return;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  os << buf;
}

}  // namespace

double leader_reference(double t, const std::vector<LeaderPhase>& phases) {
  if (phases.empty()) throw std::invalid_argument("no leader phases");
  double v = phases.front().speed;
  for (const auto& ph : phases)
    if (t >= ph.start_s) v = ph.speed;
  return v;
}

int ScenarioConfig::steps() const {
  return static_cast<int>(std::lround(duration_s / ts));
}

const VehicleParams& ScenarioConfig::vehicle(int i) const {
  if (!per_vehicle.empty()) return per_vehicle[static_cast<std::size_t>(i)];
  return params;
}

void ScenarioConfig::validate() const {
  if (vehicle_count < 2)
    throw std::invalid_argument("need a leader and at least one follower");
  if (!per_vehicle.empty() &&
      static_cast<int>(per_vehicle.size()) != vehicle_count)
    throw std::invalid_argument("per-vehicle parameter list has wrong length");
  for (int i = 0; i < vehicle_count; ++i) vehicle(i).validate();
  if (ts <= 0.0) throw std::invalid_argument("sample period must be positive");
  if (duration_s <= 0.0 ||
      std::abs(steps() * ts - duration_s) > 1e-6 * duration_s)
    throw std::invalid_argument("duration must be a multiple of the sample period");
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (chance_bound <= 0.0 || chance_bound > 1.0)
    throw std::invalid_argument("chance bound must lie in (0, 1]");
  if (initial_speed < 0.0)
    throw std::invalid_argument("initial speed must be nonnegative");
  if (node_budget < 1) throw std::invalid_argument("node budget must be positive");
  if (leader_phases.empty() || leader_phases.front().start_s != 0.0)
    throw std::invalid_argument("leader phases must start at t = 0");
  for (std::size_t i = 0; i < leader_phases.size(); ++i) {
    if (leader_phases[i].speed < 0.0)
      throw std::invalid_argument("leader phase speeds must be nonnegative");
    if (i > 0 && leader_phases[i].start_s <= leader_phases[i - 1].start_s)
      throw std::invalid_argument("leader phases must be strictly ordered");
  }
  comm_period_steps(ts, channel.comm_period_s);
  if (channel.success_prob < 0.0 || channel.success_prob > 1.0)
    throw std::invalid_argument("success probability must lie in [0, 1]");
}

SimResult run(const ScenarioConfig& cfg) {
  cfg.validate();
  const int m = cfg.vehicle_count;
  const int n_steps = cfg.steps();
  const bool send_gp = cfg.broadcast_gp && cfg.policy != Policy::kDhmpc;

  std::vector<KinematicState> state(m);
  state[0] = {0.0, cfg.initial_speed, 0.0};
  for (int i = 1; i < m; ++i) {
    const auto& par = cfg.vehicle(i);
    state[i].pos = state[i - 1].pos - par.length_m -
                   desired_gap(cfg.initial_speed, par);
    state[i].speed = cfg.initial_speed;
  }

  LeaderController leader(cfg.vehicle(0), cfg.ts, cfg.horizon,
                          cfg.leader_speed_weight, cfg.leader_accel_weight);
  std::vector<VehicleController> followers;
  followers.reserve(static_cast<std::size_t>(m - 1));
  for (int i = 1; i < m; ++i) {
    ControllerConfig cc;
    cc.policy = cfg.policy;
    cc.horizon = cfg.horizon;
    cc.chance_bound = cfg.chance_bound;
    cc.weights = cfg.weights;
    cc.limits = cfg.limits;
    cc.refit_local_gp = cfg.refit_local_gp;
    cc.miqp.node_budget = cfg.node_budget;
    followers.emplace_back(cfg.vehicle(i), cfg.ts, cc);
  }

  SimResult out;
  out.trace.reserve(static_cast<std::size_t>(n_steps) * m);
  bool halted = false;

  for (int k = 0; k < n_steps && !halted; ++k) {
    const double t = k * cfg.ts;

    // Sense.
    leader.observe_self(t, state[0].speed);
    for (int i = 1; i < m; ++i) {
      followers[i - 1].observe_self(t, state[i].speed);
      followers[i - 1].observe_predecessor(t, state[i - 1].speed);
    }

    // Broadcast and deliver.
    if (is_broadcast_step(static_cast<std::uint32_t>(k), cfg.ts,
                          cfg.channel.comm_period_s)) {
      for (int i = 0; i + 1 < m; ++i) {
        Packet pkt;
        pkt.sender = static_cast<std::uint16_t>(i);
        pkt.step = static_cast<std::uint32_t>(k);
        const auto& prof = i == 0 ? leader.last_predicted_accel()
                                  : followers[i - 1].last_predicted_accel();
        if (!prof.empty()) pkt.profile = prof;
        if (send_gp) {
          const auto payload =
              i == 0 ? leader.own_payload() : followers[i - 1].own_payload();
          if (payload) pkt.gp = *payload;
        }
        if (!pkt.profile && !pkt.gp) continue;
        if (!deliver(cfg.channel, pkt.step, i + 1)) continue;
        followers[i].receive(decode(encode(pkt)));
      }
    }

    // Plan.
    std::vector<PlanResult> plans(m);
    {
      // The current setpoint is held over the horizon: reference steps are
      // sudden, not anticipated.
      const std::vector<double> v_ref(
          cfg.horizon, leader_reference(t, cfg.leader_phases));
      plans[0] = leader.plan(state[0], v_ref);
    }
    for (int i = 1; i < m; ++i) {
      const ErrorState x0 = error_state(state[i], state[i - 1],
                                        cfg.vehicle(i).length_m, cfg.vehicle(i));
      plans[i] = followers[i - 1].plan(x0, state[i].speed, k);
    }

    // Record, then advance the plants synchronously.
    for (int i = 0; i < m; ++i) {
      TraceRecord rec;
      rec.step = k;
      rec.time_s = t;
      rec.vehicle = i;
      rec.pos_m = state[i].pos;
      rec.speed = state[i].speed;
      rec.accel = state[i].accel;
      rec.input = plans[i].input;
      if (i == 0) {
        rec.gap_m = kNan;
        rec.gap_err_m = kNan;
        rec.speed_err = kNan;
      } else {
        const auto& par = cfg.vehicle(i);
        rec.gap_m = gap_between(state[i], state[i - 1], par.length_m);
        rec.gap_err_m = rec.gap_m - desired_gap(state[i].speed, par);
        rec.speed_err = state[i - 1].speed - state[i].speed;
        if (rec.gap_m <= 0.0 && cfg.halt_on_collision) halted = true;
      }
      rec.source = plans[i].source;
      rec.emergency = plans[i].emergency;
      rec.failsafe = plans[i].failsafe;
      rec.status = plans[i].status;
      rec.objective = plans[i].objective;
      rec.nodes = plans[i].nodes;
      rec.solver_warnings = plans[i].solver_warnings;
      rec.solve_ms = plans[i].solve_ms;
      out.trace.push_back(rec);
    }
    for (int i = 0; i < m; ++i)
      state[i] = step_plant(state[i], plans[i].input, cfg.vehicle(i), cfg.ts);
  }

  out.metrics = compute_metrics(out.trace, cfg);
  return out;
}

Metrics compute_metrics(const std::vector<TraceRecord>& trace,
                        const ScenarioConfig& cfg) {
  if (trace.empty()) throw std::invalid_argument("empty trace");
  const int m = cfg.vehicle_count;
  Metrics out;
  out.min_gap_m = std::numeric_limits<double>::infinity();
  out.rms_gap_err.assign(static_cast<std::size_t>(m), 0.0);

  std::vector<long> err_samples(static_cast<std::size_t>(m), 0);
  std::vector<bool> was_emergency(static_cast<std::size_t>(m), false);
  const long last_step = trace.back().step;

  for (const auto& rec : trace) {
    const auto vi = static_cast<std::size_t>(rec.vehicle);
    if (rec.vehicle > 0) {
      out.min_gap_m = std::min(out.min_gap_m, rec.gap_m);
      if (rec.gap_m <= 0.0 && !out.collision) {
        out.collision = true;
        out.collision_time_s = rec.time_s;
        out.collision_vehicle = rec.vehicle;
      }
      out.rms_gap_err[vi] += rec.gap_err_m * rec.gap_err_m;
      ++err_samples[vi];
      if (rec.emergency) {
        out.emergency_duration_s += cfg.ts;
        if (!was_emergency[vi]) ++out.emergency_count;
      }
      was_emergency[vi] = rec.emergency;
    }
    if (rec.status == MiqpStatus::kNodeBudget) ++out.budget_warnings;
    if (rec.failsafe) ++out.failsafe_count;
    out.solver_warnings += rec.solver_warnings;
    out.total_nodes += rec.nodes;
    out.total_solve_ms += rec.solve_ms;
  }
  for (int i = 1; i < m; ++i) {
    const auto vi = static_cast<std::size_t>(i);
    if (err_samples[vi] > 0)
      out.rms_gap_err[vi] =
          std::sqrt(out.rms_gap_err[vi] / static_cast<double>(err_samples[vi]));
  }

  // Per-phase shape statistics against the realized leader speed.
  const std::size_t phases = cfg.leader_phases.size();
  out.phase_max_abs_gap_err.assign(phases, 0.0);
  out.phase_end_abs_gap_err.assign(phases, 0.0);
  out.settling_time_s.assign(phases, -1.0);

  std::vector<double> leader_speed(static_cast<std::size_t>(last_step) + 1, 0.0);
  for (const auto& rec : trace)
    if (rec.vehicle == 0)
      leader_speed[static_cast<std::size_t>(rec.step)] = rec.speed;

  const auto phase_of = [&](double t) {
    std::size_t p = 0;
    for (std::size_t i = 0; i < phases; ++i)
      if (t >= cfg.leader_phases[i].start_s) p = i;
    return p;
  };
  std::vector<double> worst_speed_err(static_cast<std::size_t>(last_step) + 1,
                                      0.0);
  for (const auto& rec : trace) {
    if (rec.vehicle == 0) continue;
    const std::size_t p = phase_of(rec.time_s);
    out.phase_max_abs_gap_err[p] =
        std::max(out.phase_max_abs_gap_err[p], std::abs(rec.gap_err_m));
    auto& worst = worst_speed_err[static_cast<std::size_t>(rec.step)];
    worst = std::max(worst, std::abs(rec.speed -
                                     leader_speed[static_cast<std::size_t>(
                                         rec.step)]));
    const bool phase_last =
        rec.step == last_step ||
        (p + 1 < phases &&
         rec.time_s + cfg.ts >= cfg.leader_phases[p + 1].start_s - 1e-9);
    if (phase_last)
      out.phase_end_abs_gap_err[p] =
          std::max(out.phase_end_abs_gap_err[p], std::abs(rec.gap_err_m));
  }

  for (std::size_t p = 0; p < phases; ++p) {
    const long from =
        std::lround(cfg.leader_phases[p].start_s / cfg.ts);
    const long to =
        p + 1 < phases
            ? std::min<long>(
                  std::lround(cfg.leader_phases[p + 1].start_s / cfg.ts) - 1,
                  last_step)
            : last_step;
    if (from > last_step) break;
    long settled_from = to + 1;
    for (long k = to; k >= from; --k) {
      if (worst_speed_err[static_cast<std::size_t>(k)] >= kSettleTol) break;
      settled_from = k;
    }
    if (settled_from <= to)
      out.settling_time_s[p] =
          settled_from * cfg.ts - cfg.leader_phases[p].start_s;
  }
  return out;
}

void write_trace_csv(const std::vector<TraceRecord>& trace, std::ostream& os) {
  os << "step,time_s,vehicle,pos_m,speed_mps,accel_mps2,input_mps2,"
        "gap_m,gap_err_m,speed_err_mps,source,emergency,failsafe\n";
  for (const auto& r : trace) {
    os << r.step << ',';
    put(os, r.time_s);
    os << ',' << r.vehicle << ',';
    put(os, r.pos_m);
    os << ',';
    put(os, r.speed);
    os << ',';
    put(os, r.accel);
    os << ',';
    put(os, r.input);
    os << ',';
    put(os, r.gap_m);
    os << ',';
    put(os, r.gap_err_m);
    os << ',';
    put(os, r.speed_err);
    os << ',' << source_name(r.source) << ',' << (r.emergency ? 1 : 0) << ','
       << (r.failsafe ? 1 : 0) << '\n';
  }
}

void write_diagnostics_csv(const std::vector<TraceRecord>& trace,
                           std::ostream& os) {
  os << "step,time_s,vehicle,status,objective,nodes,solver_warnings,solve_ms\n";
  for (const auto& r : trace) {
    os << r.step << ',';
    put(os, r.time_s);
    os << ',' << r.vehicle << ',' << status_name(r.status) << ',';
    put(os, r.objective);
    os << ',' << r.nodes << ',' << r.solver_warnings << ',';
    put(os, r.solve_ms);
    os << '\n';
  }
}

void write_metrics(const Metrics& m, std::ostream& os) {
  const auto line = [&](const char* key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s=%.10g\n", key, v);
    os << buf;
  };
  const auto list = [&](const char* key, const std::vector<double>& v) {
    os << key << '=';
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) os << ',';
      put(os, v[i]);
    }
    os << '\n';
  };
  os << "collision=" << (m.collision ? 1 : 0) << '\n';
  line("collision_time_s", m.collision_time_s);
  os << "collision_vehicle=" << m.collision_vehicle << '\n';
  line("min_gap_m", m.min_gap_m);
  os << "emergency_count=" << m.emergency_count << '\n';
  line("emergency_duration_s", m.emergency_duration_s);
  list("rms_gap_err_m", m.rms_gap_err);
  list("phase_max_abs_gap_err_m", m.phase_max_abs_gap_err);
  list("phase_end_abs_gap_err_m", m.phase_end_abs_gap_err);
  list("settling_time_s", m.settling_time_s);
  os << "budget_warnings=" << m.budget_warnings << '\n';
  os << "failsafe_count=" << m.failsafe_count << '\n';
  os << "solver_warnings=" << m.solver_warnings << '\n';
  os << "total_nodes=" << m.total_nodes << '\n';
  line("total_solve_ms", m.total_solve_ms);
}

}  // namespace cacc
