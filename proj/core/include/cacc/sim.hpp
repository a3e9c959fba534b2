#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "cacc/comms.hpp"
#include "cacc/controller.hpp"
#include "cacc/dynamics.hpp"

namespace cacc {

// Piecewise-constant leader speed reference; `speed` applies from `start_s`
// until the next phase begins.
struct LeaderPhase {
  double start_s = 0.0;
  double speed = 0.0;
};

double leader_reference(double t, const std::vector<LeaderPhase>& phases);

struct ScenarioConfig {
  int vehicle_count = 10;
  VehicleParams params;
  std::vector<VehicleParams> per_vehicle;  // empty: every vehicle uses params
  Policy policy = Policy::kDhmpc;
  int horizon = 7;
  double ts = 0.1;
  ChannelConfig channel;
  std::vector<LeaderPhase> leader_phases{{0.0, 27.0}, {15.0, 0.0}, {30.0, 25.0}};
  double duration_s = 60.0;
  MldWeights weights;
  MldLimits limits;
  double chance_bound = 1e-14;
  double initial_speed = 27.0;
  bool halt_on_collision = false;
  bool broadcast_gp = true;
  bool refit_local_gp = false;
  long node_budget = 20000;
  double leader_speed_weight = 1.0;
  double leader_accel_weight = 0.1;

  int steps() const;
  const VehicleParams& vehicle(int i) const;
  void validate() const;
};

struct TraceRecord {
  long step = 0;
  double time_s = 0.0;
  int vehicle = 0;
  double pos_m = 0.0;
  double speed = 0.0;
  double accel = 0.0;
  double input = 0.0;
  double gap_m = 0.0;      // NaN for the leader
  double gap_err_m = 0.0;  // NaN for the leader
  double speed_err = 0.0;  // NaN for the leader
  PlanSourceUsed source = PlanSourceUsed::kAcc;
  bool emergency = false;
  bool failsafe = false;
  MiqpStatus status = MiqpStatus::kOptimal;
  double objective = 0.0;
  long nodes = 0;
  int solver_warnings = 0;
  double solve_ms = 0.0;
};

struct Metrics {
  bool collision = false;
  double collision_time_s = -1.0;
  int collision_vehicle = -1;
  double min_gap_m = 0.0;
  int emergency_count = 0;          // rising edges across all followers
  double emergency_duration_s = 0.0;
  std::vector<double> rms_gap_err;  // per vehicle, leader entry 0
  // Per leader phase: largest |gap error| inside the phase, the value at the
  // phase's last step, and the settling time of |v_i - v_leader| < 0.1 m/s
  // (-1 when the platoon does not settle before the phase ends).
  std::vector<double> phase_max_abs_gap_err;
  std::vector<double> phase_end_abs_gap_err;
  std::vector<double> settling_time_s;
  int budget_warnings = 0;
  int failsafe_count = 0;
  int solver_warnings = 0;
  long total_nodes = 0;
  double total_solve_ms = 0.0;
};

struct SimResult {
  std::vector<TraceRecord> trace;
  Metrics metrics;
};

SimResult run(const ScenarioConfig& cfg);

Metrics compute_metrics(const std::vector<TraceRecord>& trace,
                        const ScenarioConfig& cfg);

// Deterministic text output: identical trace contents produce identical
// bytes. Timing fields stay out of the trace file and go to diagnostics.
void write_trace_csv(const std::vector<TraceRecord>& trace, std::ostream& os);
void write_diagnostics_csv(const std::vector<TraceRecord>& trace,
                           std::ostream& os);
void write_metrics(const Metrics& m, std::ostream& os);

}  // namespace cacc
