#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cacc/dynamics.hpp"
#include "cacc/gp.hpp"

namespace cacc {

enum class VarRole {
  kGapErr,
  kSpeedErr,
  kAccel,
  kInput,
  kSwitchGap,    // gap below the critical threshold
  kSwitchSpeed,  // speed above the release floor
  kSwitchBrake,  // emergency braking engaged (conjunction of the two)
  kSelect,       // disturbance level selector
};

struct VarInfo {
  VarRole role = VarRole::kGapErr;
  int step = 0;
  int level = 0;  // only meaningful for kSelect
};

enum class RowKind {
  kDynamics,
  kStatePin,
  kSwitchPin,
  kSelectSum,
  kSwitchGapOn,
  kSwitchGapOff,
  kSwitchSpeedOn,
  kSwitchSpeedOff,
  kBrakeConj,
  kBrakeLeGap,
  kBrakeLeSpeed,
  kInputCeiling,
  kComfortUp,
  kComfortDown,
  kInputHi,
  kInputLo,
  kAccelHi,
  kAccelLo,
  kSpeedHi,
  kSpeedLo,
  kGapFloor,
  kEnvelopeHi,
  kEnvelopeLo,
  kChance,
  kBinaryHi,
  kBinaryLo,
};

struct RowInfo {
  RowKind kind = RowKind::kDynamics;
  int step = 0;
  int level = 0;
};

enum class PlanSource { kCommunicated, kGp, kAccFallback };

// Predicted predecessor acceleration over the horizon, one value per
// transition, plus the per-transition speed disturbance levels when the
// prediction is uncertain. Empty noise means a deterministic plan.
struct PredecessorPlan {
  PlanSource source = PlanSource::kCommunicated;
  std::vector<double> accel;
  std::vector<DisturbanceLevels> noise;
};

struct MldWeights {
  Eigen::Vector3d state{1.0, 1.0, 0.1};  // stage cost on the error state
  double input = 0.0;
  double prob = 10.0;  // weight on the scenario log-probability
  double reg = 1e-5;   // strict-convexity regularization on inputs/binaries
};

struct MldLimits {
  double gap_err_max = 200.0;  // envelope used for the switching bounds
  double eps = 1e-6;           // strict-inequality separation margin
  double gap_margin = 0.1;     // hard floor on the bumper gap [m]
};

struct BigMBounds {
  double gap_hi = 0.0;    // bounds on gap_err + brake_gap_slack
  double gap_lo = 0.0;
  double speed_hi = 0.0;  // bounds on brake_speed_floor - speed
  double speed_lo = 0.0;
};

struct MldInputs {
  ErrorState x0;
  double speed0 = 0.0;  // own speed at the first step
  double u_prev = 0.0;  // input applied over the previous interval
  VehicleParams params;
  DiscreteSystem sys;
  PredecessorPlan plan;
  MldWeights weights;
  MldLimits limits;
  int horizon = 7;
  double chance_bound = 1e-14;  // minimum admissible scenario probability

  // Omits the hard speed floor rows. Braking hard near standstill can make
  // the floor unreachable within the input ramp; the plant clamps speed at
  // zero, so a retry without the floor still yields a physical plan.
  bool drop_speed_floor = false;
};

// Mixed-binary quadratic program over
//   [x(0..N) | u(0..N-1) | switches(0..N-1) | selectors(0..N-1)].
// x(0) and the step-0 switches are pinned by equality rows and their
// binaries carry fixed values; solvers substitute those before relaxing.
struct MldProgram {
  int horizon = 0;
  int levels = 1;
  int n_var = 0;

  Eigen::MatrixXd hess;
  Eigen::VectorXd lin;
  double constant = 0.0;

  Eigen::MatrixXd eq_a;
  Eigen::VectorXd eq_b;
  Eigen::MatrixXd in_a;
  Eigen::VectorXd in_b;

  std::vector<VarInfo> vars;
  std::vector<RowInfo> eq_rows;
  std::vector<RowInfo> in_rows;

  struct BinaryVar {
    int col = 0;
    VarRole role = VarRole::kSwitchGap;
    int step = 0;
    int level = 0;
    int fixed = -1;  // -1 free, otherwise the pinned value
  };
  std::vector<BinaryVar> binaries;

  std::vector<std::vector<double>> log_prob;  // [step][level]
  double log_chance_bound = 0.0;

  // Rows whose variable support vanished and were dropped as satisfied
  // constants, and those dropped despite being violated (uncontrollable).
  int skipped_rows = 0;
  int unenforceable_rows = 0;

  int col_state(int k, int i) const { return 3 * k + i; }
  int col_input(int k) const { return 3 * (horizon + 1) + k; }
  int col_switch_gap(int k) const { return 3 * (horizon + 1) + horizon + 3 * k; }
  int col_switch_speed(int k) const { return col_switch_gap(k) + 1; }
  int col_switch_brake(int k) const { return col_switch_gap(k) + 2; }
  int col_select(int k, int j) const {
    return 3 * (horizon + 1) + 4 * horizon + levels * k + j;
  }
};

MldProgram build_mld(const MldInputs& in);

BigMBounds big_m_bounds(const VehicleParams& p, const MldLimits& lim);

struct MldReport {
  bool ok = false;
  double hess_min_eig = 0.0;
  int n_binary = 0;
  int n_free_binary = 0;
  bool probabilities_normalized = false;
  bool binaries_boxed = false;
  bool safe_assignment_feasible = false;
  std::vector<std::string> notes;
};

// Structural self-checks on a built program: Hessian positive
// semidefiniteness, binary boxing, selector probability normalization, and
// feasibility of the all-safe binary assignment.
MldReport validate_mld(const MldProgram& prog);

void dump_mld(const MldProgram& prog, std::ostream& os);

}  // namespace cacc
