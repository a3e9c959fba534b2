#pragma once

#include <optional>
#include <vector>

#include "cacc/comms.hpp"
#include "cacc/dynamics.hpp"
#include "cacc/gp.hpp"
#include "cacc/miqp.hpp"
#include "cacc/mld.hpp"

namespace cacc {

enum class Policy { kDhmpc, kDhsmpc, kDhDhsmpc };

// Plan source actually used on a given step. DHMPC never reports kGp,
// DHSMPC never reports a communicated profile.
enum class PlanSourceUsed { kFreshComm, kShiftedComm, kGp, kAcc };

const char* policy_name(Policy p);
const char* source_name(PlanSourceUsed s);

struct RollingWindow {
  GpWindow data;
  int count = 0;

  void push(double time_s, double speed);
  bool full() const { return count >= kGpWindow; }
};

struct PredecessorStore {
  std::vector<double> profile;
  long profile_step = -1;  // receipt step of the stored profile
  std::optional<GpPayload> gp;
  long gp_step = -1;
  RollingWindow observed;  // ranging-sensor speed samples of the predecessor
};

// Time-shifted reuse of a stale profile: horizon entries still covered by
// the received profile are reused as sent; later entries extend the last two
// received samples linearly, clipped to the acceleration bounds.
std::vector<double> shifted_profile(const std::vector<double>& profile,
                                    long received_step, long now_step,
                                    int horizon, double accel_min,
                                    double accel_max);

// Fit of the rolling speed window, packaged for broadcast. Empty until the
// window has filled.
std::optional<GpPayload> window_payload(const RollingWindow& w);

struct ControllerConfig {
  Policy policy = Policy::kDhmpc;
  int horizon = 7;
  double chance_bound = 1e-14;
  MldWeights weights;
  MldLimits limits;
  bool refit_local_gp = false;  // refit hyperparameters from observed speeds
  MiqpOptions miqp;
};

struct PlanResult {
  double input = 0.0;
  PlanSourceUsed source = PlanSourceUsed::kAcc;
  bool emergency = false;  // brake switch active at the first step
  bool failsafe = false;   // solver failed, minimum input applied
  MiqpStatus status = MiqpStatus::kInfeasible;
  double objective = 0.0;
  long nodes = 0;
  int solver_warnings = 0;
  double solve_ms = 0.0;
  std::vector<double> predicted_accel;  // a(1..N), next step's profile
  std::vector<ErrorState> predicted;    // x(0..N) of the accepted solution
};

class VehicleController {
 public:
  VehicleController(const VehicleParams& params, double ts,
                    const ControllerConfig& cfg);

  // Ranging-sensor sample of the predecessor, taken every step.
  void observe_predecessor(double time_s, double speed);
  // Own-speed sample feeding the broadcast model.
  void observe_self(double time_s, double speed);
  void receive(const Packet& pkt);

  PlanResult plan(const ErrorState& x0, double speed0, long step);

  std::optional<GpPayload> own_payload() const;
  const std::vector<double>& last_predicted_accel() const {
    return last_predicted_accel_;
  }
  const PredecessorStore& store() const { return store_; }
  double u_prev() const { return u_prev_; }

 private:
  PredecessorPlan select_plan(long step, PlanSourceUsed* used);

  VehicleParams params_;
  double ts_;
  ControllerConfig cfg_;
  DiscreteSystem sys_;
  PredecessorStore store_;
  RollingWindow own_window_;
  std::vector<double> last_predicted_accel_;
  std::optional<GpModel> gp_model_;
  long gp_model_step_ = -1;
  double u_prev_ = 0.0;
};

// Reference-tracking speed controller for the platoon head: same input,
// acceleration, comfort, and speed bounds, no switching logic.
class LeaderController {
 public:
  LeaderController(const VehicleParams& params, double ts, int horizon,
                   double speed_weight = 1.0, double accel_weight = 0.1);

  void observe_self(double time_s, double speed);

  // v_ref holds the desired speed at the next `horizon` steps.
  PlanResult plan(const KinematicState& state, const std::vector<double>& v_ref);

  std::optional<GpPayload> own_payload() const;
  const std::vector<double>& last_predicted_accel() const {
    return last_predicted_accel_;
  }
  double u_prev() const { return u_prev_; }

 private:
  VehicleParams params_;
  double ts_;
  int horizon_;
  double w_speed_;
  double w_accel_;
  RollingWindow own_window_;
  std::vector<double> last_predicted_accel_;
  double u_prev_ = 0.0;
};

}  // namespace cacc
