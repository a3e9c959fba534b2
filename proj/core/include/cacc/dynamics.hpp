#pragma once

#include <Eigen/Core>

namespace cacc {

// Longitudinal parameters shared by every vehicle in the platoon.
struct VehicleParams {
  double length_m = 5.0;
  double standstill_gap_m = 2.0;    // gap kept at zero speed
  double time_gap_s = 1.0;          // headway constant of the spacing policy
  double driveline_rate = 10.0;     // first-order lag pole [1/s]
  double accel_min = -4.0;          // [m/s^2]
  double accel_max = 3.0;
  double input_min = -4.0;          // commanded accel bounds [m/s^2]
  double input_max = 3.0;
  double speed_max = 30.0;          // road speed cap [m/s]
  double brake_speed_floor = 1.0;   // speed above which hard braking may engage [m/s]
  double brake_gap_slack = 1.0;     // gap error below -slack counts as critical [m]

  // Throws std::invalid_argument when bounds are inconsistent.
  void validate() const;
};

struct KinematicState {
  double pos = 0.0;    // rear bumper position [m]
  double speed = 0.0;  // [m/s]
  double accel = 0.0;  // [m/s^2]
};

// Spacing error coordinates of one follower relative to its predecessor.
struct ErrorState {
  double gap_err = 0.0;    // actual gap minus desired gap [m]
  double speed_err = 0.0;  // predecessor speed minus own speed [m/s]
  double accel = 0.0;      // own acceleration [m/s^2]
};

// Zero-order-hold discretization of the error dynamics. The disturbance
// column takes the predecessor acceleration, the noise column the speed
// forecast uncertainty.
struct DiscreteSystem {
  Eigen::Matrix3d a;
  Eigen::Vector3d b;
  Eigen::Vector3d d;
  Eigen::Vector3d e;
  double ts = 0.0;
};

// Constant time-headway spacing policy.
double desired_gap(double speed, const VehicleParams& p);

// Bumper-to-bumper gap from rear bumper positions. Negative means overlap.
double gap_between(const KinematicState& ego, const KinematicState& pred,
                   double ego_length);

// Error coordinates of ego against its predecessor. A non-positive gap is a
// collision; the caller is expected to check gap_between separately.
ErrorState error_state(const KinematicState& ego, const KinematicState& pred,
                       double ego_length, const VehicleParams& p);

// Forward-Euler discretization with sample time ts. Requires ts >= 0 and
// ts * driveline_rate <= 1 so the accel recursion stays monotone.
DiscreteSystem discrete_system(const VehicleParams& p, double ts);

// One plant step under commanded accel u. Speed is clamped at zero (no
// reversing); acceleration saturates at the physical bounds.
KinematicState step_plant(const KinematicState& s, double u,
                          const VehicleParams& p, double ts);

}  // namespace cacc
