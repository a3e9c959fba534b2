#include "cacc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cacc {

void VehicleParams::validate() const {
  if (!(length_m > 0.0)) throw std::invalid_argument("vehicle length must be positive");
  if (!(standstill_gap_m > 0.0)) throw std::invalid_argument("standstill gap must be positive");
  if (!(time_gap_s > 0.0)) throw std::invalid_argument("time gap must be positive");
  if (!(driveline_rate > 0.0)) throw std::invalid_argument("driveline rate must be positive");
  if (!(accel_min < 0.0 && accel_max > 0.0))
    throw std::invalid_argument("accel bounds must straddle zero");
  if (!(input_min <= accel_min && input_max >= accel_max) &&
      !(accel_min <= input_min && accel_max >= input_max))
    throw std::invalid_argument("input and accel bounds are inconsistent");
  if (!(accel_min < accel_max)) throw std::invalid_argument("accel_min must be below accel_max");
  if (!(input_min < input_max)) throw std::invalid_argument("input_min must be below input_max");
  if (!(speed_max > 0.0)) throw std::invalid_argument("speed_max must be positive");
  if (!(brake_speed_floor >= 0.0 && brake_speed_floor <= speed_max))
    throw std::invalid_argument("brake_speed_floor outside [0, speed_max]");
  if (!(brake_gap_slack >= 0.0 && brake_gap_slack <= standstill_gap_m))
    throw std::invalid_argument("brake_gap_slack outside [0, standstill gap]");
}

double desired_gap(double speed, const VehicleParams& p) {
  return p.time_gap_s * speed + p.standstill_gap_m;
}

double gap_between(const KinematicState& ego, const KinematicState& pred,
                   double ego_length) {
  return pred.pos - ego.pos - ego_length;
}

ErrorState error_state(const KinematicState& ego, const KinematicState& pred,
                       double ego_length, const VehicleParams& p) {
  ErrorState e;
  e.gap_err = gap_between(ego, pred, ego_length) - desired_gap(ego.speed, p);
  e.speed_err = pred.speed - ego.speed;
  e.accel = ego.accel;
  return e;
}

DiscreteSystem discrete_system(const VehicleParams& p, double ts) {
  if (!(ts >= 0.0)) throw std::invalid_argument("sample time must be non-negative");
  if (ts * p.driveline_rate > 1.0 + 1e-12)
    throw std::invalid_argument("sample time too large for driveline rate");
  DiscreteSystem s;
  const double f = p.driveline_rate;
  s.a << 1.0, ts, -p.time_gap_s * ts,
         0.0, 1.0, -ts,
         0.0, 0.0, 1.0 - ts * f;
  s.b << 0.0, 0.0, ts * f;
  s.d << 0.0, ts, 0.0;
  s.e << 0.0, 1.0, 0.0;
  s.ts = ts;
  return s;
}

KinematicState step_plant(const KinematicState& s, double u,
                          const VehicleParams& p, double ts) {
  KinematicState n;
  n.pos = s.pos + ts * s.speed;
  n.speed = s.speed + ts * s.accel;
  n.accel = s.accel + ts * (-p.driveline_rate * s.accel + p.driveline_rate * u);
  n.accel = std::clamp(n.accel, p.accel_min, p.accel_max);
  if (n.speed <= 0.0) {
    n.speed = 0.0;
    n.accel = std::max(n.accel, 0.0);
  }
  return n;
}

}  // namespace cacc
