#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace cacc {

// Number of past speed samples a forecaster trains on.
inline constexpr int kGpWindow = 5;

struct GpHyperParams {
  double signal_var = 1.0;   // sigma_f^2
  double length_scale = 1.0; // [s]
  double jitter_rel = 1e-8;  // diagonal jitter, relative to tr(K)/n
};

// Training window of timestamped speed samples, oldest first.
struct GpWindow {
  std::array<double, kGpWindow> time_s{};
  std::array<double, kGpWindow> speed{};
};

// Everything a receiver needs to rebuild the sender's forecaster.
// Serialized as 13 consecutive doubles.
struct GpPayload {
  std::array<double, kGpWindow> train_time_s{};
  std::array<double, kGpWindow> train_speed{};
  double signal_var = 1.0;
  double length_scale = 1.0;
  double mean_offset = 0.0;
};

// Fitted regressor with cached Cholesky factor of the kernel matrix.
struct GpModel {
  GpWindow window;
  GpHyperParams hyper;
  double mean_offset = 0.0;
  Eigen::Matrix<double, kGpWindow, kGpWindow> chol_lower;
  Eigen::Matrix<double, kGpWindow, 1> alpha;  // (K + jitter)^-1 (y - offset)
};

struct SpeedForecast {
  std::vector<double> time_s;
  std::vector<double> mean;   // clamped to [0, speed_cap]
  std::vector<double> stdev;  // marginal posterior std, >= 0
};

// Exact rational probability, kept so discrete weights sum to one by
// integer arithmetic.
struct Rational {
  long long num = 0;
  long long den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// Three-point discretization of a zero-mean Gaussian speed deviation.
struct DisturbanceLevels {
  std::array<double, 3> level{};    // [m/s]
  std::array<Rational, 3> prob{};
};

struct LogLikelihood {
  double value = 0.0;
  double d_log_signal_var = 0.0;
  double d_log_length_scale = 0.0;
};

double rbf_kernel(double t1, double t2, const GpHyperParams& hp);

// Marginal likelihood of the window under hp, with the analytic gradient in
// log-hyperparameter coordinates. Throws std::runtime_error naming the
// failing pivot when the jittered kernel matrix is not positive definite.
LogLikelihood log_marginal_likelihood(const GpWindow& w, const GpHyperParams& hp);

// Maximum-likelihood fit: multi-start gradient ascent over
// (log signal_var, log length_scale) with the window mean subtracted.
// Throws std::invalid_argument when times are not strictly increasing.
GpModel fit_gp(const GpWindow& w);

// Rebuild the cached factorization from wire data.
GpModel model_from_payload(const GpPayload& p);
GpPayload payload_from_model(const GpModel& m);

// Posterior mean and std at steps+1 equally spaced query times
// start_time + i*ts, i = 0..steps. Mean is clamped to [0, speed_cap].
SpeedForecast forecast(const GpModel& m, double start_time, int steps,
                       double ts, double speed_cap);

// Gauss-Hermite style three-point support {-sqrt(3) s, 0, +sqrt(3) s} with
// weights {1/6, 2/3, 1/6}: matches mean and variance of N(0, s^2) exactly.
DisturbanceLevels discretize(double stdev);

// Forward-difference accelerations implied by a forecast mean sequence,
// clipped to the actuation range. Returns one value per step.
std::vector<double> implied_accel(const SpeedForecast& f, double ts,
                                  double accel_min, double accel_max);

}  // namespace cacc
