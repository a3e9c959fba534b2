#include "cacc/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cacc {

namespace {

using Mat5 = Eigen::Matrix<double, kGpWindow, kGpWindow>;
using Vec5 = Eigen::Matrix<double, kGpWindow, 1>;

constexpr double kLogSignalVarMin = -27.631021115928547;  // log 1e-12
constexpr double kLogSignalVarMax = 13.815510557964274;   // log 1e6
constexpr double kLogLengthMin = -4.605170185988091;      // log 1e-2
constexpr double kLogLengthMax = 4.605170185988092;       // log 1e2

void check_window(const GpWindow& w) {
  for (int i = 1; i < kGpWindow; ++i) {
    if (!(w.time_s[i] > w.time_s[i - 1]))
      throw std::invalid_argument("window times must be strictly increasing");
  }
}

// Unit-variance RBF correlation between the window's own samples.
Mat5 correlation(const GpWindow& w, double length_scale) {
  Mat5 c;
  for (int i = 0; i < kGpWindow; ++i) {
    c(i, i) = 1.0;
    for (int j = 0; j < i; ++j) {
      const double d = w.time_s[i] - w.time_s[j];
      c(i, j) = c(j, i) = std::exp(-d * d / (2.0 * length_scale * length_scale));
    }
  }
  return c;
}

Mat5 kernel_matrix(const GpWindow& w, const GpHyperParams& hp) {
  Mat5 k = hp.signal_var * correlation(w, hp.length_scale);
  k.diagonal().array() += hp.jitter_rel * hp.signal_var;
  return k;
}

// Plain Cholesky; reports which pivot went non-positive.
int cholesky(const Mat5& k, Mat5& lower) {
  lower.setZero();
  for (int j = 0; j < kGpWindow; ++j) {
    double d = k(j, j);
    for (int p = 0; p < j; ++p) d -= lower(j, p) * lower(j, p);
    if (!(d > 0.0)) return j;
    lower(j, j) = std::sqrt(d);
    for (int i = j + 1; i < kGpWindow; ++i) {
      double s = k(i, j);
      for (int p = 0; p < j; ++p) s -= lower(i, p) * lower(j, p);
      lower(i, j) = s / lower(j, j);
    }
  }
  return -1;
}

Mat5 checked_cholesky(const Mat5& k) {
  Mat5 lower;
  const int pivot = cholesky(k, lower);
  if (pivot >= 0)
    throw std::runtime_error("kernel matrix not positive definite at pivot " +
                             std::to_string(pivot));
  return lower;
}

Vec5 window_residuals(const GpWindow& w, double offset) {
  Vec5 r;
  for (int i = 0; i < kGpWindow; ++i) r[i] = w.speed[i] - offset;
  return r;
}

}  // namespace

double rbf_kernel(double t1, double t2, const GpHyperParams& hp) {
  const double d = t1 - t2;
  return hp.signal_var *
         std::exp(-d * d / (2.0 * hp.length_scale * hp.length_scale));
}

LogLikelihood log_marginal_likelihood(const GpWindow& w, const GpHyperParams& hp) {
  check_window(w);
  const Mat5 k = kernel_matrix(w, hp);
  const Mat5 lower = checked_cholesky(k);
  const Vec5 y = window_residuals(w, 0.0);

  const Vec5 alpha = lower.transpose()
                         .template triangularView<Eigen::Upper>()
                         .solve(lower.template triangularView<Eigen::Lower>().solve(y));

  LogLikelihood out;
  out.value = -0.5 * y.dot(alpha) -
              lower.diagonal().array().log().sum() -
              0.5 * kGpWindow * std::log(2.0 * M_PI);

  // d/d(log signal_var): the whole kernel, jitter included, scales linearly.
  out.d_log_signal_var = 0.5 * y.dot(alpha) - 0.5 * kGpWindow;

  // d/d(log length_scale): elementwise K_ij * d_ij^2 / l^2, zero diagonal.
  Mat5 dk;
  for (int i = 0; i < kGpWindow; ++i) {
    dk(i, i) = 0.0;
    for (int j = 0; j < i; ++j) {
      const double d = w.time_s[i] - w.time_s[j];
      const double kij = rbf_kernel(w.time_s[i], w.time_s[j], hp);
      dk(i, j) = dk(j, i) = kij * d * d / (hp.length_scale * hp.length_scale);
    }
  }
  Mat5 kinv = lower.transpose()
                  .template triangularView<Eigen::Upper>()
                  .solve(lower.template triangularView<Eigen::Lower>()
                             .solve(Mat5::Identity()));
  out.d_log_length_scale =
      0.5 * alpha.dot(dk * alpha) - 0.5 * (kinv * dk).trace();
  return out;
}

GpModel fit_gp(const GpWindow& w) {
  check_window(w);

  double offset = 0.0;
  for (double v : w.speed) offset += v;
  offset /= kGpWindow;

  GpWindow residual = w;
  for (auto& v : residual.speed) v -= offset;

  double var0 = 0.0;
  for (double v : residual.speed) var0 += v * v;
  var0 = std::max(var0 / kGpWindow, 1e-10);
  const double span = w.time_s[kGpWindow - 1] - w.time_s[0];

  // Correlations longer than the observed span are not identifiable from the
  // window, so the length scale search is boxed to [span/8, span].
  const double log_len_lo =
      std::max(kLogLengthMin, std::log(0.125 * span));
  const double log_len_hi = std::min(kLogLengthMax, std::log(span));
  const auto clamp_point = [&](Eigen::Vector2d x) {
    x[0] = std::clamp(x[0], kLogSignalVarMin, kLogSignalVarMax);
    x[1] = std::clamp(x[1], log_len_lo, log_len_hi);
    return x;
  };
  const auto eval = [&](const Eigen::Vector2d& x) {
    GpHyperParams hp;
    hp.signal_var = std::exp(x[0]);
    hp.length_scale = std::exp(x[1]);
    return log_marginal_likelihood(residual, hp);
  };

  Eigen::Vector2d best_x(std::log(var0), std::log(span));
  double best_value = -std::numeric_limits<double>::infinity();

  for (double var_mul : {0.1, 1.0, 10.0}) {
    for (double len_mul : {0.25, 0.5, 1.0}) {
      Eigen::Vector2d x = clamp_point(
          Eigen::Vector2d(std::log(var0 * var_mul), std::log(span * len_mul)));
      LogLikelihood cur = eval(x);
      for (int iter = 0; iter < 80; ++iter) {
        const Eigen::Vector2d grad(cur.d_log_signal_var, cur.d_log_length_scale);
        if (grad.lpNorm<Eigen::Infinity>() < 1e-9) break;
        double step = 1.0 / std::max(1.0, grad.lpNorm<Eigen::Infinity>());
        bool moved = false;
        for (int bt = 0; bt < 40; ++bt) {
          const Eigen::Vector2d trial = clamp_point(x + step * grad);
          const LogLikelihood cand = eval(trial);
          const double ascent = grad.dot(trial - x);
          if (cand.value >= cur.value + 1e-4 * ascent && (trial - x).norm() > 0.0) {
            x = trial;
            cur = cand;
            moved = true;
            break;
          }
          step *= 0.5;
        }
        if (!moved) break;
      }
      if (cur.value > best_value) {
        best_value = cur.value;
        best_x = x;
      }
    }
  }

  GpModel m;
  m.window = w;
  m.mean_offset = offset;
  m.hyper.signal_var = std::exp(best_x[0]);
  m.hyper.length_scale = std::exp(best_x[1]);
  m.chol_lower = checked_cholesky(kernel_matrix(w, m.hyper));
  m.alpha = m.chol_lower.transpose()
                .template triangularView<Eigen::Upper>()
                .solve(m.chol_lower.template triangularView<Eigen::Lower>().solve(
                    window_residuals(w, offset)));
  return m;
}

GpModel model_from_payload(const GpPayload& p) {
  GpModel m;
  m.window.time_s = p.train_time_s;
  m.window.speed = p.train_speed;
  m.hyper.signal_var = p.signal_var;
  m.hyper.length_scale = p.length_scale;
  m.mean_offset = p.mean_offset;
  check_window(m.window);
  if (!(p.signal_var > 0.0) || !(p.length_scale > 0.0))
    throw std::invalid_argument("payload hyperparameters must be positive");
  m.chol_lower = checked_cholesky(kernel_matrix(m.window, m.hyper));
  m.alpha = m.chol_lower.transpose()
                .template triangularView<Eigen::Upper>()
                .solve(m.chol_lower.template triangularView<Eigen::Lower>().solve(
                    window_residuals(m.window, m.mean_offset)));
  return m;
}

GpPayload payload_from_model(const GpModel& m) {
  GpPayload p;
  p.train_time_s = m.window.time_s;
  p.train_speed = m.window.speed;
  p.signal_var = m.hyper.signal_var;
  p.length_scale = m.hyper.length_scale;
  p.mean_offset = m.mean_offset;
  return p;
}

SpeedForecast forecast(const GpModel& m, double start_time, int steps,
                       double ts, double speed_cap) {
  if (steps < 0) throw std::invalid_argument("steps must be non-negative");
  SpeedForecast f;
  f.time_s.resize(steps + 1);
  f.mean.resize(steps + 1);
  f.stdev.resize(steps + 1);
  for (int i = 0; i <= steps; ++i) {
    const double t = start_time + i * ts;
    Vec5 ks;
    for (int j = 0; j < kGpWindow; ++j)
      ks[j] = rbf_kernel(m.window.time_s[j], t, m.hyper);
    const Vec5 half = m.chol_lower.template triangularView<Eigen::Lower>().solve(ks);
    const double var = m.hyper.signal_var - half.squaredNorm();
    f.time_s[i] = t;
    f.mean[i] = std::clamp(m.mean_offset + ks.dot(m.alpha), 0.0, speed_cap);
    f.stdev[i] = std::sqrt(std::max(var, 0.0));
  }
  return f;
}

DisturbanceLevels discretize(double stdev) {
  if (!(stdev >= 0.0)) throw std::invalid_argument("stdev must be non-negative");
  DisturbanceLevels d;
  const double spread = std::sqrt(3.0) * stdev;
  d.level = {-spread, 0.0, spread};
  d.prob = {Rational{1, 6}, Rational{2, 3}, Rational{1, 6}};
  return d;
}

std::vector<double> implied_accel(const SpeedForecast& f, double ts,
                                  double accel_min, double accel_max) {
  if (f.mean.size() < 2) return {};
  if (!(ts > 0.0)) throw std::invalid_argument("ts must be positive");
  std::vector<double> a(f.mean.size() - 1);
  for (std::size_t i = 0; i + 1 < f.mean.size(); ++i)
    a[i] = std::clamp((f.mean[i + 1] - f.mean[i]) / ts, accel_min, accel_max);
  return a;
}

}  // namespace cacc
