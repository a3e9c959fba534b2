#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "cacc/gp.hpp"

using namespace cacc;

namespace {

GpWindow make_window(std::mt19937& rng) {
  std::uniform_real_distribution<double> d01(0.0, 1.0);
  GpWindow w;
  const double t0 = 50.0 * d01(rng);
  const double base = 5.0 + 23.0 * d01(rng);
  const double amp = 2.0 * d01(rng);
  const double omega = 0.5 + 4.0 * d01(rng);
  const double phase = 6.28 * d01(rng);
  for (int j = 0; j < kGpWindow; ++j) {
    w.time_s[j] = t0 + 0.1 * j;
    w.speed[j] = base + amp * std::sin(omega * j + phase) +
                 0.1 * (d01(rng) - 0.5);
  }
  return w;
}

Eigen::MatrixXd kernel(const GpWindow& w, const GpHyperParams& hp) {
  Eigen::MatrixXd k(kGpWindow, kGpWindow);
  for (int i = 0; i < kGpWindow; ++i)
    for (int j = 0; j < kGpWindow; ++j)
      k(i, j) = rbf_kernel(w.time_s[i], w.time_s[j], hp);
  k.diagonal().array() += hp.jitter_rel * hp.signal_var;
  return k;
}

}  // namespace

TEST_CASE("posterior mean interpolates the training window") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const GpWindow w = make_window(rng);
    const GpModel m = fit_gp(w);
    const SpeedForecast f = forecast(m, w.time_s[0], kGpWindow - 1, 0.1, 1e6);
    for (int j = 0; j < kGpWindow; ++j) {
      CAPTURE(trial);
      CAPTURE(j);
      CHECK(std::abs(f.mean[static_cast<std::size_t>(j)] - w.speed[j]) <=
            1e-4);
    }
  }
}

TEST_CASE("posterior matches a dense linear-algebra reference") {
  std::mt19937 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const GpWindow w = make_window(rng);
    const GpModel m = fit_gp(w);

    const Eigen::MatrixXd k = kernel(w, m.hyper);
    Eigen::VectorXd resid(kGpWindow);
    for (int j = 0; j < kGpWindow; ++j) resid[j] = w.speed[j] - m.mean_offset;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
    const Eigen::VectorXd alpha = lu.solve(resid);

    const SpeedForecast f = forecast(m, w.time_s[0] - 0.15, 8, 0.1, 1e6);
    for (std::size_t q = 0; q < f.time_s.size(); ++q) {
      Eigen::VectorXd ks(kGpWindow);
      for (int j = 0; j < kGpWindow; ++j)
        ks[j] = rbf_kernel(f.time_s[q], w.time_s[j], m.hyper);
      const double mean = m.mean_offset + ks.dot(alpha);
      const double var =
          m.hyper.signal_var - ks.dot(lu.solve(ks));
      CAPTURE(trial);
      CAPTURE(q);
      CHECK(f.mean[q] == doctest::Approx(mean).epsilon(1e-9));
      CHECK(f.stdev[q] ==
            doctest::Approx(std::sqrt(std::max(var, 0.0))).epsilon(1e-6));
    }
  }
}

TEST_CASE("likelihood gradient agrees with central finite differences") {
  std::mt19937 rng(17);
  // Same box the fitter searches; far outside it the kernel is so
  // ill-conditioned that the finite difference itself is untrustworthy.
  std::uniform_real_distribution<double> dsv(std::log(0.01), std::log(9.0));
  std::uniform_real_distribution<double> dls(std::log(0.05), std::log(0.4));
  const double h = 1e-5;

  for (int trial = 0; trial < 50; ++trial) {
    const GpWindow w = make_window(rng);
    GpHyperParams hp;
    hp.signal_var = std::exp(dsv(rng));
    hp.length_scale = std::exp(dls(rng));

    const LogLikelihood ana = log_marginal_likelihood(w, hp);

    const auto value_at = [&](double dlog_sv, double dlog_ls) {
      GpHyperParams q = hp;
      q.signal_var = std::exp(std::log(hp.signal_var) + dlog_sv);
      q.length_scale = std::exp(std::log(hp.length_scale) + dlog_ls);
      return log_marginal_likelihood(w, q).value;
    };
    const double fd_sv = (value_at(h, 0.0) - value_at(-h, 0.0)) / (2.0 * h);
    const double fd_ls = (value_at(0.0, h) - value_at(0.0, -h)) / (2.0 * h);

    CAPTURE(trial);
    CHECK(std::abs(ana.d_log_signal_var - fd_sv) <=
          1e-5 * std::max(1.0, std::abs(fd_sv)));
    CHECK(std::abs(ana.d_log_length_scale - fd_ls) <=
          1e-5 * std::max(1.0, std::abs(fd_ls)));
  }
}

TEST_CASE("zero-residual window leaves only the complexity terms") {
  GpWindow w;
  for (int j = 0; j < kGpWindow; ++j) {
    w.time_s[j] = 0.1 * j;
    w.speed[j] = 0.0;
  }
  GpHyperParams hp;
  hp.signal_var = 2.5;
  hp.length_scale = 0.3;

  const LogLikelihood ll = log_marginal_likelihood(w, hp);
  const Eigen::MatrixXd k = kernel(w, hp);
  const double expect = -0.5 * std::log(k.determinant()) -
                        0.5 * kGpWindow * std::log(2.0 * M_PI);
  CHECK(ll.value == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("constant window forecasts the constant at every horizon") {
  GpWindow w;
  for (int j = 0; j < kGpWindow; ++j) {
    w.time_s[j] = 3.0 + 0.1 * j;
    w.speed[j] = 20.0;
  }
  const GpModel m = fit_gp(w);
  CHECK(m.mean_offset == doctest::Approx(20.0));

  const SpeedForecast f = forecast(m, w.time_s[4], 7, 0.1, 30.0);
  for (std::size_t q = 0; q < f.mean.size(); ++q) {
    CHECK(f.mean[q] == doctest::Approx(20.0).epsilon(1e-9));
  }
  const SpeedForecast at_train = forecast(m, w.time_s[0], 4, 0.1, 30.0);
  for (double s : at_train.stdev) CHECK(s <= 1e-4);
}

TEST_CASE("linear ramp extrapolates within the contract bound") {
  GpWindow w;
  for (int j = 0; j < kGpWindow; ++j) {
    w.time_s[j] = 0.1 * j;
    w.speed[j] = 20.0 - 0.4 * j;
  }
  const GpModel m = fit_gp(w);
  const SpeedForecast f = forecast(m, w.time_s[4], 1, 0.1, 30.0);
  const double linear = 20.0 - 0.4 * 5;
  CHECK(std::abs(f.mean[1] - linear) <= 0.2);
}

TEST_CASE("forecasts revert to the window mean far beyond the data") {
  std::mt19937 rng(19);
  const GpWindow w = make_window(rng);
  const GpModel m = fit_gp(w);

  const SpeedForecast f = forecast(m, w.time_s[4] + 1000.0, 1, 0.1, 1e6);
  CHECK(f.mean[0] == doctest::Approx(m.mean_offset).epsilon(1e-9));
  CHECK(f.stdev[0] ==
        doctest::Approx(std::sqrt(m.hyper.signal_var)).epsilon(1e-9));
}

TEST_CASE("posterior uncertainty grows away from the window") {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const GpWindow w = make_window(rng);
    const GpModel m = fit_gp(w);
    const SpeedForecast at_train = forecast(m, w.time_s[2], 0, 0.1, 1e6);
    const SpeedForecast far = forecast(m, w.time_s[4] + 5.0, 0, 0.1, 1e6);
    CHECK(at_train.stdev[0] <= far.stdev[0] + 1e-12);
  }
}

TEST_CASE("fitted length scale stays inside the identifiable box") {
  std::mt19937 rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const GpWindow w = make_window(rng);
    const GpModel m = fit_gp(w);
    const double span = w.time_s[kGpWindow - 1] - w.time_s[0];
    CHECK(m.hyper.length_scale <= span * (1.0 + 1e-12));
    CHECK(m.hyper.length_scale >= 0.125 * span * (1.0 - 1e-12));
  }
}

TEST_CASE("fits are deterministic") {
  std::mt19937 rng(31);
  const GpWindow w = make_window(rng);
  const GpModel a = fit_gp(w);
  const GpModel b = fit_gp(w);
  CHECK(a.hyper.signal_var == b.hyper.signal_var);
  CHECK(a.hyper.length_scale == b.hyper.length_scale);
  CHECK(a.mean_offset == b.mean_offset);
}

TEST_CASE("fit rejects a non-increasing time grid") {
  GpWindow w;
  for (int j = 0; j < kGpWindow; ++j) {
    w.time_s[j] = 0.0;
    w.speed[j] = 20.0;
  }
  CHECK_THROWS_AS(fit_gp(w), std::invalid_argument);
}

TEST_CASE("likelihood names the pivot when the kernel loses rank") {
  GpWindow w;
  for (int j = 0; j < kGpWindow; ++j) {
    w.time_s[j] = 1e-9 * j;
    w.speed[j] = 10.0 + j;
  }
  GpHyperParams hp;
  hp.signal_var = 1.0;
  hp.length_scale = 100.0;
  hp.jitter_rel = 0.0;
  CHECK_THROWS_AS(log_marginal_likelihood(w, hp), std::runtime_error);
}

TEST_CASE("payload roundtrip preserves the model") {
  std::mt19937 rng(37);
  const GpWindow w = make_window(rng);
  const GpModel m = fit_gp(w);
  const GpPayload p = payload_from_model(m);
  const GpModel r = model_from_payload(p);

  CHECK(r.hyper.signal_var == m.hyper.signal_var);
  CHECK(r.hyper.length_scale == m.hyper.length_scale);
  CHECK(r.mean_offset == m.mean_offset);
  for (int j = 0; j < kGpWindow; ++j) {
    CHECK(r.window.time_s[j] == m.window.time_s[j]);
    CHECK(r.window.speed[j] == m.window.speed[j]);
  }

  const SpeedForecast fm = forecast(m, w.time_s[4], 7, 0.1, 1e6);
  const SpeedForecast fr = forecast(r, w.time_s[4], 7, 0.1, 1e6);
  for (std::size_t q = 0; q < fm.mean.size(); ++q) {
    CHECK(fr.mean[q] == fm.mean[q]);
    CHECK(fr.stdev[q] == fm.stdev[q]);
  }
}

TEST_CASE("three-point discretization matches mean and variance exactly") {
  for (double stdev : {0.0, 0.01, 0.4, 2.7}) {
    const DisturbanceLevels d = discretize(stdev);

    long long num = 0;
    const long long den = d.prob[0].den * d.prob[1].den * d.prob[2].den;
    for (int j = 0; j < 3; ++j)
      num += d.prob[j].num * (den / d.prob[j].den);
    CHECK(num == den);  // probabilities sum to one in integer arithmetic

    double mean = 0.0, var = 0.0;
    for (int j = 0; j < 3; ++j) {
      mean += d.prob[j].value() * d.level[j];
      var += d.prob[j].value() * d.level[j] * d.level[j];
    }
    CHECK(mean == doctest::Approx(0.0).scale(1.0));
    CHECK(var == doctest::Approx(stdev * stdev));
    CHECK(d.level[1] == 0.0);
    CHECK(d.level[0] == doctest::Approx(-std::sqrt(3.0) * stdev));
    CHECK(d.level[2] == doctest::Approx(std::sqrt(3.0) * stdev));
  }
}

TEST_CASE("implied accelerations difference the forecast and clip") {
  SpeedForecast f;
  for (int j = 0; j <= 4; ++j) {
    f.time_s.push_back(0.1 * j);
    f.mean.push_back(10.0 + 0.2 * j);  // 2 m/s^2 ramp
    f.stdev.push_back(0.0);
  }
  const std::vector<double> a = implied_accel(f, 0.1, -4.0, 3.0);
  REQUIRE(a.size() == 4);
  for (double v : a) CHECK(v == doctest::Approx(2.0));

  f.mean = {10.0, 11.0, 11.0, 11.0, 11.0};  // 10 m/s^2 jump
  const std::vector<double> clipped = implied_accel(f, 0.1, -4.0, 3.0);
  CHECK(clipped[0] == doctest::Approx(3.0));
}
