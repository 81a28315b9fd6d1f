// Copyright 2026 The pemfc-online Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "pemfc/filters.hpp"

namespace {

using pemfc::LtiFilter;
using pemfc::Trace;

// Streams f(k dt) through a filter from rest; returns the max error against
// the closed form g over [0, horizon].
double stream_error(LtiFilter f, const std::function<double(double)>& in,
                    const std::function<double(double)>& closed, double dt, double horizon) {
  double err = 0.0;
  const auto n = static_cast<std::size_t>(std::llround(horizon / dt));
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * dt;
    err = std::max(err, std::abs(f.push(in(t), dt) - closed(t)));
  }
  return err;
}

constexpr double kDt = 1e-3;
const auto kStep = [](double) { return 1.0; };

TEST(FilterStep, HighPassGain) {
  const double l = 10.0;
  const double e = stream_error(LtiFilter::high_pass_gain(l), kStep, [l](double t) { return l * std::exp(-l * t); }, kDt, 2.0);
  EXPECT_LT(e, 1e-3 * l);
}

TEST(FilterStep, LowPass) {
  const double l = 80.0;
  const double e = stream_error(LtiFilter::low_pass(l), kStep, [l](double t) { return 1.0 - std::exp(-l * t); }, kDt, 1.0);
  EXPECT_LT(e, 1e-3);
}

TEST(FilterStep, Integrator) {
  const double l = 5.0;
  const double e = stream_error(LtiFilter::integrator(l), kStep, [l](double t) { return (1.0 - std::exp(-l * t)) / l; }, kDt, 3.0);
  EXPECT_LT(e, 1e-3 / l);
}

TEST(FilterStep, LowPassCascade) {
  const double l = 20.0;
  const auto f = LtiFilter::cascade(LtiFilter::low_pass(l), LtiFilter::low_pass(l));
  const double e = stream_error(f, kStep, [l](double t) { return 1.0 - std::exp(-l * t) * (1.0 + l * t); }, kDt, 2.0);
  EXPECT_LT(e, 1e-3);
  EXPECT_EQ(f.order(), 2);
}

TEST(FilterStep, HighPassIntoLowPass) {
  // l p / (p + l) * l / (p + l): step response l^2 t e^{-l t}
  const double l = 10.0;
  const auto f = LtiFilter::cascade(LtiFilter::high_pass_gain(l), LtiFilter::low_pass(l));
  const double e = stream_error(f, kStep, [l](double t) { return l * l * t * std::exp(-l * t); }, kDt, 2.0);
  EXPECT_LT(e, 1e-3 * l / std::exp(1.0));
}

TEST(FilterSine, LowPass) {
  const double l = 10.0, w = 7.0;
  const double c = l / (l * l + w * w);
  const double e = stream_error(
      LtiFilter::low_pass(l), [w](double t) { return std::sin(w * t); },
      [=](double t) { return c * (l * std::sin(w * t) - w * std::cos(w * t) + w * std::exp(-l * t)); }, kDt, 3.0);
  EXPECT_LT(e, 1e-3 * l / std::hypot(l, w));
}

TEST(FilterSine, HighPassGain) {
  const double l = 10.0, w = 7.0;
  const double c = l / (l * l + w * w);
  const double e = stream_error(
      LtiFilter::high_pass_gain(l), [w](double t) { return std::sin(w * t); },
      [=](double t) { return c * (w * w * std::sin(w * t) + l * w * std::cos(w * t) - l * w * std::exp(-l * t)); }, kDt,
      3.0);
  EXPECT_LT(e, 1e-3 * l * w / std::hypot(l, w));
}

TEST(FilterSine, DirtyDerivative) {
  const double tau = 0.01, w = 2.0 * M_PI;
  const double c = w / (1.0 + tau * tau * w * w);
  const double e = stream_error(
      LtiFilter::dirty_derivative(tau), [w](double t) { return std::sin(w * t); },
      [=](double t) { return c * (std::cos(w * t) + tau * w * std::sin(w * t) - std::exp(-t / tau)); }, kDt, 2.0);
  EXPECT_LT(e, 1e-3 * c);
}

TEST(FilterSine, DirtyDerivativeApproachesDerivative) {
  // after the transient the lag error is O(tau w)
  auto f = LtiFilter::dirty_derivative(1e-3);
  const double w = 1.0;
  double err = 0.0;
  for (int k = 0; k <= 5000; ++k) {
    const double t = k * 1e-4;
    const double y = f.push(std::sin(w * t), 1e-4);
    if (t > 0.05) err = std::max(err, std::abs(y - w * std::cos(w * t)));
  }
  EXPECT_LT(err, 2e-3);
}

// Global error of a smooth response at dt and dt/2.
double sine_error(double dt, bool streaming) {
  const double l = 10.0, w = 7.0;
  const double c = l / (l * l + w * w);
  const auto closed = [=](double t) { return c * (l * std::sin(w * t) - w * std::cos(w * t) + w * std::exp(-l * t)); };
  if (streaming) return stream_error(LtiFilter::low_pass(l), [w](double t) { return std::sin(w * t); }, closed, dt, 2.0);
  const auto n = static_cast<std::size_t>(std::llround(2.0 / dt)) + 1;
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = std::sin(w * static_cast<double>(k) * dt);
  const Trace out = pemfc::filter_trace(LtiFilter::low_pass(l), Trace(dt, 0.0, v));
  double err = 0.0;
  for (std::size_t k = 0; k < n; ++k) err = std::max(err, std::abs(out[k] - closed(out.time(k))));
  return err;
}

TEST(FilterOrder, HalvingDtShrinksErrorFourthOrder) {
  for (bool streaming : {false, true}) {
    const double e1 = sine_error(0.02, streaming);
    const double e2 = sine_error(0.01, streaming);
    EXPECT_GE(e1 / e2, 8.0) << (streaming ? "push" : "filter_trace") << " e1=" << e1 << " e2=" << e2;
  }
}

TEST(FilterOrder, ConstantInputRk4) {
  const auto err = [](double dt) {
    auto f = LtiFilter::cascade(LtiFilter::low_pass(15.0), LtiFilter::integrator(3.0));
    double t = 0.0, e = 0.0;
    f.push(1.0, dt);
    while (t < 1.0 - 1e-12) {
      t += dt;
      const double y = f.push(1.0, dt);
      // 15/(p+15) * 1/(p+3) step: (1/3)(1 - (15 e^{-3t} - 3 e^{-15 t})/12)
      const double exact = (1.0 - (15.0 * std::exp(-3.0 * t) - 3.0 * std::exp(-15.0 * t)) / 12.0) / 3.0;
      e = std::max(e, std::abs(y - exact));
    }
    return e;
  };
  EXPECT_GE(err(0.02) / err(0.01), 8.0);
}

TEST(FilterSettle, DcGains) {
  auto lp = LtiFilter::low_pass(7.0);
  lp.settle(3.0);
  EXPECT_NEAR(lp.output(3.0), 3.0, 1e-14);
  auto hp = LtiFilter::high_pass_gain(7.0);
  hp.settle(3.0);
  EXPECT_NEAR(hp.output(3.0), 0.0, 1e-12);
  auto in = LtiFilter::integrator(4.0);
  in.settle(2.0);
  EXPECT_NEAR(in.output(2.0), 0.5, 1e-14);
  auto c = LtiFilter::cascade(LtiFilter::high_pass_gain(5.0), LtiFilter::low_pass(5.0));
  c.settle(1.5);
  for (int k = 0; k < 100; ++k) EXPECT_NEAR(c.push(1.5, 1e-3), 0.0, 1e-12);
}

TEST(FilterErrors, RejectsBadInput) {
  EXPECT_THROW(LtiFilter::low_pass(0.0), pemfc::DomainError);
  EXPECT_THROW(LtiFilter::dirty_derivative(-1.0), pemfc::DomainError);
  auto f = LtiFilter::low_pass(1.0);
  EXPECT_THROW(f.push(std::numeric_limits<double>::quiet_NaN(), 1e-3), pemfc::DomainError);
  const auto two = LtiFilter::cascade(LtiFilter::low_pass(1.0), LtiFilter::low_pass(1.0));
  const auto four = LtiFilter::cascade(two, two);
  EXPECT_THROW(LtiFilter::cascade(four, LtiFilter::low_pass(1.0)), pemfc::DomainError);
}

TEST(FilterTrace, MatchesStreamingOnSmoothInput) {
  std::vector<double> v;
  for (int k = 0; k < 2000; ++k) v.push_back(std::cos(3.0 * k * 1e-3));
  const Trace in(1e-3, 0.0, v);
  auto f = LtiFilter::low_pass(20.0);
  f.settle(v[0]);
  const Trace batch = pemfc::filter_trace(f, in);
  for (std::size_t k = 0; k < v.size(); ++k) EXPECT_NEAR(batch[k], f.push(v[k], 1e-3), 1e-7);  // two fourth-order midpoint rules
}

TEST(FilterExamples, HighPassUnitStepLambdaOne) {
  auto f = LtiFilter::high_pass_gain(1.0);
  double z = 0.0;
  for (int k = 0; k <= 1000; ++k) z = f.push(1.0, kDt);
  EXPECT_NEAR(z, std::exp(-1.0), 1e-9);
  EXPECT_NEAR(z, 0.3679, 1e-4);
}

// Peak |z| over the last full period of a sine response.
double tail_amplitude(LtiFilter f, double w, double horizon) {
  const double period = 2.0 * M_PI / w;
  double amp = 0.0;
  for (double t = 0.0; t <= horizon; t += kDt) {
    const double z = f.push(std::sin(w * t), kDt);
    if (t > horizon - period) amp = std::max(amp, std::abs(z));
  }
  return amp;
}

TEST(FilterExamples, SteadySineAmplitudes) {
  EXPECT_NEAR(tail_amplitude(LtiFilter::high_pass_gain(1.0), 1.0, 40.0), 1.0 / std::sqrt(2.0), 1e-3);
  EXPECT_NEAR(tail_amplitude(LtiFilter::low_pass(3.0), 3.0, 15.0), 1.0 / std::sqrt(2.0), 1e-3);
}

TEST(FilterExamples, LowPassPhaseLagAtCorner) {
  // at w = lambda the output crosses zero 1/8 period after the input
  const double w = 3.0;
  auto f = LtiFilter::low_pass(w);
  double prev = 0.0, t_cross = -1.0;
  for (int k = 0; k <= 20000; ++k) {
    const double t = k * kDt;
    const double z = f.push(std::sin(w * t), kDt);
    if (t > 10.0 * M_PI / w && prev < 0.0 && z >= 0.0 && t_cross < 0.0) t_cross = t - kDt * z / (z - prev);
    prev = z;
  }
  const double period = 2.0 * M_PI / w;
  const double lag = std::fmod(t_cross, period);
  EXPECT_NEAR(lag / period, 0.125, 1e-3);
}

TEST(FilterExamples, DirtyDerivativeOfRamp) {
  const double tau = 0.01;
  auto f = LtiFilter::dirty_derivative(tau);
  double z = 0.0;
  for (int k = 0; k <= 50; ++k) z = f.push(k * kDt, kDt);  // t = 5 tau
  EXPECT_NEAR(z, 1.0 - std::exp(-5.0), 1e-6);
  for (int k = 51; k <= 200; ++k) z = f.push(k * kDt, kDt);
  EXPECT_NEAR(z, 1.0, 1e-6);
}

TEST(FilterExamples, ConstantThroughDirtyDerivativeDecays) {
  auto f = LtiFilter::dirty_derivative(0.01);
  double z = f.push(4.0, kDt);
  EXPECT_NEAR(z, 400.0, 1e-9);  // instantaneous jump from rest
  for (int k = 0; k < 200; ++k) z = f.push(4.0, kDt);
  EXPECT_LT(std::abs(z), 1e-5);
}

TEST(FilterExamples, LowPassDecayRate) {
  // constant input from an off state: log-error slope is -lambda
  const double l = 6.0;
  auto f = LtiFilter::low_pass(l);
  f.settle(5.0);
  std::vector<double> t, le;
  for (int k = 0; k <= 1000; ++k) {
    const double z = f.push(2.0, kDt);
    if (k % 50 == 0) {
      t.push_back(k * kDt);
      le.push_back(std::log(std::abs(z - 2.0)));
    }
  }
  double st = 0, sl = 0, stt = 0, stl = 0;
  const double n = static_cast<double>(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    st += t[i];
    sl += le[i];
    stt += t[i] * t[i];
    stl += t[i] * le[i];
  }
  const double slope = (n * stl - st * sl) / (n * stt - st * st);
  EXPECT_NEAR(-slope, l, 0.05 * l);
}

TEST(FilterExamples, CascadeEqualsSquaredLowPass) {
  // lambda^2/(p+lambda)^2 written directly as a companion realization
  const double l = 12.0;
  auto c = LtiFilter::cascade(LtiFilter::low_pass(l), LtiFilter::low_pass(l));
  double x1 = 0.0, x2 = 0.0, err = 0.0;
  const double h = 1e-5;  // fine Euler reference
  double t = 0.0;
  for (int k = 0; k <= 2000; ++k) {
    const double tk = k * kDt;
    while (t < tk - 1e-12) {
      const double u = std::sin(5.0 * t) + 1.0;
      const double dx1 = x2, dx2 = -l * l * x1 - 2.0 * l * x2 + l * l * u;
      x1 += h * dx1;
      x2 += h * dx2;
      t += h;
    }
    err = std::max(err, std::abs(c.push(std::sin(5.0 * tk) + 1.0, kDt) - x1));
  }
  EXPECT_LT(err, 1e-3);
}

TEST(FilterExamples, FinerGridConverges) {
  // coarse vs 10x finer grid on a smooth input: fourth order means
  // the difference falls by far more than 10 when dt shrinks by 10
  const auto run = [](double dt) {
    auto f = LtiFilter::cascade(LtiFilter::high_pass_gain(20.0), LtiFilter::low_pass(20.0));
    double z = 0.0;
    const auto n = static_cast<int>(std::llround(1.0 / dt));
    for (int k = 0; k <= n; ++k) z = f.push(std::sin(4.0 * k * dt), dt);
    return z;
  };
  const double d1 = std::abs(run(1e-2) - run(1e-3));
  const double d2 = std::abs(run(1e-3) - run(1e-4));
  EXPECT_GT(d1 / d2, 1000.0);
}

}  // namespace
