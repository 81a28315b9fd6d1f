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
#include <numbers>

#include "pemfc/diagnostics.hpp"
#include "pemfc/regressors.hpp"
#include "pemfc/signals.hpp"

namespace {

using namespace pemfc;

const ThetaFull kTheta{-2.582, -0.1808, 0.0046, 39.3543, -1.2610};

std::vector<RegressorSample> from_fn(double t_end, double dt, const std::function<Vec(double)>& f) {
  std::vector<RegressorSample> out;
  const auto n = static_cast<std::size_t>(std::llround(t_end / dt));
  for (std::size_t k = 0; k <= n; ++k) {
    RegressorSample s;
    s.t = static_cast<double>(k) * dt;
    s.phi = f(s.t);
    out.push_back(s);
  }
  return out;
}

std::vector<RegressorSample> m1_stream(const SignalShape& shape, double duration) {
  const SignalSpec spec{shape, duration};
  const Trace u = generate_signal(spec, 1e-3);
  const Trace y = synthesize({ModelId::M1, kTheta}, u, 0.0, 1);
  PipelineConfig pc;
  pc.kind = RegressorKind::M1;
  auto pipe = make_pipeline(pc);
  return run_pipeline(*pipe, u, Trace(), y);
}

TEST(ExcitationIe, ConstantUnitVectorFails) {
  const auto s = from_fn(1.0, 1e-3, [](double) { return Vec::Unit(2, 0); });
  const auto r = excitation_ie(s, 1.0);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.min_eigenvalue, 0.0);
  EXPECT_NEAR(r.max_eigenvalue, 1.0, 1e-12);
}

TEST(ExcitationIe, TwoLevelPulseGramClosedForm) {
  const Trace u = generate_signal({PulseTrain{10.0, 20.0, 2.0, true}, 2.0}, 1e-3);
  std::vector<RegressorSample> s;
  for (std::size_t k = 0; k < u.size(); ++k) {
    RegressorSample x;
    x.t = u.time(k);
    x.phi = (Vec(2) << 1.0, u[k]).finished();
    s.push_back(x);
  }
  const auto r = excitation_ie(s, 1.0);
  // half the second at each level: [[1, 15], [15, 250]]
  EXPECT_NEAR(r.gram(0, 0), 1.0, 1e-9);
  EXPECT_NEAR(r.gram(0, 1), 15.0, 1e-2);
  EXPECT_NEAR(r.gram(1, 1), 250.0, 0.2);
  const double lmin = (251.0 - std::sqrt(249.0 * 249.0 + 4.0 * 225.0)) / 2.0;
  EXPECT_NEAR(r.min_eigenvalue, lmin, 2e-3);
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.t_end, 1.0, 1e-12);
}

TEST(ExcitationIe, M1TestTwoFails) {
  FourierSum f;
  const double pi = std::numbers::pi;
  f.offset = 25.0;
  f.terms = {{20.0 / pi, 0.2 * pi}, {20.0 / (3.0 * pi), 0.6 * pi}, {20.0 / (5.0 * pi), pi}};
  const auto r = excitation_ie(m1_stream(f, 20.0), 20.0);
  EXPECT_LT(r.ratio(), 1e-6);
  EXPECT_FALSE(r.pass);
}

TEST(ExcitationIe, GramIsTimeReversalInvariant) {
  auto s = from_fn(3.0, 1e-3, [](double t) {
    return (Vec(3) << 1.0, std::sin(3.0 * t), std::exp(-t) * t).finished();
  });
  const auto fwd = excitation_ie(s, 3.0);
  std::vector<RegressorSample> rev(s.rbegin(), s.rend());
  for (std::size_t k = 0; k < rev.size(); ++k) rev[k].t = s[k].t;
  const auto back = excitation_ie(rev, 3.0);
  EXPECT_TRUE(fwd.gram.isApprox(back.gram, 1e-12));
  EXPECT_TRUE(fwd.gram.isApprox(fwd.gram.transpose()));
}

TEST(ExcitationIe, EmptyStreamRejected) {
  EXPECT_THROW(excitation_ie({}, 1.0), DomainError);
}

TEST(ExcitationPe, ConstantRegressorFails) {
  const auto s = from_fn(3.0, 1e-3, [](double) { return (Vec(2) << 1.0, 12.0).finished(); });
  EXPECT_FALSE(excitation_pe(s, 1.0).pass);
}

TEST(ExcitationPe, PulseM4RegressorPasses) {
  // (1, ln u, u) needs three levels, spread over the polarization range;
  // 10/15/20 A alone sits just under the 1e-6 ratio
  const auto s = from_fn(4.0, 1e-3, [](double t) {
    const double u = std::fmod(t, 0.75) < 0.25 ? 1.0 : (std::fmod(t, 0.75) < 0.5 ? 10.0 : 30.0);
    return (Vec(3) << 1.0, std::log(u), u).finished();
  });
  const auto r = excitation_pe(s, 1.0);
  EXPECT_TRUE(r.pass);
  EXPECT_GT(r.worst_min_eigenvalue, 0.0);
}

TEST(ExcitationPe, ConstantStretchShrinksItsWindow) {
  const auto s = from_fn(6.0, 1e-3, [](double t) {
    const double u = (t > 2.0 && t < 3.5) ? 15.0 : 15.0 + 5.0 * std::sin(2.0 * std::numbers::pi * 2.0 * t);
    return (Vec(2) << 1.0, u).finished();
  });
  const auto r = excitation_pe(s, 1.0);
  EXPECT_FALSE(r.pass);
  double inside = 1e300, outside = 1e300;
  for (std::size_t k = 0; k < r.t_window.size(); ++k) {
    if (r.t_window[k] >= 2.2 && r.t_window[k] <= 2.4) inside = std::min(inside, r.min_eigenvalue[k]);
    if (r.t_window[k] + 1.0 <= 2.0) outside = std::min(outside, r.min_eigenvalue[k]);
  }
  EXPECT_LT(inside, 1e-9 * outside);
}

TEST(ExcitationPe, WindowErrors) {
  const auto s = from_fn(1.0, 1e-3, [](double) { return Vec::Ones(2); });
  EXPECT_THROW(excitation_pe(s, 2.0), DomainError);
  EXPECT_THROW(excitation_pe(s, -1.0), DomainError);
  EXPECT_THROW(excitation_pe({}, 1.0), DomainError);
}

Vec exponentials(double t) {
  Vec v(5);
  v << std::exp(-1.0 * t), std::exp(-0.5 * t), 1.0, std::exp(0.5 * t), std::exp(1.0 * t);
  return v;
}

TEST(Wronskian, ExponentialBasisMatchesVandermonde) {
  // stride 10: at h = 1 ms fourth differences lose ~1% to rounding
  const auto s = from_fn(2.0, 1e-3, exponentials);
  const auto w = wronskian_determinant(s, 1e-3, 10);
  // W = V(a) diag(e^{a t}) with sum a = 0, so det W = det V(a)
  const double a[5] = {-1.0, -0.5, 0.0, 0.5, 1.0};
  double vdm = 1.0;
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) vdm *= a[j] - a[i];
  for (double d : w.det) EXPECT_NEAR(d, vdm, 1e-5 * std::abs(vdm));
}

TEST(Wronskian, DependentSetSeparatedFromIndependent) {
  const auto indep = wronskian_determinant(from_fn(2.0, 1e-3, exponentials), 1e-3);
  const auto dep = wronskian_determinant(from_fn(2.0, 1e-3,
                                                 [](double t) {
                                                   Vec v = exponentials(t);
                                                   v(4) = 2.0 * v(3);
                                                   return v;
                                                 }),
                                         1e-3);
  double floor = 1e300, ceiling = 0.0;
  for (double d : indep.det_normalized) floor = std::min(floor, std::abs(d));
  for (double d : dep.det_normalized) ceiling = std::max(ceiling, std::abs(d));
  EXPECT_GT(floor, 1e4 * ceiling);
}

TEST(Wronskian, ScalingIsQuintic) {
  const auto s = from_fn(2.0, 1e-3, exponentials);
  auto scaled = s;
  for (auto& x : scaled) x.phi *= 3.0;
  const auto w1 = wronskian_determinant(s, 1e-3, 10);
  const auto w3 = wronskian_determinant(scaled, 1e-3, 10);
  for (std::size_t k = 0; k < w1.det.size(); ++k)
    EXPECT_NEAR(w3.det[k], 243.0 * w1.det[k], 1e-5 * std::abs(w3.det[k]));
  EXPECT_NEAR(w3.transient_peak, w1.transient_peak, 1e-12);
}

TEST(Wronskian, M1CosineTransientThenZero) {
  const auto s = m1_stream(SineSignal{25.0, 5.0, 0.1, std::numbers::pi / 2}, 5.0);
  const auto w = wronskian_determinant(s, 1e-3);
  EXPECT_GT(w.transient_peak, 0.0);
  EXPECT_LT(w.max_normalized_after(5.0 / 80.0), 1e-6 * w.transient_peak);
  for (double d : w.det) EXPECT_TRUE(std::isfinite(d));
}

TEST(Wronskian, Errors) {
  const auto s = from_fn(0.005, 1e-3, exponentials);
  EXPECT_THROW(wronskian_determinant(s, 1e-3), DomainError);
  auto bad = from_fn(0.1, 1e-3, exponentials);
  bad[10].t += 3e-4;
  std::vector<double> times;
  std::vector<Vec> phi;
  for (const auto& x : bad) {
    times.push_back(x.t);
    phi.push_back(x.phi);
  }
  EXPECT_THROW(wronskian_determinant(times, phi, 1e-3), DomainError);
  EXPECT_THROW(wronskian_determinant(from_fn(0.1, 1e-3, exponentials), 1e-3, 0), DomainError);
}

}  // namespace
