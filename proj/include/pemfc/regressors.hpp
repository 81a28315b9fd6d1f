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

#pragma once

// Measurable regression pairs (Y, phi) for each polarization-curve model.
//
//   M1    Y = HP(y),  phi = (HP(ln u), LP(u' y), -LP(u' ln u), -HP(u^2)/2, HP(u))
//         pairs with W(theta_1..4)
//   M2    Y = ln(E_oc - y),  phi = (1, u),  parameters (ln a, b)
//   M3    Y = -HP(ln(E_oc - y)),  phi = -HP(ln u),  parameter b
//   M4    Y = y,  phi = (1, ln u, u),  parameters (theta6, theta1, theta2)
//   Sine  Z, chi in R^6 for u a sinusoid; pairs with (G(theta_1..4), t3 w^2)
//
// HP = l p/(p+l) and LP = l/(p+l), one l per pipeline.

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "pemfc/errors.hpp"
#include "pemfc/filters.hpp"
#include "pemfc/maps.hpp"
#include "pemfc/models.hpp"
#include "pemfc/trace.hpp"

namespace pemfc {

struct RegressorSample {
  double t = 0.0;
  double Y = 0.0;
  Vec phi;
};

enum class RegressorKind { M1, M2, M3, M4, Sine };

inline std::string to_string(RegressorKind k) {
  switch (k) {
    case RegressorKind::M1: return "m1";
    case RegressorKind::M2: return "m2";
    case RegressorKind::M3: return "m3";
    case RegressorKind::M4: return "m4";
    case RegressorKind::Sine: return "sine";
  }
  return "?";
}

inline int regressor_dimension(RegressorKind k) {
  switch (k) {
    case RegressorKind::M1: return 5;
    case RegressorKind::M2: return 2;
    case RegressorKind::M3: return 1;
    case RegressorKind::M4: return 3;
    case RegressorKind::Sine: return 6;
  }
  return 0;
}

enum class DerivativeSource { Exact, DirtyDerivative };

// Zero: every filter state starts at 0.
// Consistent: filters start at the equilibrium they would have reached had
// every input been held at its first value since t = -inf (derivative-driven
// inputs therefore start from 0). For M1 this removes the decaying term from
// the regression identity.
enum class FilterInit { Zero, Consistent };

struct PipelineConfig {
  RegressorKind kind = RegressorKind::M1;
  double lambda = 80.0;
  double e_oc = 0.0;  // M2 / M3
  DerivativeSource derivative = DerivativeSource::DirtyDerivative;
  double tau = 0.01;  // dirty-derivative time constant
  FilterInit init = FilterInit::Zero;
};

class RegressorPipeline {
 public:
  virtual ~RegressorPipeline() = default;
  virtual int dimension() const = 0;
  // u_dot is only read by M1 with an exact derivative source.
  virtual RegressorSample step(double t, double u, double u_dot, double y, double dt) = 0;
};

namespace detail {

inline bool finite_sample(const RegressorSample& s) { return std::isfinite(s.Y) && s.phi.allFinite(); }

inline RegressorSample checked(RegressorSample s) {
  if (!finite_sample(s)) throw DomainError("regressor: non-finite sample at t=" + std::to_string(s.t));
  return s;
}

inline double checked_log(double v, const char* what) {
  if (!(v > 0.0)) throw DomainError(std::string("logarithm domain: ") + what);
  return std::log(v);
}

}  // namespace detail

class M1Pipeline final : public RegressorPipeline {
 public:
  explicit M1Pipeline(const PipelineConfig& cfg)
      : cfg_(cfg),
        hp_y_(LtiFilter::high_pass_gain(cfg.lambda)),
        hp_lnu_(LtiFilter::high_pass_gain(cfg.lambda)),
        lp_udy_(LtiFilter::low_pass(cfg.lambda)),
        lp_udlnu_(LtiFilter::low_pass(cfg.lambda)),
        hp_u2_(LtiFilter::high_pass_gain(cfg.lambda)),
        hp_u_(LtiFilter::high_pass_gain(cfg.lambda)),
        dd_(LtiFilter::dirty_derivative(cfg.tau)) {}

  int dimension() const override { return 5; }

  RegressorSample step(double t, double u, double u_dot, double y, double dt) override {
    const double lnu = detail::checked_log(u, "current must be positive");
    if (first_) {
      first_ = false;
      if (cfg_.init == FilterInit::Consistent) {
        hp_y_.settle(y);
        hp_lnu_.settle(lnu);
        hp_u2_.settle(u * u);
        hp_u_.settle(u);
        dd_.settle(u);
      }
    }
    double ud = u_dot;
    if (cfg_.derivative == DerivativeSource::DirtyDerivative) ud = dd_.push(u, dt);
    RegressorSample s;
    s.t = t;
    s.Y = hp_y_.push(y, dt);
    s.phi.resize(5);
    s.phi(0) = hp_lnu_.push(lnu, dt);
    s.phi(1) = lp_udy_.push(ud * y, dt);
    s.phi(2) = -lp_udlnu_.push(ud * lnu, dt);
    s.phi(3) = -0.5 * hp_u2_.push(u * u, dt);
    s.phi(4) = hp_u_.push(u, dt);
    return detail::checked(std::move(s));
  }

 private:
  PipelineConfig cfg_;
  LtiFilter hp_y_, hp_lnu_, lp_udy_, lp_udlnu_, hp_u2_, hp_u_, dd_;
  bool first_ = true;
};

// Memoryless.
class M2Pipeline final : public RegressorPipeline {
 public:
  explicit M2Pipeline(double e_oc) : e_oc_(e_oc) {}
  int dimension() const override { return 2; }
  RegressorSample step(double t, double u, double, double y, double) override {
    if (!(e_oc_ - y > 0.0)) throw DomainError("E_oc dominance violated at t=" + std::to_string(t));
    RegressorSample s;
    s.t = t;
    s.Y = std::log(e_oc_ - y);
    s.phi.resize(2);
    s.phi << 1.0, u;
    return detail::checked(std::move(s));
  }

 private:
  double e_oc_;
};

// Dynamic extension  x1' = -l (x1 - l ln(E_oc - y)),  x2' = -l (x2 - l ln u),
// Y = x1 - l ln(E_oc - y),  phi = x2 - l ln u. The states always start at
// x1(0) = l ln(E_oc - y(0)), x2(0) = l ln u(0), i.e. at rest.
class M3Pipeline final : public RegressorPipeline {
 public:
  M3Pipeline(double lambda, double e_oc)
      : e_oc_(e_oc), hp_w_(LtiFilter::high_pass_gain(lambda)), hp_m_(LtiFilter::high_pass_gain(lambda)) {}
  int dimension() const override { return 1; }

  RegressorSample step(double t, double u, double, double y, double dt) override {
    if (!(e_oc_ - y > 0.0)) throw DomainError("E_oc dominance violated at t=" + std::to_string(t));
    const double w = std::log(e_oc_ - y);
    const double m = detail::checked_log(u, "current must be positive");
    if (first_) {
      first_ = false;
      hp_w_.settle(w);
      hp_m_.settle(m);
    }
    RegressorSample s;
    s.t = t;
    // x1 = -(HP state), so Y = -(x + l w) = -HP(w)
    s.Y = -hp_w_.push(w, dt);
    s.phi.resize(1);
    s.phi(0) = -hp_m_.push(m, dt);
    return detail::checked(std::move(s));
  }

 private:
  double e_oc_;
  LtiFilter hp_w_, hp_m_;
  bool first_ = true;
};

// Memoryless.
class M4Pipeline final : public RegressorPipeline {
 public:
  int dimension() const override { return 3; }
  RegressorSample step(double t, double u, double, double y, double) override {
    const double lnu = detail::checked_log(u, "current must be positive");
    RegressorSample s;
    s.t = t;
    s.Y = y;
    s.phi.resize(3);
    s.phi << 1.0, lnu, u;
    return detail::checked(std::move(s));
  }
};

// Derivative-free construction for a sinusoidal current. Uses
//   xi  = (HP(ln u), HP(u), -HP(u), -HP(u ln u) + HP(u), -HP(u^2)/2, LP(u I(y)))
//   chi = LP2(y) xi - LP(y) LP(xi) - e6 LP(u L2(y)) LP(y)
//   Z   = HP(y) LP2(y) - LP(HP(y)) LP(y)
// with I = 1/(p+l), LP2 = l^2/(p+l)^2, L2 = l/(p+l)^2. Exact only when
// u'' = -w^2 u, i.e. a zero-mean sinusoid; ln u then needs u > 0, so offset
// sinusoids satisfy the identity only approximately.
class SinePipeline final : public RegressorPipeline {
 public:
  explicit SinePipeline(const PipelineConfig& cfg) : cfg_(cfg) {
    const double l = cfg.lambda;
    const auto hp = [l] { return LtiFilter::high_pass_gain(l); };
    const auto lp = [l] { return LtiFilter::low_pass(l); };
    hp_lnu_ = hp();
    hp_u_ = hp();
    hp_ulnu_ = hp();
    hp_u2_ = hp();
    f_hp_lnu_ = LtiFilter::cascade(hp(), lp());
    f_hp_u_ = LtiFilter::cascade(hp(), lp());
    f_hp_ulnu_ = LtiFilter::cascade(hp(), lp());
    f_hp_u2_ = LtiFilter::cascade(hp(), lp());
    int_y_ = LtiFilter::integrator(l);
    lp_uiy_ = lp();
    lp2_uiy_ = LtiFilter::cascade(lp(), lp());
    hp_y_ = hp();
    f_hp_y_ = LtiFilter::cascade(hp(), lp());
    lp_y_ = lp();
    lp2_y_ = LtiFilter::cascade(lp(), lp());
    l2_y_ = LtiFilter::cascade(lp(), LtiFilter::integrator(l));
    lp_ul2y_ = lp();
  }

  int dimension() const override { return 6; }

  RegressorSample step(double t, double u, double, double y, double dt) override {
    const double lnu = detail::checked_log(u, "current must be positive");
    if (first_) {
      first_ = false;
      if (cfg_.init == FilterInit::Consistent) settle(u, lnu, y);
    }
    const double iy = int_y_.push(y, dt);
    const double l2y = l2_y_.push(y, dt);
    const double hp_lnu = hp_lnu_.push(lnu, dt);
    const double hp_u = hp_u_.push(u, dt);
    const double hp_ulnu = hp_ulnu_.push(u * lnu, dt);
    const double hp_u2 = hp_u2_.push(u * u, dt);
    const double lp_uiy = lp_uiy_.push(u * iy, dt);

    const double f_hp_lnu = f_hp_lnu_.push(lnu, dt);
    const double f_hp_u = f_hp_u_.push(u, dt);
    const double f_hp_ulnu = f_hp_ulnu_.push(u * lnu, dt);
    const double f_hp_u2 = f_hp_u2_.push(u * u, dt);
    const double lp2_uiy = lp2_uiy_.push(u * iy, dt);

    const double Y = hp_y_.push(y, dt);
    const double fY = f_hp_y_.push(y, dt);
    const double lpy = lp_y_.push(y, dt);
    const double lp2y = lp2_y_.push(y, dt);
    const double lp_ul2y = lp_ul2y_.push(u * l2y, dt);

    Vec xi(6), fxi(6);
    xi << hp_lnu, hp_u, -hp_u, -hp_ulnu + hp_u, -0.5 * hp_u2, lp_uiy;
    fxi << f_hp_lnu, f_hp_u, -f_hp_u, -f_hp_ulnu + f_hp_u, -0.5 * f_hp_u2, lp2_uiy;

    RegressorSample s;
    s.t = t;
    s.phi = lp2y * xi - lpy * fxi;
    s.phi(5) -= lp_ul2y * lpy;
    s.Y = Y * lp2y - fY * lpy;
    return detail::checked(std::move(s));
  }

 private:
  void settle(double u, double lnu, double y) {
    const double l = cfg_.lambda;
    hp_lnu_.settle(lnu);
    hp_u_.settle(u);
    hp_ulnu_.settle(u * lnu);
    hp_u2_.settle(u * u);
    f_hp_lnu_.settle(lnu);
    f_hp_u_.settle(u);
    f_hp_ulnu_.settle(u * lnu);
    f_hp_u2_.settle(u * u);
    int_y_.settle(y);
    lp_uiy_.settle(u * y / l);
    lp2_uiy_.settle(u * y / l);
    hp_y_.settle(y);
    f_hp_y_.settle(y);
    lp_y_.settle(y);
    lp2_y_.settle(y);
    l2_y_.settle(y);
    lp_ul2y_.settle(u * y / l);
  }

  PipelineConfig cfg_;
  LtiFilter hp_lnu_ = LtiFilter::high_pass_gain(1.0), hp_u_ = hp_lnu_, hp_ulnu_ = hp_lnu_,
            hp_u2_ = hp_lnu_, f_hp_lnu_ = hp_lnu_, f_hp_u_ = hp_lnu_, f_hp_ulnu_ = hp_lnu_,
            f_hp_u2_ = hp_lnu_, int_y_ = hp_lnu_, lp_uiy_ = hp_lnu_, lp2_uiy_ = hp_lnu_,
            hp_y_ = hp_lnu_, f_hp_y_ = hp_lnu_, lp_y_ = hp_lnu_, lp2_y_ = hp_lnu_,
            l2_y_ = hp_lnu_, lp_ul2y_ = hp_lnu_;
  bool first_ = true;
};

inline std::unique_ptr<RegressorPipeline> make_pipeline(const PipelineConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw DomainError("pipeline: lambda must be positive");
  switch (cfg.kind) {
    case RegressorKind::M1: return std::make_unique<M1Pipeline>(cfg);
    case RegressorKind::M2: return std::make_unique<M2Pipeline>(cfg.e_oc);
    case RegressorKind::M3: return std::make_unique<M3Pipeline>(cfg.lambda, cfg.e_oc);
    case RegressorKind::M4: return std::make_unique<M4Pipeline>();
    case RegressorKind::Sine: return std::make_unique<SinePipeline>(cfg);
  }
  throw DomainError("unknown regressor kind");
}

// Batch wrapper over traces; u_dot may be empty unless the pipeline reads it.
inline std::vector<RegressorSample> run_pipeline(RegressorPipeline& pipe, const Trace& u,
                                                 const Trace& u_dot, const Trace& y) {
  if (u.size() != y.size()) throw DomainError("run_pipeline: u and y lengths differ");
  if (!u_dot.empty() && u_dot.size() != u.size()) throw DomainError("run_pipeline: u_dot length differs");
  std::vector<RegressorSample> out;
  out.reserve(u.size());
  for (std::size_t k = 0; k < u.size(); ++k)
    out.push_back(pipe.step(u.time(k), u[k], u_dot.empty() ? 0.0 : u_dot[k], y[k], u.dt()));
  return out;
}

inline csv::Table regressor_table(const std::vector<RegressorSample>& samples) {
  csv::Table table;
  table.header = {"t", "Y"};
  const int p = samples.empty() ? 0 : static_cast<int>(samples.front().phi.size());
  for (int i = 1; i <= p; ++i) table.header.push_back("phi_" + std::to_string(i));
  table.rows.reserve(samples.size());
  for (const auto& s : samples) {
    std::vector<double> row{s.t, s.Y};
    for (int i = 0; i < p; ++i) row.push_back(s.phi(i));
    table.rows.push_back(std::move(row));
  }
  return table;
}

// Parameter image each regression is linear in, given the generator values.
inline Vec regression_image_m1(const ThetaFull& th) {
  Vec t(4);
  t << th.theta1, th.theta2, th.theta3, th.theta4;
  return w_map(t);
}
inline Vec regression_image_m2(const ReducedParamsAB& p) {
  Vec v(2);
  v << std::log(p.a), p.b;
  return v;
}
inline Vec regression_image_m3(const ReducedParamsAB& p) { return Vec::Constant(1, p.b); }
inline Vec regression_image_m4(const ThetaM4& p) {
  Vec v(3);
  v << p.theta6, p.theta1, p.theta2;
  return v;
}
inline Vec regression_image_sine(const ThetaFull& th, double omega) {
  Vec t(4);
  t << th.theta1, th.theta2, th.theta3, th.theta4;
  return sine_map(t, th.theta3 * omega * omega);
}

}  // namespace pemfc
