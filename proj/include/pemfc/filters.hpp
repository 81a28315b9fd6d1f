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

// State-space realizations of the first-order LTI blocks used by the
// regressor constructions, stepped with classical fourth-order Runge-Kutta.
//
//   high_pass_gain(l)    l p / (p + l)     x' = -l (x + l v),  z = x + l v
//   low_pass(l)          l / (p + l)       x' = -l x + l v,    z = x
//   dirty_derivative(t)  p / (t p + 1)     x' = (v - x) / t,   z = (v - x) / t
//   integrator(l)        1 / (p + l)       x' = -l x + v,      z = x
//
// None of the realizations differentiates its input. Cascades are realized as
// one joint state-space system.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "pemfc/errors.hpp"
#include "pemfc/trace.hpp"

namespace pemfc {

enum class FilterKind { HighPassGain, LowPass, DirtyDerivative, Integrator, Cascade };

class LtiFilter {
 public:
  static constexpr int kMaxOrder = 4;
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxOrder, kMaxOrder>;
  using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxOrder, 1>;
  using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor, 1, kMaxOrder>;

  static LtiFilter high_pass_gain(double lambda) {
    check_rate(lambda, "lambda");
    return LtiFilter(FilterKind::HighPassGain, lambda, scalar(-lambda), col(-lambda * lambda),
                     row(1.0), lambda);
  }

  static LtiFilter low_pass(double lambda) {
    check_rate(lambda, "lambda");
    return LtiFilter(FilterKind::LowPass, lambda, scalar(-lambda), col(lambda), row(1.0), 0.0);
  }

  static LtiFilter dirty_derivative(double tau) {
    check_rate(tau, "tau");
    return LtiFilter(FilterKind::DirtyDerivative, 1.0 / tau, scalar(-1.0 / tau), col(1.0 / tau),
                     row(-1.0 / tau), 1.0 / tau);
  }

  static LtiFilter integrator(double lambda) {
    check_rate(lambda, "lambda");
    return LtiFilter(FilterKind::Integrator, lambda, scalar(-lambda), col(1.0), row(1.0), 0.0);
  }

  // `second` driven by the output of `first`.
  static LtiFilter cascade(const LtiFilter& first, const LtiFilter& second) {
    const int n1 = first.order();
    const int n2 = second.order();
    if (n1 + n2 > kMaxOrder) throw DomainError("cascade: order exceeds limit");
    Matrix a = Matrix::Zero(n1 + n2, n1 + n2);
    a.topLeftCorner(n1, n1) = first.a_;
    a.bottomLeftCorner(n2, n1) = second.b_ * first.c_;
    a.bottomRightCorner(n2, n2) = second.a_;
    Vector b(n1 + n2);
    b.head(n1) = first.b_;
    b.tail(n2) = second.b_ * first.d_;
    RowVector c(n1 + n2);
    c.head(n1) = second.d_ * first.c_;
    c.tail(n2) = second.c_;
    return LtiFilter(FilterKind::Cascade, first.lambda_, a, b, c, second.d_ * first.d_);
  }

  FilterKind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  int order() const { return static_cast<int>(a_.rows()); }
  const Vector& state() const { return x_; }

  void set_state(const Vector& x) {
    if (x.size() != x_.size()) throw DomainError("filter: state dimension mismatch");
    x_ = x;
    count_ = 0;
  }

  void reset() {
    x_.setZero();
    count_ = 0;
  }

  // Equilibrium for a constant input v (every realization here has invertible A).
  void settle(double v) {
    x_ = -a_.partialPivLu().solve(b_ * v);
    count_ = 0;
  }

  double output(double v) const { return (c_ * x_)(0) + d_ * v; }

  // One RK4 step across [t, t+dt] with the input given at both ends and the
  // midpoint.
  void advance(double v0, double vmid, double v1, double dt) {
    const Vector k1 = a_ * x_ + b_ * v0;
    const Vector k2 = a_ * (x_ + 0.5 * dt * k1) + b_ * vmid;
    const Vector k3 = a_ * (x_ + 0.5 * dt * k2) + b_ * vmid;
    const Vector k4 = a_ * (x_ + dt * k3) + b_ * v1;
    x_ += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

  // Streaming interface: consumes the next sample of a uniform grid and
  // returns the output at that sample. The first call only latches the input.
  // Between samples the input is the causal cubic through the last four
  // samples (lower degree while the history fills up).
  double push(double v, double dt) {
    if (!std::isfinite(v)) throw DomainError("non-finite sample");
    if (count_ > 0) {
      advance(hist_[0], causal_midpoint(v), v, dt);
      if (!x_.allFinite()) throw DomainError("filter: non-finite state");
    }
    hist_[2] = hist_[1];
    hist_[1] = hist_[0];
    hist_[0] = v;
    if (count_ < 3) ++count_;
    return output(v);
  }

 private:
  LtiFilter(FilterKind kind, double lambda, Matrix a, Vector b, RowVector c, double d)
      : kind_(kind), lambda_(lambda), a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), d_(d) {
    x_ = Vector::Zero(a_.rows());
  }

  static void check_rate(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string("filter: ") + name + " must be positive");
  }
  static Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }
  static Vector col(double v) { return Vector::Constant(1, v); }
  static RowVector row(double v) { return RowVector::Constant(1, v); }

  // Midpoint between hist_[0] (previous sample) and v (new sample).
  double causal_midpoint(double v) const {
    switch (count_) {
      case 1:
        return 0.5 * (hist_[0] + v);
      case 2:
        return -0.125 * hist_[1] + 0.75 * hist_[0] + 0.375 * v;
      default:
        return 0.0625 * hist_[2] - 0.3125 * hist_[1] + 0.9375 * hist_[0] + 0.3125 * v;
    }
  }

  FilterKind kind_;
  double lambda_;
  Matrix a_;
  Vector b_;
  RowVector c_;
  double d_;
  Vector x_;
  std::array<double, 3> hist_{};
  int count_ = 0;
};

// Offline filtering of a whole trace from the filter's current state. Uses the
// centred cubic for midpoints (one-sided at the ends), so smooth inputs see
// fourth-order accuracy from the first step.
inline Trace filter_trace(LtiFilter filter, const Trace& in) {
  const auto& v = in.samples();
  const std::size_t n = v.size();
  std::vector<double> out;
  out.reserve(n);
  if (n == 0) return Trace(in.dt(), in.t0(), {});
  out.push_back(filter.output(v[0]));
  for (std::size_t k = 1; k < n; ++k) {
    double mid;
    if (n < 4) {
      mid = 0.5 * (v[k - 1] + v[k]);
    } else if (k == 1) {
      mid = (5.0 * v[0] + 15.0 * v[1] - 5.0 * v[2] + v[3]) / 16.0;
    } else if (k + 1 == n) {
      mid = (v[k - 3] - 5.0 * v[k - 2] + 15.0 * v[k - 1] + 5.0 * v[k]) / 16.0;
    } else {
      mid = (-v[k - 2] + 9.0 * v[k - 1] + 9.0 * v[k] - v[k + 1]) / 16.0;
    }
    filter.advance(v[k - 1], mid, v[k], in.dt());
    out.push_back(filter.output(v[k]));
  }
  return Trace(in.dt(), in.t0(), std::move(out));
}

}  // namespace pemfc
