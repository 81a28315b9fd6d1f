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

// Online estimators for Y = phi^T W(eta).
//
// LSD: least squares on W followed by dynamic regressor extension and mixing
//   W'   = g0 F phi (Y - phi^T W),     W(0) = W0
//   F'   = -g0 F phi phi^T F,          F(0) = I / f0
//   eta' = Gamma Delta T (Ycal - Delta W(eta))
//   Delta = det(I - f0 F),  Ycal = adj(I - f0 F) (W - f0 F W0)
//
// The least-squares pair is integrated in information form,
//   (F^-1)' = g0 phi phi^T,   (F^-1 W)' = g0 phi Y,
// which is the same flow but stays non-stiff when F(0) is huge.
//
// Gradient: eta' = -Gamma psi (psi^T eta - Y) for linear regressions.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pemfc/errors.hpp"
#include "pemfc/linalg.hpp"
#include "pemfc/maps.hpp"
#include "pemfc/models.hpp"
#include "pemfc/regressors.hpp"

namespace pemfc {

inline constexpr double kDivergenceBound = 1e12;

namespace detail {

// Keeps the last entries of the estimate history for divergence reports.
class StateLog {
 public:
  void record(double t, const Vec& v) {
    if (log_.size() == kDepth) log_.pop_front();
    log_.emplace_back(t, v);
  }
  std::string dump() const {
    std::ostringstream os;
    os.precision(17);
    for (const auto& [t, v] : log_) {
      os << t;
      for (int i = 0; i < v.size(); ++i) os << ',' << v(i);
      os << '\n';
    }
    return os.str();
  }

 private:
  static constexpr std::size_t kDepth = 100;
  std::deque<std::pair<double, Vec>> log_;
};

inline bool bounded(const Vec& v) { return v.allFinite() && v.norm() < kDivergenceBound; }

inline double lagrange3(double s, double a, double m, double b) {
  return 2.0 * (s - 0.5) * (s - 1.0) * a - 4.0 * s * (s - 1.0) * m + 2.0 * s * (s - 0.5) * b;
}

}  // namespace detail

struct LsdGains {
  double gamma0 = 1.0;
  double f0 = 1.0;
  Vec gamma;  // diagonal of Gamma, length q
};

class LsdEstimator {
 public:
  LsdEstimator(ParamMap map, LsdGains gains, Vec w0, Vec eta0)
      : map_(std::move(map)), gains_(std::move(gains)), w0_(std::move(w0)), eta_(std::move(eta0)) {
    const int p = map_.p;
    const int q = map_.q;
    if (!(gains_.gamma0 > 0.0) || !(gains_.f0 > 0.0)) throw DomainError("lsd: gamma0 and f0 must be positive");
    if (gains_.gamma.size() != q || (gains_.gamma.array() <= 0.0).any())
      throw DomainError("lsd: Gamma must be a positive diagonal of length q");
    if (w0_.size() != p || eta_.size() != q) throw DomainError("lsd: initial condition dimension mismatch");
    if (map_.mixing.rows() != q || map_.mixing.cols() != p) throw DomainError("lsd: T must be q x p");
    gram_ = Mat::Zero(p, p);
    corr_ = Vec::Zero(p);
    refresh(gram_, corr_, delta_, ycal_);
  }

  int p() const { return map_.p; }
  int q() const { return map_.q; }
  const Vec& eta_hat() const { return eta_; }
  Vec w_hat() const { return information().ldlt().solve(gains_.f0 * w0_ + corr_); }
  Mat F() const { return information().inverse(); }
  Mat information() const { return gains_.f0 * Mat::Identity(map_.p, map_.p) + gram_; }
  double delta() const { return delta_; }
  const Vec& ycal() const { return ycal_; }
  const ParamMap& map() const { return map_; }

  // Feeds the next sample of the regressor stream; the first call latches.
  void update(const RegressorSample& s, double dt) {
    if (s.phi.size() != map_.p) throw DomainError("lsd: regressor dimension mismatch");
    if (!started_) {
      started_ = true;
      prev_ = s;
      log_.record(s.t, eta_);
      return;
    }
    step(prev_, s, dt);
    prev_ = s;
  }

  void step(const RegressorSample& a, const RegressorSample& b, double dt) {
    const double g0 = gains_.gamma0;
    const Mat s0 = a.phi * a.phi.transpose();
    const Mat s1 = b.phi * b.phi.transpose();
    const Vec r0 = a.phi * a.Y;
    const Vec r1 = b.phi * b.Y;
    // Integrands are linear across the step.
    const Mat gram_mid = gram_ + (g0 * dt / 8.0) * (3.0 * s0 + s1);
    const Vec corr_mid = corr_ + (g0 * dt / 8.0) * (3.0 * r0 + r1);
    Mat gram_end = gram_ + (g0 * dt / 2.0) * (s0 + s1);
    gram_end = 0.5 * (gram_end + gram_end.transpose());
    const Vec corr_end = corr_ + (g0 * dt / 2.0) * (r0 + r1);

    double d_mid = 0.0, d_end = 0.0;
    Vec y_mid, y_end;
    refresh(gram_mid, corr_mid, d_mid, y_mid);
    refresh(gram_end, corr_end, d_end, y_end);

    const double d_max = std::max({std::abs(delta_), std::abs(d_mid), std::abs(d_end)});
    const Mat tj = gains_.gamma.asDiagonal() * (map_.mixing * map_.jacobian(eta_));
    const double stiffness = d_max * d_max * linalg::spectral_norm(tj);
    const int n = std::max(1, static_cast<int>(std::ceil(dt * stiffness / 0.5)));
    const double h = dt / n;

    const int p = map_.p;
    Vec y(p), w(p), mixed(map_.q);
    const auto rate = [&](const Vec& eta, double s, Vec& out) {
      const double d = detail::lagrange3(s, delta_, d_mid, d_end);
      if (map_.identity) {
        // T = I, W(eta) = eta
        for (int i = 0; i < p; ++i) {
          const double yi = detail::lagrange3(s, ycal_(i), y_mid(i), y_end(i));
          out(i) = d * gains_.gamma(i) * (yi - d * eta(i));
        }
        return;
      }
      for (int i = 0; i < p; ++i) y(i) = detail::lagrange3(s, ycal_(i), y_mid(i), y_end(i));
      w = map_.eval(eta);
      y.noalias() -= d * w;
      mixed.noalias() = map_.mixing * y;
      out = (d * gains_.gamma.array() * mixed.array()).matrix();
    };
    Vec eta = eta_, k1(map_.q), k2(map_.q), k3(map_.q), k4(map_.q), tmp(map_.q);
    const double sh = 1.0 / n;
    for (int k = 0; k < n; ++k) {
      const double s = static_cast<double>(k) / n;
      rate(eta, s, k1);
      tmp = eta + 0.5 * h * k1;
      rate(tmp, s + 0.5 * sh, k2);
      tmp = eta + 0.5 * h * k2;
      rate(tmp, s + 0.5 * sh, k3);
      tmp = eta + h * k3;
      rate(tmp, s + sh, k4);
      eta += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    gram_ = gram_end;
    corr_ = corr_end;
    delta_ = d_end;
    ycal_ = y_end;
    eta_ = eta;
    log_.record(b.t, eta_);
    if (!gram_.allFinite() || !detail::bounded(eta_) || !detail::bounded(w_hat()))
      throw DivergenceError("lsd: state diverged at t=" + std::to_string(b.t), log_.dump());
  }

 private:
  // With G = g0 int phi phi^T and info = f0 I + G, I - f0 F = F G. So
  // Delta = det G / det info and adj(F G) F = adj(G) / det info. Forming
  // I - f0 F directly cancels badly for small f0.
  void refresh(const Mat& gram, const Vec& corr, double& delta, Vec& ycal) const {
    const int p = map_.p;
    const double det_info = linalg::determinant(gains_.f0 * Mat::Identity(p, p) + gram);
    // Product form keeps Delta in [0, 1) when rounding leaves G slightly
    // indefinite.
    const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(gram, Eigen::EigenvaluesOnly).eigenvalues();
    delta = 1.0;
    for (int i = 0; i < p; ++i) {
      const double l = std::max(ev(i), 0.0);
      delta *= l / (gains_.f0 + l);
    }
    // W - f0 F W0 = F corr
    ycal = linalg::adjugate(gram) * corr / det_info;
  }

  ParamMap map_;
  LsdGains gains_;
  Vec w0_;
  Vec eta_;
  Mat gram_;  // g0 int phi phi^T
  Vec corr_;  // g0 int phi Y
  double delta_ = 0.0;
  Vec ycal_;
  bool started_ = false;
  RegressorSample prev_;
  detail::StateLog log_;
};

class GradientEstimator {
 public:
  GradientEstimator(Mat gamma, Vec eta0) : gamma_(std::move(gamma)), eta_(std::move(eta0)) {
    if (gamma_.rows() != eta_.size() || gamma_.cols() != eta_.size())
      throw DomainError("gradient: Gamma must be q x q");
    if (!gamma_.isApprox(gamma_.transpose()) || linalg::symmetric_eigen_range(gamma_)(0) <= 0.0)
      throw DomainError("gradient: Gamma must be symmetric positive definite");
  }

  const Vec& eta_hat() const { return eta_; }

  void update(const RegressorSample& s, double dt) {
    if (s.phi.size() != eta_.size()) throw DomainError("gradient: regressor dimension mismatch");
    if (!started_) {
      started_ = true;
      prev_ = s;
      log_.record(s.t, eta_);
      return;
    }
    step(prev_, s, dt);
    prev_ = s;
  }

  void step(const RegressorSample& a, const RegressorSample& b, double dt) {
    // The flow's only nonzero rate is psi' Gamma psi.
    const double stiffness = std::max(a.phi.dot(gamma_ * a.phi), b.phi.dot(gamma_ * b.phi));
    const int n = std::max(1, static_cast<int>(std::ceil(dt * stiffness / 0.5)));
    const double h = dt / n;
    const auto rate = [&](const Vec& eta, double s) -> Vec {
      const Vec psi = (1.0 - s) * a.phi + s * b.phi;
      const double y = (1.0 - s) * a.Y + s * b.Y;
      return -gamma_ * psi * (psi.dot(eta) - y);
    };
    Vec eta = eta_;
    for (int k = 0; k < n; ++k) {
      const double s = static_cast<double>(k) / n;
      const double sh = 1.0 / n;
      const Vec k1 = rate(eta, s);
      const Vec k2 = rate(eta + 0.5 * h * k1, s + 0.5 * sh);
      const Vec k3 = rate(eta + 0.5 * h * k2, s + 0.5 * sh);
      const Vec k4 = rate(eta + h * k3, s + sh);
      eta += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    eta_ = eta;
    log_.record(b.t, eta_);
    if (!detail::bounded(eta_))
      throw DivergenceError("gradient: state diverged at t=" + std::to_string(b.t), log_.dump());
  }

 private:
  Mat gamma_;
  Vec eta_;
  bool started_ = false;
  RegressorSample prev_;
  detail::StateLog log_;
};

// theta5 = exp(-t3 u) (y - t4 - t1 ln u - t2 u) from estimates of theta_1..4.
inline double estimate_theta5(const Vec& theta14, double u, double y) {
  check_current(u);
  return std::exp(-theta14(2) * u) *
         (y - theta14(3) - theta14(0) * std::log(u) - theta14(1) * u);
}

// Certainty-equivalent a = (E_oc - y) u^{-b}.
inline double estimate_a_m3(double e_oc, double u, double y, double b_hat) {
  check_current(u);
  if (!(e_oc - y > 0.0)) throw DomainError("E_oc dominance violated");
  return (e_oc - y) * std::pow(u, -b_hat);
}

struct BatchLsResult {
  Vec w;
  Mat gram;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
};

// Minimizes sum (Y - phi^T w)^2. Throws ExcitationError when the Gram matrix
// is numerically singular (min eigenvalue <= rel_tol * max eigenvalue).
inline BatchLsResult batch_ls(const std::vector<RegressorSample>& samples, double rel_tol = 1e-12) {
  if (samples.empty()) throw DomainError("batch_ls: empty stream");
  const int p = static_cast<int>(samples.front().phi.size());
  Mat gram = Mat::Zero(p, p);
  Vec rhs = Vec::Zero(p);
  for (const auto& s : samples) {
    if (s.phi.size() != p) throw DomainError("batch_ls: regressor dimension changed");
    gram.selfadjointView<Eigen::Lower>().rankUpdate(s.phi);
    rhs += s.phi * s.Y;
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  BatchLsResult res;
  res.gram = gram;
  const auto range = linalg::symmetric_eigen_range(gram);
  res.min_eigenvalue = range(0);
  res.max_eigenvalue = range(1);
  if (!(res.max_eigenvalue > 0.0) || res.min_eigenvalue <= rel_tol * res.max_eigenvalue)
    throw ExcitationError("regressor not IE: Gram matrix is numerically singular");
  // Jacobi scaling before the solve.
  const Vec scale = gram.diagonal().cwiseSqrt().cwiseInverse();
  const Mat scaled = scale.asDiagonal() * gram * scale.asDiagonal();
  res.w = scale.asDiagonal() * scaled.ldlt().solve(scale.asDiagonal() * rhs);
  return res;
}

}  // namespace pemfc
