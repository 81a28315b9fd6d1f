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

// Nonlinear parameter maps of the separable regressions and the sampled
// check of the monotonizability LMI  T grad(W) + grad(W)^T T^T >= rho I.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pemfc/errors.hpp"
#include "pemfc/linalg.hpp"

namespace pemfc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// W(theta_1..4) = (t1, t3, t1 t3, t2 t3, t2 - t3 t4)
inline Vec w_map(const Vec& th) {
  Vec w(5);
  w << th(0), th(2), th(0) * th(2), th(1) * th(2), th(1) - th(2) * th(3);
  return w;
}

inline Mat w_jacobian(const Vec& th) {
  Mat j = Mat::Zero(5, 4);
  j(0, 0) = 1.0;
  j(1, 2) = 1.0;
  j(2, 0) = th(2);
  j(2, 2) = th(0);
  j(3, 1) = th(2);
  j(3, 2) = th(1);
  j(4, 1) = 1.0;
  j(4, 2) = -th(3);
  j(4, 3) = -th(2);
  return j;
}

// theta_1..4 = D(eta) = (e1, e3/e2, e2, (e3/e2 - e4)/e2)
inline Vec d_map(const Vec& eta) {
  if (eta(1) == 0.0) throw DomainError("singular reparameterization: eta_2 = 0");
  const double r = eta(2) / eta(1);
  Vec th(4);
  th << eta(0), r, eta(1), (r - eta(3)) / eta(1);
  return th;
}

// eta = (t1, t3, t2 t3, t2 - t3 t4)
inline Vec d_inverse(const Vec& th) {
  if (th(2) == 0.0) throw DomainError("singular reparameterization: theta_3 = 0");
  Vec eta(4);
  eta << th(0), th(2), th(1) * th(2), th(1) - th(2) * th(3);
  return eta;
}

// G = W o D = (e1, e2, e1 e2, e3, e4)
inline Vec g_map(const Vec& eta) {
  Vec g(5);
  g << eta(0), eta(1), eta(0) * eta(1), eta(2), eta(3);
  return g;
}

inline Mat g_jacobian(const Vec& eta) {
  Mat j = Mat::Zero(5, 4);
  j(0, 0) = 1.0;
  j(1, 1) = 1.0;
  j(2, 0) = eta(1);
  j(2, 1) = eta(0);
  j(3, 2) = 1.0;
  j(4, 3) = 1.0;
  return j;
}

// Rows select outputs 1, 2, 4, 5 of G, so T G(eta) = eta.
inline Mat g_mixing() {
  Mat t = Mat::Zero(4, 5);
  t(0, 0) = 1.0;
  t(1, 1) = 1.0;
  t(2, 3) = 1.0;
  t(3, 4) = 1.0;
  return t;
}

// Sinusoidal-current map in physical coordinates:
// (t1, t2, t3 t4, t1 t3, t2 t3, t6) with t6 = t3 omega^2.
inline Vec sine_map(const Vec& th, double theta6) {
  Vec g(6);
  g << th(0), th(1), th(2) * th(3), th(0) * th(2), th(1) * th(2), theta6;
  return g;
}

// Reparameterization of the sinusoidal-current map that makes five of its six
// outputs coordinates: eta = (t1, t2, t3 t4, t2 t3, t6).
inline Vec sine_eta(const Vec& th, double theta6) {
  Vec eta(5);
  eta << th(0), th(1), th(2) * th(3), th(1) * th(2), theta6;
  return eta;
}

// Inverse of sine_eta: returns (t1, t2, t3, t4, t6). Needs eta_2, eta_4 != 0.
inline Vec sine_theta(const Vec& eta) {
  if (eta(1) == 0.0 || eta(3) == 0.0) throw DomainError("singular reparameterization: eta_2 or eta_4 = 0");
  const double t3 = eta(3) / eta(1);
  Vec th(5);
  th << eta(0), eta(1), t3, eta(2) / t3, eta(4);
  return th;
}

// The sinusoidal-current map in eta coordinates: (e1, e2, e3, e1 e4 / e2, e4, e5).
inline Vec sine_g(const Vec& eta) {
  Vec g(6);
  g << eta(0), eta(1), eta(2), eta(0) * eta(3) / eta(1), eta(3), eta(4);
  return g;
}

inline Mat sine_g_jacobian(const Vec& eta) {
  Mat j = Mat::Zero(6, 5);
  j(0, 0) = 1.0;
  j(1, 1) = 1.0;
  j(2, 2) = 1.0;
  j(3, 0) = eta(3) / eta(1);
  j(3, 1) = -eta(0) * eta(3) / (eta(1) * eta(1));
  j(3, 3) = eta(0) / eta(1);
  j(4, 3) = 1.0;
  j(5, 4) = 1.0;
  return j;
}

// Rows select outputs 1, 2, 3, 5, 6.
inline Mat sine_mixing() {
  Mat t = Mat::Zero(5, 6);
  t(0, 0) = 1.0;
  t(1, 1) = 1.0;
  t(2, 2) = 1.0;
  t(3, 4) = 1.0;
  t(4, 5) = 1.0;
  return t;
}

struct ParamMap {
  std::string name;
  int q = 0;  // parameter dimension
  int p = 0;  // regressor dimension
  std::function<Vec(const Vec&)> eval;
  std::function<Mat(const Vec&)> jacobian;  // p x q
  Mat mixing;                               // q x p
  double rho = 1.0;
  bool identity = false;  // eval is the identity; lets estimators skip it
};

inline ParamMap make_w_param_map() {
  return {"W", 4, 5, w_map, w_jacobian, Mat::Zero(4, 5), 1.0};
}

inline ParamMap make_g_param_map() { return {"G", 4, 5, g_map, g_jacobian, g_mixing(), 1.0}; }

inline ParamMap make_sine_param_map() {
  return {"G_sine", 5, 6, sine_g, sine_g_jacobian, sine_mixing(), 1.0};
}

// Identity map for linear regressions.
inline ParamMap make_linear_param_map(int p) {
  return {"linear", p, p, [](const Vec& x) { return x; },
          [p](const Vec&) { return Mat(Mat::Identity(p, p)); }, Mat::Identity(p, p), 1.0, true};
}

// Central-difference Jacobian, used to cross-check the analytic ones.
inline Mat numeric_jacobian(const ParamMap& map, const Vec& x, double rel_step = 1e-6) {
  Mat j(map.p, map.q);
  for (int c = 0; c < map.q; ++c) {
    const double h = rel_step * std::max(1.0, std::abs(x(c)));
    Vec xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    j.col(c) = (map.eval(xp) - map.eval(xm)) / (2.0 * h);
  }
  return j;
}

struct MonotonizabilityReport {
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  double rho = 1.0;
  std::size_t sample_count = 0;
  Vec box_lo;
  Vec box_hi;
  bool pass = false;
};

// Minimum over the samples of the smallest eigenvalue of T J + J^T T^T.
inline MonotonizabilityReport check_monotonizability(const ParamMap& map,
                                                     const std::vector<Vec>& samples,
                                                     double rho) {
  if (map.mixing.rows() != map.q || map.mixing.cols() != map.p)
    throw DomainError("monotonizability: T must be q x p");
  MonotonizabilityReport rep;
  rep.rho = rho;
  if (samples.empty()) throw DomainError("monotonizability: no samples");
  rep.box_lo = samples.front();
  rep.box_hi = samples.front();
  for (const auto& eta : samples) {
    if (eta.size() != map.q) throw DomainError("monotonizability: sample dimension mismatch");
    const Mat j = map.jacobian(eta);
    if (j.rows() != map.p || j.cols() != map.q) throw DomainError("monotonizability: Jacobian dimension mismatch");
    const Mat tj = map.mixing * j;
    const double ev = linalg::symmetric_eigen_range(tj + tj.transpose())(0);
    rep.min_eigenvalue = std::min(rep.min_eigenvalue, ev);
    rep.box_lo = rep.box_lo.cwiseMin(eta);
    rep.box_hi = rep.box_hi.cwiseMax(eta);
    ++rep.sample_count;
  }
  rep.pass = rep.min_eigenvalue >= rho;
  return rep;
}

inline std::string to_text(const MonotonizabilityReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << "monotonizability: " << (r.pass ? "pass" : "fail") << "\n"
     << "  min eigenvalue of T J + J^T T^T: " << r.min_eigenvalue << "\n"
     << "  rho: " << r.rho << "\n"
     << "  samples: " << r.sample_count << "\n"
     << "  box: [" << r.box_lo.transpose() << "] .. [" << r.box_hi.transpose() << "]\n";
  return os.str();
}

// Uniform samples from [lo, hi]^q, rejecting those for which `keep` is false.
inline std::vector<Vec> sample_box(int q, double lo, double hi, std::size_t n, std::uint64_t seed,
                                   const std::function<bool(const Vec&)>& keep = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<Vec> out;
  out.reserve(n);
  while (out.size() < n) {
    Vec x(q);
    for (int i = 0; i < q; ++i) x(i) = dist(rng);
    if (!keep || keep(x)) out.push_back(std::move(x));
  }
  return out;
}

}  // namespace pemfc
