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

// Excitation and identifiability diagnostics for regressor streams:
// interval excitation (Gram over [t0, t0 + t_c]), persistency of excitation
// (sliding-window Grams) and the Wronskian linear-dependence test.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pemfc/errors.hpp"
#include "pemfc/linalg.hpp"
#include "pemfc/regressors.hpp"

namespace pemfc {

struct ExcitationReport {
  double t_start = 0.0;
  double t_end = 0.0;
  Mat gram;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double threshold = 0.0;
  bool pass = false;

  double ratio() const { return max_eigenvalue > 0.0 ? min_eigenvalue / max_eigenvalue : 0.0; }
};

// Trapezoidal integral of phi phi^T over samples with t <= t0 + t_c. Passes
// iff the smallest eigenvalue reaches rel_threshold times the largest.
inline ExcitationReport excitation_ie(const std::vector<RegressorSample>& stream, double t_c,
                                      double rel_threshold = 1e-6) {
  if (stream.empty()) throw DomainError("excitation: empty stream");
  const int p = static_cast<int>(stream.front().phi.size());
  ExcitationReport rep;
  rep.t_start = stream.front().t;
  rep.t_end = rep.t_start;
  rep.gram = Mat::Zero(p, p);
  Mat prev = stream.front().phi * stream.front().phi.transpose();
  for (std::size_t k = 1; k < stream.size(); ++k) {
    if (stream[k].t > rep.t_start + t_c + 1e-12) break;
    const Mat cur = stream[k].phi * stream[k].phi.transpose();
    rep.gram += 0.5 * (stream[k].t - stream[k - 1].t) * (prev + cur);
    prev = cur;
    rep.t_end = stream[k].t;
  }
  const auto range = linalg::symmetric_eigen_range(rep.gram);
  rep.min_eigenvalue = range(0);
  rep.max_eigenvalue = range(1);
  rep.threshold = rel_threshold * rep.max_eigenvalue;
  rep.pass = rep.max_eigenvalue > 0.0 && rep.min_eigenvalue >= rep.threshold;
  return rep;
}

struct PeSeries {
  double window = 0.0;
  std::vector<double> t_window;  // window start times
  std::vector<double> min_eigenvalue;
  std::vector<double> max_eigenvalue;
  double threshold = 0.0;
  double worst_min_eigenvalue = 0.0;
  bool pass = false;
};

// Sliding-window Gram matrices of length `window` seconds, starting every
// `stride` samples (0 picks a tenth of the window). Passes iff every window's
// smallest eigenvalue reaches rel_threshold times the largest eigenvalue seen
// in any window.
inline PeSeries excitation_pe(const std::vector<RegressorSample>& stream, double window,
                              double rel_threshold = 1e-6, std::size_t stride = 0) {
  if (stream.size() < 2) throw DomainError("excitation: stream too short");
  if (!(window > 0.0)) throw DomainError("excitation: window must be positive");
  const double dt = stream[1].t - stream[0].t;
  const auto w = static_cast<std::size_t>(std::llround(window / dt));
  if (w == 0 || w >= stream.size()) throw DomainError("excitation: stream shorter than the window");
  if (stride == 0) stride = std::max<std::size_t>(1, w / 10);
  const int p = static_cast<int>(stream.front().phi.size());

  std::vector<Mat> cumulative(stream.size(), Mat::Zero(p, p));
  Mat prev = stream[0].phi * stream[0].phi.transpose();
  for (std::size_t k = 1; k < stream.size(); ++k) {
    const Mat cur = stream[k].phi * stream[k].phi.transpose();
    cumulative[k] = cumulative[k - 1] + 0.5 * (stream[k].t - stream[k - 1].t) * (prev + cur);
    prev = cur;
  }
  PeSeries out;
  out.window = window;
  double global_max = 0.0;
  for (std::size_t k = 0; k + w < stream.size(); k += stride) {
    const auto range = linalg::symmetric_eigen_range(cumulative[k + w] - cumulative[k]);
    out.t_window.push_back(stream[k].t);
    out.min_eigenvalue.push_back(range(0));
    out.max_eigenvalue.push_back(range(1));
    global_max = std::max(global_max, range(1));
  }
  out.worst_min_eigenvalue = *std::min_element(out.min_eigenvalue.begin(), out.min_eigenvalue.end());
  out.threshold = rel_threshold * global_max;
  out.pass = global_max > 0.0 && out.worst_min_eigenvalue >= out.threshold;
  return out;
}

struct WronskianSeries {
  std::vector<double> times;
  std::vector<double> det;
  std::vector<double> det_normalized;  // det / prod of series-max row norms, in [0, 1]
  double transient_peak = 0.0;         // max |det_normalized|
  double raw_peak = 0.0;               // max |det|

  // Largest |det_normalized| at or after t.
  double max_normalized_after(double t) const {
    double m = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k)
      if (times[k] >= t) m = std::max(m, std::abs(det_normalized[k]));
    return m;
  }
};

// Rows are phi and its first p-1 time derivatives, taken with 9-point central
// stencils of spacing stride * dt.
inline WronskianSeries wronskian_determinant(const std::vector<double>& times,
                                             const std::vector<Vec>& phi, double dt,
                                             std::size_t stride = 1) {
  constexpr int kHalf = 4;
  if (phi.size() != times.size()) throw DomainError("wronskian: time/sample count mismatch");
  if (stride == 0) throw DomainError("wronskian: stride must be positive");
  if (phi.size() < 2 * kHalf * stride + 1) throw DomainError("wronskian: stream too short for the stencil");
  const int p = static_cast<int>(phi.front().size());
  if (p < 1 || p > 2 * kHalf) throw DomainError("wronskian: unsupported regressor dimension");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (std::abs((times[k] - times[k - 1]) - dt) > 1e-6 * dt)
      throw DomainError("wronskian: non-uniform dt");

  const double h = dt * static_cast<double>(stride);
  std::vector<double> nodes;
  for (int j = -kHalf; j <= kHalf; ++j) nodes.push_back(j * h);
  const Mat weights = linalg::fd_weights(0.0, nodes, p - 1);

  // Rows are normalized by their largest norm over the whole series rather
  // than pointwise: derivative rows grow like lambda^k during filter
  // transients, which would swamp a pointwise score. Hadamard's inequality
  // still bounds the result by 1.
  WronskianSeries out;
  Vec row_max = Vec::Zero(p);
  const std::size_t reach = kHalf * stride;
  for (std::size_t k = reach; k + reach < phi.size(); ++k) {
    Mat w = Mat::Zero(p, p);
    for (int j = 0; j < 2 * kHalf + 1; ++j) {
      const Vec& v = phi[k - reach + static_cast<std::size_t>(j) * stride];
      for (int order = 0; order < p; ++order) w.row(order) += weights(order, j) * v.transpose();
    }
    for (int r = 0; r < p; ++r) row_max(r) = std::max(row_max(r), w.row(r).norm());
    const double det = linalg::determinant(w);
    out.times.push_back(times[k]);
    out.det.push_back(det);
    out.raw_peak = std::max(out.raw_peak, std::abs(det));
  }
  const double norms = row_max.prod();
  out.det_normalized.reserve(out.det.size());
  for (double d : out.det) {
    const double normalized = norms > 0.0 ? d / norms : 0.0;
    out.det_normalized.push_back(normalized);
    out.transient_peak = std::max(out.transient_peak, std::abs(normalized));
  }
  return out;
}

inline WronskianSeries wronskian_determinant(const std::vector<RegressorSample>& stream, double dt,
                                             std::size_t stride = 1) {
  std::vector<double> times;
  std::vector<Vec> phi;
  times.reserve(stream.size());
  phi.reserve(stream.size());
  for (const auto& s : stream) {
    times.push_back(s.t);
    phi.push_back(s.phi);
  }
  return wronskian_determinant(times, phi, dt, stride);
}

}  // namespace pemfc
