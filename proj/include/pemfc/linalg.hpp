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

// Small dense helpers: cofactor determinant / adjugate for the LSD mixing
// step and finite-difference stencil weights for the Wronskian test.

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace pemfc::linalg {

namespace detail {

// Laplace expansion along the first row over the index subsets rows/cols.
inline double cofactor_det(const Eigen::MatrixXd& m, std::vector<int>& rows,
                           std::vector<int>& cols) {
  const std::size_t n = rows.size();
  if (n == 0) return 1.0;
  if (n == 1) return m(rows[0], cols[0]);
  if (n == 2) {
    return m(rows[0], cols[0]) * m(rows[1], cols[1]) -
           m(rows[0], cols[1]) * m(rows[1], cols[0]);
  }
  const int r0 = rows.front();
  rows.erase(rows.begin());
  double det = 0.0;
  double sign = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    const int c = cols[j];
    const double a = m(r0, c);
    if (a != 0.0) {
      cols.erase(cols.begin() + static_cast<std::ptrdiff_t>(j));
      det += sign * a * cofactor_det(m, rows, cols);
      cols.insert(cols.begin() + static_cast<std::ptrdiff_t>(j), c);
    }
    sign = -sign;
  }
  rows.insert(rows.begin(), r0);
  return det;
}

inline std::vector<int> iota_except(int n, int skip) {
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    if (i != skip) idx.push_back(i);
  return idx;
}

}  // namespace detail

// Exact cofactor expansion. Intended for n <= 6.
inline double determinant(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("determinant: non-square matrix");
  auto rows = detail::iota_except(static_cast<int>(m.rows()), -1);
  auto cols = rows;
  return detail::cofactor_det(m, rows, cols);
}

// adj(M)(i,j) = (-1)^{i+j} det(M without row j and column i).
inline Eigen::MatrixXd adjugate(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("adjugate: non-square matrix");
  const int n = static_cast<int>(m.rows());
  Eigen::MatrixXd adj(n, n);
  if (n == 1) {
    adj(0, 0) = 1.0;
    return adj;
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      auto rows = detail::iota_except(n, j);
      auto cols = detail::iota_except(n, i);
      const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
      adj(i, j) = sign * detail::cofactor_det(m, rows, cols);
    }
  }
  return adj;
}

// Finite-difference weights (Fornberg 1988) for derivatives 0..max_order at
// x0 from the given nodes. Result(k, j) multiplies f(nodes[j]) for d^k f.
inline Eigen::MatrixXd fd_weights(double x0, const std::vector<double>& nodes, int max_order) {
  const int n = static_cast<int>(nodes.size());
  if (n <= max_order) throw std::invalid_argument("fd_weights: not enough nodes");
  // c[k][j] accumulated in place, rows = order
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(max_order + 1, n);
  double c1 = 1.0;
  double c4 = nodes[0] - x0;
  c(0, 0) = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, max_order);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = nodes[static_cast<std::size_t>(i)] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = nodes[static_cast<std::size_t>(i)] - nodes[static_cast<std::size_t>(j)];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c(k, i) = c1 * (k * c(k - 1, i - 1) - c5 * c(k, i - 1)) / c2;
        c(0, i) = -c1 * c5 * c(0, i - 1) / c2;
      }
      for (int k = mn; k >= 1; --k) c(k, j) = (c4 * c(k, j) - k * c(k - 1, j)) / c3;
      c(0, j) = c4 * c(0, j) / c3;
    }
    c1 = c2;
  }
  return c;
}

// Smallest / largest eigenvalue of the symmetric part of m.
inline Eigen::Vector2d symmetric_eigen_range(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

// Largest singular value.
inline double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

}  // namespace pemfc::linalg
