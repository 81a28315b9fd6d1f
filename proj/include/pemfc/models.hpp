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

// Static polarization-curve models.
//
//   M1  v = t4 + t1 ln(i) + t2 i + t5 exp(t3 i)     (full model)
//   M2  v = E_oc - a exp(b i)
//   M3  v = E_oc - a i^b
//   M4  v = t6 + t1 ln(i) + t2 i,   t6 = t1 + t5
//
// Signs follow the additive form above; no positivity is imposed on M1/M4.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "pemfc/errors.hpp"
#include "pemfc/trace.hpp"

namespace pemfc {

enum class ModelId { M1, M2, M3, M4 };

inline std::string to_string(ModelId id) {
  switch (id) {
    case ModelId::M1: return "m1";
    case ModelId::M2: return "m2";
    case ModelId::M3: return "m3";
    case ModelId::M4: return "m4";
  }
  return "?";
}

struct ThetaFull {
  double theta1 = 0.0;  // V
  double theta2 = 0.0;  // V/A
  double theta3 = 0.0;  // 1/A
  double theta4 = 0.0;  // V
  double theta5 = 0.0;  // V
};

struct ThetaM4 {
  double theta1 = 0.0;  // V
  double theta2 = 0.0;  // V/A
  double theta6 = 0.0;  // V
};

// (E_oc, a, b) of M2 or M3. Construct through make_m2 / make_m3, which check
// a, b > 0 and E_oc dominance over the configured current range.
struct ReducedParamsAB {
  double e_oc = 0.0;
  double a = 0.0;
  double b = 0.0;
};

inline void check_current(double i) {
  if (!(i > 0.0) || !std::isfinite(i)) throw DomainError("logarithm domain: current must be positive");
}

inline double eval_m1(const ThetaFull& th, double i) {
  check_current(i);
  return th.theta4 + th.theta1 * std::log(i) + th.theta2 * i + th.theta5 * std::exp(th.theta3 * i);
}

inline double eval_m2(const ReducedParamsAB& p, double i) { return p.e_oc - p.a * std::exp(p.b * i); }

inline double eval_m3(const ReducedParamsAB& p, double i) {
  check_current(i);
  return p.e_oc - p.a * std::pow(i, p.b);
}

inline double eval_m4(const ThetaM4& p, double i) {
  check_current(i);
  return p.theta6 + p.theta1 * std::log(i) + p.theta2 * i;
}

inline ReducedParamsAB make_reduced(ModelId id, double e_oc, double a, double b, double i_min,
                                    double i_max) {
  if (id != ModelId::M2 && id != ModelId::M3) throw DomainError("make_reduced: M2 or M3 only");
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("reduced model: a and b must be positive");
  if (!(i_min <= i_max)) throw DomainError("reduced model: empty current range");
  if (id == ModelId::M3 && !(i_min > 0.0)) throw DomainError("reduced model: M3 needs positive currents");
  const ReducedParamsAB p{e_oc, a, b};
  // both loss terms increase with i for b > 0
  const double loss = (id == ModelId::M2) ? a * std::exp(b * i_max) : a * std::pow(i_max, b);
  if (!(e_oc > loss)) throw DomainError("E_oc dominance violated over the current range");
  return p;
}

// M1 with theta3 = 0; the constant collects theta4 + theta5.
inline ThetaM4 reduce_to_m4(const ThetaFull& th) { return {th.theta1, th.theta2, th.theta4 + th.theta5}; }

using ModelParams = std::variant<ThetaFull, ReducedParamsAB, ThetaM4>;

struct ModelSpec {
  ModelId id = ModelId::M1;
  ModelParams params = ThetaFull{};
};

inline double eval_model(const ModelSpec& m, double i) {
  switch (m.id) {
    case ModelId::M1: return eval_m1(std::get<ThetaFull>(m.params), i);
    case ModelId::M2: return eval_m2(std::get<ReducedParamsAB>(m.params), i);
    case ModelId::M3: return eval_m3(std::get<ReducedParamsAB>(m.params), i);
    case ModelId::M4: return eval_m4(std::get<ThetaM4>(m.params), i);
  }
  throw DomainError("unknown model");
}

// Pointwise model evaluation plus i.i.d. N(0, noise_std^2) voltage noise from a
// generator seeded with `seed`.
inline Trace synthesize(const ModelSpec& m, const Trace& current, double noise_std,
                        std::uint64_t seed) {
  if (!(noise_std >= 0.0)) throw DomainError("synthesize: noise_std must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_std > 0.0 ? noise_std : 1.0);
  std::vector<double> v(current.size());
  for (std::size_t k = 0; k < current.size(); ++k) {
    v[k] = eval_model(m, current[k]);
    if (noise_std > 0.0) v[k] += noise(rng);
  }
  return Trace(current.dt(), current.t0(), std::move(v));
}

// Adds N(0, std^2) noise to any trace; used for optional current noise.
inline Trace add_noise(const Trace& in, double noise_std, std::uint64_t seed) {
  if (noise_std == 0.0) return in;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_std);
  std::vector<double> v = in.samples();
  for (double& x : v) x += noise(rng);
  return Trace(in.dt(), in.t0(), std::move(v));
}

struct CurveSweep {
  std::vector<double> current;
  std::vector<double> voltage;
};

inline CurveSweep sweep(const ModelSpec& m, double i_min, double i_max, std::size_t points) {
  if (points < 2 || !(i_max > i_min)) throw DomainError("sweep: need at least two points on a non-empty range");
  CurveSweep s;
  s.current.resize(points);
  s.voltage.resize(points);
  for (std::size_t k = 0; k < points; ++k) {
    const double i = i_min + (i_max - i_min) * static_cast<double>(k) / static_cast<double>(points - 1);
    s.current[k] = i;
    s.voltage[k] = eval_model(m, i);
  }
  return s;
}

}  // namespace pemfc
