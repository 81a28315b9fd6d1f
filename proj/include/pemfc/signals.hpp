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

// Excitation current generators. Every shape is evaluated analytically at
// the grid points; analytic time derivatives are available for the smooth
// shapes (the pulse train is piecewise constant, derivative 0 a.e.).

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pemfc/errors.hpp"
#include "pemfc/filters.hpp"
#include "pemfc/trace.hpp"

namespace pemfc {

struct ConstantSignal {
  double value = 0.0;
};

// 50 % duty cycle square wave.
struct PulseTrain {
  double low = 0.0;
  double high = 0.0;
  double frequency = 1.0;  // Hz
  bool start_high = true;
};

// offset + amplitude * sin(2 pi frequency t + phase)
struct SineSignal {
  double offset = 0.0;
  double amplitude = 0.0;
  double frequency = 1.0;  // Hz
  double phase = 0.0;      // rad
};

// offset + sum_k amplitude_k * sin(omega_k t)
struct FourierSum {
  struct Term {
    double amplitude = 0.0;
    double omega = 0.0;  // rad/s
  };
  double offset = 0.0;
  std::vector<Term> terms;
};

using SignalShape = std::variant<ConstantSignal, PulseTrain, SineSignal, FourierSum>;

struct SignalSpec {
  SignalShape shape;
  double duration = 1.0;  // s
};

inline void validate(const SignalSpec& spec) {
  if (!(spec.duration > 0.0) || !std::isfinite(spec.duration))
    throw DomainError("signal: duration must be positive");
  std::visit(
      [](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, PulseTrain>) {
          if (!(s.frequency > 0.0)) throw DomainError("signal: pulse frequency must be positive");
        } else if constexpr (std::is_same_v<S, SineSignal>) {
          if (!(s.frequency >= 0.0)) throw DomainError("signal: sine frequency must be non-negative");
        } else if constexpr (std::is_same_v<S, FourierSum>) {
          for (const auto& t : s.terms)
            if (!(t.omega >= 0.0)) throw DomainError("signal: negative angular frequency");
        }
      },
      spec.shape);
}

inline double evaluate(const SignalShape& shape, double t) {
  return std::visit(
      [t](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantSignal>) {
          return s.value;
        } else if constexpr (std::is_same_v<S, PulseTrain>) {
          // Guard against k*dt*f landing a hair below a half-period edge.
          const double cycles = t * s.frequency + 1e-9;
          const double phase = cycles - std::floor(cycles);
          const bool first_half = phase < 0.5;
          return (first_half == s.start_high) ? s.high : s.low;
        } else if constexpr (std::is_same_v<S, SineSignal>) {
          return s.offset +
                 s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency * t + s.phase);
        } else {
          double v = s.offset;
          for (const auto& term : s.terms) v += term.amplitude * std::sin(term.omega * t);
          return v;
        }
      },
      shape);
}

inline double evaluate_derivative(const SignalShape& shape, double t) {
  return std::visit(
      [t](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, SineSignal>) {
          const double w = 2.0 * std::numbers::pi * s.frequency;
          return s.amplitude * w * std::cos(w * t + s.phase);
        } else if constexpr (std::is_same_v<S, FourierSum>) {
          double v = 0.0;
          for (const auto& term : s.terms) v += term.amplitude * term.omega * std::cos(term.omega * t);
          return v;
        } else {
          return 0.0;
        }
      },
      shape);
}

// Highest frequency content in Hz (pulse trains count their fundamental).
inline double max_frequency(const SignalShape& shape) {
  return std::visit(
      [](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, PulseTrain>) {
          return s.frequency;
        } else if constexpr (std::is_same_v<S, SineSignal>) {
          return s.frequency;
        } else if constexpr (std::is_same_v<S, FourierSum>) {
          double w = 0.0;
          for (const auto& term : s.terms) w = std::max(w, term.omega);
          return w / (2.0 * std::numbers::pi);
        } else {
          return 0.0;
        }
      },
      shape);
}

inline std::size_t sample_count(double duration, double dt) {
  return static_cast<std::size_t>(std::llround(duration / dt));
}

inline Trace generate_signal(const SignalSpec& spec, double dt) {
  validate(spec);
  if (!(dt > 0.0)) throw DomainError("signal: dt must be positive");
  if (spec.duration < dt) throw DomainError("signal: duration shorter than dt");
  const std::size_t n = sample_count(spec.duration, dt);
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = evaluate(spec.shape, static_cast<double>(k) * dt);
  return Trace(dt, 0.0, std::move(v));
}

inline Trace generate_derivative(const SignalSpec& spec, double dt) {
  validate(spec);
  const std::size_t n = sample_count(spec.duration, dt);
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k)
    v[k] = evaluate_derivative(spec.shape, static_cast<double>(k) * dt);
  return Trace(dt, 0.0, std::move(v));
}

// Current seen by the stack when the commanded waveform passes through a
// first-order load bandwidth of `cutoff_hz`, starting at rest on the first
// sample. Returns the shaped current and its exact derivative l (v - z).
inline std::pair<Trace, Trace> shape_current(const Trace& commanded, double cutoff_hz) {
  if (!(cutoff_hz > 0.0)) throw DomainError("signal: shaping cutoff must be positive");
  const double lambda = 2.0 * std::numbers::pi * cutoff_hz;
  auto lp = LtiFilter::low_pass(lambda);
  if (!commanded.empty()) lp.settle(commanded[0]);
  const Trace shaped = filter_trace(lp, commanded);
  std::vector<double> deriv(shaped.size());
  for (std::size_t k = 0; k < shaped.size(); ++k) deriv[k] = lambda * (commanded[k] - shaped[k]);
  return {shaped, Trace(commanded.dt(), commanded.t0(), std::move(deriv))};
}

}  // namespace pemfc
