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

// Run orchestration: signal generation or CSV replay, model synthesis,
// regressor pipeline, estimator, diagnostics and artifact output.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pemfc/config.hpp"
#include "pemfc/diagnostics.hpp"
#include "pemfc/errors.hpp"
#include "pemfc/estimators.hpp"
#include "pemfc/filters.hpp"
#include "pemfc/maps.hpp"
#include "pemfc/models.hpp"
#include "pemfc/regressors.hpp"
#include "pemfc/signals.hpp"
#include "pemfc/trace.hpp"

namespace pemfc {

inline constexpr int kReportSchemaVersion = 1;

enum class RunMode { Synthesis, Replay };
enum class EstimatorKind { Lsd, Gradient, Batch, None };
enum class GradientGainMode { Diagonal, Normalized };

inline std::string to_string(RunMode m) { return m == RunMode::Synthesis ? "synthesis" : "replay"; }

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Lsd: return "lsd";
    case EstimatorKind::Gradient: return "gradient";
    case EstimatorKind::Batch: return "batch";
    case EstimatorKind::None: return "none";
  }
  return "?";
}

struct RunConfig {
  std::string name = "run";
  RunMode mode = RunMode::Synthesis;
  double dt = 1e-3;
  double duration = 30.0;
  std::uint64_t seed = 1;
  std::string output_dir;  // empty: nothing is written
  double convergence_tol = 0.01;

  // synthesis
  std::optional<ModelSpec> truth;
  SignalSpec signal{PulseTrain{10.0, 20.0, 2.0, true}, 30.0};
  double shaping_cutoff = 0.0;  // Hz; 0 leaves the commanded current untouched
  double voltage_noise = 0.0;
  double current_noise = 0.0;

  // replay
  std::string input_csv;
  double prefilter_cutoff = 5.0;  // Hz; at or above Nyquist the pre-filter is bypassed

  // estimation
  PipelineConfig pipeline;
  std::optional<double> sine_omega;  // rad/s, for the sinusoidal-current truth image
  EstimatorKind estimator = EstimatorKind::Lsd;
  LsdGains lsd{24.0, 1e-5, Vec()};
  Vec w0;
  Vec eta0;
  GradientGainMode gradient_mode = GradientGainMode::Diagonal;
  Vec gradient_gamma;          // diagonal mode
  double gradient_gain = 1.0;  // normalized mode
  double calibration_window = 1.0;

  // diagnostics
  bool excitation = true;
  double ie_window = 0.0;  // 0: whole run
  double pe_window = 1.0;
  double excitation_threshold = 1e-6;
  bool wronskian = false;
  std::size_t wronskian_stride = 1;

  // output
  bool traces = true;
  bool debug = false;
  double curve_min = 1.0;
  double curve_max = 30.0;
  std::size_t curve_points = 291;
};

struct WronskianSummary {
  double settle_time = 0.0;
  double transient_peak = 0.0;
  double max_after_settle = 0.0;
  double ratio = 0.0;
  double raw_peak = 0.0;
};

struct RunReport {
  std::string name;
  RunMode mode = RunMode::Synthesis;
  RegressorKind regressor = RegressorKind::M2;
  EstimatorKind estimator = EstimatorKind::Lsd;
  std::string map_name;
  std::size_t samples = 0;
  double t_end = 0.0;

  Vec eta_hat;
  Vec eta_true;  // empty when the generator is unknown or not in this model class
  Vec w_hat;     // LSD least-squares part
  std::map<std::string, double> estimates;  // physical parameters
  std::map<std::string, double> truth;
  std::string physical_note;                // why `estimates` is empty, if it is
  double rel_error_norm = std::numeric_limits<double>::quiet_NaN();
  double rel_error_max = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> convergence_time;
  // max |Y - phi^T W(eta_true)| / max |Y| after the 5/lambda transient
  double identity_residual = std::numeric_limits<double>::quiet_NaN();

  double residual_rms = 0.0;
  double residual_max = 0.0;

  bool batch_ok = false;
  Vec batch_eta;
  std::string batch_error;
  double batch_min_eigenvalue = 0.0;
  double batch_max_eigenvalue = 0.0;

  std::optional<ExcitationReport> ie;
  std::optional<PeSeries> pe;
  std::optional<WronskianSummary> wronskian;

  std::vector<std::string> files;

  // Per-step history kept in memory for callers.
  std::vector<double> times;
  std::vector<Vec> eta_history;
  std::vector<double> error_history;  // relative norm error; empty without a truth image
};

namespace detail {

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

inline std::vector<double> to_std(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline ModelId parse_model(const std::string& s) {
  const std::string m = lower(s);
  if (m == "m1") return ModelId::M1;
  if (m == "m2") return ModelId::M2;
  if (m == "m3") return ModelId::M3;
  if (m == "m4") return ModelId::M4;
  throw ConfigError("unknown model '" + s + "'");
}

inline RegressorKind parse_regressor(const std::string& s) {
  const std::string m = lower(s);
  if (m == "m1") return RegressorKind::M1;
  if (m == "m2") return RegressorKind::M2;
  if (m == "m3") return RegressorKind::M3;
  if (m == "m4") return RegressorKind::M4;
  if (m == "sine") return RegressorKind::Sine;
  throw ConfigError("unknown regressor model '" + s + "'");
}

inline std::uint64_t to_seed(double v) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 9.007199254740992e15)
    throw ConfigError("run.seed must be a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

}  // namespace detail

// Every key a run config may contain.
inline const std::map<std::string, ValueType>& config_schema() {
  using V = ValueType;
  static const std::map<std::string, ValueType> schema = {
      {"run.name", V::String},           {"run.preset", V::String},
      {"run.mode", V::String},           {"run.dt", V::Number},
      {"run.duration", V::Number},       {"run.seed", V::Number},
      {"run.output_dir", V::String},     {"run.convergence_tol", V::Number},
      {"truth.model", V::String},        {"truth.theta", V::Array},
      {"truth.e_oc", V::Number},         {"truth.a", V::Number},
      {"truth.b", V::Number},            {"signal.kind", V::String},
      {"signal.value", V::Number},       {"signal.low", V::Number},
      {"signal.high", V::Number},        {"signal.frequency", V::Number},
      {"signal.start_high", V::Bool},    {"signal.offset", V::Number},
      {"signal.amplitude", V::Number},   {"signal.phase", V::Number},
      {"signal.amplitudes", V::Array},   {"signal.omegas", V::Array},
      {"signal.shaping_cutoff", V::Number}, {"noise.voltage_std", V::Number},
      {"noise.current_std", V::Number},  {"replay.input", V::String},
      {"replay.prefilter_cutoff", V::Number}, {"pipeline.model", V::String},
      {"pipeline.lambda", V::Number},    {"pipeline.tau", V::Number},
      {"pipeline.derivative", V::String}, {"pipeline.init", V::String},
      {"pipeline.e_oc", V::Number},      {"pipeline.omega", V::Number},
      {"estimator.kind", V::String},     {"estimator.gamma0", V::Number},
      {"estimator.f0", V::Number},       {"estimator.gamma", V::Array},
      {"estimator.w0", V::Array},        {"estimator.eta0", V::Array},
      {"estimator.gradient_mode", V::String}, {"estimator.gradient_gain", V::Number},
      {"estimator.calibration_window", V::Number}, {"diagnostics.excitation", V::Bool},
      {"diagnostics.ie_window", V::Number}, {"diagnostics.pe_window", V::Number},
      {"diagnostics.threshold", V::Number}, {"diagnostics.wronskian", V::Bool},
      {"diagnostics.wronskian_stride", V::Number}, {"output.traces", V::Bool},
      {"output.debug", V::Bool},         {"output.curve_min", V::Number},
      {"output.curve_max", V::Number},   {"output.curve_points", V::Number},
  };
  return schema;
}

// ---------------------------------------------------------------- presets

struct PresetInfo {
  std::string name;
  std::string description;
  std::string config;  // TOML text
};

inline const std::vector<PresetInfo>& presets() {
  static const std::vector<PresetInfo> list = {
      {"m2-sim", "M2 self-closure on the 10-20 A, 2 Hz pulse; LSD with the simulation gains",
       R"([run]
duration = 30
[truth]
model = "m2"
e_oc = 42
a = 10.3136
b = 0.0151
[signal]
kind = "pulse"
low = 10
high = 20
frequency = 2
[pipeline]
model = "m2"
e_oc = 42
[estimator]
kind = "lsd"
gamma0 = 24
f0 = 1e-5
gamma = [3e4, 3e4]
)"},
      {"m3-sim", "M3 self-closure on the 10-20 A, 2 Hz pulse; LSD with the simulation gains",
       R"([run]
duration = 30
[truth]
model = "m3"
e_oc = 42
a = 7.2641
b = 0.2178
[signal]
kind = "pulse"
low = 10
high = 20
frequency = 2
[pipeline]
model = "m3"
e_oc = 42
lambda = 80
[estimator]
kind = "lsd"
gamma0 = 24
f0 = 1e-5
gamma = [600]
)"},
      {"m4-sim", "M4 self-closure on the load-shaped 10-20 A, 2 Hz pulse; LSD with the simulation gains",
       R"([run]
duration = 30
[truth]
model = "m4"
theta = [-1.9271, -0.0619, 35.0619]
[signal]
kind = "pulse"
low = 10
high = 20
frequency = 2
shaping_cutoff = 3
[pipeline]
model = "m4"
[estimator]
kind = "lsd"
gamma0 = 24
f0 = 1e-6
gamma = [30, 30, 30]
)"},
      {"m4-sim-gradient", "M4 self-closure on the load-shaped pulse; gradient estimator with a Gram-normalized gain",
       R"([run]
duration = 30
[truth]
model = "m4"
theta = [-1.9271, -0.0619, 35.0619]
[signal]
kind = "pulse"
low = 10
high = 20
frequency = 2
shaping_cutoff = 3
[pipeline]
model = "m4"
[estimator]
kind = "gradient"
gradient_mode = "normalized"
gradient_gain = 2
calibration_window = 1
)"},
      {"m2-exp", "M2 on a synthetic stand-in for the bench run: 10-20 A pulse, 3.3 s period, 0.05 V noise",
       R"([run]
duration = 120
[truth]
model = "m2"
e_oc = 39.8
a = 4.52
b = 0.0463
[signal]
kind = "pulse"
low = 10
high = 20
frequency = 0.30303030303030304
[noise]
voltage_std = 0.05
[diagnostics]
pe_window = 4
[pipeline]
model = "m2"
e_oc = 39.8
[estimator]
kind = "lsd"
gamma0 = 5
f0 = 0.1
gamma = [30, 30]
)"},
      {"m3-exp", "M3 on a synthetic stand-in for the bench run: 10-20 A pulse, 3.3 s period, 0.05 V noise",
       R"([run]
duration = 120
[truth]
model = "m3"
e_oc = 39.8
a = 2.117
b = 0.5921
[signal]
kind = "pulse"
low = 10
high = 20
frequency = 0.30303030303030304
[noise]
voltage_std = 0.05
[diagnostics]
pe_window = 4
[pipeline]
model = "m3"
e_oc = 39.8
lambda = 80
[estimator]
kind = "lsd"
gamma0 = 2.5
f0 = 0.1
gamma = [6]
)"},
      {"m4-exp", "M4 on a synthetic stand-in for the bench run: load-shaped 3.3 s pulse, 0.05 V noise",
       R"([run]
duration = 120
[truth]
model = "m4"
theta = [-0.7984, -0.3709, 37.31]
[signal]
kind = "pulse"
low = 10
high = 20
frequency = 0.30303030303030304
shaping_cutoff = 3
[noise]
voltage_std = 0.05
[diagnostics]
pe_window = 4
[pipeline]
model = "m4"
[estimator]
kind = "lsd"
gamma0 = 1.115
f0 = 6e-3
gamma = [0.5, 0.5, 0.5]
)"},
      {"m1-lindep-test1", "Full model under u = 25 + 5 cos(0.2 pi t): Wronskian and IE tests flag dependence",
       R"([run]
duration = 60
[truth]
model = "m1"
theta = [-2.582, -0.1808, 0.0046, 39.3543, -1.2610]
[signal]
kind = "sine"
offset = 25
amplitude = 5
frequency = 0.1
phase = 1.5707963267948966
[pipeline]
model = "m1"
lambda = 80
derivative = "dirty"
init = "zero"
[estimator]
kind = "lsd"
gamma0 = 24
f0 = 1e-5
gamma = [100, 100, 100, 100]
eta0 = [-1, 0.01, -0.001, -0.1]
[diagnostics]
wronskian = true
)"},
      {"m1-lindep-test2", "Full model under the three-harmonic square-wave approximation: dependence persists",
       R"([run]
duration = 60
[truth]
model = "m1"
theta = [-2.582, -0.1808, 0.0046, 39.3543, -1.2610]
[signal]
kind = "fourier"
offset = 25
amplitudes = [6.366197723675814, 2.122065907891938, 1.2732395447351628]
omegas = [0.6283185307179586, 1.8849555921538759, 3.141592653589793]
[pipeline]
model = "m1"
lambda = 80
derivative = "dirty"
init = "zero"
[estimator]
kind = "lsd"
gamma0 = 24
f0 = 1e-5
gamma = [100, 100, 100, 100]
eta0 = [-1, 0.01, -0.001, -0.1]
[diagnostics]
wronskian = true
)"},
  };
  return list;
}

inline std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : presets()) names.push_back(p.name);
  return names;
}

inline const PresetInfo& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  throw ConfigError("unknown preset '" + name + "'");
}

// Layers the named preset (if run.preset is set) under the given document.
inline ConfigDoc resolve_presets(const ConfigDoc& doc) {
  if (!doc.has("run.preset")) return doc;
  const std::string name = doc.string("run.preset", "");
  ConfigDoc base = ConfigDoc::parse(find_preset(name).config, "preset " + name);
  base.merge(doc);
  return base;
}

// ---------------------------------------------------------------- config -> RunConfig

inline RunConfig run_config_from(const ConfigDoc& raw) {
  const ConfigDoc doc = resolve_presets(raw);
  doc.validate(config_schema());
  RunConfig cfg;
  cfg.name = doc.string("run.name", doc.string("run.preset", "run"));
  const std::string mode = detail::lower(doc.string("run.mode", "synthesis"));
  if (mode == "synthesis") {
    cfg.mode = RunMode::Synthesis;
  } else if (mode == "replay") {
    cfg.mode = RunMode::Replay;
  } else {
    throw ConfigError("run.mode must be synthesis or replay");
  }
  cfg.dt = doc.number("run.dt", cfg.dt);
  cfg.duration = doc.number("run.duration", cfg.duration);
  cfg.seed = detail::to_seed(doc.number("run.seed", 1.0));
  cfg.output_dir = doc.string("run.output_dir", "");
  cfg.convergence_tol = doc.number("run.convergence_tol", cfg.convergence_tol);
  if (!(cfg.dt > 0.0)) throw ConfigError("run.dt must be positive");
  if (!(cfg.duration >= cfg.dt)) throw ConfigError("run.duration must be at least run.dt");
  if (!(cfg.convergence_tol > 0.0)) throw ConfigError("run.convergence_tol must be positive");

  // truth
  if (doc.has("truth.model")) {
    const ModelId id = detail::parse_model(doc.string("truth.model", ""));
    ModelSpec m;
    m.id = id;
    if (id == ModelId::M1 || id == ModelId::M4) {
      const auto th = doc.array("truth.theta", {});
      if (id == ModelId::M1) {
        if (th.size() != 5) throw ConfigError("truth.theta must hold theta1..theta5 for m1");
        m.params = ThetaFull{th[0], th[1], th[2], th[3], th[4]};
      } else {
        if (th.size() != 3) throw ConfigError("truth.theta must hold theta1, theta2, theta6 for m4");
        m.params = ThetaM4{th[0], th[1], th[2]};
      }
    } else {
      if (!doc.has("truth.e_oc") || !doc.has("truth.a") || !doc.has("truth.b"))
        throw ConfigError("truth.e_oc, truth.a and truth.b are required for m2/m3");
      m.params = ReducedParamsAB{doc.number("truth.e_oc", 0.0), doc.number("truth.a", 0.0),
                                 doc.number("truth.b", 0.0)};
    }
    cfg.truth = m;
  }

  // signal
  cfg.signal.duration = cfg.duration;
  const std::string kind = detail::lower(doc.string("signal.kind", "pulse"));
  if (kind == "constant") {
    cfg.signal.shape = ConstantSignal{doc.number("signal.value", 15.0)};
  } else if (kind == "pulse") {
    cfg.signal.shape = PulseTrain{doc.number("signal.low", 10.0), doc.number("signal.high", 20.0),
                                  doc.number("signal.frequency", 2.0), doc.boolean("signal.start_high", true)};
  } else if (kind == "sine") {
    cfg.signal.shape = SineSignal{doc.number("signal.offset", 25.0), doc.number("signal.amplitude", 5.0),
                                  doc.number("signal.frequency", 0.1), doc.number("signal.phase", 0.0)};
  } else if (kind == "fourier") {
    const auto amps = doc.array("signal.amplitudes", {});
    const auto omegas = doc.array("signal.omegas", {});
    if (amps.size() != omegas.size() || amps.empty())
      throw ConfigError("signal.amplitudes and signal.omegas must be non-empty and of equal length");
    FourierSum f;
    f.offset = doc.number("signal.offset", 25.0);
    for (std::size_t i = 0; i < amps.size(); ++i) f.terms.push_back({amps[i], omegas[i]});
    cfg.signal.shape = f;
  } else {
    throw ConfigError("signal.kind must be constant, pulse, sine or fourier");
  }
  cfg.shaping_cutoff = doc.number("signal.shaping_cutoff", 0.0);
  if (cfg.shaping_cutoff < 0.0) throw ConfigError("signal.shaping_cutoff must be non-negative");
  cfg.voltage_noise = doc.number("noise.voltage_std", 0.0);
  cfg.current_noise = doc.number("noise.current_std", 0.0);
  if (cfg.voltage_noise < 0.0 || cfg.current_noise < 0.0) throw ConfigError("noise levels must be non-negative");

  // replay
  cfg.input_csv = doc.string("replay.input", "");
  cfg.prefilter_cutoff = doc.number("replay.prefilter_cutoff", cfg.prefilter_cutoff);
  if (!(cfg.prefilter_cutoff > 0.0)) throw ConfigError("replay.prefilter_cutoff must be positive");
  if (cfg.mode == RunMode::Replay && cfg.input_csv.empty()) throw ConfigError("replay needs replay.input");
  if (cfg.mode == RunMode::Synthesis) {
    if (!cfg.input_csv.empty()) throw ConfigError("replay.input is set but run.mode is synthesis");
    if (!cfg.truth) throw ConfigError("synthesis needs a [truth] section");
    validate(cfg.signal);
    const double fmax = std::max(max_frequency(cfg.signal.shape), cfg.shaping_cutoff);
    if (fmax > 0.0 && !(cfg.dt < 1.0 / (20.0 * fmax)))
      throw ConfigError("run.dt too coarse: need dt < 1/(20 f_max) = " + csv::format(1.0 / (20.0 * fmax)));
  }

  // pipeline
  const std::string default_model = cfg.truth ? to_string(cfg.truth->id) : "m2";
  cfg.pipeline.kind = detail::parse_regressor(doc.string("pipeline.model", default_model));
  cfg.pipeline.lambda = doc.number("pipeline.lambda", 80.0);
  cfg.pipeline.tau = doc.number("pipeline.tau", 10.0 * cfg.dt);
  if (!(cfg.pipeline.lambda > 0.0) || !(cfg.pipeline.tau > 0.0))
    throw ConfigError("pipeline.lambda and pipeline.tau must be positive");
  const std::string deriv = detail::lower(doc.string("pipeline.derivative", "dirty"));
  if (deriv == "dirty") {
    cfg.pipeline.derivative = DerivativeSource::DirtyDerivative;
  } else if (deriv == "exact") {
    cfg.pipeline.derivative = DerivativeSource::Exact;
  } else {
    throw ConfigError("pipeline.derivative must be dirty or exact");
  }
  if (cfg.mode == RunMode::Replay && cfg.pipeline.derivative == DerivativeSource::Exact)
    throw ConfigError("pipeline.derivative = exact is unavailable for replayed data");
  const std::string init = detail::lower(doc.string("pipeline.init", "zero"));
  if (init == "zero") {
    cfg.pipeline.init = FilterInit::Zero;
  } else if (init == "consistent") {
    cfg.pipeline.init = FilterInit::Consistent;
  } else {
    throw ConfigError("pipeline.init must be zero or consistent");
  }
  double e_oc = 0.0;
  if (cfg.truth && std::holds_alternative<ReducedParamsAB>(cfg.truth->params))
    e_oc = std::get<ReducedParamsAB>(cfg.truth->params).e_oc;
  cfg.pipeline.e_oc = doc.number("pipeline.e_oc", e_oc);
  if ((cfg.pipeline.kind == RegressorKind::M2 || cfg.pipeline.kind == RegressorKind::M3) &&
      !(cfg.pipeline.e_oc > 0.0))
    throw ConfigError("pipeline.e_oc is required for m2/m3 regressions");
  if (doc.has("pipeline.omega")) {
    cfg.sine_omega = doc.number("pipeline.omega", 0.0);
  } else if (const auto* s = std::get_if<SineSignal>(&cfg.signal.shape); s && cfg.mode == RunMode::Synthesis) {
    cfg.sine_omega = 2.0 * std::numbers::pi * s->frequency;
  }

  // estimator
  const int p = regressor_dimension(cfg.pipeline.kind);
  const int q = cfg.pipeline.kind == RegressorKind::M1 ? 4 : (cfg.pipeline.kind == RegressorKind::Sine ? 5 : p);
  const std::string est = detail::lower(doc.string("estimator.kind", "lsd"));
  if (est == "lsd") {
    cfg.estimator = EstimatorKind::Lsd;
  } else if (est == "gradient") {
    cfg.estimator = EstimatorKind::Gradient;
  } else if (est == "batch") {
    cfg.estimator = EstimatorKind::Batch;
  } else if (est == "none") {
    cfg.estimator = EstimatorKind::None;
  } else {
    throw ConfigError("estimator.kind must be lsd, gradient, batch or none");
  }
  if (cfg.estimator == EstimatorKind::Gradient && p != q)
    throw ConfigError("the gradient estimator needs a linear regression (m2, m3 or m4)");
  cfg.lsd.gamma0 = doc.number("estimator.gamma0", 24.0);
  cfg.lsd.f0 = doc.number("estimator.f0", 1e-5);
  const auto gamma = doc.array("estimator.gamma", std::vector<double>(static_cast<std::size_t>(q), 1.0));
  if (gamma.size() != static_cast<std::size_t>(q))
    throw ConfigError("estimator.gamma must have " + std::to_string(q) + " entries");
  cfg.lsd.gamma = detail::to_vec(gamma);
  cfg.gradient_gamma = cfg.lsd.gamma;
  if ((cfg.lsd.gamma.array() <= 0.0).any()) throw ConfigError("estimator.gamma entries must be positive");
  const auto w0 = doc.array("estimator.w0", std::vector<double>(static_cast<std::size_t>(p), 0.0));
  if (w0.size() != static_cast<std::size_t>(p)) throw ConfigError("estimator.w0 must have " + std::to_string(p) + " entries");
  cfg.w0 = detail::to_vec(w0);
  // the sinusoidal-current map divides by eta_2
  const std::vector<double> eta_default(static_cast<std::size_t>(q), cfg.pipeline.kind == RegressorKind::Sine ? 1.0 : 0.0);
  const auto eta0 = doc.array("estimator.eta0", eta_default);
  if (eta0.size() != static_cast<std::size_t>(q)) throw ConfigError("estimator.eta0 must have " + std::to_string(q) + " entries");
  cfg.eta0 = detail::to_vec(eta0);
  const std::string gmode = detail::lower(doc.string("estimator.gradient_mode", "diagonal"));
  if (gmode == "diagonal") {
    cfg.gradient_mode = GradientGainMode::Diagonal;
  } else if (gmode == "normalized") {
    cfg.gradient_mode = GradientGainMode::Normalized;
  } else {
    throw ConfigError("estimator.gradient_mode must be diagonal or normalized");
  }
  cfg.gradient_gain = doc.number("estimator.gradient_gain", 1.0);
  cfg.calibration_window = doc.number("estimator.calibration_window", 1.0);
  if (!(cfg.gradient_gain > 0.0) || !(cfg.calibration_window > 0.0))
    throw ConfigError("estimator.gradient_gain and estimator.calibration_window must be positive");

  // diagnostics
  cfg.excitation = doc.boolean("diagnostics.excitation", true);
  cfg.ie_window = doc.number("diagnostics.ie_window", 0.0);
  cfg.pe_window = doc.number("diagnostics.pe_window", 1.0);
  cfg.excitation_threshold = doc.number("diagnostics.threshold", 1e-6);
  cfg.wronskian = doc.boolean("diagnostics.wronskian", false);
  const double stride = doc.number("diagnostics.wronskian_stride", 1.0);
  if (!(stride >= 1.0) || stride != std::floor(stride)) throw ConfigError("diagnostics.wronskian_stride must be a positive integer");
  cfg.wronskian_stride = static_cast<std::size_t>(stride);
  if (cfg.ie_window < 0.0 || !(cfg.pe_window > 0.0) || !(cfg.excitation_threshold > 0.0))
    throw ConfigError("invalid diagnostics windows or threshold");

  // output
  cfg.traces = doc.boolean("output.traces", true);
  cfg.debug = doc.boolean("output.debug", false);
  cfg.curve_min = doc.number("output.curve_min", 1.0);
  cfg.curve_max = doc.number("output.curve_max", 30.0);
  const double pts = doc.number("output.curve_points", 291.0);
  if (!(pts >= 2.0) || pts != std::floor(pts)) throw ConfigError("output.curve_points must be an integer >= 2");
  cfg.curve_points = static_cast<std::size_t>(pts);
  if (!(cfg.curve_max > cfg.curve_min) || !(cfg.curve_min > 0.0)) throw ConfigError("output curve range must be positive and non-empty");
  return cfg;
}

inline RunConfig preset_config(const std::string& name) {
  ConfigDoc doc;
  doc.set("run.preset", name);
  return run_config_from(doc);
}

// ---------------------------------------------------------------- parameter plumbing

inline ParamMap param_map_for(RegressorKind kind) {
  switch (kind) {
    case RegressorKind::M1: return make_g_param_map();
    case RegressorKind::Sine: return make_sine_param_map();
    default: return make_linear_param_map(regressor_dimension(kind));
  }
}

inline std::vector<std::string> eta_names(RegressorKind kind) {
  switch (kind) {
    case RegressorKind::M1: return {"theta1", "theta3", "theta2*theta3", "theta2-theta3*theta4"};
    case RegressorKind::M2: return {"ln_a", "b"};
    case RegressorKind::M3: return {"b"};
    case RegressorKind::M4: return {"theta6", "theta1", "theta2"};
    case RegressorKind::Sine: return {"theta1", "theta2", "theta3*theta4", "theta2*theta3", "theta6"};
  }
  return {};
}

// Image of the generator in the regression's parameter space, when the
// generator belongs to that model class.
inline std::optional<Vec> truth_eta(const ModelSpec& truth, RegressorKind kind, std::optional<double> omega) {
  switch (kind) {
    case RegressorKind::M1:
      if (truth.id != ModelId::M1) return std::nullopt;
      {
        const auto& th = std::get<ThetaFull>(truth.params);
        Vec t(4);
        t << th.theta1, th.theta2, th.theta3, th.theta4;
        return d_inverse(t);
      }
    case RegressorKind::M2:
      if (truth.id != ModelId::M2) return std::nullopt;
      return regression_image_m2(std::get<ReducedParamsAB>(truth.params));
    case RegressorKind::M3:
      if (truth.id != ModelId::M3) return std::nullopt;
      return regression_image_m3(std::get<ReducedParamsAB>(truth.params));
    case RegressorKind::M4:
      if (truth.id != ModelId::M4) return std::nullopt;
      return regression_image_m4(std::get<ThetaM4>(truth.params));
    case RegressorKind::Sine:
      if (truth.id != ModelId::M1 || !omega) return std::nullopt;
      {
        const auto& th = std::get<ThetaFull>(truth.params);
        Vec t(4);
        t << th.theta1, th.theta2, th.theta3, th.theta4;
        return sine_eta(t, th.theta3 * *omega * *omega);
      }
  }
  return std::nullopt;
}

inline std::map<std::string, double> physical_truth(const ModelSpec& m) {
  switch (m.id) {
    case ModelId::M1: {
      const auto& t = std::get<ThetaFull>(m.params);
      return {{"theta1", t.theta1}, {"theta2", t.theta2}, {"theta3", t.theta3}, {"theta4", t.theta4}, {"theta5", t.theta5}};
    }
    case ModelId::M2:
    case ModelId::M3: {
      const auto& p = std::get<ReducedParamsAB>(m.params);
      return {{"e_oc", p.e_oc}, {"a", p.a}, {"b", p.b}};
    }
    case ModelId::M4: {
      const auto& p = std::get<ThetaM4>(m.params);
      return {{"theta1", p.theta1}, {"theta2", p.theta2}, {"theta6", p.theta6}};
    }
  }
  return {};
}

// Physical parameters from an estimate. Algebraic parameters (theta5 of the
// full model, a of M3) are certainty-equivalent averages over the last tenth
// of the data.
inline std::map<std::string, double> physical_estimates(RegressorKind kind, const Vec& eta, double e_oc,
                                                        const Trace& u, const Trace& y) {
  const std::size_t n = u.size();
  const std::size_t from = n - std::max<std::size_t>(1, n / 10);
  switch (kind) {
    case RegressorKind::M1: {
      const Vec th = d_map(eta);
      double t5 = 0.0;
      for (std::size_t k = from; k < n; ++k) t5 += estimate_theta5(th, u[k], y[k]);
      t5 /= static_cast<double>(n - from);
      return {{"theta1", th(0)}, {"theta2", th(1)}, {"theta3", th(2)}, {"theta4", th(3)}, {"theta5", t5}};
    }
    case RegressorKind::M2:
      return {{"e_oc", e_oc}, {"a", std::exp(eta(0))}, {"b", eta(1)}};
    case RegressorKind::M3: {
      double a = 0.0;
      for (std::size_t k = from; k < n; ++k) a += estimate_a_m3(e_oc, u[k], y[k], eta(0));
      return {{"e_oc", e_oc}, {"a", a / static_cast<double>(n - from)}, {"b", eta(0)}};
    }
    case RegressorKind::M4:
      return {{"theta1", eta(1)}, {"theta2", eta(2)}, {"theta6", eta(0)}};
    case RegressorKind::Sine: {
      const Vec th = sine_theta(eta);
      return {{"theta1", th(0)}, {"theta2", th(1)}, {"theta3", th(2)}, {"theta4", th(3)}, {"theta6", th(4)}};
    }
  }
  return {};
}

// Model whose polarization curve the physical estimates describe.
inline std::optional<ModelSpec> estimated_model(RegressorKind kind, const std::map<std::string, double>& est) {
  const auto get = [&est](const char* k) { return est.at(k); };
  switch (kind) {
    case RegressorKind::M1:
      return ModelSpec{ModelId::M1, ThetaFull{get("theta1"), get("theta2"), get("theta3"), get("theta4"), get("theta5")}};
    case RegressorKind::M2: return ModelSpec{ModelId::M2, ReducedParamsAB{get("e_oc"), get("a"), get("b")}};
    case RegressorKind::M3: return ModelSpec{ModelId::M3, ReducedParamsAB{get("e_oc"), get("a"), get("b")}};
    case RegressorKind::M4: return ModelSpec{ModelId::M4, ThetaM4{get("theta1"), get("theta2"), get("theta6")}};
    case RegressorKind::Sine: return std::nullopt;  // theta5 is not identified by this construction
  }
  return std::nullopt;
}

// First time after which the error stays within tol to the end of the run.
inline std::optional<double> convergence_time(const std::vector<double>& times, const std::vector<double>& error,
                                              double tol) {
  if (error.empty() || !(error.back() < tol)) return std::nullopt;
  std::size_t k = error.size();
  while (k > 0 && error[k - 1] < tol) --k;
  return times[k];
}

// ---------------------------------------------------------------- data acquisition

struct Channels {
  Trace u;
  Trace u_dot;  // empty when no exact derivative is available
  Trace y;
};

inline Channels synthesize_channels(const RunConfig& cfg) {
  if (!cfg.truth) throw ConfigError("synthesis needs a truth model");
  SignalSpec spec = cfg.signal;
  spec.duration = cfg.duration;
  const Trace commanded = generate_signal(spec, cfg.dt);
  Trace u, u_dot;
  if (cfg.shaping_cutoff > 0.0) {
    std::tie(u, u_dot) = shape_current(commanded, cfg.shaping_cutoff);
  } else {
    u = commanded;
    u_dot = generate_derivative(spec, cfg.dt);
  }
  Channels ch;
  ch.y = synthesize(*cfg.truth, u, cfg.voltage_noise, cfg.seed);
  ch.u = add_noise(u, cfg.current_noise, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  ch.u_dot = cfg.current_noise > 0.0 ? Trace() : u_dot;
  return ch;
}

struct RawRecording {
  std::vector<double> t, i, v;
};

inline RawRecording read_recording(const std::string& path) {
  const csv::Table table = csv::read(path);
  if (table.header != std::vector<std::string>{"t", "i_fc", "v_fc"})
    throw DomainError(path + ": schema violation, expected header t,i_fc,v_fc");
  RawRecording rec;
  for (const auto& row : table.rows) {
    if (!rec.t.empty() && !(row[0] > rec.t.back()))
      throw DomainError("non-monotone time at t=" + csv::format(row[0]));
    rec.t.push_back(row[0]);
    rec.i.push_back(row[1]);
    rec.v.push_back(row[2]);
  }
  if (rec.t.size() < 2) throw DomainError(path + ": need at least two samples");
  return rec;
}

// Linear interpolation onto t_0 + k dt.
inline Trace resample(const std::vector<double>& t, const std::vector<double>& v, double dt) {
  if (t.size() != v.size() || t.size() < 2) throw DomainError("resample: need matching series of length >= 2");
  const double t0 = t.front();
  const auto n = static_cast<std::size_t>(std::floor((t.back() - t0) / dt + 1e-9)) + 1;
  std::vector<double> out(n);
  std::size_t j = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double tk = t0 + static_cast<double>(k) * dt;
    while (j + 2 < t.size() && t[j + 1] <= tk) ++j;
    const double s = std::clamp((tk - t[j]) / (t[j + 1] - t[j]), 0.0, 1.0);
    out[k] = v[j] + s * (v[j + 1] - v[j]);
  }
  return Trace(dt, t0, std::move(out));
}

// Second-order low-pass (two cascaded first-order sections) starting at rest
// on the first sample. Cutoffs at or above Nyquist return the input.
inline Trace prefilter(const Trace& in, double cutoff_hz) {
  if (!(cutoff_hz > 0.0)) throw DomainError("prefilter: cutoff must be positive");
  if (cutoff_hz >= 0.5 / in.dt() || in.empty()) return in;
  const double l = 2.0 * std::numbers::pi * cutoff_hz;
  auto f = LtiFilter::cascade(LtiFilter::low_pass(l), LtiFilter::low_pass(l));
  f.settle(in[0]);
  return filter_trace(f, in);
}

inline Channels replay_channels(const RunConfig& cfg) {
  const RawRecording rec = read_recording(cfg.input_csv);
  Channels ch;
  ch.u = prefilter(resample(rec.t, rec.i, cfg.dt), cfg.prefilter_cutoff);
  ch.y = prefilter(resample(rec.t, rec.v, cfg.dt), cfg.prefilter_cutoff);
  return ch;
}

// ---------------------------------------------------------------- outputs

inline void write_gnuplot_script(const std::string& dir, const RunReport& rep, bool have_curve) {
  std::ofstream gp(dir + "/plots.gp", std::ios::binary);
  if (!gp) throw DomainError("cannot write " + dir + "/plots.gp");
  gp << "# gnuplot -p plots.gp\n"
     << "set datafile separator ','\n"
     << "set key autotitle columnhead\n"
     << "set grid\n\n"
     << "set terminal pngcairo size 900,600\n\n"
     << "set output 'estimates.png'\n"
     << "set title 'estimates'\nset xlabel 't [s]'\n"
     << "plot for [c=2:" << (1 + rep.eta_hat.size()) << "] 'estimates.csv' using 1:c with lines\n\n";
  if (have_curve) {
    gp << "set output 'curve.png'\n"
       << "set title 'polarization curve'\nset xlabel 'i_fc [A]'\nset ylabel 'v_fc [V]'\n"
       << "plot for [c=2:*] 'curve.csv' using 1:c with lines\n\n"
       << "unset ylabel\n";
  }
  if (rep.wronskian) {
    gp << "set output 'wronskian.png'\n"
       << "set title 'normalized Wronskian determinant'\nset xlabel 't [s]'\nset logscale y\n"
       << "plot 'wronskian.csv' using 1:(abs($3)) with lines title '|det| normalized'\n"
       << "unset logscale y\n\n";
  }
  if (rep.pe) {
    gp << "set output 'excitation.png'\n"
       << "set title 'sliding-window Gram minimum eigenvalue'\nset xlabel 'window start [s]'\nset logscale y\n"
       << "plot 'excitation.csv' using 1:2 with lines\n"
       << "unset logscale y\n";
  }
}

inline nlohmann::ordered_json vec_json(const Vec& v) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

inline nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json report_json(const RunReport& rep) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["name"] = rep.name;
  j["mode"] = to_string(rep.mode);
  j["regressor"] = to_string(rep.regressor);
  j["estimator"] = to_string(rep.estimator);
  j["map"] = rep.map_name;
  j["samples"] = rep.samples;
  j["t_end"] = rep.t_end;
  const auto names = eta_names(rep.regressor);
  nlohmann::ordered_json eta;
  for (int i = 0; i < rep.eta_hat.size(); ++i) eta[names[static_cast<std::size_t>(i)]] = number_or_null(rep.eta_hat(i));
  j["eta_hat"] = eta;
  if (rep.eta_true.size() > 0) {
    nlohmann::ordered_json t;
    for (int i = 0; i < rep.eta_true.size(); ++i) t[names[static_cast<std::size_t>(i)]] = rep.eta_true(i);
    j["eta_true"] = t;
  } else {
    j["eta_true"] = nullptr;
  }
  j["estimates"] = rep.estimates;
  if (!rep.physical_note.empty()) j["estimates_note"] = rep.physical_note;
  j["truth"] = rep.truth.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(rep.truth);
  j["relative_error"] = {{"norm", number_or_null(rep.rel_error_norm)}, {"max", number_or_null(rep.rel_error_max)}};
  j["convergence_time"] = rep.convergence_time ? nlohmann::ordered_json(*rep.convergence_time) : nlohmann::ordered_json(nullptr);
  j["identity_residual"] = number_or_null(rep.identity_residual);
  if (rep.estimator == EstimatorKind::None) {
    j["residual"] = nullptr;
  } else {
    j["residual"] = {{"rms", rep.residual_rms}, {"max_abs", rep.residual_max}};
  }
  nlohmann::ordered_json batch;
  batch["ok"] = rep.batch_ok;
  if (rep.batch_ok) {
    batch["eta"] = vec_json(rep.batch_eta);
  } else {
    batch["error"] = rep.batch_error;
  }
  batch["gram_min_eigenvalue"] = rep.batch_min_eigenvalue;
  batch["gram_max_eigenvalue"] = rep.batch_max_eigenvalue;
  j["batch_ls"] = batch;
  nlohmann::ordered_json diag;
  if (rep.ie) {
    diag["ie"] = {{"t_start", rep.ie->t_start},
                  {"t_end", rep.ie->t_end},
                  {"min_eigenvalue", rep.ie->min_eigenvalue},
                  {"max_eigenvalue", rep.ie->max_eigenvalue},
                  {"ratio", rep.ie->ratio()},
                  {"threshold", rep.ie->threshold},
                  {"verdict", rep.ie->pass ? "IE-pass" : "IE-fail"}};
  }
  if (rep.pe) {
    diag["pe"] = {{"window", rep.pe->window},
                  {"windows", rep.pe->t_window.size()},
                  {"worst_min_eigenvalue", rep.pe->worst_min_eigenvalue},
                  {"threshold", rep.pe->threshold},
                  {"verdict", rep.pe->pass ? "PE-pass" : "PE-fail"}};
  }
  if (rep.wronskian) {
    diag["wronskian"] = {{"settle_time", rep.wronskian->settle_time},
                         {"transient_peak", rep.wronskian->transient_peak},
                         {"max_after_settle", rep.wronskian->max_after_settle},
                         {"ratio", rep.wronskian->ratio},
                         {"raw_peak", rep.wronskian->raw_peak}};
  }
  j["diagnostics"] = diag;
  j["files"] = rep.files;
  return j;
}

// ---------------------------------------------------------------- run

namespace detail {

inline void fill_diagnostics(const RunConfig& cfg, const std::vector<RegressorSample>& stream, RunReport& rep,
                             std::optional<WronskianSeries>& wseries) {
  if (cfg.excitation) {
    const double t_c = cfg.ie_window > 0.0 ? cfg.ie_window : stream.back().t - stream.front().t;
    rep.ie = excitation_ie(stream, t_c, cfg.excitation_threshold);
    if (stream.back().t - stream.front().t > cfg.pe_window + cfg.dt)
      rep.pe = excitation_pe(stream, cfg.pe_window, cfg.excitation_threshold);
  }
  if (cfg.wronskian) {
    wseries = wronskian_determinant(stream, cfg.dt, cfg.wronskian_stride);
    WronskianSummary w;
    w.settle_time = stream.front().t + 5.0 / cfg.pipeline.lambda;
    w.transient_peak = wseries->transient_peak;
    w.max_after_settle = wseries->max_normalized_after(w.settle_time);
    w.ratio = w.transient_peak > 0.0 ? w.max_after_settle / w.transient_peak : 0.0;
    w.raw_peak = wseries->raw_peak;
    rep.wronskian = w;
  }
}

inline Mat gram_mean(const std::vector<RegressorSample>& stream, double window) {
  const auto rep = excitation_ie(stream, window, 1e-12);
  const double span = rep.t_end - rep.t_start;
  if (!(span > 0.0)) throw ExcitationError("calibration window holds fewer than two samples");
  if (!rep.pass) throw ExcitationError("regressor not IE over the calibration window");
  return rep.gram / span;
}

}  // namespace detail

namespace detail {

inline RunReport run_channels_impl(const RunConfig& cfg, const Channels& ch) {
  RunReport rep;
  rep.name = cfg.name;
  rep.mode = cfg.mode;
  rep.regressor = cfg.pipeline.kind;
  rep.estimator = cfg.estimator;

  auto pipe = make_pipeline(cfg.pipeline);
  const std::vector<RegressorSample> stream = run_pipeline(*pipe, ch.u, ch.u_dot, ch.y);
  if (stream.size() < 2) throw DomainError("run: fewer than two samples");
  rep.samples = stream.size();
  rep.t_end = stream.back().t;

  const ParamMap map = param_map_for(cfg.pipeline.kind);
  rep.map_name = map.name;
  std::optional<Vec> eta_star;
  if (cfg.truth) {
    eta_star = truth_eta(*cfg.truth, cfg.pipeline.kind, cfg.sine_omega);
    rep.truth = physical_truth(*cfg.truth);
  }
  if (eta_star) {
    rep.eta_true = *eta_star;
    const Vec w_star = map.eval(*eta_star);
    const double settle = stream.front().t + 5.0 / cfg.pipeline.lambda;
    double num = 0.0, den = 0.0;
    for (const auto& s : stream) {
      if (s.t < settle) continue;
      num = std::max(num, std::abs(s.Y - s.phi.dot(w_star)));
      den = std::max(den, std::abs(s.Y));
    }
    rep.identity_residual = den > 0.0 ? num / den : num;
  }

  std::vector<Vec> w_history;
  std::vector<double> delta_history;
  const auto record = [&](double t, const Vec& eta) {
    rep.times.push_back(t);
    rep.eta_history.push_back(eta);
    if (eta_star) rep.error_history.push_back((eta - *eta_star).norm() / eta_star->norm());
  };
  rep.times.reserve(stream.size());
  rep.eta_history.reserve(stream.size());

  switch (cfg.estimator) {
    case EstimatorKind::Lsd: {
      LsdEstimator est(map, cfg.lsd, cfg.w0, cfg.eta0);
      for (const auto& s : stream) {
        est.update(s, cfg.dt);
        record(s.t, est.eta_hat());
        if (cfg.debug) {
          w_history.push_back(est.w_hat());
          delta_history.push_back(est.delta());
        }
      }
      rep.eta_hat = est.eta_hat();
      rep.w_hat = est.w_hat();
      break;
    }
    case EstimatorKind::Gradient: {
      Mat gamma;
      if (cfg.gradient_mode == GradientGainMode::Normalized) {
        gamma = cfg.gradient_gain * detail::gram_mean(stream, cfg.calibration_window).inverse();
        gamma = 0.5 * (gamma + gamma.transpose());
      } else {
        gamma = cfg.gradient_gamma.asDiagonal();
      }
      GradientEstimator est(gamma, cfg.eta0);
      for (const auto& s : stream) {
        est.update(s, cfg.dt);
        record(s.t, est.eta_hat());
      }
      rep.eta_hat = est.eta_hat();
      break;
    }
    case EstimatorKind::Batch:
    case EstimatorKind::None:
      break;
  }

  // batch oracle; T W = eta for every map used here
  try {
    const BatchLsResult b = batch_ls(stream);
    rep.batch_ok = true;
    rep.batch_eta = map.mixing * b.w;
    rep.batch_min_eigenvalue = b.min_eigenvalue;
    rep.batch_max_eigenvalue = b.max_eigenvalue;
  } catch (const ExcitationError& e) {
    rep.batch_error = e.what();
    const auto range = linalg::symmetric_eigen_range(excitation_ie(stream, rep.t_end - stream.front().t, 1e-12).gram);
    rep.batch_min_eigenvalue = range(0);
    rep.batch_max_eigenvalue = range(1);
  }
  if (cfg.estimator == EstimatorKind::Batch) {
    if (!rep.batch_ok) throw ExcitationError("regressor not IE: " + rep.batch_error);
    rep.eta_hat = rep.batch_eta;
    for (const auto& s : stream) record(s.t, rep.eta_hat);
  }

  if (cfg.estimator != EstimatorKind::None) {
    if (eta_star) {
      rep.rel_error_norm = (rep.eta_hat - *eta_star).norm() / eta_star->norm();
      rep.rel_error_max = ((rep.eta_hat - *eta_star).cwiseQuotient(*eta_star)).cwiseAbs().maxCoeff();
      rep.convergence_time = convergence_time(rep.times, rep.error_history, cfg.convergence_tol);
    }
    // residual of the final estimate over the second half
    const Vec w = map.eval(rep.eta_hat);
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t k = stream.size() / 2; k < stream.size(); ++k) {
      const double r = stream[k].Y - stream[k].phi.dot(w);
      sq += r * r;
      rep.residual_max = std::max(rep.residual_max, std::abs(r));
      ++n;
    }
    rep.residual_rms = std::sqrt(sq / static_cast<double>(n));
    try {
      rep.estimates = physical_estimates(cfg.pipeline.kind, rep.eta_hat, cfg.pipeline.e_oc, ch.u, ch.y);
    } catch (const DomainError& e) {
      rep.physical_note = e.what();
    }
  }

  std::optional<WronskianSeries> wseries;
  detail::fill_diagnostics(cfg, stream, rep, wseries);

  if (cfg.output_dir.empty()) return rep;

  // ---- artifacts
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const auto path = [&](const std::string& f) { return (fs::path(cfg.output_dir) / f).string(); };
  if (cfg.traces) {
    csv::Table sig{{"t", "i_fc", "v_fc"}, {}};
    sig.rows.reserve(ch.u.size());
    for (std::size_t k = 0; k < ch.u.size(); ++k) sig.rows.push_back({ch.u.time(k), ch.u[k], ch.y[k]});
    csv::write(path("signals.csv"), sig);
    rep.files.push_back("signals.csv");
    csv::write(path("regressor.csv"), regressor_table(stream));
    rep.files.push_back("regressor.csv");
    if (cfg.estimator != EstimatorKind::None) {
      csv::Table est{{"t"}, {}};
      for (int i = 1; i <= rep.eta_hat.size(); ++i) est.header.push_back("eta_" + std::to_string(i));
      if (cfg.debug && !w_history.empty()) {
        for (int i = 1; i <= map.p; ++i) est.header.push_back("W_" + std::to_string(i));
        est.header.push_back("Delta");
      }
      est.rows.reserve(rep.times.size());
      for (std::size_t k = 0; k < rep.times.size(); ++k) {
        std::vector<double> row{rep.times[k]};
        for (int i = 0; i < rep.eta_history[k].size(); ++i) row.push_back(rep.eta_history[k](i));
        if (cfg.debug && !w_history.empty()) {
          for (int i = 0; i < map.p; ++i) row.push_back(w_history[k](i));
          row.push_back(delta_history[k]);
        }
        est.rows.push_back(std::move(row));
      }
      csv::write(path("estimates.csv"), est);
      rep.files.push_back("estimates.csv");
    }
  }
  if (rep.pe) {
    csv::Table t{{"t_window", "min_eig"}, {}};
    for (std::size_t k = 0; k < rep.pe->t_window.size(); ++k) t.rows.push_back({rep.pe->t_window[k], rep.pe->min_eigenvalue[k]});
    csv::write(path("excitation.csv"), t);
    rep.files.push_back("excitation.csv");
  }
  if (wseries) {
    csv::Table t{{"t", "det", "det_normalized"}, {}};
    for (std::size_t k = 0; k < wseries->times.size(); ++k)
      t.rows.push_back({wseries->times[k], wseries->det[k], wseries->det_normalized[k]});
    csv::write(path("wronskian.csv"), t);
    rep.files.push_back("wronskian.csv");
  }
  bool have_curve = false;
  {
    const auto est_model = rep.estimates.empty() ? std::nullopt : estimated_model(cfg.pipeline.kind, rep.estimates);
    if (cfg.truth || est_model) {
      csv::Table t{{"i"}, {}};
      if (cfg.truth) t.header.push_back("v_true");
      if (est_model) t.header.push_back("v_est");
      for (std::size_t k = 0; k < cfg.curve_points; ++k) {
        const double i = cfg.curve_min + (cfg.curve_max - cfg.curve_min) * static_cast<double>(k) /
                                             static_cast<double>(cfg.curve_points - 1);
        std::vector<double> row{i};
        if (cfg.truth) row.push_back(eval_model(*cfg.truth, i));
        if (est_model) row.push_back(eval_model(*est_model, i));
        t.rows.push_back(std::move(row));
      }
      csv::write(path("curve.csv"), t);
      rep.files.push_back("curve.csv");
      have_curve = true;
    }
  }
  write_gnuplot_script(cfg.output_dir, rep, have_curve);
  rep.files.push_back("plots.gp");
  rep.files.push_back("report.json");
  std::ofstream js(path("report.json"), std::ios::binary);
  if (!js) throw DomainError("cannot write " + path("report.json"));
  js << report_json(rep).dump(2) << '\n';
  return rep;
}

}  // namespace detail

// Runs the configured experiment on already-acquired channels. Errors are
// rethrown with the run name and regression model prepended.
inline RunReport run_channels(const RunConfig& cfg, const Channels& ch) {
  const std::string ctx = "run '" + cfg.name + "', model " + to_string(cfg.pipeline.kind) + ": ";
  try {
    return detail::run_channels_impl(cfg, ch);
  } catch (const DivergenceError& e) {
    throw DivergenceError(ctx + e.what(), e.snapshot());
  } catch (const ConfigError& e) {
    throw ConfigError(ctx + e.what());
  } catch (const ExcitationError& e) {
    throw ExcitationError(ctx + e.what());
  } catch (const DomainError& e) {
    throw DomainError(ctx + e.what());
  }
}

inline RunReport run(const RunConfig& cfg) {
  if (cfg.mode != RunMode::Synthesis) throw ConfigError("run: config is not a synthesis run");
  return run_channels(cfg, synthesize_channels(cfg));
}

inline RunReport replay(const std::string& csv_path, RunConfig cfg) {
  cfg.mode = RunMode::Replay;
  cfg.input_csv = csv_path;
  if (cfg.pipeline.derivative == DerivativeSource::Exact)
    throw ConfigError("pipeline.derivative = exact is unavailable for replayed data");
  return run_channels(cfg, replay_channels(cfg));
}

inline RunReport execute(const RunConfig& cfg) {
  return cfg.mode == RunMode::Synthesis ? run(cfg) : replay(cfg.input_csv, cfg);
}

// Independent runs on a pool of `jobs` threads. Results keep the input
// order; a failed run stores its exception.
struct RunOutcome {
  std::optional<RunReport> report;
  std::exception_ptr error;
};

inline std::vector<RunOutcome> run_many(const std::vector<RunConfig>& configs, unsigned jobs) {
  std::vector<RunOutcome> out(configs.size());
  std::size_t next = 0;
  std::mutex m;
  const auto worker = [&] {
    for (;;) {
      std::size_t k;
      {
        std::lock_guard<std::mutex> lock(m);
        if (next >= configs.size()) return;
        k = next++;
      }
      try {
        out[k].report = execute(configs[k]);
      } catch (...) {
        out[k].error = std::current_exception();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(configs.size())));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

// ---------------------------------------------------------------- static fits and curve comparison

namespace detail {

inline std::vector<RegressorSample> sweep_samples(const CurveSweep& s, const std::function<RegressorSample(double, double)>& f) {
  std::vector<RegressorSample> out;
  out.reserve(s.current.size());
  for (std::size_t k = 0; k < s.current.size(); ++k) out.push_back(f(s.current[k], s.voltage[k]));
  return out;
}

}  // namespace detail

// ln(E_oc - v) = ln a + b i
inline ReducedParamsAB fit_m2(const CurveSweep& s, double e_oc) {
  const auto samples = detail::sweep_samples(s, [e_oc](double i, double v) {
    if (!(e_oc - v > 0.0)) throw DomainError("fit: E_oc dominance violated");
    RegressorSample r;
    r.Y = std::log(e_oc - v);
    r.phi.resize(2);
    r.phi << 1.0, i;
    return r;
  });
  const Vec w = batch_ls(samples).w;
  return {e_oc, std::exp(w(0)), w(1)};
}

// ln(E_oc - v) = ln a + b ln i
inline ReducedParamsAB fit_m3(const CurveSweep& s, double e_oc) {
  const auto samples = detail::sweep_samples(s, [e_oc](double i, double v) {
    if (!(e_oc - v > 0.0)) throw DomainError("fit: E_oc dominance violated");
    check_current(i);
    RegressorSample r;
    r.Y = std::log(e_oc - v);
    r.phi.resize(2);
    r.phi << 1.0, std::log(i);
    return r;
  });
  const Vec w = batch_ls(samples).w;
  return {e_oc, std::exp(w(0)), w(1)};
}

// v = theta6 + theta1 ln i + theta2 i
inline ThetaM4 fit_m4(const CurveSweep& s) {
  const auto samples = detail::sweep_samples(s, [](double i, double v) {
    check_current(i);
    RegressorSample r;
    r.Y = v;
    r.phi.resize(3);
    r.phi << 1.0, std::log(i), i;
    return r;
  });
  const Vec w = batch_ls(samples).w;
  return {w(1), w(2), w(0)};
}

struct CurveErrorTable {
  std::vector<std::pair<double, double>> intervals;
  std::vector<std::string> models;
  std::vector<std::vector<double>> max_abs_error;  // [model][interval]; last column is the full range

  double at(const std::string& model, std::size_t interval) const {
    for (std::size_t m = 0; m < models.size(); ++m)
      if (models[m] == model) return max_abs_error[m][interval];
    throw DomainError("compare: unknown model '" + model + "'");
  }
  double full(const std::string& model) const { return at(model, intervals.size()); }
};

inline std::vector<std::pair<double, double>> default_intervals() { return {{1.0, 10.0}, {10.0, 20.0}, {20.0, 30.0}}; }

// Per-interval max |v_est - v_true|, plus a final column over the whole grid.
inline CurveErrorTable compare_curves(const CurveSweep& truth,
                                      const std::vector<std::pair<std::string, CurveSweep>>& estimated,
                                      std::vector<std::pair<double, double>> intervals = default_intervals()) {
  CurveErrorTable table;
  table.intervals = std::move(intervals);
  for (const auto& [name, curve] : estimated) {
    if (curve.current.size() != truth.current.size()) throw DomainError("compare: grid mismatch for " + name);
    for (std::size_t k = 0; k < curve.current.size(); ++k)
      if (std::abs(curve.current[k] - truth.current[k]) > 1e-12 * std::max(1.0, std::abs(truth.current[k])))
        throw DomainError("compare: grid mismatch for " + name);
    std::vector<double> row(table.intervals.size() + 1, 0.0);
    for (std::size_t k = 0; k < curve.current.size(); ++k) {
      const double i = truth.current[k];
      const double e = std::abs(curve.voltage[k] - truth.voltage[k]);
      for (std::size_t j = 0; j < table.intervals.size(); ++j)
        if (i >= table.intervals[j].first - 1e-12 && i <= table.intervals[j].second + 1e-12) row[j] = std::max(row[j], e);
      row.back() = std::max(row.back(), e);
    }
    table.models.push_back(name);
    table.max_abs_error.push_back(std::move(row));
  }
  return table;
}

inline csv::Table curve_table_csv(const CurveErrorTable& t) {
  csv::Table out{{"model_index"}, {}};
  for (const auto& [lo, hi] : t.intervals) out.header.push_back("max_err_" + csv::format(lo) + "_" + csv::format(hi));
  out.header.push_back("max_err_full");
  for (std::size_t m = 0; m < t.models.size(); ++m) {
    std::vector<double> row{static_cast<double>(m)};
    row.insert(row.end(), t.max_abs_error[m].begin(), t.max_abs_error[m].end());
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace pemfc
