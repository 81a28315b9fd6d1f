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


// pemfc_cli: command-line front end over the harness.
//
// exit 0 success, 1 domain/config error, 2 estimator divergence. Errors are
// written to stderr as a single JSON object.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pemfc.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::string preset;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "TOML-style config file");
  cmd->add_option("-p,--preset", c.preset, "start from a named preset");
  cmd->add_option("-s,--set", c.sets, "override, section.key=value (repeatable)");
  cmd->add_option("-o,--out", c.out, "output directory");
  cmd->add_option("--seed", c.seed, "RNG seed");
}

pemfc::ConfigDoc load_doc(const Common& c) {
  pemfc::ConfigDoc doc;
  if (!c.preset.empty()) doc.set("run.preset", c.preset);
  if (!c.config.empty()) doc.merge(pemfc::ConfigDoc::load(c.config));
  for (const auto& s : c.sets) doc.apply_override(s);
  if (c.seed) doc.set("run.seed", static_cast<double>(*c.seed));
  if (!c.out.empty()) doc.set("run.output_dir", c.out);
  if (c.config.empty() && c.preset.empty() && !doc.has("run.preset") && !doc.has("truth.model") &&
      !doc.has("replay.input"))
    throw pemfc::ConfigError("need --config or --preset");
  return doc;
}

ordered_json summary(const pemfc::RunReport& rep) {
  ordered_json j = pemfc::report_json(rep);
  ordered_json s;
  s["name"] = j["name"];
  s["estimates"] = j["estimates"];
  s["relative_error"] = j["relative_error"];
  s["convergence_time"] = j["convergence_time"];
  s["diagnostics"] = j["diagnostics"];
  return s;
}

// Plain or Monte Carlo run; the latter writes one sub-directory per seed.
int run_verb(pemfc::RunConfig cfg, unsigned seeds, unsigned jobs) {
  if (seeds <= 1) {
    const auto rep = pemfc::execute(cfg);
    std::cout << summary(rep).dump(2) << '\n';
    return 0;
  }
  std::vector<pemfc::RunConfig> configs;
  for (unsigned k = 0; k < seeds; ++k) {
    pemfc::RunConfig c = cfg;
    c.seed = cfg.seed + k;
    c.name = cfg.name + "-seed" + std::to_string(c.seed);
    if (!cfg.output_dir.empty()) c.output_dir = (fs::path(cfg.output_dir) / ("seed_" + std::to_string(c.seed))).string();
    configs.push_back(std::move(c));
  }
  const auto outcomes = pemfc::run_many(configs, jobs);
  ordered_json runs = ordered_json::array();
  double worst = 0.0;
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    if (outcomes[k].error) std::rethrow_exception(outcomes[k].error);
    const auto& rep = *outcomes[k].report;
    ordered_json r;
    r["seed"] = configs[k].seed;
    r["estimates"] = rep.estimates;
    r["relative_error_max"] = pemfc::number_or_null(rep.rel_error_max);
    if (std::isfinite(rep.rel_error_max)) worst = std::max(worst, rep.rel_error_max);
    runs.push_back(r);
  }
  ordered_json j;
  j["schema_version"] = pemfc::kReportSchemaVersion;
  j["name"] = cfg.name;
  j["seeds"] = seeds;
  j["worst_relative_error"] = worst;
  j["runs"] = runs;
  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    std::ofstream(fs::path(cfg.output_dir) / "summary.json") << j.dump(2) << '\n';
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

// t column plus regressor columns: phi_* if present, otherwise everything but t and Y.
std::vector<pemfc::RegressorSample> read_regressor_csv(const std::string& path) {
  const auto table = pemfc::csv::read(path);
  const int tcol = table.column("t");
  if (tcol < 0) throw pemfc::DomainError(path + ": missing column 't'");
  std::vector<int> cols;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (table.header[c].rfind("phi_", 0) == 0) cols.push_back(static_cast<int>(c));
  if (cols.empty())
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (static_cast<int>(c) != tcol && table.header[c] != "Y") cols.push_back(static_cast<int>(c));
  if (cols.empty()) throw pemfc::DomainError(path + ": no regressor columns");
  const int ycol = table.column("Y");
  std::vector<pemfc::RegressorSample> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    pemfc::RegressorSample s;
    s.t = row[static_cast<std::size_t>(tcol)];
    s.Y = ycol >= 0 ? row[static_cast<std::size_t>(ycol)] : 0.0;
    s.phi.resize(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) s.phi(static_cast<Eigen::Index>(i)) = row[static_cast<std::size_t>(cols[i])];
    if (!out.empty() && !(s.t > out.back().t)) throw pemfc::DomainError("non-monotone time at t=" + pemfc::csv::format(s.t));
    out.push_back(std::move(s));
  }
  return out;
}

pemfc::CurveSweep read_sweep_csv(const std::string& path) {
  const auto table = pemfc::csv::read(path);
  const int ic = table.column("i");
  int vc = table.column("v");
  if (vc < 0) vc = table.column("v_true");
  if (ic < 0 || vc < 0) throw pemfc::DomainError(path + ": expected columns i and v");
  pemfc::CurveSweep s;
  for (const auto& row : table.rows) {
    s.current.push_back(row[static_cast<std::size_t>(ic)]);
    s.voltage.push_back(row[static_cast<std::size_t>(vc)]);
  }
  return s;
}

void write_sweep_csv(const std::string& path, const pemfc::CurveSweep& s) {
  pemfc::csv::Table t{{"i", "v"}, {}};
  for (std::size_t k = 0; k < s.current.size(); ++k) t.rows.push_back({s.current[k], s.voltage[k]});
  pemfc::csv::write(path, t);
}

ordered_json params_json(const pemfc::ModelSpec& m) {
  ordered_json j;
  j["model"] = pemfc::to_string(m.id);
  for (const auto& [k, v] : pemfc::physical_truth(m)) j[k] = v;
  return j;
}

struct FitSet {
  pemfc::ModelSpec m2, m3, m4;
};

FitSet fit_all(const pemfc::CurveSweep& s, double e_oc) {
  return {{pemfc::ModelId::M2, pemfc::fit_m2(s, e_oc)},
          {pemfc::ModelId::M3, pemfc::fit_m3(s, e_oc)},
          {pemfc::ModelId::M4, pemfc::fit_m4(s)}};
}

// Reference curve: the configured generator, or the full model with the
// default parameter set.
pemfc::ModelSpec reference_model(const Common& c) {
  if (!c.config.empty() || !c.preset.empty() || !c.sets.empty()) {
    const auto cfg = pemfc::run_config_from(load_doc(c));
    if (cfg.truth) return *cfg.truth;
  }
  return {pemfc::ModelId::M1, pemfc::ThetaFull{-2.582, -0.1808, 0.0046, 39.3543, -1.2610}};
}

void emit_error(const char* kind, const std::string& msg, int code, const std::string& snapshot = {}) {
  ordered_json j;
  j["error"] = kind;
  j["message"] = msg;
  j["exit_code"] = code;
  if (!snapshot.empty()) j["snapshot"] = snapshot;
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online polarization-curve parameter estimation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common common;
  unsigned seeds = 1;
  unsigned jobs = 1;

  auto* simulate = app.add_subcommand("simulate", "synthesize data and write traces and report (no estimator)");
  add_common(simulate, common);

  auto* estimate = app.add_subcommand("estimate", "full run: data, regressor, estimator, diagnostics");
  add_common(estimate, common);
  estimate->add_option("--seeds", seeds, "Monte Carlo: number of consecutive seeds")->check(CLI::PositiveNumber);
  estimate->add_option("-j,--jobs", jobs, "worker threads for --seeds")->check(CLI::PositiveNumber);

  std::string replay_input;
  auto* replay = app.add_subcommand("replay", "estimate from a recorded t,i_fc,v_fc CSV");
  add_common(replay, common);
  replay->add_option("-i,--input", replay_input, "recording CSV")->required();

  std::string diag_kind, diag_input;
  double diag_window = 1.0, diag_threshold = 1e-6, diag_tc = 0.0;
  std::size_t diag_stride = 1;
  std::string diag_map = "g";
  std::size_t diag_samples = 1000;
  double diag_box = 10.0, diag_rho = 1.0;
  auto* diagnose = app.add_subcommand("diagnose", "excitation or Wronskian analysis of a regressor CSV, or a monotonizability check of a parameter map");
  diagnose->add_option("kind", diag_kind, "wronskian | excitation | monotonizability")
      ->required()
      ->check(CLI::IsMember({"wronskian", "excitation", "monotonizability"}));
  diagnose->add_option("-i,--input", diag_input, "CSV with t and phi columns");
  diagnose->add_option("-o,--out", common.out, "output directory");
  diagnose->add_option("--window", diag_window, "PE window [s]");
  diagnose->add_option("--ie-window", diag_tc, "IE horizon [s], 0 = whole stream");
  diagnose->add_option("--threshold", diag_threshold, "relative eigenvalue threshold");
  diagnose->add_option("--stride", diag_stride, "Wronskian stride")->check(CLI::PositiveNumber);
  diagnose->add_option("--map", diag_map, "monotonizability: g | sine")->check(CLI::IsMember({"g", "sine"}));
  diagnose->add_option("--samples", diag_samples, "monotonizability: random parameter samples")->check(CLI::PositiveNumber);
  diagnose->add_option("--box", diag_box, "monotonizability: sample from [-box, box]^q")->check(CLI::PositiveNumber);
  diagnose->add_option("--rho", diag_rho, "monotonizability: required eigenvalue floor");
  diagnose->add_option("--seed", common.seed, "monotonizability: sampling seed");

  std::string fit_input;
  double fit_e_oc = 0.0;
  auto* fit = app.add_subcommand("fit", "batch least-squares fits of the reduced models to a static curve");
  add_common(fit, common);
  fit->add_option("-i,--input", fit_input, "CSV with i,v columns; default: sweep of the configured generator");
  fit->add_option("--e-oc", fit_e_oc, "open-circuit voltage for the exponential/power-law models");

  auto* compare = app.add_subcommand("compare", "fit the reduced models to a reference curve and tabulate per-interval errors");
  add_common(compare, common);
  compare->add_option("--e-oc", fit_e_oc, "open-circuit voltage for the exponential/power-law models");

  std::string preset_action, preset_name;
  auto* presets = app.add_subcommand("presets", "list or show the built-in presets");
  presets->add_option("action", preset_action, "list | show")->required()->check(CLI::IsMember({"list", "show"}));
  presets->add_option("name", preset_name, "preset to show");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what(), 1);
    return 1;
  }

  try {
    if (*simulate) {
      auto doc = load_doc(common);
      doc.set("estimator.kind", std::string("none"));
      auto cfg = pemfc::run_config_from(doc);
      if (cfg.mode != pemfc::RunMode::Synthesis) throw pemfc::ConfigError("simulate needs a synthesis config");
      if (cfg.output_dir.empty()) cfg.output_dir = "out";
      return run_verb(cfg, 1, 1);
    }
    if (*estimate) {
      auto cfg = pemfc::run_config_from(load_doc(common));
      return run_verb(cfg, seeds, jobs);
    }
    if (*replay) {
      auto doc = load_doc(common);
      doc.set("run.mode", std::string("replay"));
      doc.set("replay.input", replay_input);
      auto cfg = pemfc::run_config_from(doc);
      return run_verb(cfg, 1, 1);
    }
    if (*diagnose && diag_kind == "monotonizability") {
      const pemfc::ParamMap map = diag_map == "g" ? pemfc::make_g_param_map() : pemfc::make_sine_param_map();
      // keep away from the map's singular set (eta_2 = 0, and eta_4 = 0 for sine)
      const auto keep = [&](const pemfc::Vec& x) {
        return std::abs(x(1)) > 1e-6 && (diag_map == "g" || std::abs(x(3)) > 1e-6);
      };
      const auto samples = pemfc::sample_box(map.q, -diag_box, diag_box, diag_samples, common.seed.value_or(1), keep);
      const auto rep = pemfc::check_monotonizability(map, samples, diag_rho);
      ordered_json j;
      j["schema_version"] = pemfc::kReportSchemaVersion;
      j["map"] = map.name;
      j["min_eigenvalue"] = rep.min_eigenvalue;
      j["rho"] = rep.rho;
      j["sample_count"] = rep.sample_count;
      j["box_lo"] = pemfc::vec_json(rep.box_lo);
      j["box_hi"] = pemfc::vec_json(rep.box_hi);
      j["verdict"] = rep.pass ? "pass" : "fail";
      if (!common.out.empty()) {
        fs::create_directories(common.out);
        std::ofstream(fs::path(common.out) / "monotonizability.json") << j.dump(2) << '\n';
        std::ofstream(fs::path(common.out) / "monotonizability.txt") << pemfc::to_text(rep);
      }
      std::cerr << pemfc::to_text(rep);
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*diagnose) {
      if (diag_input.empty()) throw pemfc::ConfigError("diagnose " + diag_kind + " needs --input");
      const auto stream = read_regressor_csv(diag_input);
      if (!common.out.empty()) fs::create_directories(common.out);
      ordered_json j;
      j["schema_version"] = pemfc::kReportSchemaVersion;
      j["input"] = diag_input;
      j["columns"] = stream.front().phi.size();
      if (diag_kind == "wronskian") {
        if (stream.size() < 2) throw pemfc::DomainError("stream too short");
        const auto w = pemfc::wronskian_determinant(stream, stream[1].t - stream[0].t, diag_stride);
        pemfc::csv::Table t{{"t", "det", "det_normalized"}, {}};
        for (std::size_t k = 0; k < w.times.size(); ++k) t.rows.push_back({w.times[k], w.det[k], w.det_normalized[k]});
        const std::string path = common.out.empty() ? "wronskian.csv" : (fs::path(common.out) / "wronskian.csv").string();
        pemfc::csv::write(path, t);
        j["output"] = path;
        j["transient_peak"] = w.transient_peak;
        j["raw_peak"] = w.raw_peak;
      } else {
        const double tc = diag_tc > 0.0 ? diag_tc : stream.back().t - stream.front().t;
        const auto ie = pemfc::excitation_ie(stream, tc, diag_threshold);
        j["ie"] = {{"min_eigenvalue", ie.min_eigenvalue},
                   {"max_eigenvalue", ie.max_eigenvalue},
                   {"ratio", ie.ratio()},
                   {"verdict", ie.pass ? "IE-pass" : "IE-fail"}};
        const auto pe = pemfc::excitation_pe(stream, diag_window, diag_threshold);
        pemfc::csv::Table t{{"t_window", "min_eig"}, {}};
        for (std::size_t k = 0; k < pe.t_window.size(); ++k) t.rows.push_back({pe.t_window[k], pe.min_eigenvalue[k]});
        const std::string path = common.out.empty() ? "excitation.csv" : (fs::path(common.out) / "excitation.csv").string();
        pemfc::csv::write(path, t);
        j["output"] = path;
        j["pe"] = {{"window", pe.window},
                   {"worst_min_eigenvalue", pe.worst_min_eigenvalue},
                   {"verdict", pe.pass ? "PE-pass" : "PE-fail"}};
      }
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*fit || *compare) {
      pemfc::CurveSweep truth;
      double e_oc = fit_e_oc;
      double lo = 1.0, hi = 30.0;
      std::size_t points = 291;
      if (*fit && !fit_input.empty()) {
        truth = read_sweep_csv(fit_input);
      } else {
        const auto ref = reference_model(common);
        if (!common.config.empty() || !common.preset.empty()) {
          const auto cfg = pemfc::run_config_from(load_doc(common));
          lo = cfg.curve_min;
          hi = cfg.curve_max;
          points = cfg.curve_points;
        }
        truth = pemfc::sweep(ref, lo, hi, points);
        if (e_oc == 0.0) {
          if (const auto* p = std::get_if<pemfc::ReducedParamsAB>(&ref.params)) {
            e_oc = p->e_oc;
          } else {
            e_oc = 42.0;  // default stack open-circuit voltage
          }
        }
      }
      if (!(e_oc > 0.0)) throw pemfc::ConfigError("--e-oc is required with --input");
      const FitSet f = fit_all(truth, e_oc);
      ordered_json j;
      j["schema_version"] = pemfc::kReportSchemaVersion;
      j["e_oc"] = e_oc;
      j["fits"] = {params_json(f.m2), params_json(f.m3), params_json(f.m4)};
      if (*compare) {
        std::vector<std::pair<std::string, pemfc::CurveSweep>> est;
        for (const auto* m : {&f.m2, &f.m3, &f.m4}) {
          pemfc::CurveSweep s;
          s.current = truth.current;
          for (double i : truth.current) s.voltage.push_back(pemfc::eval_model(*m, i));
          est.emplace_back(pemfc::to_string(m->id), std::move(s));
        }
        const auto table = pemfc::compare_curves(truth, est);
        ordered_json rows = ordered_json::array();
        for (std::size_t m = 0; m < table.models.size(); ++m) {
          ordered_json r;
          r["model"] = table.models[m];
          for (std::size_t k = 0; k < table.intervals.size(); ++k)
            r["max_err_" + pemfc::csv::format(table.intervals[k].first) + "_" + pemfc::csv::format(table.intervals[k].second)] =
                table.max_abs_error[m][k];
          r["max_err_full"] = table.max_abs_error[m].back();
          rows.push_back(r);
        }
        j["table"] = rows;
        if (!common.out.empty()) {
          fs::create_directories(common.out);
          write_sweep_csv((fs::path(common.out) / "truth_curve.csv").string(), truth);
          for (const auto& [name, s] : est) write_sweep_csv((fs::path(common.out) / (name + "_curve.csv")).string(), s);
          std::ofstream(fs::path(common.out) / "compare.json") << j.dump(2) << '\n';
        }
      } else if (!common.out.empty()) {
        fs::create_directories(common.out);
        std::ofstream(fs::path(common.out) / "fit.json") << j.dump(2) << '\n';
      }
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*presets) {
      if (preset_action == "list") {
        for (const auto& p : pemfc::presets()) std::cout << p.name << "  " << p.description << '\n';
        return 0;
      }
      if (preset_name.empty()) throw pemfc::ConfigError("presets show needs a name");
      std::cout << "# " << pemfc::find_preset(preset_name).description << '\n' << pemfc::find_preset(preset_name).config;
      return 0;
    }
  } catch (const pemfc::DivergenceError& e) {
    emit_error("divergence", e.what(), 2, e.snapshot());
    return 2;
  } catch (const pemfc::ConfigError& e) {
    emit_error("config", e.what(), 1);
    return 1;
  } catch (const pemfc::DomainError& e) {
    emit_error("domain", e.what(), 1);
    return 1;
  } catch (const std::exception& e) {
    emit_error("io", e.what(), 1);
    return 1;
  }
  return 1;
}
