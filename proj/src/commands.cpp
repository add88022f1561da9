#include "mesr/commands.hpp"

#include "mesr/csv_io.hpp"
#include "mesr/errors.hpp"
#include "mesr/provenance.hpp"
#include "mesr/spectra.hpp"
#include "mesr/units.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>

namespace mesr {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<Transition> cmd_resonances(const RunConfig& cfg, double theta_deg, bool include_all) {
  const LabOrientation theta{normalize_degrees(theta_deg)};
  std::vector<Transition> all = transitions_at(cfg.spin_system, cfg.resonator, cfg.regions, theta,
                                               cfg.orientation_settings());
  if (include_all) return all;
  std::vector<Transition> kept;
  for (Transition& t : all)
    if (!t.below_threshold) kept.push_back(std::move(t));
  return kept;
}

void write_resonance_csv(std::ostream& os, double theta_deg, const std::vector<Transition>& rows) {
  os << "theta,field_mT,f_MHz,mode,site,intensity,gradient,levels,below_threshold\n";
  for (const Transition& t : rows) {
    std::string levels;
    for (const LevelPair& p : t.degenerate_pairs) {
      if (!levels.empty()) levels += ';';
      levels += std::to_string(p.lower) + "-" + std::to_string(p.upper);
    }
    os << format_number(theta_deg) << ',' << format_number(t.field_mT) << ',' << format_number(t.frequency_MHz) << ','
       << to_string(t.mode) << ',' << t.site << ',' << format_number(t.intensity) << ','
       << format_number(t.gradient_MHz_per_mT) << ',' << levels << ',' << (t.below_threshold ? 1 : 0) << '\n';
  }
}

void write_fit_table(std::ostream& os, const FitResult& fit, const std::vector<PeakModel>& seeds) {
  char line[256];
  std::snprintf(line, sizeof line, "%-5s %10s %10s %10s %10s  %s\n", "Peak", "B_m (mT)", "B_f (mT)", "gamma(MHz)",
                "g_c (MHz)", "label");
  os << line;
  for (std::size_t k = 0; k < fit.peaks.size(); ++k) {
    const PeakModel& p = fit.peaks[k];
    const double b_m = k < seeds.size() ? seeds[k].b_m_mT.value_or(seeds[k].b_f_mT) : p.b_f_mT;
    const std::string tag = k < 26 ? std::string(1, static_cast<char>('a' + k)) : std::to_string(k + 1);
    std::snprintf(line, sizeof line, "%-5s %10.1f %10.1f %10.1f %10.2f  %s\n", tag.c_str(), b_m, p.b_f_mT,
                  p.gamma_MHz, p.g_c_MHz, p.label.c_str());
    os << line;
  }
}

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig load(const Common& c) { return parse_config(c.config_path, c.overrides); }

std::string config_hash(const RunConfig& cfg) { return fingerprint(echo_config(cfg)); }

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void finish(std::ofstream& os, const fs::path& path) {
  os.flush();
  if (!os) throw IoError("error writing '" + path.string() + "'");
}

json provenance_json(const Provenance& p) {
  return {{"tool", p.tool},
          {"version", p.version},
          {"command", p.command},
          {"config_hash", p.config_hash},
          {"timestamp", p.timestamp}};
}

double finite_or_zero(double v) { return std::isfinite(v) ? v : 0.0; }

// --- resonances -------------------------------------------------------------

int do_resonances(const Common& c, double theta, bool all, const std::string& out_path, std::ostream& out,
                  std::ostream& err) {
  const RunConfig cfg = load(c);
  const double wrapped = normalize_degrees(theta);
  if (wrapped != theta)
    err << "warning: theta " << format_number(theta) << " deg normalized to " << format_number(wrapped) << " deg\n";
  const std::vector<Transition> rows = cmd_resonances(cfg, wrapped, all);
  const Provenance prov = make_provenance("resonances --theta " + format_number(wrapped), config_hash(cfg));
  write_comment_header(out, prov);
  write_resonance_csv(out, wrapped, rows);
  if (!out_path.empty()) {
    std::ofstream f = open_output(out_path);
    write_comment_header(f, prov);
    write_resonance_csv(f, wrapped, rows);
    finish(f, out_path);
  }
  return kExitOk;
}

// --- simulate ----------------------------------------------------------------

int do_simulate(const Common& c, const std::string& out_dir, bool quiet, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load(c);
  const std::vector<LabOrientation> sweep = cfg.orientations();
  const std::vector<double> axis = cfg.field_axis();
  SimulationSettings settings = cfg.simulation_settings();
  std::mutex progress_mutex;
  if (!quiet) {
    settings.progress = [&](std::size_t done, std::size_t total, double theta) {
      std::lock_guard lock(progress_mutex);
      err << "theta " << format_number(theta) << " deg (" << done << "/" << total << ")\n";
    };
  }
  const AngularSpectrum map = simulate_angular_map(cfg.spin_system, cfg.resonator, cfg.regions, sweep, axis, settings);
  const Provenance prov = make_provenance("simulate", config_hash(cfg));
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());

  std::vector<fs::path> written;
  auto emit = [&](const AngularSpectrum& m, const std::string& stem) {
    export_map(m, ExportFormat::csv, dir / (stem + ".csv"), &prov, cfg.render.svg);
    export_map(m, ExportFormat::svg, dir / (stem + ".svg"), &prov, cfg.render.svg);
    written.push_back(dir / (stem + ".csv"));
    written.push_back(dir / (stem + ".svg"));
  };
  emit(map, "angular_map");
  if (cfg.render.filter) {
    EdgeFilterOptions opt;
    opt.kernel = cfg.render.filter_kernel;
    opt.log_scale = cfg.render.filter_log_scale;
    emit(edge_filter(map, opt), "angular_map_filtered");
  }
  out << "grid " << map.thetas_deg.size() << " x " << map.fields_mT.size() << " (theta x field)\n";
  for (const fs::path& p : written) out << "wrote " << p.string() << "\n";
  return kExitOk;
}

// --- fit ---------------------------------------------------------------------

int do_fit(const Common& c, const std::string& trace_path, const std::string& out_path, std::ostream& out,
           std::ostream& err) {
  const RunConfig cfg = load(c);
  if (cfg.fit.seeds.empty()) throw ConfigError("fit.seeds: at least one seed is required");
  const LossTrace trace = read_loss_trace_csv(trace_path);
  const FitResult fit = fit_multipeak(trace, cfg.fit.seeds, cfg.fit_options());

  write_fit_table(out, fit, cfg.fit.seeds);
  char line[200];
  std::snprintf(line, sizeof line, "kappa %.4g MHz (%s), residual rms %.3g, %d iterations, %s\n", fit.kappa_MHz,
                cfg.fit.kappa_fixed ? "fixed" : "fitted", fit.residual_rms, fit.iterations,
                fit.converged ? "converged" : "NOT converged");
  out << line;

  json peaks = json::array();
  for (std::size_t k = 0; k < fit.peaks.size(); ++k) {
    const PeakModel& p = fit.peaks[k];
    const PeakUncertainty& u = fit.uncertainties[k];
    json j = {{"label", p.label},
              {"b_f_mT", p.b_f_mT},
              {"gamma_MHz", p.gamma_MHz},
              {"g_c_MHz", p.g_c_MHz},
              {"gradient_MHz_per_mT", p.gradient_MHz_per_mT},
              {"uncertainty", {{"b_f_mT", u.b_f_mT}, {"gamma_MHz", u.gamma_MHz}, {"g_c_MHz", u.g_c_MHz}}}};
    const PeakModel& seed = cfg.fit.seeds[k];
    j["b_m_mT"] = seed.b_m_mT.value_or(seed.b_f_mT);
    peaks.push_back(std::move(j));
  }
  json cov = json::array();
  for (Eigen::Index i = 0; i < fit.covariance.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < fit.covariance.cols(); ++j) row.push_back(finite_or_zero(fit.covariance(i, j)));
    cov.push_back(std::move(row));
  }
  json residuals = json::array();
  for (std::size_t i = 0; i < trace.fields_mT.size(); ++i)
    residuals.push_back({{"field_mT", trace.fields_mT[i]},
                         {"value", trace.values[i]},
                         {"model", fit.model_values[i]},
                         {"residual", fit.residuals[i]}});
  std::vector<double> modelled, fitted;
  for (std::size_t k = 0; k < fit.peaks.size(); ++k) {
    const double bm = cfg.fit.seeds[k].b_m_mT.value_or(0.0);
    if (bm > 0.0 && fit.peaks[k].b_f_mT > 0.0) {
      modelled.push_back(bm);
      fitted.push_back(fit.peaks[k].b_f_mT);
    }
  }

  json doc = {{"provenance", provenance_json(make_provenance("fit " + trace_path, config_hash(cfg)))},
              {"trace", trace_path},
              {"kind", std::string(to_string(fit.kind))},
              {"f_r_GHz", fit.f_r_GHz},
              {"kappa_MHz", fit.kappa_MHz},
              {"kappa_fixed", cfg.fit.kappa_fixed},
              {"kappa_uncertainty_MHz", fit.kappa_uncertainty_MHz},
              {"converged", fit.converged},
              {"status", std::string(to_string(fit.status))},
              {"degenerate", fit.degenerate},
              {"iterations", fit.iterations},
              {"residual_rms", fit.residual_rms},
              {"parameter_order", "b_f_mT, gamma_MHz, g_c_MHz per peak; kappa_MHz last when fitted"},
              {"peaks", peaks},
              {"covariance", cov},
              {"residuals", residuals}};
  if (!modelled.empty()) doc["model_fit_deviation_percent"] = rms_model_fit_deviation(modelled, fitted);

  std::ofstream f = open_output(out_path);
  f << doc.dump(2) << "\n";
  finish(f, out_path);
  out << "wrote " << out_path << "\n";

  if (!fit.converged) {
    err << "error: fit did not converge ("
        << (fit.degenerate ? "near-singular covariance: overlapping seeds or a vanished peak"
                           : "iteration cap reached; best-so-far parameters reported")
        << ")\n";
    return kExitNumerical;
  }
  return kExitOk;
}

// --- extract-q -----------------------------------------------------------------

int do_extract_q(const std::string& s21_path, const Common& c, const std::string& out_path, std::ostream& out) {
  ResonatorSpec configured;
  std::string hash;
  if (!c.config_path.empty()) {
    const RunConfig cfg = load(c);
    configured = cfg.resonator;
    hash = config_hash(cfg);
  }
  const S21Trace trace = read_s21_csv(s21_path);
  const NotchFit fit = fit_s21_notch(trace);
  if (!fit.converged) throw NumericalError("notch fit did not converge");
  json doc = {{"provenance", provenance_json(make_provenance("extract-q " + s21_path, hash))},
              {"f_r_GHz", fit.f_r_GHz},
              {"q_i", fit.q_i},
              {"q_c", fit.q_c},
              {"q_m", fit.q_m},
              {"amplitude", fit.amplitude},
              {"residual_rms", fit.residual_rms},
              {"iterations", fit.iterations},
              {"kappa_derived_MHz", q_to_kappa(fit.f_r_GHz, fit.q_i, fit.q_c)},
              {"kappa_configured_MHz", configured.kappa_MHz}};
  if (configured.q_i && configured.q_c)
    doc["kappa_from_configured_q_MHz"] = q_to_kappa(configured.f_r_GHz, *configured.q_i, *configured.q_c);
  const std::string text = doc.dump(2) + "\n";
  out << text;
  if (!out_path.empty()) {
    std::ofstream f = open_output(out_path);
    f << text;
    finish(f, out_path);
  }
  return kExitOk;
}

// --- synthetic data --------------------------------------------------------------

int do_synth_trace(const Common& c, const std::string& out_path, const std::string& kind_name, double noise,
                   unsigned seed, std::ostream& out) {
  const RunConfig cfg = load(c);
  if (cfg.fit.seeds.empty()) throw ConfigError("fit.seeds: at least one peak is required");
  TraceKind kind;
  if (kind_name == "Q_m" || kind_name == "q_m") {
    kind = TraceKind::q_m;
  } else if (kind_name == "tan_ions") {
    kind = TraceKind::tan_ions;
  } else {
    throw ConfigError("--kind: expected Q_m or tan_ions");
  }
  if (!(noise >= 0.0)) throw ConfigError("--noise: must be non-negative");
  std::vector<PeakModel> peaks = cfg.fit.seeds;
  for (PeakModel& p : peaks) p.b_f_mT = p.b_m_mT.value_or(p.b_f_mT);
  const std::vector<double> fields = cfg.field_axis();
  LossTrace trace = synthesize_trace(peaks, fields, cfg.resonator.kappa_MHz, cfg.resonator.f_r_GHz, kind);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& v : trace.values) v *= 1.0 + noise * gauss(rng);

  std::ofstream f = open_output(out_path);
  write_comment_header(f, make_provenance("synth-trace", config_hash(cfg)));
  f << "field_mT," << to_string(kind) << "\n";
  for (std::size_t i = 0; i < fields.size(); ++i) f << format_number(fields[i]) << ',' << format_number(trace.values[i]) << '\n';
  finish(f, out_path);
  out << "wrote " << out_path << " (" << fields.size() << " points)\n";
  return kExitOk;
}

int do_synth_s21(const std::string& out_path, double f_r, double q_i, double q_c, double span_linewidths,
                 int points, double noise, unsigned seed, bool magnitude, std::ostream& out) {
  if (!(f_r > 0.0) || !(q_i > 0.0) || !(q_c > 0.0)) throw ConfigError("--f-r, --q-i and --q-c must be positive");
  if (points < 8) throw ConfigError("--points: at least 8 required");
  if (!(span_linewidths > 0.0)) throw ConfigError("--span: must be positive");
  const double q_l = 1.0 / (1.0 / q_i + 1.0 / q_c);
  const double half_span = 0.5 * span_linewidths * f_r / q_l;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::ofstream f = open_output(out_path);
  write_comment_header(f, make_provenance("synth-s21", ""));
  f << (magnitude ? "freq_GHz,mag\n" : "freq_GHz,re,im\n");
  for (int i = 0; i < points; ++i) {
    const double freq = f_r - half_span + 2.0 * half_span * i / (points - 1);
    const std::complex<double> s = notch_s21(freq, f_r, q_i, q_c);
    if (magnitude) {
      f << format_number(freq) << ',' << format_number(std::abs(s) * (1.0 + noise * gauss(rng))) << '\n';
    } else {
      const double re = s.real() + noise * gauss(rng);
      const double im = s.imag() + noise * gauss(rng);
      f << format_number(freq) << ',' << format_number(re) << ',' << format_number(im) << '\n';
    }
  }
  finish(f, out_path);
  out << "wrote " << out_path << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Crystal-field spin resonance simulation and cavity loss fitting", "mesr"};
  app.set_version_flag("--version", std::string(library_version()));
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", common.config_path, "JSON run configuration")->required();
    sub->add_option("--set", common.overrides, "Override a config key, e.g. --set sweep.theta.step=90")
        ->take_all()
        ->allow_extra_args(false);
  };

  CLI::App* config_cmd = app.add_subcommand("config", "Validate a config and print it with defaults filled in");
  add_common(config_cmd);

  double theta = 0.0;
  bool all_rows = false;
  std::string out_path;
  CLI::App* res_cmd = app.add_subcommand("resonances", "Resonance fields and intensities at one orientation");
  add_common(res_cmd);
  res_cmd->add_option("--theta", theta, "In-plane rotation of B0, degrees")->required();
  res_cmd->add_flag("--all", all_rows, "Include transitions below the reporting threshold");
  res_cmd->add_option("--out", out_path, "Also write the table to this CSV file");

  std::string out_dir = ".";
  bool quiet = false;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Full angular map (CSV + SVG, optionally edge-filtered)");
  add_common(sim_cmd);
  sim_cmd->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
  sim_cmd->add_flag("--quiet", quiet, "No per-orientation progress");

  std::string trace_path;
  std::string fit_out = "fit_result.json";
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit the multi-peak cavity-spin model to a loss trace");
  add_common(fit_cmd);
  fit_cmd->add_option("--trace", trace_path, "CSV with field_mT and Q_m or tan_ions")->required();
  fit_cmd->add_option("--out", fit_out, "Result JSON")->capture_default_str();

  std::string s21_path;
  std::string q_config;
  CLI::App* q_cmd = app.add_subcommand("extract-q", "Fit a notch resonance to S21 data");
  q_cmd->add_option("s21", s21_path, "CSV with freq_GHz,re,im or freq_GHz,mag")->required();
  q_cmd->add_option("--config", q_config, "Config supplying the configured kappa");
  q_cmd->add_option("--set", common.overrides, "Override a config key")->take_all();
  q_cmd->add_option("--out", out_path, "Also write the JSON to this file");

  std::string kind = "Q_m";
  double noise = 0.0;
  unsigned seed = 1;
  std::string synth_out;
  CLI::App* st_cmd = app.add_subcommand("synth-trace", "Synthetic loss trace from the config's fit seeds");
  add_common(st_cmd);
  st_cmd->add_option("--out", synth_out, "Output CSV")->required();
  st_cmd->add_option("--kind", kind, "Q_m or tan_ions")->capture_default_str();
  st_cmd->add_option("--noise", noise, "Relative Gaussian noise")->capture_default_str();
  st_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();

  double f_r = 3.352, q_i = 3.3e5, q_c = 3.8e4, span = 20.0;
  int points = 801;
  bool magnitude = false;
  CLI::App* ss_cmd = app.add_subcommand("synth-s21", "Synthetic notch-resonator S21 sweep");
  ss_cmd->add_option("--out", synth_out, "Output CSV")->required();
  ss_cmd->add_option("--f-r", f_r, "Resonance frequency, GHz")->capture_default_str();
  ss_cmd->add_option("--q-i", q_i, "Internal quality factor")->capture_default_str();
  ss_cmd->add_option("--q-c", q_c, "Coupling quality factor")->capture_default_str();
  ss_cmd->add_option("--span", span, "Sweep width in loaded linewidths")->capture_default_str();
  ss_cmd->add_option("--points", points, "Number of frequency points")->capture_default_str();
  ss_cmd->add_option("--noise", noise, "Gaussian noise on re/im (relative on mag)")->capture_default_str();
  ss_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
  ss_cmd->add_flag("--magnitude", magnitude, "Write |S21| only");

  std::vector<std::string> storage = args;
  if (storage.empty()) storage.emplace_back("mesr");
  std::vector<char*> argv;
  for (std::string& a : storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << library_version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run 'mesr --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (config_cmd->parsed()) {
      out << echo_config(load(common));
      return kExitOk;
    }
    if (res_cmd->parsed()) return do_resonances(common, theta, all_rows, out_path, out, err);
    if (sim_cmd->parsed()) return do_simulate(common, out_dir, quiet, out, err);
    if (fit_cmd->parsed()) return do_fit(common, trace_path, fit_out, out, err);
    if (q_cmd->parsed()) {
      common.config_path = q_config;
      return do_extract_q(s21_path, common, out_path, out);
    }
    if (st_cmd->parsed()) return do_synth_trace(common, synth_out, kind, noise, seed, out);
    if (ss_cmd->parsed()) return do_synth_s21(synth_out, f_r, q_i, q_c, span, points, noise, seed, magnitude, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  err << "error: no command given\n";
  return kExitUsage;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, out, err);
}

}  // namespace mesr
