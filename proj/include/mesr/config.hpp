#pragma once

#include "mesr/geometry.hpp"
#include "mesr/lossfit.hpp"
#include "mesr/resonance.hpp"
#include "mesr/spectra.hpp"
#include "mesr/spin_core.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mesr {

inline constexpr int kConfigSchemaVersion = 1;

struct SweepConfig {
  double theta_start_deg = 0.0;
  double theta_stop_deg = 360.0;
  double theta_step_deg = 4.0;
  double field_start_mT = 0.0;
  double field_stop_mT = 120.0;
  double field_step_mT = 0.1;

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct SearchConfig {
  double tolerance_MHz = 1e-3;
  double gradient_step_mT = 0.01;
  double merge_window_mT = 0.01;

  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

struct RenderConfig {
  double linewidth_MHz = 50.0;
  bool filter = true;
  EdgeKernel filter_kernel = EdgeKernel::central_difference;
  bool filter_log_scale = false;
  SvgStyle svg;

  friend bool operator==(const RenderConfig&, const RenderConfig&) = default;
};

struct FitConfig {
  bool kappa_fixed = true;
  double gamma_min_MHz = 1e-6;
  double gamma_max_MHz = 1e4;
  double g_c_min_MHz = 0.0;
  double g_c_max_MHz = 1e3;
  int max_iterations = 500;
  std::vector<PeakModel> seeds;
};

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  SpinSystem spin_system;
  ResonatorSpec resonator;
  std::vector<ModeRegion> regions;
  RotationSense rotation_sense = RotationSense::toward_plus_y;
  SweepConfig sweep;
  SearchConfig search;
  double temperature_K = 0.25;
  RenderConfig render;
  FitConfig fit;
  unsigned threads = 1;

  OrientationSettings orientation_settings() const;
  SimulationSettings simulation_settings() const;
  FitOptions fit_options() const;
  std::vector<LabOrientation> orientations() const;
  std::vector<double> field_axis() const;
};

bool operator==(const RunConfig& a, const RunConfig& b);
bool operator==(const FitConfig& a, const FitConfig& b);
bool operator==(const PeakModel& a, const PeakModel& b);
bool operator==(const ModeRegion& a, const ModeRegion& b);
bool operator==(const SpinSystem& a, const SpinSystem& b);
bool operator==(const ResonatorSpec& a, const ResonatorSpec& b);

/// Parses JSON config text. `overrides` are "dotted.path[i]=value" strings
/// applied before validation; values are read as JSON, falling back to a string.
/// Throws ConfigError naming the offending key path.
RunConfig parse_config_text(std::string_view text, const std::vector<std::string>& overrides = {});

/// Reads and parses a config file. Throws IoError if unreadable.
RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Fully resolved config, defaults included, as indented JSON.
std::string echo_config(const RunConfig& cfg);

}  // namespace mesr
