#pragma once

#include "mesr/geometry.hpp"
#include "mesr/provenance.hpp"
#include "mesr/resonance.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mesr {

/// `processed` marks derived grids (e.g. edge-filtered) that may be signed.
enum class SpectrumSource { simulated, measured, processed };

/// Intensity on a rotation-angle x field grid. Rows follow `thetas_deg`,
/// columns follow `fields_mT`.
struct AngularSpectrum {
  std::vector<double> thetas_deg;
  std::vector<double> fields_mT;
  Eigen::MatrixXd intensity;
  SpectrumSource source = SpectrumSource::simulated;
  /// Processing applied since creation (e.g. the edge-filter kernel).
  std::string notes;

  void validate() const;
};

struct SpectrumLine {
  Transition transition;
  /// intensity * region area / total area
  double weight = 0.0;
  double linewidth_MHz = 50.0;
};

/// Uniform axis from start to stop inclusive.
std::vector<double> make_axis(double start, double stop, double step);

struct SimulationSettings {
  OrientationSettings orientation;
  double render_linewidth_MHz = 50.0;
  unsigned threads = 1;
  /// Called once per finished orientation; may run on a worker thread but never concurrently.
  std::function<void(std::size_t done, std::size_t total, double theta_deg)> progress;
};

/// Area-weighted lines at one orientation.
std::vector<SpectrumLine> spectrum_lines(const SpinSystem& sys, const ResonatorSpec& resonator,
                                         std::span<const ModeRegion> regions, LabOrientation theta,
                                         const SimulationSettings& settings);

/// Area-normalized Lorentzian in field: half width = linewidth / |gradient|,
/// integral over the whole field axis = weight.
double render_line(const SpectrumLine& line, double field_mT);

/// Sum of rendered lines over regions and sites for every orientation.
AngularSpectrum simulate_angular_map(const SpinSystem& sys, const ResonatorSpec& resonator,
                                     std::span<const ModeRegion> regions, std::span<const LabOrientation> sweep,
                                     std::span<const double> field_axis_mT, const SimulationSettings& settings);

/// Same as simulate_angular_map, split into one map per region. Weights are
/// normalized by the area of all regions, so the maps add up to the total.
std::vector<AngularSpectrum> simulate_region_maps(const SpinSystem& sys, const ResonatorSpec& resonator,
                                                  std::span<const ModeRegion> regions,
                                                  std::span<const LabOrientation> sweep,
                                                  std::span<const double> field_axis_mT,
                                                  const SimulationSettings& settings);

/// Trapezoidal integral of each row over the field axis.
std::vector<double> integrate_rows(const AngularSpectrum& map);

enum class EdgeKernel { central_difference, gradient_magnitude };

struct EdgeFilterOptions {
  EdgeKernel kernel = EdgeKernel::central_difference;
  /// Apply log10 (floored at 1e-12 of the peak) before differentiating.
  bool log_scale = false;
};

/// d(intensity)/d(field) by central differences (one-sided at the ends).
/// The default kernel is linear in the input; gradient_magnitude takes |.|.
/// Requires at least a 3x3 grid.
AngularSpectrum edge_filter(const AngularSpectrum& map, const EdgeFilterOptions& options = {});

enum class ExportFormat { csv, svg };

struct SvgStyle {
  int width = 900;
  int height = 600;
  std::string colormap = "viridis";  // viridis | gray
  /// Field bins per column; rows are averaged down to this count.
  int max_rows = 400;

  friend bool operator==(const SvgStyle&, const SvgStyle&) = default;
};

/// CSV: header row "theta_deg\field_mT,<fields...>", then one row per theta,
/// numbers printed with 10 significant digits. Optional provenance goes in
/// leading '#' lines.
void export_map(const AngularSpectrum& map, ExportFormat format, const std::filesystem::path& path,
                const Provenance* provenance = nullptr, const SvgStyle& style = {});

AngularSpectrum import_map_csv(const std::filesystem::path& path,
                               SpectrumSource source = SpectrumSource::measured);

}  // namespace mesr
