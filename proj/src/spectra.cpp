#include "mesr/spectra.hpp"

#include "mesr/csv_io.hpp"
#include "mesr/errors.hpp"
#include "mesr/units.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace mesr {

void AngularSpectrum::validate() const {
  if (intensity.rows() != static_cast<Eigen::Index>(thetas_deg.size()) ||
      intensity.cols() != static_cast<Eigen::Index>(fields_mT.size()))
    throw std::invalid_argument("angular spectrum grid does not match its axes");
  if (!intensity.allFinite()) throw std::invalid_argument("angular spectrum contains non-finite values");
  if (source == SpectrumSource::simulated && intensity.size() > 0 && intensity.minCoeff() < 0.0)
    throw std::invalid_argument("simulated intensities must be non-negative");
}

std::vector<double> make_axis(double start, double stop, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("axis step must be positive");
  if (stop < start) throw std::invalid_argument("axis stop must not precede start");
  std::vector<double> axis;
  const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  for (long i = 0; i <= n; ++i) axis.push_back(start + static_cast<double>(i) * step);
  return axis;
}

namespace {

double total_area(std::span<const ModeRegion> regions) {
  double a = 0.0;
  for (const ModeRegion& r : regions) a += r.area_um2;
  return a;
}

std::vector<SpectrumLine> lines_with_area(const SpinSystem& sys, const ResonatorSpec& resonator,
                                          std::span<const ModeRegion> regions, LabOrientation theta,
                                          const SimulationSettings& settings, double area_norm) {
  std::vector<SpectrumLine> lines;
  if (regions.empty()) return lines;
  for (Transition& t : transitions_at(sys, resonator, regions, theta, settings.orientation)) {
    SpectrumLine line;
    line.weight = t.intensity * regions[static_cast<std::size_t>(t.region)].area_um2 / area_norm;
    line.linewidth_MHz = settings.render_linewidth_MHz;
    line.transition = std::move(t);
    lines.push_back(std::move(line));
  }
  return lines;
}

// Runs body(i) for i in [0, n) on `threads` workers; rethrows the first failure.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::vector<SpectrumLine> spectrum_lines(const SpinSystem& sys, const ResonatorSpec& resonator,
                                         std::span<const ModeRegion> regions, LabOrientation theta,
                                         const SimulationSettings& settings) {
  return lines_with_area(sys, resonator, regions, theta, settings, total_area(regions));
}

double render_line(const SpectrumLine& line, double field_mT) {
  const double slope = std::max(std::abs(line.transition.gradient_MHz_per_mT), 1e-3);
  const double hw = line.linewidth_MHz / slope;
  const double x = field_mT - line.transition.field_mT;
  return line.weight / units::kPi * hw / (x * x + hw * hw);
}

std::vector<AngularSpectrum> simulate_region_maps(const SpinSystem& sys, const ResonatorSpec& resonator,
                                                  std::span<const ModeRegion> regions,
                                                  std::span<const LabOrientation> sweep,
                                                  std::span<const double> field_axis,
                                                  const SimulationSettings& settings) {
  if (!(settings.render_linewidth_MHz > 0.0)) throw std::invalid_argument("render linewidth must be positive");
  const double area = total_area(regions);
  std::vector<AngularSpectrum> maps(regions.size());
  for (AngularSpectrum& m : maps) {
    for (const LabOrientation& o : sweep) m.thetas_deg.push_back(o.theta);
    m.fields_mT.assign(field_axis.begin(), field_axis.end());
    m.intensity = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sweep.size()),
                                        static_cast<Eigen::Index>(field_axis.size()));
  }
  std::mutex progress_mutex;
  std::size_t done = 0;
  parallel_for(sweep.size(), settings.threads, [&](std::size_t row) {
    const auto lines = lines_with_area(sys, resonator, regions, sweep[row], settings, area);
    for (const SpectrumLine& line : lines) {
      auto& grid = maps[static_cast<std::size_t>(line.transition.region)].intensity;
      for (std::size_t c = 0; c < field_axis.size(); ++c)
        grid(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) += render_line(line, field_axis[c]);
    }
    if (settings.progress) {
      std::lock_guard lock(progress_mutex);
      settings.progress(++done, sweep.size(), sweep[row].theta);
    }
  });
  return maps;
}

AngularSpectrum simulate_angular_map(const SpinSystem& sys, const ResonatorSpec& resonator,
                                     std::span<const ModeRegion> regions, std::span<const LabOrientation> sweep,
                                     std::span<const double> field_axis, const SimulationSettings& settings) {
  AngularSpectrum out;
  for (const LabOrientation& o : sweep) out.thetas_deg.push_back(o.theta);
  out.fields_mT.assign(field_axis.begin(), field_axis.end());
  out.intensity =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sweep.size()), static_cast<Eigen::Index>(field_axis.size()));
  for (const AngularSpectrum& m : simulate_region_maps(sys, resonator, regions, sweep, field_axis, settings))
    out.intensity += m.intensity;
  return out;
}

std::vector<double> integrate_rows(const AngularSpectrum& map) {
  std::vector<double> out(map.thetas_deg.size(), 0.0);
  for (Eigen::Index r = 0; r < map.intensity.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index c = 1; c < map.intensity.cols(); ++c) {
      const double dx = map.fields_mT[static_cast<std::size_t>(c)] - map.fields_mT[static_cast<std::size_t>(c - 1)];
      acc += 0.5 * dx * (map.intensity(r, c) + map.intensity(r, c - 1));
    }
    out[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

AngularSpectrum edge_filter(const AngularSpectrum& map, const EdgeFilterOptions& options) {
  const Eigen::Index rows = map.intensity.rows(), cols = map.intensity.cols();
  if (rows < 3 || cols < 3) throw std::invalid_argument("edge filter needs at least a 3x3 grid");
  Eigen::MatrixXd src = map.intensity;
  if (options.log_scale) {
    const double peak = src.cwiseAbs().maxCoeff();
    const double floor = peak > 0.0 ? 1e-12 * peak : 1e-300;
    src = src.unaryExpr([floor](double v) { return std::log10(std::max(v, floor)); });
  }
  const auto& f = map.fields_mT;
  AngularSpectrum out = map;
  out.source = SpectrumSource::processed;
  for (Eigen::Index c = 0; c < cols; ++c) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, c - 1);
    const Eigen::Index hi = std::min<Eigen::Index>(cols - 1, c + 1);
    const double dx = f[static_cast<std::size_t>(hi)] - f[static_cast<std::size_t>(lo)];
    out.intensity.col(c) = (src.col(hi) - src.col(lo)) / dx;
  }
  if (options.kernel == EdgeKernel::gradient_magnitude) out.intensity = out.intensity.cwiseAbs();
  if (!out.notes.empty()) out.notes += "; ";
  out.notes += std::string("edge_filter=") +
               (options.kernel == EdgeKernel::central_difference ? "central_difference" : "gradient_magnitude") +
               "(field)" + (options.log_scale ? "+log10" : "");
  return out;
}

namespace {

std::array<double, 3> colormap(const std::string& name, double t) {
  t = std::clamp(t, 0.0, 1.0);
  if (name == "gray") return {t, t, t};
  // Five-stop approximation of viridis.
  static constexpr std::array<std::array<double, 3>, 5> stops{{{0.267, 0.005, 0.329},
                                                                {0.230, 0.322, 0.546},
                                                                {0.128, 0.567, 0.551},
                                                                {0.369, 0.789, 0.383},
                                                                {0.993, 0.906, 0.144}}};
  const double x = t * 4.0;
  const int i = std::min(3, static_cast<int>(x));
  const double u = x - i;
  std::array<double, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = stops[i][k] * (1.0 - u) + stops[i + 1][k] * u;
  return c;
}

std::string rgb(const std::array<double, 3>& c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(c[0] * 255)),
                static_cast<int>(std::lround(c[1] * 255)), static_cast<int>(std::lround(c[2] * 255)));
  return buf;
}

void write_csv(const AngularSpectrum& map, std::ostream& os) {
  os << "theta_deg\\field_mT";
  for (double f : map.fields_mT) os << ',' << format_number(f);
  os << '\n';
  for (Eigen::Index r = 0; r < map.intensity.rows(); ++r) {
    os << format_number(map.thetas_deg[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < map.intensity.cols(); ++c) os << ',' << format_number(map.intensity(r, c));
    os << '\n';
  }
}

void write_svg(const AngularSpectrum& map, std::ostream& os, const Provenance* prov, const SvgStyle& style) {
  const int left = 70, right = 20, top = 20, bottom = 50;
  const int w = std::max(style.width, left + right + 10);
  const int h = std::max(style.height, top + bottom + 10);
  const double plot_w = w - left - right, plot_h = h - top - bottom;
  const auto ncols = static_cast<Eigen::Index>(map.thetas_deg.size());
  const Eigen::Index nfields = map.intensity.cols();
  const Eigen::Index bins = std::max<Eigen::Index>(1, std::min<Eigen::Index>(nfields, style.max_rows));

  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (prov) {
    os << "<!--\n";
    write_comment_header(os, *prov, "  ");
    os << "-->\n";
  }
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << ' ' << h << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
     << "\" fill=\"" << rgb(colormap(style.colormap, 0.0)) << "\"/>\n";

  const double lo = map.intensity.size() ? map.intensity.minCoeff() : 0.0;
  const double hi = map.intensity.size() ? map.intensity.maxCoeff() : 0.0;
  const double span = hi > lo ? hi - lo : 1.0;
  const double cell_w = ncols ? plot_w / static_cast<double>(ncols) : plot_w;
  const double cell_h = plot_h / static_cast<double>(bins);
  for (Eigen::Index r = 0; r < ncols; ++r) {
    os << "<g class=\"column\" data-theta=\"" << format_number(map.thetas_deg[static_cast<std::size_t>(r)]) << "\">";
    for (Eigen::Index b = 0; b < bins; ++b) {
      const Eigen::Index c0 = b * nfields / bins, c1 = std::max(c0 + 1, (b + 1) * nfields / bins);
      const double v = map.intensity.row(r).segment(c0, c1 - c0).mean();
      const double t = (v - lo) / span;
      if (t < 1e-3) continue;
      // Field increases upward.
      os << "<rect x=\"" << left + static_cast<double>(r) * cell_w << "\" y=\""
         << top + plot_h - static_cast<double>(b + 1) * cell_h << "\" width=\"" << cell_w << "\" height=\"" << cell_h
         << "\" fill=\"" << rgb(colormap(style.colormap, t)) << "\"/>";
    }
    os << "</g>\n";
  }

  os << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"black\">\n";
  if (ncols > 0) {
    const double t0 = map.thetas_deg.front();
    const double t1 = map.thetas_deg.back() + (ncols > 1 ? map.thetas_deg[1] - map.thetas_deg[0] : 1.0);
    for (double tick = std::ceil(t0 / 45.0) * 45.0; tick <= t1 + 1e-9; tick += 45.0) {
      const double x = left + (tick - t0) / (t1 - t0) * plot_w;
      os << "<line x1=\"" << x << "\" y1=\"" << top + plot_h << "\" x2=\"" << x << "\" y2=\"" << top + plot_h + 5
         << "\" stroke=\"black\"/><text x=\"" << x << "\" y=\"" << top + plot_h + 18
         << "\" text-anchor=\"middle\">" << format_number(tick) << "</text>\n";
    }
  }
  if (nfields > 1) {
    const double f0 = map.fields_mT.front(), f1 = map.fields_mT.back();
    for (double tick = std::ceil(f0 / 20.0) * 20.0; tick <= f1 + 1e-9; tick += 20.0) {
      const double y = top + plot_h - (tick - f0) / (f1 - f0) * plot_h;
      os << "<line x1=\"" << left - 5 << "\" y1=\"" << y << "\" x2=\"" << left << "\" y2=\"" << y
         << "\" stroke=\"black\"/><text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
         << format_number(tick) << "</text>\n";
    }
  }
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">rotation (deg)</text>\n";
  os << "<text x=\"15\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
     << top + plot_h / 2 << ")\">B0 (mT)</text>\n";
  os << "</g>\n</svg>\n";
}

}  // namespace

void export_map(const AngularSpectrum& map, ExportFormat format, const std::filesystem::path& path,
                const Provenance* provenance, const SvgStyle& style) {
  map.validate();
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  if (format == ExportFormat::csv) {
    if (provenance) write_comment_header(os, *provenance);
    if (!map.notes.empty()) os << "# processing: " << map.notes << '\n';
    write_csv(map, os);
  } else {
    write_svg(map, os, provenance, style);
  }
  if (!os) throw IoError("failed while writing '" + path.string() + "'");
}

AngularSpectrum import_map_csv(const std::filesystem::path& path, SpectrumSource source) {
  const CsvTable table = read_csv(path);
  if (table.header.empty() || table.header.front() != "theta_deg\\field_mT")
    throw IoError("'" + path.string() + "' is not an angular map (first header cell must be theta_deg\\field_mT)");
  AngularSpectrum map;
  map.source = source;
  for (std::size_t c = 1; c < table.header.size(); ++c) map.fields_mT.push_back(parse_number(table.header[c], 0, c));
  map.intensity.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(map.fields_mT.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    map.thetas_deg.push_back(parse_number(table.rows[r][0], r + 1, 0));
    for (std::size_t c = 1; c < table.rows[r].size(); ++c)
      map.intensity(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) =
          parse_number(table.rows[r][c], r + 1, c);
  }
  return map;
}

}  // namespace mesr
