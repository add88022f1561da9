#include "mesr/lossfit.hpp"

#include "mesr/csv_io.hpp"
#include "mesr/errors.hpp"
#include "mesr/units.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mesr {

// ---------------------------------------------------------------------------
// Notch fit
// ---------------------------------------------------------------------------

void S21Trace::validate() const {
  if (frequencies_GHz.size() != s21.size()) throw std::invalid_argument("S21 trace: length mismatch");
  if (frequencies_GHz.size() < 8) throw std::invalid_argument("S21 trace: too few points");
  for (std::size_t i = 1; i < frequencies_GHz.size(); ++i)
    if (!(frequencies_GHz[i] > frequencies_GHz[i - 1]))
      throw std::invalid_argument("S21 trace: frequency axis must be strictly increasing");
}

std::complex<double> notch_s21(double f, double f_r, double q_i, double q_c) {
  const double q_l = 1.0 / (1.0 / q_i + 1.0 / q_c);
  return 1.0 - (q_l / q_c) / std::complex<double>(1.0, 2.0 * q_l * (f - f_r) / f_r);
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

struct NotchGuess {
  double f_r, q_l, ratio, amplitude;
};

NotchGuess guess_notch(const S21Trace& t) {
  const std::size_t n = t.s21.size();
  const std::size_t edge = std::max<std::size_t>(2, n / 20);
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(t.s21[i]);
  std::vector<double> rim(mag.begin(), mag.begin() + static_cast<std::ptrdiff_t>(edge));
  rim.insert(rim.end(), mag.end() - static_cast<std::ptrdiff_t>(edge), mag.end());
  const double amplitude = median(rim);
  if (!(amplitude > 0.0)) throw NumericalError("no dip detected: transmission baseline is zero");

  std::vector<double> dip(n), diffs;
  for (std::size_t i = 0; i < n; ++i) dip[i] = 1.0 - (mag[i] * mag[i]) / (amplitude * amplitude);
  for (std::size_t i = 1; i < n; ++i) diffs.push_back(std::abs(dip[i] - dip[i - 1]));
  const double noise = 1.4826 * median(diffs) / std::sqrt(2.0);
  const auto peak = static_cast<std::size_t>(std::max_element(dip.begin(), dip.end()) - dip.begin());
  const double depth = dip[peak];
  if (!(depth > std::max(5.0 * noise, 1e-9))) {
    std::ostringstream msg;
    msg << "no dip detected (depth " << depth << ", noise " << noise << ")";
    throw NumericalError(msg.str());
  }

  auto crossing = [&](int dir) {
    std::size_t i = peak;
    while (true) {
      const std::size_t next = dir < 0 ? i - 1 : i + 1;
      if ((dir < 0 && i == 0) || (dir > 0 && i + 1 >= n)) return t.frequencies_GHz[i];
      if (dip[next] < 0.5 * depth) {
        const double w = (dip[i] - 0.5 * depth) / (dip[i] - dip[next]);
        return t.frequencies_GHz[i] + w * (t.frequencies_GHz[next] - t.frequencies_GHz[i]);
      }
      i = next;
    }
  };
  const double f_r = t.frequencies_GHz[peak];
  double fwhm = crossing(+1) - crossing(-1);
  if (!(fwhm > 0.0)) fwhm = t.frequencies_GHz[std::min(peak + 1, n - 1)] - t.frequencies_GHz[peak > 0 ? peak - 1 : 0];
  const double y_min = std::max(0.0, 1.0 - depth);
  const double ratio = std::clamp(1.0 - std::sqrt(y_min), 1e-6, 1.0 - 1e-9);
  return {f_r, f_r / fwhm, ratio, amplitude};
}

}  // namespace

NotchFit fit_s21_notch(const S21Trace& trace, const LevMarOptions& options) {
  trace.validate();
  const NotchGuess g = guess_notch(trace);
  const double q_c0 = g.q_l / g.ratio;
  const double q_i0 = 1.0 / std::max(1.0 / g.q_l - 1.0 / q_c0, 1e-12 / g.q_l);
  const double width = g.f_r / g.q_l;  // detuning parameter is in units of the guessed linewidth
  const bool complex_data = !trace.magnitude_only;
  const std::size_t n = trace.frequencies_GHz.size();
  const Eigen::Index m = static_cast<Eigen::Index>(complex_data ? 2 * n : n);

  // p = (offset / width, ln Q_i, ln Q_c, amplitude[, phase])
  Eigen::VectorXd p0(complex_data ? 5 : 4);
  p0 << 0.0, std::log(q_i0), std::log(q_c0), g.amplitude;
  if (complex_data) p0[4] = std::arg(trace.s21.front() + trace.s21.back());

  auto model = [&](const Eigen::VectorXd& p, double f) {
    const double f_r = g.f_r + p[0] * width;
    std::complex<double> s = p[3] * notch_s21(f, f_r, std::exp(p[1]), std::exp(p[2]));
    if (complex_data) s *= std::polar(1.0, p[4]);
    return s;
  };
  const ResidualFunction fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::complex<double> s = model(p, trace.frequencies_GHz[i]);
      if (complex_data) {
        r[static_cast<Eigen::Index>(2 * i)] = s.real() - trace.s21[i].real();
        r[static_cast<Eigen::Index>(2 * i + 1)] = s.imag() - trace.s21[i].imag();
      } else {
        r[static_cast<Eigen::Index>(i)] = std::abs(s) - std::abs(trace.s21[i]);
      }
    }
  };

  const LevMarResult res = levenberg_marquardt(fn, p0, m, options);
  if (!res.params.allFinite()) throw NumericalError("notch fit diverged");
  NotchFit out;
  out.f_r_GHz = g.f_r + res.params[0] * width;
  out.q_i = std::exp(res.params[1]);
  out.q_c = std::exp(res.params[2]);
  out.q_m = 1.0 / (1.0 / out.q_i + 1.0 / out.q_c);
  out.amplitude = res.params[3];
  out.residual_rms = std::sqrt(res.residuals.squaredNorm() / static_cast<double>(m));
  out.iterations = res.iterations;
  out.converged = res.status == LevMarStatus::converged;
  if (!out.converged) {
    std::ostringstream msg;
    msg << "notch fit did not converge after " << res.iterations << " iterations (f_r = " << out.f_r_GHz
        << " GHz, Q_i = " << out.q_i << ", Q_c = " << out.q_c << ", rms = " << out.residual_rms << ")";
    throw NumericalError(msg.str());
  }
  return out;
}

S21Trace read_s21_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  const int f = table.column("freq_GHz");
  const int re = table.column("re"), im = table.column("im"), mag = table.column("mag");
  if (f < 0 || !((re >= 0 && im >= 0) || mag >= 0))
    throw IoError("'" + path.string() + "': expected columns freq_GHz,re,im or freq_GHz,mag");
  S21Trace t;
  t.magnitude_only = !(re >= 0 && im >= 0);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    t.frequencies_GHz.push_back(parse_number(row[static_cast<std::size_t>(f)], r + 1, static_cast<std::size_t>(f)));
    if (t.magnitude_only) {
      t.s21.emplace_back(parse_number(row[static_cast<std::size_t>(mag)], r + 1, static_cast<std::size_t>(mag)), 0.0);
    } else {
      t.s21.emplace_back(parse_number(row[static_cast<std::size_t>(re)], r + 1, static_cast<std::size_t>(re)),
                         parse_number(row[static_cast<std::size_t>(im)], r + 1, static_cast<std::size_t>(im)));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Loss budget
// ---------------------------------------------------------------------------

LossBudget decompose_loss(std::span<const double> fields, std::span<const double> q_m, double q_c,
                          double zero_field_tan_int) {
  if (fields.size() != q_m.size()) throw std::invalid_argument("field and Q_m traces differ in length");
  if (!(q_c > 0.0)) throw std::invalid_argument("Q_c must be positive");
  LossBudget b;
  b.fields_mT.assign(fields.begin(), fields.end());
  for (std::size_t i = 0; i < q_m.size(); ++i) {
    if (!(q_m[i] > 0.0)) throw std::invalid_argument("Q_m values must be positive");
    const double tan_m = 1.0 / q_m[i];
    const double tan_c = 1.0 / q_c;
    const double tan_int = tan_m - tan_c;
    b.tan_m.push_back(tan_m);
    b.tan_c.push_back(tan_c);
    b.tan_int.push_back(tan_int);
    b.tan_B.push_back(tan_int - zero_field_tan_int);
    b.tan_ions.push_back(tan_int - zero_field_tan_int);
    if (tan_int < 0.0) b.negative_tan_int.push_back(i);
  }
  return b;
}

LossBudget decompose_loss(std::span<const double> fields, std::span<const double> q_m, double q_c) {
  if (fields.empty() || fields.size() != q_m.size()) throw std::invalid_argument("empty or mismatched trace");
  std::size_t zero = 0;
  for (std::size_t i = 1; i < fields.size(); ++i)
    if (std::abs(fields[i]) < std::abs(fields[zero])) zero = i;
  if (!(q_m[zero] > 0.0) || !(q_c > 0.0)) throw std::invalid_argument("quality factors must be positive");
  return decompose_loss(fields, q_m, q_c, 1.0 / q_m[zero] - 1.0 / q_c);
}

// ---------------------------------------------------------------------------
// Cavity-spin model
// ---------------------------------------------------------------------------

double cavity_qm(double delta, double gamma, double g_c, double kappa, double f_r_GHz) {
  const double omega = f_r_GHz * units::kMHzPerGHz;
  const double lorentz = delta * delta + gamma * gamma;
  return lorentz / (2.0 * g_c * g_c * gamma + kappa * lorentz) * omega;
}

double ion_loss_tangent(double delta, double gamma, double g_c, double f_r_GHz) {
  const double omega = f_r_GHz * units::kMHzPerGHz;
  return 2.0 * g_c * g_c * gamma / (omega * (delta * delta + gamma * gamma));
}

std::string_view to_string(TraceKind k) { return k == TraceKind::q_m ? "Q_m" : "tan_ions"; }

void LossTrace::validate() const {
  if (fields_mT.size() != values.size()) throw std::invalid_argument("loss trace: length mismatch");
  if (fields_mT.empty()) throw std::invalid_argument("loss trace is empty");
  for (std::size_t i = 1; i < fields_mT.size(); ++i)
    if (!(fields_mT[i] > fields_mT[i - 1]))
      throw std::invalid_argument("loss trace: field axis must be strictly increasing");
  if (kind == TraceKind::q_m)
    for (double v : values)
      if (!(v > 0.0)) throw std::invalid_argument("loss trace: Q_m values must be positive");
}

LossTrace read_loss_trace_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  const int field = table.column("field_mT");
  const int qm = table.column("Q_m"), tan = table.column("tan_ions"), theta = table.column("theta_deg");
  if (field < 0 || (qm < 0) == (tan < 0))
    throw IoError("'" + path.string() + "': expected columns field_mT and exactly one of Q_m, tan_ions");
  LossTrace t;
  t.kind = qm >= 0 ? TraceKind::q_m : TraceKind::tan_ions;
  const auto value = static_cast<std::size_t>(qm >= 0 ? qm : tan);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    t.fields_mT.push_back(parse_number(table.rows[r][static_cast<std::size_t>(field)], r + 1,
                                       static_cast<std::size_t>(field)));
    t.values.push_back(parse_number(table.rows[r][value], r + 1, value));
    if (theta >= 0 && !t.theta_deg)
      t.theta_deg = parse_number(table.rows[r][static_cast<std::size_t>(theta)], r + 1,
                                 static_cast<std::size_t>(theta));
  }
  return t;
}

double model_loss_tangent(std::span<const PeakModel> peaks, double field, double kappa, double f_r_GHz) {
  double tan = kappa / (f_r_GHz * units::kMHzPerGHz);
  for (const PeakModel& p : peaks) tan += ion_loss_tangent(p.detuning_MHz(field), p.gamma_MHz, p.g_c_MHz, f_r_GHz);
  return tan;
}

LossTrace synthesize_trace(std::span<const PeakModel> peaks, std::span<const double> fields, double kappa,
                           double f_r_GHz, TraceKind kind) {
  LossTrace t;
  t.kind = kind;
  t.fields_mT.assign(fields.begin(), fields.end());
  const double baseline = kappa / (f_r_GHz * units::kMHzPerGHz);
  for (double b : fields) {
    const double tan = model_loss_tangent(peaks, b, kappa, f_r_GHz);
    t.values.push_back(kind == TraceKind::q_m ? 1.0 / tan : tan - baseline);
  }
  return t;
}

FitResult fit_multipeak(const LossTrace& trace, std::span<const PeakModel> seeds, const FitOptions& opt) {
  trace.validate();
  if (seeds.empty()) throw std::invalid_argument("at least one seed peak is required");
  for (const PeakModel& s : seeds) {
    if (!(s.gamma_MHz > 0.0)) throw std::invalid_argument("seed '" + s.label + "': gamma must be positive");
    if (s.g_c_MHz < 0.0) throw std::invalid_argument("seed '" + s.label + "': g_c must be non-negative");
  }
  if (opt.fit_kappa && trace.kind != TraceKind::q_m)
    throw std::invalid_argument("kappa can only be fitted on Q_m traces");
  const std::size_t n_peaks = seeds.size();
  const std::size_t n_points = trace.fields_mT.size();
  const auto n_peak_params = static_cast<Eigen::Index>(3 * n_peaks);
  const Eigen::Index n_params = n_peak_params + (opt.fit_kappa ? 1 : 0);
  if (static_cast<Eigen::Index>(n_points) < n_params) throw std::invalid_argument("trace shorter than parameter count");

  const double baseline = opt.kappa_MHz / (opt.f_r_GHz * units::kMHzPerGHz);
  double tan_scale = 0.0;
  for (double v : trace.values) tan_scale = std::max(tan_scale, std::abs(v));
  if (!(tan_scale > 0.0)) tan_scale = 1.0;

  std::vector<PeakModel> work(seeds.begin(), seeds.end());
  double kappa = opt.kappa_MHz;
  auto unpack = [&](const Eigen::VectorXd& p) {
    for (std::size_t k = 0; k < n_peaks; ++k) {
      work[k].b_f_mT = p[static_cast<Eigen::Index>(3 * k)];
      work[k].gamma_MHz = p[static_cast<Eigen::Index>(3 * k + 1)];
      work[k].g_c_MHz = p[static_cast<Eigen::Index>(3 * k + 2)];
    }
    if (opt.fit_kappa) kappa = p[n_peak_params];
  };
  auto model_value = [&](double field) {
    const double tan = model_loss_tangent(work, field, kappa, opt.f_r_GHz);
    return trace.kind == TraceKind::q_m ? 1.0 / tan : tan - baseline;
  };
  const ResidualFunction fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    unpack(p);
    for (std::size_t i = 0; i < n_points; ++i) {
      const double tan = model_loss_tangent(work, trace.fields_mT[i], kappa, opt.f_r_GHz);
      r[static_cast<Eigen::Index>(i)] = trace.kind == TraceKind::q_m
                                            ? tan * trace.values[i] - 1.0
                                            : (tan - baseline - trace.values[i]) / tan_scale;
    }
  };

  Eigen::VectorXd p0(n_params);
  ParameterBounds bounds{Eigen::VectorXd(n_params), Eigen::VectorXd(n_params)};
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n_peaks; ++k) {
    const auto i = static_cast<Eigen::Index>(3 * k);
    p0[i] = seeds[k].b_m_mT.value_or(seeds[k].b_f_mT);
    p0[i + 1] = seeds[k].gamma_MHz;
    p0[i + 2] = seeds[k].g_c_MHz;
    bounds.lower.segment(i, 3) << -inf, opt.gamma_min_MHz, opt.g_c_min_MHz;
    bounds.upper.segment(i, 3) << inf, opt.gamma_max_MHz, opt.g_c_max_MHz;
  }
  if (opt.fit_kappa) {
    p0[n_peak_params] = opt.kappa_MHz;
    bounds.lower[n_peak_params] = 0.0;
    bounds.upper[n_peak_params] = inf;
  }

  const LevMarResult res = levenberg_marquardt(fn, p0, static_cast<Eigen::Index>(n_points), opt.solver, bounds);
  unpack(res.params);

  FitResult out;
  out.peaks = work;
  out.kappa_MHz = kappa;
  out.f_r_GHz = opt.f_r_GHz;
  out.kind = trace.kind;
  out.iterations = res.iterations;
  out.status = res.status;
  out.residuals.assign(res.residuals.data(), res.residuals.data() + res.residuals.size());
  out.residual_rms = std::sqrt(res.residuals.squaredNorm() / static_cast<double>(n_points));
  for (double b : trace.fields_mT) out.model_values.push_back(model_value(b));

  const CovarianceEstimate cov = estimate_covariance(res.jacobian, res.residuals);
  out.covariance = cov.covariance;
  out.degenerate = cov.near_singular;
  auto sigma = [&](Eigen::Index i) { return std::sqrt(std::max(0.0, cov.covariance(i, i))); };
  for (std::size_t k = 0; k < n_peaks; ++k) {
    const auto i = static_cast<Eigen::Index>(3 * k);
    out.uncertainties.push_back({sigma(i), sigma(i + 1), sigma(i + 2)});
  }
  if (opt.fit_kappa) out.kappa_uncertainty_MHz = sigma(n_peak_params);
  out.converged = res.status == LevMarStatus::converged && !out.degenerate;
  return out;
}

double rms_model_fit_deviation(std::span<const double> modelled, std::span<const double> fitted) {
  if (modelled.size() != fitted.size()) throw std::invalid_argument("modelled and fitted lists differ in length");
  if (modelled.empty()) throw std::invalid_argument("no peak pairs given");
  double sum = 0.0;
  for (std::size_t i = 0; i < modelled.size(); ++i) {
    if (!(modelled[i] > 0.0) || !(fitted[i] > 0.0)) throw std::invalid_argument("field positions must be positive");
    sum += std::abs(modelled[i] - fitted[i]) / fitted[i];
  }
  return 100.0 * sum / static_cast<double>(modelled.size());
}

}  // namespace mesr
