#pragma once

#include "mesr/levmar.hpp"

#include <Eigen/Dense>

#include <complex>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mesr {

// ---------------------------------------------------------------------------
// Resonator transmission
// ---------------------------------------------------------------------------

struct S21Trace {
  std::vector<double> frequencies_GHz;
  /// Complex transmission; when `magnitude_only` only |s21| is meaningful.
  std::vector<std::complex<double>> s21;
  bool magnitude_only = false;
  double field_mT = 0.0;
  double theta_deg = 0.0;

  void validate() const;
};

/// S21(f) = 1 - (Q_L/Q_c) / (1 + 2i Q_L (f - f_r)/f_r), 1/Q_L = 1/Q_i + 1/Q_c.
std::complex<double> notch_s21(double f_GHz, double f_r_GHz, double q_i, double q_c);

struct NotchFit {
  double f_r_GHz = 0.0;
  double q_i = 0.0;
  double q_c = 0.0;
  /// Loaded quality factor, 1/Q_m = 1/Q_i + 1/Q_c.
  double q_m = 0.0;
  double amplitude = 1.0;
  double residual_rms = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Least-squares notch fit with a free real amplitude (and a free phase for
/// complex data). Throws NumericalError("no dip detected") on a flat trace.
NotchFit fit_s21_notch(const S21Trace& trace, const LevMarOptions& options = {});

/// CSV with columns freq_GHz,re,im or freq_GHz,mag.
S21Trace read_s21_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Loss budget
// ---------------------------------------------------------------------------

struct LossBudget {
  std::vector<double> fields_mT;
  std::vector<double> tan_m;
  std::vector<double> tan_c;
  std::vector<double> tan_int;
  std::vector<double> tan_B;
  std::vector<double> tan_ions;
  /// Points where tan_int < 0, which means Q_c is overestimated.
  std::vector<std::size_t> negative_tan_int;
};

/// tan_m = 1/Q_m, tan_c = 1/Q_c, tan_int = tan_m - tan_c,
/// tan_B = tan_int - zero_field_tan_int, tan_ions = tan_B.
LossBudget decompose_loss(std::span<const double> fields_mT, std::span<const double> q_m, double q_c,
                          double zero_field_tan_int);

/// As above, taking the zero-field intrinsic loss from the sample closest to B = 0.
LossBudget decompose_loss(std::span<const double> fields_mT, std::span<const double> q_m, double q_c);

// ---------------------------------------------------------------------------
// Cavity-spin model
// ---------------------------------------------------------------------------

/// Q_m = f_r (D^2 + gamma^2) / (2 g_c^2 gamma + kappa (D^2 + gamma^2)).
/// Detuning, widths and coupling in MHz; f_r in GHz.
double cavity_qm(double delta_MHz, double gamma_MHz, double g_c_MHz, double kappa_MHz, double f_r_GHz);

/// Loss added by one spin line: 2 g_c^2 gamma / (f_r (D^2 + gamma^2)).
double ion_loss_tangent(double delta_MHz, double gamma_MHz, double g_c_MHz, double f_r_GHz);

struct PeakModel {
  std::string label;
  /// Modelled (seed) position, mT.
  std::optional<double> b_m_mT;
  double b_f_mT = 0.0;
  double gamma_MHz = 50.0;
  double g_c_MHz = 1.0;
  /// Converts field offsets into detuning, MHz per mT.
  double gradient_MHz_per_mT = 27.87;

  double detuning_MHz(double field_mT) const { return gradient_MHz_per_mT * (field_mT - b_f_mT); }
};

enum class TraceKind { q_m, tan_ions };

std::string_view to_string(TraceKind k);

struct LossTrace {
  std::vector<double> fields_mT;
  std::vector<double> values;
  TraceKind kind = TraceKind::q_m;
  std::optional<double> theta_deg;

  void validate() const;
};

/// Field, value with the header tag Q_m or tan_ions; optional theta_deg column.
LossTrace read_loss_trace_csv(const std::filesystem::path& path);

/// Total loss: kappa/f_r + sum of per-peak ion losses.
double model_loss_tangent(std::span<const PeakModel> peaks, double field_mT, double kappa_MHz, double f_r_GHz);

/// Noise-free trace of the requested kind on `fields_mT`.
LossTrace synthesize_trace(std::span<const PeakModel> peaks, std::span<const double> fields_mT, double kappa_MHz,
                           double f_r_GHz, TraceKind kind);

struct FitOptions {
  double kappa_MHz = 0.13;
  double f_r_GHz = 3.352;
  double gamma_min_MHz = 1e-6;
  double gamma_max_MHz = 1e4;
  double g_c_min_MHz = 0.0;
  double g_c_max_MHz = 1e3;
  /// Fit kappa as an extra parameter (Q_m traces only).
  bool fit_kappa = false;
  LevMarOptions solver;
};

struct PeakUncertainty {
  double b_f_mT = 0.0;
  double gamma_MHz = 0.0;
  double g_c_MHz = 0.0;
};

struct FitResult {
  std::vector<PeakModel> peaks;
  std::vector<PeakUncertainty> uncertainties;
  double kappa_MHz = 0.0;
  /// Zero when kappa was held fixed.
  double kappa_uncertainty_MHz = 0.0;
  double f_r_GHz = 0.0;
  TraceKind kind = TraceKind::q_m;
  double residual_rms = 0.0;
  /// Parameters ordered (b_f, gamma, g_c) per peak, then kappa if fitted.
  Eigen::MatrixXd covariance;
  std::vector<double> residuals;
  std::vector<double> model_values;
  int iterations = 0;
  LevMarStatus status = LevMarStatus::iteration_cap;
  /// Covariance is near-singular: overlapping seeds or a vanished peak.
  bool degenerate = false;
  bool converged = false;
};

/// Fits b_f, gamma and g_c of every seed, kappa held fixed unless `fit_kappa`. Q_m traces are
/// fitted through 1/Q_m with relative residuals; tan_ions traces with
/// residuals scaled by the largest |value|.
FitResult fit_multipeak(const LossTrace& trace, std::span<const PeakModel> seeds, const FitOptions& options);

/// Mean of |B_m - B_f| / B_f, in percent.
double rms_model_fit_deviation(std::span<const double> modelled_mT, std::span<const double> fitted_mT);

}  // namespace mesr
