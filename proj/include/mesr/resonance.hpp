#pragma once

#include "mesr/geometry.hpp"
#include "mesr/spin_core.hpp"

#include <optional>
#include <span>
#include <vector>

namespace mesr {

/// kappa = f_r (1/Q_i + 1/Q_c), returned in MHz for f_r in GHz. Q_i may be +inf.
double q_to_kappa(double f_r_GHz, double q_i, double q_c);

struct ResonatorSpec {
  double f_r_GHz = 3.352;
  /// Line-width used by the cavity model, MHz.
  double kappa_MHz = 0.13;
  std::optional<double> q_i;
  std::optional<double> q_c;

  double f_r_MHz() const { return f_r_GHz * 1.0e3; }
  /// f_r (1/Q_i + 1/Q_c) when both quality factors are known.
  std::optional<double> derived_kappa_MHz() const;
  void validate() const;
};

struct LevelPair {
  int lower = 0;
  int upper = 0;
  friend bool operator==(const LevelPair&, const LevelPair&) = default;
};

struct Transition {
  LevelPair levels;
  /// Every level pair resonant at this field (within the merge window), primary first.
  std::vector<LevelPair> degenerate_pairs;
  double field_mT = 0.0;
  double frequency_MHz = 0.0;
  /// d f_ij / dB at the resonance field, MHz per mT.
  double gradient_MHz_per_mT = 0.0;
  Mode mode = Mode::perpendicular;
  double intensity = 0.0;
  int site = 0;
  int region = 0;
  bool below_threshold = false;
};

struct PopulationModel {
  double temperature_K = 0.0;
  RealVector populations;
};

/// Thermal populations of `levels_MHz` at temperature `T_K` (> 0).
PopulationModel boltzmann_populations(const RealVector& levels_MHz, double T_K);

/// f(i, j) = E_j - E_i for j > i, zero elsewhere. `direction` is a unit vector in the site frame.
Eigen::MatrixXd transition_frequencies(const SpinHamiltonian& ham, const Vec3& direction, double magnitude_mT);
Eigen::MatrixXd transition_frequencies(const SpinSystem& sys, const Vec3& direction, double magnitude_mT);

struct FieldRange {
  double start_mT = 0.0;
  double stop_mT = 120.0;
};

struct ResonanceSearchOptions {
  double grid_step_mT = 0.1;
  double tolerance_MHz = 1e-3;
  double gradient_step_mT = 0.01;
  double merge_window_mT = 0.01;
};

/// Scans every level pair for crossings of f_ij(B) with the resonator
/// frequency along `direction`, refines each by bisection and records the
/// local gradient. Intensities are left at zero.
std::vector<Transition> find_resonance_fields(const SpinHamiltonian& ham, const ResonatorSpec& resonator,
                                              const Vec3& direction, FieldRange range,
                                              const ResonanceSearchOptions& options = {});
std::vector<Transition> find_resonance_fields(const SpinSystem& sys, const ResonatorSpec& resonator,
                                              const Vec3& direction, FieldRange range,
                                              const ResonanceSearchOptions& options = {});

/// (p_i - p_j) * sum over microwave axes of |<j| S.n |i>|^2 for one level pair,
/// with eigenvectors evaluated at `field_mT` along `b0_direction`.
double pair_intensity(const SpinHamiltonian& ham, LevelPair pair, double field_mT, const Vec3& b0_direction,
                      std::span<const Vec3> bmw_directions, const PopulationModel& pop);

/// Intensity of `t` summed over all of its degenerate pairs.
double transition_intensity(const SpinHamiltonian& ham, const Transition& t, const Vec3& b0_direction,
                            std::span<const Vec3> bmw_directions, const PopulationModel& pop);

/// Transitions below this fraction of the strongest at an orientation are flagged.
inline constexpr double kIntensityReportThreshold = 1e-4;

struct OrientationSettings {
  FieldRange range;
  ResonanceSearchOptions search;
  double temperature_K = 0.25;
  RotationSense sense = RotationSense::toward_plus_y;
};

/// All transitions at one orientation over regions x sites, with
/// intensities, mode labels and threshold flags assigned. Ordered by region,
/// site, then field.
std::vector<Transition> transitions_at(const SpinSystem& sys, const ResonatorSpec& resonator,
                                       std::span<const ModeRegion> regions, LabOrientation theta,
                                       const OrientationSettings& settings);

}  // namespace mesr
