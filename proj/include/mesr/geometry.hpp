#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <vector>

namespace mesr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Wraps an angle in degrees into [0, 360).
double normalize_degrees(double deg);

/// Active z-y-z Euler rotation, degrees.
struct EulerAngles {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  EulerAngles normalized() const;
  friend bool operator==(const EulerAngles&, const EulerAngles&) = default;
};

/// R = Rz(alpha) Ry(beta) Rz(gamma).
Mat3 rotation_matrix(const EulerAngles& e);

/// Active rotation about the crystal c-axis.
Mat3 rotation_about_z(double deg);

enum class Mode { perpendicular, parallel };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

/// One area of the inductor with a fixed relation between B0 and the
/// microwave field. `bmw_axes` are lab-frame unit vectors at theta = 0.
struct ModeRegion {
  Mode label = Mode::perpendicular;
  EulerAngles euler;
  double area_um2 = 1.0;
  std::vector<Vec3> bmw_axes;

  void validate() const;

  /// Perpendicular region of the lumped-element resonator: [30 33 0], 3400 um^2, B_mw along lab x and y.
  static ModeRegion default_perpendicular();
  /// Parallel region: [120 90 0], 832/2 um^2, B_mw along lab x and z.
  static ModeRegion default_parallel();
};

/// In-plane rotation of B0, degrees, wrapped to [0, 360).
struct LabOrientation {
  double theta = 0.0;
};

/// +1 rotates B0 from lab z toward +y with increasing theta, -1 toward -y.
enum class RotationSense : int { toward_plus_y = 1, toward_minus_y = -1 };

/// Lab-frame rotation taking z to the B0 direction at `theta`.
Mat3 in_plane_rotation(LabOrientation theta, RotationSense sense = RotationSense::toward_plus_y);

struct SiteFrameDirections {
  Vec3 b0;
  std::vector<Vec3> bmw;
};

/// B0 = R_site R_region R_theta z. The microwave axes go through the same
/// composite transform so the B0/B_mw relation of a region is fixed.
SiteFrameDirections lab_to_crystal(LabOrientation theta, const ModeRegion& region, double site_rotation_deg,
                                   RotationSense sense = RotationSense::toward_plus_y);

/// Inclusive start, exclusive stop. Throws std::invalid_argument for step <= 0.
std::vector<LabOrientation> sweep_orientations(double start_deg, double stop_deg, double step_deg);

}  // namespace mesr
