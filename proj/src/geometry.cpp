#include "mesr/geometry.hpp"

#include "mesr/errors.hpp"
#include "mesr/units.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mesr {

double normalize_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  if (r >= 360.0) r = 0.0;
  return r;
}

EulerAngles EulerAngles::normalized() const {
  return {normalize_degrees(alpha), normalize_degrees(beta), normalize_degrees(gamma)};
}

namespace {

Mat3 rot_y(double deg) {
  const double a = units::deg_to_rad(deg);
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Mat3 rot_x(double deg) {
  const double a = units::deg_to_rad(deg);
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

}  // namespace

Mat3 rotation_about_z(double deg) {
  const double a = units::deg_to_rad(deg);
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

Mat3 rotation_matrix(const EulerAngles& e) {
  return rotation_about_z(e.alpha) * rot_y(e.beta) * rotation_about_z(e.gamma);
}

std::string_view to_string(Mode m) { return m == Mode::perpendicular ? "perpendicular" : "parallel"; }

Mode mode_from_string(std::string_view s) {
  if (s == "perpendicular" || s == "perp") return Mode::perpendicular;
  if (s == "parallel" || s == "par") return Mode::parallel;
  throw ConfigError("unknown mode label '" + std::string(s) + "' (expected perpendicular|parallel)");
}

void ModeRegion::validate() const {
  if (!(area_um2 > 0.0) || !std::isfinite(area_um2)) throw ConfigError("region area must be positive");
  if (bmw_axes.empty()) throw ConfigError("region needs at least one microwave axis");
  for (const Vec3& v : bmw_axes) {
    if (std::abs(v.norm() - 1.0) > 1e-12) throw ConfigError("microwave axes must be unit vectors");
  }
}

ModeRegion ModeRegion::default_perpendicular() {
  return {Mode::perpendicular, {30.0, 33.0, 0.0}, 3400.0, {Vec3::UnitX(), Vec3::UnitY()}};
}

ModeRegion ModeRegion::default_parallel() {
  return {Mode::parallel, {120.0, 90.0, 0.0}, 832.0 / 2.0, {Vec3::UnitX(), Vec3::UnitZ()}};
}

Mat3 in_plane_rotation(LabOrientation theta, RotationSense sense) {
  // A positive rotation about +x carries z toward -y.
  return rot_x(-static_cast<int>(sense) * theta.theta);
}

SiteFrameDirections lab_to_crystal(LabOrientation theta, const ModeRegion& region, double site_rotation_deg,
                                   RotationSense sense) {
  const Mat3 total = rotation_about_z(site_rotation_deg) * rotation_matrix(region.euler) *
                     in_plane_rotation(theta, sense);
  SiteFrameDirections out;
  out.b0 = (total * Vec3::UnitZ()).normalized();
  out.bmw.reserve(region.bmw_axes.size());
  for (const Vec3& axis : region.bmw_axes) out.bmw.push_back((total * axis).normalized());
  return out;
}

std::vector<LabOrientation> sweep_orientations(double start_deg, double stop_deg, double step_deg) {
  if (!(step_deg > 0.0) || !std::isfinite(step_deg)) {
    std::ostringstream msg;
    msg << "sweep step must be positive, got " << step_deg;
    throw std::invalid_argument(msg.str());
  }
  std::vector<LabOrientation> out;
  const double span = stop_deg - start_deg;
  if (!(span > 0.0)) return out;
  const auto n = static_cast<long>(std::ceil(span / step_deg - 1e-9));
  out.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) out.push_back({normalize_degrees(start_deg + static_cast<double>(i) * step_deg)});
  return out;
}

}  // namespace mesr
