#pragma once

// Fixed physical constants. Energies are carried as frequencies (E/h) in MHz,
// fields in mT, temperatures in K.

namespace mesr::units {

/// Bohr magneton over Planck constant, MHz per mT.
inline constexpr double kBohrMagnetonMHzPerMilliTesla = 13.9962449;

/// Boltzmann constant over Planck constant, MHz per K.
inline constexpr double kBoltzmannMHzPerKelvin = 20836.619;

inline constexpr double kMHzPerGHz = 1.0e3;

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }

}  // namespace mesr::units
