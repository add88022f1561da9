#pragma once

#include <Eigen/Dense>

#include <complex>
#include <optional>
#include <vector>

namespace mesr {

using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;

/// Spin quantum number stored as the integer 2S so that half-integers are exact.
class SpinQuantumNumber {
 public:
  constexpr explicit SpinQuantumNumber(int twice_s) : twice_(twice_s) {}

  /// Accepts 0.5, 1, 1.5, ... and rejects anything else.
  static SpinQuantumNumber from_value(double s);

  constexpr int twice() const { return twice_; }
  constexpr double value() const { return 0.5 * twice_; }
  constexpr int dim() const { return twice_ + 1; }
  /// Magnetic quantum number of basis row `index` (m descending from +S).
  constexpr double m(int index) const { return value() - index; }

  friend constexpr bool operator==(SpinQuantumNumber, SpinQuantumNumber) = default;

 private:
  int twice_;
};

/// Conventional lowercase crystal-field coefficients b_k^q, MHz.
struct CrystalFieldCoefficients {
  double b20 = 0.0;
  double b40 = 0.0;
  double b60 = 0.0;
  double b43 = 0.0;
  double b63 = 0.0;
  double b66 = 0.0;

  CrystalFieldCoefficients scaled(double factor) const;
  friend bool operator==(const CrystalFieldCoefficients&, const CrystalFieldCoefficients&) = default;
};

/// Uppercase Stevens prefactors B_k^q, MHz. These multiply the operators directly.
struct StevensCoefficients {
  double B20 = 0.0;
  double B40 = 0.0;
  double B60 = 0.0;
  double B43 = 0.0;
  double B63 = 0.0;
  double B66 = 0.0;
};

/// b20 = 3 B20, b40 = 60 B40, b60 = 1260 B60, b43 = 3 B43, b63 = 36 B63, b66 = 1260 B66.
StevensCoefficients convert_coefficients(const CrystalFieldCoefficients& lowercase);

struct SpinSystem {
  SpinQuantumNumber spin{7};
  double g = 2.0;
  CrystalFieldCoefficients cf;
  /// Rotation of each inequivalent site about the crystal c-axis, degrees.
  std::vector<double> site_rotations_deg{0.0};
  /// Spin count; carried as metadata only.
  std::optional<double> ensemble_n;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

struct HamiltonianMatrix {
  ComplexMatrix entries;

  int dim() const { return static_cast<int>(entries.rows()); }
  bool is_hermitian(double relative_tolerance = 1e-9) const;
};

/// Matrices of S_x, S_y, S_z, S_+, S_- in the |S,m> basis, m descending.
struct SpinOperators {
  ComplexMatrix sx, sy, sz, splus, sminus;
};

SpinOperators spin_operators(SpinQuantumNumber s);

struct StevensOperator {
  ComplexMatrix matrix;
  /// Set when k > 2S; the matrix is then identically zero.
  bool vanishes_identically = false;
};

/// Extended (cosine-type) Stevens operator O_k^q. Supported pairs:
/// (2,0) (4,0) (6,0) (4,3) (6,3) (6,6). Other pairs throw std::invalid_argument.
StevensOperator stevens_operator(int k, int q, SpinQuantumNumber s);

/// Caches the spin operators and the zero-field part so repeated field
/// evaluations only add the Zeeman term.
class SpinHamiltonian {
 public:
  explicit SpinHamiltonian(const SpinSystem& sys);

  /// Field in mT, expressed in the site (crystal) frame.
  HamiltonianMatrix at(const Vec3& field_mT) const;

  const HamiltonianMatrix& zero_field() const { return zero_field_; }
  const SpinOperators& operators() const { return ops_; }
  double g() const { return g_; }

 private:
  SpinOperators ops_;
  HamiltonianMatrix zero_field_;
  double g_;
};

/// H = g (mu_B/h) B.S + sum B_k^q O_k^q, MHz.
HamiltonianMatrix build_hamiltonian(const SpinSystem& sys, const Vec3& field_mT);

struct EigenSystem {
  RealVector levels;     // ascending, MHz
  ComplexMatrix states;  // column i is the eigenvector of levels[i]
};

/// Dense Hermitian diagonalization. Degenerate levels are ordered by the
/// basis index of each vector's largest component, and every vector is
/// phased so that component is real and positive.
EigenSystem eigensolve(const HamiltonianMatrix& h);

/// Eigenvalues only, ascending.
RealVector eigenvalues(const HamiltonianMatrix& h);

}  // namespace mesr
