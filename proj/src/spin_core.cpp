#include "mesr/spin_core.hpp"

#include "mesr/errors.hpp"
#include "mesr/units.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mesr {

namespace {

ComplexMatrix power(const ComplexMatrix& a, int n) {
  ComplexMatrix out = ComplexMatrix::Identity(a.rows(), a.cols());
  for (int i = 0; i < n; ++i) out = out * a;
  return out;
}

ComplexMatrix anticommutator_quarter(const ComplexMatrix& a, const ComplexMatrix& b) {
  return 0.25 * (a * b + b * a);
}

}  // namespace

SpinQuantumNumber SpinQuantumNumber::from_value(double s) {
  const double twice = 2.0 * s;
  const double rounded = std::round(twice);
  if (!(s > 0.0) || std::abs(twice - rounded) > 1e-12 || rounded > 64.0) {
    std::ostringstream msg;
    msg << "spin quantum number must be a positive multiple of 1/2, got " << s;
    throw ConfigError(msg.str());
  }
  return SpinQuantumNumber(static_cast<int>(rounded));
}

CrystalFieldCoefficients CrystalFieldCoefficients::scaled(double f) const {
  return {b20 * f, b40 * f, b60 * f, b43 * f, b63 * f, b66 * f};
}

StevensCoefficients convert_coefficients(const CrystalFieldCoefficients& b) {
  return {b.b20 / 3.0, b.b40 / 60.0, b.b60 / 1260.0, b.b43 / 3.0, b.b63 / 36.0, b.b66 / 1260.0};
}

void SpinSystem::validate() const {
  if (spin.dim() < 2) throw ConfigError("spin_system.S: 2S+1 must be at least 2");
  if (!(g > 0.0) || !std::isfinite(g)) throw ConfigError("spin_system.g: must be positive and finite");
  for (double v : {cf.b20, cf.b40, cf.b60, cf.b43, cf.b63, cf.b66}) {
    if (!std::isfinite(v)) throw ConfigError("spin_system.b: coefficients must be finite");
  }
  if (site_rotations_deg.empty()) throw ConfigError("spin_system.sites: at least one site is required");
  for (double r : site_rotations_deg) {
    if (!std::isfinite(r)) throw ConfigError("spin_system.sites: rotations must be finite");
  }
  if (ensemble_n && !(*ensemble_n > 0.0)) throw ConfigError("spin_system.ensemble_n: must be positive");
}

bool HamiltonianMatrix::is_hermitian(double relative_tolerance) const {
  if (entries.rows() != entries.cols()) return false;
  const double scale = std::max(1.0, entries.norm());
  return (entries - entries.adjoint()).norm() <= relative_tolerance * scale;
}

SpinOperators spin_operators(SpinQuantumNumber s) {
  const int d = s.dim();
  const double x = s.value() * (s.value() + 1.0);
  SpinOperators ops;
  ops.sz = ComplexMatrix::Zero(d, d);
  ops.splus = ComplexMatrix::Zero(d, d);
  for (int i = 0; i < d; ++i) ops.sz(i, i) = s.m(i);
  // S+|m> = sqrt(S(S+1) - m(m+1)) |m+1>; |m+1> sits one row above |m>.
  for (int i = 1; i < d; ++i) {
    const double m = s.m(i);
    ops.splus(i - 1, i) = std::sqrt(x - m * (m + 1.0));
  }
  ops.sminus = ops.splus.adjoint();
  ops.sx = 0.5 * (ops.splus + ops.sminus);
  ops.sy = std::complex<double>(0.0, -0.5) * (ops.splus - ops.sminus);
  return ops;
}

StevensOperator stevens_operator(int k, int q, SpinQuantumNumber s) {
  const bool supported = (q == 0 && (k == 2 || k == 4 || k == 6)) || (q == 3 && (k == 4 || k == 6)) ||
                         (q == 6 && k == 6);
  if (!supported) {
    std::ostringstream msg;
    msg << "unsupported Stevens operator O_" << k << "^" << q;
    throw std::invalid_argument(msg.str());
  }
  const int d = s.dim();
  if (k > s.twice()) return {ComplexMatrix::Zero(d, d), true};

  const SpinOperators ops = spin_operators(s);
  const double x = s.value() * (s.value() + 1.0);
  const ComplexMatrix id = ComplexMatrix::Identity(d, d);
  const ComplexMatrix sz2 = ops.sz * ops.sz;
  const ComplexMatrix sz4 = sz2 * sz2;

  ComplexMatrix o;
  if (k == 2 && q == 0) {
    o = 3.0 * sz2 - x * id;
  } else if (k == 4 && q == 0) {
    o = 35.0 * sz4 - (30.0 * x - 25.0) * sz2 + (3.0 * x * x - 6.0 * x) * id;
  } else if (k == 6 && q == 0) {
    o = 231.0 * sz4 * sz2 - (315.0 * x - 735.0) * sz4 + (105.0 * x * x - 525.0 * x + 294.0) * sz2 +
        (-5.0 * x * x * x + 40.0 * x * x - 60.0 * x) * id;
  } else if (q == 3) {
    const ComplexMatrix ladder = power(ops.splus, 3) + power(ops.sminus, 3);
    const ComplexMatrix left = (k == 4) ? ops.sz : ComplexMatrix(11.0 * sz2 * ops.sz - (3.0 * x + 59.0) * ops.sz);
    o = anticommutator_quarter(left, ladder);
  } else {
    o = 0.5 * (power(ops.splus, 6) + power(ops.sminus, 6));
  }
  return {o, false};
}

SpinHamiltonian::SpinHamiltonian(const SpinSystem& sys) : ops_(spin_operators(sys.spin)), g_(sys.g) {
  const StevensCoefficients b = convert_coefficients(sys.cf);
  const int d = sys.spin.dim();
  ComplexMatrix h = ComplexMatrix::Zero(d, d);
  const struct {
    int k, q;
    double coeff;
  } terms[] = {{2, 0, b.B20}, {4, 0, b.B40}, {6, 0, b.B60}, {4, 3, b.B43}, {6, 3, b.B63}, {6, 6, b.B66}};
  for (const auto& t : terms) {
    if (t.coeff == 0.0) continue;
    h += t.coeff * stevens_operator(t.k, t.q, sys.spin).matrix;
  }
  zero_field_.entries = std::move(h);
}

HamiltonianMatrix SpinHamiltonian::at(const Vec3& field_mT) const {
  const double zeeman = g_ * units::kBohrMagnetonMHzPerMilliTesla;
  HamiltonianMatrix h = zero_field_;
  h.entries += (zeeman * field_mT.x()) * ops_.sx + (zeeman * field_mT.y()) * ops_.sy +
               (zeeman * field_mT.z()) * ops_.sz;
  return h;
}

HamiltonianMatrix build_hamiltonian(const SpinSystem& sys, const Vec3& field_mT) {
  return SpinHamiltonian(sys).at(field_mT);
}

EigenSystem eigensolve(const HamiltonianMatrix& h) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h.entries);
  if (solver.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "Hermitian eigensolver failed to converge (dim " << h.dim() << ", ||H||_F = " << h.entries.norm()
        << ", max |H_ij| = " << h.entries.cwiseAbs().maxCoeff() << ")";
    throw NumericalError(msg.str());
  }
  const RealVector& values = solver.eigenvalues();
  ComplexMatrix vectors = solver.eigenvectors();
  const int d = static_cast<int>(values.size());

  std::vector<int> pivot(d);
  for (int c = 0; c < d; ++c) {
    int best = 0;
    vectors.col(c).cwiseAbs().maxCoeff(&best);
    // Ties within rounding resolve to the lowest basis index.
    const double top = std::abs(vectors(best, c));
    for (int r = 0; r < best; ++r) {
      if (std::abs(vectors(r, c)) >= top - 1e-12) {
        best = r;
        break;
      }
    }
    pivot[c] = best;
    const std::complex<double> z = vectors(best, c);
    vectors.col(c) *= std::conj(z) / std::abs(z);
  }

  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  const double tol = 1e-10 * std::max(1.0, values.cwiseAbs().maxCoeff());
  // Eigen returns ascending values; only reorder inside degenerate clusters.
  for (int start = 0; start < d;) {
    int stop = start + 1;
    while (stop < d && values[stop] - values[start] <= tol) ++stop;
    std::stable_sort(order.begin() + start, order.begin() + stop,
                     [&](int a, int b) { return pivot[a] < pivot[b]; });
    start = stop;
  }

  EigenSystem out;
  out.levels.resize(d);
  out.states.resize(d, d);
  for (int i = 0; i < d; ++i) {
    out.levels[i] = values[order[i]];
    out.states.col(i) = vectors.col(order[i]);
  }
  return out;
}

RealVector eigenvalues(const HamiltonianMatrix& h) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h.entries, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "Hermitian eigensolver failed to converge (dim " << h.dim() << ", ||H||_F = " << h.entries.norm() << ")";
    throw NumericalError(msg.str());
  }
  return solver.eigenvalues();
}

}  // namespace mesr
