#include "mesr/errors.hpp"
#include "mesr/spin_core.hpp"
#include "mesr/units.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace mesr;

namespace {

const SpinQuantumNumber kSevenHalves{7};

SpinSystem reference_system() {
  SpinSystem sys;
  sys.spin = kSevenHalves;
  sys.g = oracle::kG;
  const oracle::Coefficients c;
  sys.cf = {c.b20, c.b40, c.b60, c.b43, c.b63, c.b66};
  return sys;
}

struct Pair {
  int k, q;
};
constexpr Pair kSupported[] = {{2, 0}, {4, 0}, {6, 0}, {4, 3}, {6, 3}, {6, 6}};

}  // namespace

TEST_SUITE("stevens operators") {
  TEST_CASE("O20 diagonal for S = 7/2") {
    const StevensOperator o = stevens_operator(2, 0, kSevenHalves);
    const double expected[] = {21, 3, -9, -15, -15, -9, 3, 21};
    REQUIRE(o.matrix.rows() == 8);
    for (int i = 0; i < 8; ++i) CHECK(o.matrix(i, i).real() == doctest::Approx(expected[i]).epsilon(1e-15));
    CHECK_FALSE(o.vanishes_identically);
  }

  TEST_CASE("O20 vanishes for S = 1/2") {
    const StevensOperator o = stevens_operator(2, 0, SpinQuantumNumber{1});
    CHECK(o.matrix.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  }

  TEST_CASE("rank above 2S gives a flagged zero matrix") {
    const StevensOperator o = stevens_operator(6, 6, SpinQuantumNumber{3});
    CHECK(o.vanishes_identically);
    CHECK(o.matrix.rows() == 4);
    CHECK(o.matrix.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("unsupported pair throws") {
    CHECK_THROWS_AS(stevens_operator(4, 1, kSevenHalves), std::invalid_argument);
    CHECK_THROWS_AS(stevens_operator(3, 0, kSevenHalves), std::invalid_argument);
  }

  TEST_CASE("hermitian, traceless and correct coupling pattern") {
    for (const Pair p : kSupported) {
      CAPTURE(p.k);
      CAPTURE(p.q);
      const ComplexMatrix o = stevens_operator(p.k, p.q, kSevenHalves).matrix;
      CHECK((o - o.adjoint()).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(std::abs(o.trace()) <= 1e-9 * std::max(1.0, o.cwiseAbs().maxCoeff()));
      for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
          if (std::abs(r - c) != p.q) CHECK(std::abs(o(r, c)) == 0.0);
        }
      // The coupling is actually present.
      CHECK(o.cwiseAbs().maxCoeff() > 0.0);
    }
  }

  TEST_CASE("element-wise agreement with the closed-form oracle") {
    for (int twice = 1; twice <= 9; ++twice) {
      const SpinQuantumNumber s{twice};
      for (const Pair p : kSupported) {
        if (p.k > twice) continue;
        CAPTURE(twice);
        CAPTURE(p.k);
        CAPTURE(p.q);
        const ComplexMatrix lib = stevens_operator(p.k, p.q, s).matrix;
        const Eigen::MatrixXcd ref = oracle::stevens_matrix(p.k, p.q, s.value());
        const double scale = std::max(1.0, ref.cwiseAbs().maxCoeff());
        CHECK((lib - ref).cwiseAbs().maxCoeff() <= 1e-10 * scale);
      }
    }
  }

  TEST_CASE("O43 matches a brute-force ladder-operator product") {
    const SpinOperators ops = spin_operators(kSevenHalves);
    const ComplexMatrix t = ops.splus * ops.splus * ops.splus + ops.sminus * ops.sminus * ops.sminus;
    const ComplexMatrix brute = 0.25 * (ops.sz * t + t * ops.sz);
    const ComplexMatrix o = stevens_operator(4, 3, kSevenHalves).matrix;
    CHECK((o - brute).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_SUITE("coefficient conversion") {
  TEST_CASE("exact division table") {
    const CrystalFieldCoefficients lower{3153.0, 77.9, 3.0, 54.9, 36.0, 14.9};
    const StevensCoefficients up = convert_coefficients(lower);
    CHECK(up.B20 == doctest::Approx(1051.0).epsilon(1e-15));
    CHECK(up.B40 == doctest::Approx(77.9 / 60.0).epsilon(1e-15));
    CHECK(up.B60 == doctest::Approx(3.0 / 1260.0).epsilon(1e-15));
    CHECK(up.B43 == doctest::Approx(18.3).epsilon(1e-15));
    CHECK(up.B63 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(up.B66 == doctest::Approx(0.011825396825).epsilon(1e-10));
  }

  TEST_CASE("zeros stay zero") {
    const StevensCoefficients up = convert_coefficients({});
    CHECK(up.B20 == 0.0);
    CHECK(up.B40 == 0.0);
    CHECK(up.B60 == 0.0);
    CHECK(up.B43 == 0.0);
    CHECK(up.B63 == 0.0);
    CHECK(up.B66 == 0.0);
  }
}

TEST_SUITE("hamiltonian") {
  TEST_CASE("matches the independent oracle for arbitrary fields") {
    const SpinSystem sys = reference_system();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-150.0, 150.0);
    for (int trial = 0; trial < 20; ++trial) {
      const Vec3 b(u(rng), u(rng), u(rng));
      const ComplexMatrix lib = build_hamiltonian(sys, b).entries;
      const Eigen::MatrixXcd ref = oracle::hamiltonian(oracle::Coefficients{}, oracle::kG, 3.5, b);
      CHECK((lib - ref).cwiseAbs().maxCoeff() <= 1e-9 * ref.cwiseAbs().maxCoeff());
    }
  }

  TEST_CASE("b20-only splitting of the lowest doublets is 2 b20") {
    SpinSystem sys;
    sys.cf.b20 = 3153.0;
    const RealVector e = eigenvalues(build_hamiltonian(sys, Vec3::Zero()));
    // Positive D puts the |+-1/2> doublet lowest and |+-3/2> next.
    CHECK(e[2] - e[0] == doctest::Approx(6306.0).epsilon(1e-12));
  }

  TEST_CASE("zero-field spectrum is Kramers degenerate") {
    const EigenSystem es = eigensolve(build_hamiltonian(reference_system(), Vec3::Zero()));
    for (int i = 0; i < 8; i += 2) CHECK(std::abs(es.levels[i + 1] - es.levels[i]) <= 1e-6);
    for (int i = 1; i + 1 < 8; i += 2) CHECK(es.levels[i + 1] - es.levels[i] > 100.0);
  }

  TEST_CASE("pure Zeeman levels are equally spaced") {
    SpinSystem sys;
    sys.g = 1.9912;
    const RealVector e = eigenvalues(build_hamiltonian(sys, Vec3(0, 0, 100.0)));
    const double gap = 1.9912 * units::kBohrMagnetonMHzPerMilliTesla * 100.0;
    CHECK(gap == doctest::Approx(2786.932).epsilon(1e-6));
    for (int i = 0; i < 8; ++i) CHECK(e[i] == doctest::Approx((i - 3.5) * gap).epsilon(1e-12));
  }

  TEST_CASE("pure Zeeman gap does not depend on field direction") {
    SpinSystem sys;
    sys.g = 1.9912;
    const RealVector e = eigenvalues(build_hamiltonian(sys, Vec3(30.0, -40.0, 0.0)));
    for (int i = 0; i + 1 < 8; ++i)
      CHECK(e[i + 1] - e[i] == doctest::Approx(1.9912 * units::kBohrMagnetonMHzPerMilliTesla * 50.0).epsilon(1e-12));
  }

  TEST_CASE("hermitian at 120 mT along z with every doublet split") {
    const HamiltonianMatrix h = build_hamiltonian(reference_system(), Vec3(0, 0, 120.0));
    CHECK(h.dim() == 8);
    CHECK(h.is_hermitian());
    const RealVector e = eigenvalues(h);
    for (int i = 0; i + 1 < 8; ++i) CHECK(e[i + 1] - e[i] > 1.0);
  }

  TEST_CASE("zero-field part is linear in the coefficients") {
    const SpinSystem base = reference_system();
    const ComplexMatrix h1 = build_hamiltonian(base, Vec3::Zero()).entries;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int trial = 0; trial < 10; ++trial) {
      const double lambda = u(rng);
      SpinSystem scaled = base;
      scaled.cf = base.cf.scaled(lambda);
      const ComplexMatrix h = build_hamiltonian(scaled, Vec3::Zero()).entries;
      CHECK((h - lambda * h1).cwiseAbs().maxCoeff() <= 1e-9 * h1.cwiseAbs().maxCoeff());
    }
  }

  TEST_CASE("cached hamiltonian equals direct construction") {
    const SpinSystem sys = reference_system();
    const SpinHamiltonian cached(sys);
    const Vec3 b(12.0, -7.5, 88.0);
    CHECK((cached.at(b).entries - build_hamiltonian(sys, b).entries).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_SUITE("eigensolve") {
  TEST_CASE("multiple of the identity") {
    HamiltonianMatrix h{ComplexMatrix::Identity(5, 5) * 2.5};
    const EigenSystem es = eigensolve(h);
    for (int i = 0; i < 5; ++i) CHECK(es.levels[i] == doctest::Approx(2.5));
    CHECK((es.states - ComplexMatrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("ascending, unitary and reconstructing on random hermitian matrices") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 100.0);
    for (int trial = 0; trial < 25; ++trial) {
      ComplexMatrix a(8, 8);
      for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) a(r, c) = {n(rng), n(rng)};
      const HamiltonianMatrix h{0.5 * (a + a.adjoint())};
      const EigenSystem es = eigensolve(h);
      for (int i = 0; i + 1 < 8; ++i) CHECK(es.levels[i] <= es.levels[i + 1]);
      const ComplexMatrix v = es.states;
      CHECK((v.adjoint() * v - ComplexMatrix::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-8);
      const ComplexMatrix rebuilt = v * es.levels.cast<std::complex<double>>().asDiagonal() * v.adjoint();
      CHECK((h.entries - rebuilt).norm() <= 1e-6 * h.entries.norm());
    }
  }

  TEST_CASE("deterministic phase convention") {
    const EigenSystem es = eigensolve(build_hamiltonian(reference_system(), Vec3(20.0, 5.0, 60.0)));
    for (int c = 0; c < 8; ++c) {
      Eigen::Index top = 0;
      es.states.col(c).cwiseAbs().maxCoeff(&top);
      CHECK(std::abs(es.states(top, c).imag()) <= 1e-12);
      CHECK(es.states(top, c).real() > 0.0);
    }
  }

  TEST_CASE("non-finite input reports a numerical error") {
    HamiltonianMatrix h{ComplexMatrix::Identity(4, 4)};
    h.entries(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(eigensolve(h), NumericalError);
  }
}

TEST_SUITE("spin system") {
  TEST_CASE("spin quantum number parsing") {
    CHECK(SpinQuantumNumber::from_value(3.5).twice() == 7);
    CHECK(SpinQuantumNumber::from_value(3.5).dim() == 8);
    CHECK(SpinQuantumNumber::from_value(3.5).m(0) == 3.5);
    CHECK_THROWS_AS(SpinQuantumNumber::from_value(1.25), ConfigError);
    CHECK_THROWS_AS(SpinQuantumNumber::from_value(0.0), ConfigError);
  }

  TEST_CASE("validation") {
    SpinSystem sys = reference_system();
    CHECK_NOTHROW(sys.validate());
    sys.g = 0.0;
    CHECK_THROWS_AS(sys.validate(), ConfigError);
    sys = reference_system();
    sys.site_rotations_deg.clear();
    CHECK_THROWS_AS(sys.validate(), ConfigError);
  }
}
