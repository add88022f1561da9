#include "mesr/errors.hpp"
#include "mesr/lossfit.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace mesr;

namespace {

constexpr double kFr = 3.352;
constexpr double kKappa = 0.13;
constexpr double kGrad = 27.8693228;

PeakModel peak(std::string label, double b_f, double gamma, double g_c) {
  PeakModel p;
  p.label = std::move(label);
  p.b_f_mT = b_f;
  p.gamma_MHz = gamma;
  p.g_c_MHz = g_c;
  p.gradient_MHz_per_mT = kGrad;
  return p;
}

std::vector<PeakModel> table_peaks() {
  return {peak("a", 43.4, 53, 4.5), peak("b", 65.4, 34, 1.8),  peak("c", 104.3, 150, 2.1),
          peak("e", 84.1, 100, 1.7), peak("f", 120.0, 450, 3.0), peak("g", 57.0, 500, 4.3)};
}

std::vector<double> field_axis(double start, double stop, double step) {
  std::vector<double> v;
  for (int i = 0; start + i * step <= stop + 1e-9; ++i) v.push_back(start + i * step);
  return v;
}

S21Trace synth_s21(double f_r, double q_i, double q_c, double noise, std::uint64_t seed, bool magnitude = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise);
  S21Trace t;
  t.magnitude_only = magnitude;
  const double span = 20.0 * f_r / (1.0 / (1.0 / q_i + 1.0 / q_c));
  for (int i = 0; i < 801; ++i) {
    const double f = f_r - 0.5 * span + span * i / 800.0;
    std::complex<double> s = notch_s21(f, f_r, q_i, q_c);
    if (noise > 0.0) s += std::complex<double>(n(rng), n(rng));
    if (magnitude) s = std::abs(s);
    t.frequencies_GHz.push_back(f);
    t.s21.push_back(s);
  }
  return t;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto p = std::filesystem::temp_directory_path() / ("mesr_lossfit_" + name);
  std::ofstream(p) << content;
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST_CASE("single-peak Q_m reference values") {
  CHECK(cavity_qm(0.0, 53.0, 4.5, kKappa, kFr) == doctest::Approx(3748.8).epsilon(1e-4));
  CHECK(cavity_qm(0.0, 53.0, 0.0, kKappa, kFr) == doctest::Approx(3352.0 / 0.13));
  CHECK(cavity_qm(1e9, 53.0, 4.5, kKappa, kFr) == doctest::Approx(25784.6).epsilon(1e-5));
  CHECK(cavity_qm(0.0, 53.0, 4.5, kKappa, kFr) == doctest::Approx(oracle::qm_single(0.0, 53.0, 4.5, kKappa, 3352.0)));
}

TEST_CASE("Q_m is even in detuning and rises with |detuning|") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> g(1.0, 500.0), c(0.1, 10.0), d(0.0, 2000.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double gamma = g(rng), gc = c(rng), d1 = d(rng), d2 = d1 + d(rng) + 1e-3;
    CHECK(cavity_qm(d1, gamma, gc, kKappa, kFr) == cavity_qm(-d1, gamma, gc, kKappa, kFr));
    CHECK(cavity_qm(d2, gamma, gc, kKappa, kFr) > cavity_qm(d1, gamma, gc, kKappa, kFr));
  }
}

TEST_CASE("inverse Q_m is the cavity loss plus the ion loss") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> g(1.0, 1000.0), c(0.0, 20.0), d(-5000.0, 5000.0), k(0.01, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const double gamma = g(rng), gc = c(rng), delta = d(rng), kappa = k(rng);
    const double lhs = 1.0 / cavity_qm(delta, gamma, gc, kappa, kFr);
    const double rhs = kappa / (kFr * 1000.0) + ion_loss_tangent(delta, gamma, gc, kFr);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(rhs));
  }
}

TEST_CASE("ion loss tangent agrees with the explicit oracle") {
  const double tan = ion_loss_tangent(10.0, 53.0, 4.5, kFr);
  const double q = oracle::qm_single(10.0, 53.0, 4.5, kKappa, 3352.0);
  CHECK(tan == doctest::Approx(1.0 / q - kKappa / 3352.0).epsilon(1e-12));
}

TEST_CASE("model loss tangent adds peaks") {
  const auto peaks = table_peaks();
  for (double b : {0.0, 43.4, 60.0, 120.0}) {
    double sum = kKappa / 3352.0;
    for (const PeakModel& p : peaks) sum += ion_loss_tangent(p.detuning_MHz(b), p.gamma_MHz, p.g_c_MHz, kFr);
    CHECK(model_loss_tangent(peaks, b, kKappa, kFr) == doctest::Approx(sum).epsilon(1e-14));
  }
}

// ---------------------------------------------------------------------------

TEST_CASE("notch transmission shape") {
  const double q_l = 1.0 / (1.0 / 3.3e5 + 1.0 / 3.8e4);
  CHECK(std::abs(notch_s21(kFr, kFr, 3.3e5, 3.8e4) - (1.0 - q_l / 3.8e4)) < 1e-14);
  CHECK(std::abs(notch_s21(kFr * 1.1, kFr, 3.3e5, 3.8e4) - 1.0) < 1e-3);
}

TEST_CASE("notch fit recovers quality factors from noisy complex data") {
  const S21Trace t = synth_s21(kFr, 3.3e5, 3.8e4, 1e-3, 21);
  const NotchFit f = fit_s21_notch(t);
  CHECK(f.converged);
  CHECK(f.q_i == doctest::Approx(3.3e5).epsilon(0.02));
  CHECK(f.q_c == doctest::Approx(3.8e4).epsilon(0.02));
  CHECK(f.f_r_GHz == doctest::Approx(kFr).epsilon(1e-7));
  CHECK(f.q_m == doctest::Approx(1.0 / (1.0 / f.q_i + 1.0 / f.q_c)));
}

TEST_CASE("noise-free notch fit is exact") {
  const NotchFit f = fit_s21_notch(synth_s21(kFr, 3.3e5, 3.8e4, 0.0, 0));
  CHECK(f.residual_rms < 1e-12);
  CHECK(f.q_i == doctest::Approx(3.3e5).epsilon(1e-6));
  CHECK(f.q_c == doctest::Approx(3.8e4).epsilon(1e-6));
}

TEST_CASE("magnitude-only notch fit") {
  const NotchFit f = fit_s21_notch(synth_s21(kFr, 3.3e5, 3.8e4, 0.0, 0, true));
  CHECK(f.q_i == doctest::Approx(3.3e5).epsilon(1e-4));
  CHECK(f.q_c == doctest::Approx(3.8e4).epsilon(1e-4));
}

TEST_CASE("notch fit is invariant under frequency shift and amplitude scale") {
  const NotchFit ref = fit_s21_notch(synth_s21(kFr, 3.3e5, 3.8e4, 0.0, 0));
  S21Trace shifted = synth_s21(kFr + 0.01, 3.3e5, 3.8e4, 0.0, 0);
  for (auto& s : shifted.s21) s *= std::polar(0.5, 0.7);
  const NotchFit f = fit_s21_notch(shifted);
  CHECK(f.f_r_GHz == doctest::Approx(kFr + 0.01).epsilon(1e-9));
  CHECK(f.q_i == doctest::Approx(ref.q_i).epsilon(1e-6));
  CHECK(f.q_c == doctest::Approx(ref.q_c).epsilon(1e-6));
  CHECK(f.amplitude == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("flat transmission has no dip") {
  S21Trace t = synth_s21(kFr, 3.3e5, 3.8e4, 0.0, 0);
  for (auto& s : t.s21) s = 1.0;
  try {
    fit_s21_notch(t);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("no dip") != std::string::npos);
  }
}

TEST_CASE("derived kappa from the configured quality factors") {
  const double q_l = 1.0 / (1.0 / 3.3e5 + 1.0 / 3.8e4);
  CHECK(kFr * 1000.0 / q_l == doctest::Approx(0.0984).epsilon(1e-3));
}

TEST_CASE("malformed S21 traces are rejected") {
  S21Trace t = synth_s21(kFr, 3.3e5, 3.8e4, 0.0, 0);
  t.s21.pop_back();
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = synth_s21(kFr, 3.3e5, 3.8e4, 0.0, 0);
  std::swap(t.frequencies_GHz[3], t.frequencies_GHz[4]);
  CHECK_THROWS_AS(fit_s21_notch(t), std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST_CASE("loss decomposition") {
  const double q_l = 1.0 / (1.0 / 3.3e5 + 1.0 / 3.8e4);
  const std::vector<double> fields{0.0, 50.0};
  const std::vector<double> qm{q_l, q_l};
  const LossBudget b = decompose_loss(fields, qm, 3.8e4, 0.0);
  CHECK(b.tan_int[0] == doctest::Approx(1.0 / 3.3e5).epsilon(1e-9));
  CHECK(b.tan_m[0] == doctest::Approx(b.tan_c[0] + b.tan_int[0]).epsilon(1e-14));
  CHECK(b.negative_tan_int.empty());

  const std::vector<double> rounded{3.41e4};
  const LossBudget r = decompose_loss(std::vector<double>{0.0}, rounded, 3.8e4, 0.0);
  CHECK(r.tan_int[0] == doctest::Approx(3.03e-6).epsilon(0.01));
}

TEST_CASE("constant Q_m leaves no ion loss") {
  const auto fields = field_axis(0.0, 120.0, 1.0);
  const std::vector<double> qm(fields.size(), 3.41e4);
  const LossBudget b = decompose_loss(fields, qm, 3.8e4);
  for (double t : b.tan_ions) CHECK(std::abs(t) < 1e-18);
  for (std::size_t i = 0; i < fields.size(); ++i) CHECK(b.tan_B[i] == b.tan_ions[i]);
}

TEST_CASE("negative intrinsic loss is flagged") {
  const std::vector<double> fields{0.0, 10.0, 20.0};
  const std::vector<double> qm{3.0e4, 4.0e4, 3.0e4};
  const LossBudget b = decompose_loss(fields, qm, 3.8e4);
  REQUIRE(b.negative_tan_int.size() == 1);
  CHECK(b.negative_tan_int[0] == 1);
  CHECK_THROWS_AS(decompose_loss(fields, std::vector<double>{1.0, 2.0}, 3.8e4), std::invalid_argument);
}

TEST_CASE("decomposed ion loss matches the model on a synthetic Q_m trace") {
  const double q_c = 3.8e4;
  const auto fields = field_axis(0.0, 120.0, 0.5);
  const auto peaks = table_peaks();
  const LossTrace t = synthesize_trace(peaks, fields, kKappa, kFr, TraceKind::q_m);
  const LossBudget b = decompose_loss(fields, t.values, q_c, kKappa / 3352.0 - 1.0 / q_c);
  const LossTrace direct = synthesize_trace(peaks, fields, kKappa, kFr, TraceKind::tan_ions);
  for (std::size_t i = 0; i < fields.size(); ++i)
    CHECK(b.tan_ions[i] == doctest::Approx(direct.values[i]).epsilon(1e-9));
}

// ---------------------------------------------------------------------------

TEST_CASE("single-peak exact fit") {
  const auto fields = field_axis(30.0, 60.0, 0.1);
  const std::vector<PeakModel> truth{peak("a", 43.4, 53, 4.5)};
  const LossTrace t = synthesize_trace(truth, fields, kKappa, kFr, TraceKind::q_m);
  std::vector<PeakModel> seed{peak("a", 44.0, 40, 3.0)};
  seed[0].b_m_mT = 44.0;
  const FitResult f = fit_multipeak(t, seed, {});
  CHECK(f.converged);
  CHECK(f.residual_rms < 1e-10);
  CHECK(f.peaks[0].b_f_mT == doctest::Approx(43.4).epsilon(1e-8));
  CHECK(f.peaks[0].gamma_MHz == doctest::Approx(53.0).epsilon(1e-7));
  CHECK(f.peaks[0].g_c_MHz == doctest::Approx(4.5).epsilon(1e-7));
  CHECK(f.model_values.size() == fields.size());
  CHECK(f.covariance.rows() == 3);
}

TEST_CASE("single-peak recovery stays within ten times the noise floor") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(20.0, 100.0), gam(20.0, 200.0), gc(1.0, 5.0);
  const auto fields = field_axis(0.0, 120.0, 0.1);
  for (int trial = 0; trial < 25; ++trial) {
    const std::vector<PeakModel> truth{peak("x", pos(rng), gam(rng), gc(rng))};
    LossTrace t = synthesize_trace(truth, fields, kKappa, kFr, TraceKind::q_m);
    std::normal_distribution<double> n(0.0, 1e-3);
    for (double& v : t.values) v *= 1.0 + n(rng);
    std::vector<PeakModel> seed{peak("x", truth[0].b_f_mT + 1.0, truth[0].gamma_MHz * 1.2, truth[0].g_c_MHz * 0.8)};
    const FitResult f = fit_multipeak(t, seed, {});
    REQUIRE(f.converged);
    const PeakUncertainty& u = f.uncertainties[0];
    CHECK(std::abs(f.peaks[0].b_f_mT - truth[0].b_f_mT) <= 10.0 * u.b_f_mT);
    CHECK(std::abs(f.peaks[0].gamma_MHz - truth[0].gamma_MHz) <= 10.0 * u.gamma_MHz);
    CHECK(std::abs(f.peaks[0].g_c_MHz - truth[0].g_c_MHz) <= 10.0 * u.g_c_MHz);
  }
}

TEST_CASE("six-peak noise-free roundtrip from the modelled positions") {
  const auto fields = field_axis(0.0, 120.0, 0.1);
  const auto truth = table_peaks();
  const LossTrace t = synthesize_trace(truth, fields, kKappa, kFr, TraceKind::q_m);
  const double starts[] = {44.0, 66.0, 104.0, 85.0, 119.9, 57.0};
  std::vector<PeakModel> seeds = truth;
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i].b_m_mT = starts[i];
  const FitResult f = fit_multipeak(t, seeds, {});
  CHECK(f.converged);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CAPTURE(truth[i].label);
    CHECK(f.peaks[i].b_f_mT == doctest::Approx(truth[i].b_f_mT).epsilon(1e-6));
    CHECK(f.peaks[i].gamma_MHz == doctest::Approx(truth[i].gamma_MHz).epsilon(1e-5));
    CHECK(f.peaks[i].g_c_MHz == doctest::Approx(truth[i].g_c_MHz).epsilon(1e-5));
  }
}

TEST_CASE("Q_m and tan_ions traces give the same fit") {
  const auto fields = field_axis(0.0, 120.0, 0.2);
  const auto truth = table_peaks();
  std::vector<PeakModel> seeds = truth;
  for (PeakModel& s : seeds) {
    s.b_m_mT = s.b_f_mT + 0.5;
    s.gamma_MHz *= 1.1;
  }
  const FitResult a = fit_multipeak(synthesize_trace(truth, fields, kKappa, kFr, TraceKind::q_m), seeds, {});
  const FitResult b = fit_multipeak(synthesize_trace(truth, fields, kKappa, kFr, TraceKind::tan_ions), seeds, {});
  CHECK(a.kind == TraceKind::q_m);
  CHECK(b.kind == TraceKind::tan_ions);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CHECK(a.peaks[i].b_f_mT == doctest::Approx(b.peaks[i].b_f_mT).epsilon(1e-6));
    CHECK(a.peaks[i].gamma_MHz == doctest::Approx(b.peaks[i].gamma_MHz).epsilon(1e-5));
    CHECK(a.peaks[i].g_c_MHz == doctest::Approx(b.peaks[i].g_c_MHz).epsilon(1e-5));
  }
}

TEST_CASE("kappa can be fitted on Q_m traces only") {
  const auto fields = field_axis(0.0, 120.0, 0.2);
  const std::vector<PeakModel> truth{peak("a", 43.4, 53, 4.5), peak("c", 104.3, 150, 2.1)};
  FitOptions opt;
  opt.fit_kappa = true;
  opt.kappa_MHz = 0.2;
  const FitResult f = fit_multipeak(synthesize_trace(truth, fields, kKappa, kFr, TraceKind::q_m), truth, opt);
  CHECK(f.kappa_MHz == doctest::Approx(kKappa).epsilon(1e-7));
  CHECK(f.covariance.rows() == 7);
  CHECK_THROWS_AS(fit_multipeak(synthesize_trace(truth, fields, kKappa, kFr, TraceKind::tan_ions), truth, opt),
                  std::invalid_argument);
}

TEST_CASE("a flat trace drives the coupling to zero and is not reported as converged") {
  const auto fields = field_axis(0.0, 120.0, 0.5);
  LossTrace t;
  t.fields_mT = fields;
  t.values.assign(fields.size(), 3352.0 / kKappa);
  const std::vector<PeakModel> seed{peak("a", 44.0, 53, 4.5)};
  const FitResult f = fit_multipeak(t, seed, {});
  CHECK(f.peaks[0].g_c_MHz < 1e-3);
  CHECK_FALSE(f.converged);
  CHECK(f.degenerate);
}

TEST_CASE("fit input validation") {
  const auto fields = field_axis(0.0, 10.0, 1.0);
  const std::vector<PeakModel> truth{peak("a", 5.0, 53, 4.5)};
  const LossTrace t = synthesize_trace(truth, fields, kKappa, kFr, TraceKind::q_m);
  CHECK_THROWS_AS(fit_multipeak(t, std::vector<PeakModel>{}, {}), std::invalid_argument);
  std::vector<PeakModel> bad = truth;
  bad[0].gamma_MHz = 0.0;
  CHECK_THROWS_AS(fit_multipeak(t, bad, {}), std::invalid_argument);
  LossTrace neg = t;
  neg.values[2] = -1.0;
  CHECK_THROWS_AS(fit_multipeak(neg, truth, {}), std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST_CASE("model-fit deviation") {
  const std::vector<double> same{44.0, 66.0};
  CHECK(rms_model_fit_deviation(same, same) == 0.0);
  CHECK(rms_model_fit_deviation(std::vector<double>{100.0}, std::vector<double>{103.0}) ==
        doctest::Approx(300.0 / 103.0).epsilon(1e-12));
  const std::vector<double> modelled{44, 66, 104, 85, 119};
  const std::vector<double> fitted{43.4, 65.4, 104.3, 84.1, 120.0};
  CHECK(rms_model_fit_deviation(modelled, fitted) == doctest::Approx(0.898).epsilon(1e-3));
  CHECK_THROWS_AS(rms_model_fit_deviation(modelled, same), std::invalid_argument);
}

TEST_CASE("loss trace CSV") {
  const auto q = temp_file("q.csv", "field_mT,Q_m,theta_deg\n0,25000,5\n1,24000,5\n2,23000,5\n");
  const LossTrace t = read_loss_trace_csv(q);
  CHECK(t.kind == TraceKind::q_m);
  CHECK(t.values.size() == 3);
  REQUIRE(t.theta_deg);
  CHECK(*t.theta_deg == 5.0);

  const auto tan = temp_file("tan.csv", "field_mT,tan_ions\n0,1e-6\n1,2e-6\n");
  CHECK(read_loss_trace_csv(tan).kind == TraceKind::tan_ions);

  const auto both = temp_file("both.csv", "field_mT,Q_m,tan_ions\n0,1,2\n");
  CHECK_THROWS_AS(read_loss_trace_csv(both), IoError);
  CHECK_THROWS_AS(read_loss_trace_csv(std::filesystem::temp_directory_path() / "mesr_missing.csv"), IoError);
}

TEST_CASE("S21 CSV") {
  const auto c = temp_file("s21.csv", "freq_GHz,re,im\n3.35,1,0\n3.36,0.5,0.1\n");
  const S21Trace t = read_s21_csv(c);
  CHECK_FALSE(t.magnitude_only);
  CHECK(t.s21[1] == std::complex<double>(0.5, 0.1));
  const auto m = temp_file("s21m.csv", "freq_GHz,mag\n3.35,1\n");
  CHECK(read_s21_csv(m).magnitude_only);
  const auto bad = temp_file("s21bad.csv", "freq,re\n3.35,1\n");
  CHECK_THROWS_AS(read_s21_csv(bad), IoError);
}
