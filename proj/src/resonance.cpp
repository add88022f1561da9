#include "mesr/resonance.hpp"

#include "mesr/errors.hpp"
#include "mesr/units.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mesr {

double q_to_kappa(double f_r_GHz, double q_i, double q_c) {
  if (!(q_i > 0.0) || !(q_c > 0.0)) {
    std::ostringstream msg;
    msg << "quality factors must be positive (Q_i = " << q_i << ", Q_c = " << q_c << ")";
    throw std::invalid_argument(msg.str());
  }
  return f_r_GHz * units::kMHzPerGHz * (1.0 / q_i + 1.0 / q_c);
}

std::optional<double> ResonatorSpec::derived_kappa_MHz() const {
  if (!q_i || !q_c) return std::nullopt;
  return q_to_kappa(f_r_GHz, *q_i, *q_c);
}

void ResonatorSpec::validate() const {
  if (!(f_r_GHz > 0.0) || !std::isfinite(f_r_GHz)) throw ConfigError("resonator.f_r: must be positive");
  if (!(kappa_MHz > 0.0) || !std::isfinite(kappa_MHz)) throw ConfigError("resonator.kappa: must be positive");
  if (q_i && !(*q_i > 0.0)) throw ConfigError("resonator.q_i: must be positive");
  if (q_c && !(*q_c > 0.0)) throw ConfigError("resonator.q_c: must be positive");
}

PopulationModel boltzmann_populations(const RealVector& levels, double T) {
  if (!(T > 0.0)) {
    std::ostringstream msg;
    msg << "temperature must be positive, got " << T;
    throw std::invalid_argument(msg.str());
  }
  PopulationModel pop;
  pop.temperature_K = T;
  pop.populations.resize(levels.size());
  if (levels.size() == 0) return pop;
  const double ground = levels.minCoeff();
  const double kt = units::kBoltzmannMHzPerKelvin * T;
  for (Eigen::Index i = 0; i < levels.size(); ++i) pop.populations[i] = std::exp(-(levels[i] - ground) / kt);
  pop.populations /= pop.populations.sum();
  return pop;
}

namespace {

Eigen::MatrixXd pair_frequencies(const RealVector& e) {
  const auto d = e.size();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) f(i, j) = e[j] - e[i];
  return f;
}

RealVector levels_at(const SpinHamiltonian& ham, const Vec3& direction, double b) {
  return eigenvalues(ham.at(direction * b));
}

}  // namespace

Eigen::MatrixXd transition_frequencies(const SpinHamiltonian& ham, const Vec3& direction, double magnitude_mT) {
  if (magnitude_mT < 0.0) throw std::invalid_argument("field magnitude must be non-negative");
  return pair_frequencies(levels_at(ham, direction, magnitude_mT));
}

Eigen::MatrixXd transition_frequencies(const SpinSystem& sys, const Vec3& direction, double magnitude_mT) {
  return transition_frequencies(SpinHamiltonian(sys), direction, magnitude_mT);
}

std::vector<Transition> find_resonance_fields(const SpinHamiltonian& ham, const ResonatorSpec& resonator,
                                              const Vec3& direction, FieldRange range,
                                              const ResonanceSearchOptions& opt) {
  if (!std::isfinite(range.start_mT) || !std::isfinite(range.stop_mT) || range.stop_mT < range.start_mT)
    throw std::invalid_argument("field range must be finite and ordered");
  if (!(opt.grid_step_mT > 0.0)) throw std::invalid_argument("grid step must be positive");
  const double fr = resonator.f_r_MHz();
  const Vec3 n = direction.normalized();

  std::vector<double> grid;
  const auto steps = static_cast<long>(std::floor((range.stop_mT - range.start_mT) / opt.grid_step_mT + 1e-9));
  for (long k = 0; k <= steps; ++k) grid.push_back(range.start_mT + static_cast<double>(k) * opt.grid_step_mT);
  if (range.stop_mT - grid.back() > 1e-9) grid.push_back(range.stop_mT);

  std::vector<RealVector> levels;
  levels.reserve(grid.size());
  for (double b : grid) levels.push_back(levels_at(ham, n, b));
  const int d = static_cast<int>(levels.front().size());

  auto detuning = [&](const RealVector& e, int i, int j) { return e[j] - e[i] - fr; };

  std::vector<Transition> found;
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const double gk = detuning(levels[k], i, j);
        double root;
        if (gk == 0.0) {
          root = grid[k];
        } else if (k + 1 < grid.size() && gk * detuning(levels[k + 1], i, j) < 0.0) {
          double lo = grid[k], hi = grid[k + 1], glo = gk;
          root = 0.5 * (lo + hi);
          for (int it = 0; it < 200; ++it) {
            root = 0.5 * (lo + hi);
            const double gm = detuning(levels_at(ham, n, root), i, j);
            if (std::abs(gm) <= opt.tolerance_MHz || hi - lo < 1e-12) break;
            if ((gm < 0.0) == (glo < 0.0)) {
              lo = root;
              glo = gm;
            } else {
              hi = root;
            }
          }
        } else {
          continue;
        }
        Transition t;
        t.levels = {i, j};
        t.degenerate_pairs = {t.levels};
        t.field_mT = root;
        t.frequency_MHz = detuning(levels_at(ham, n, root), i, j) + fr;
        const double h = opt.gradient_step_mT;
        const double lo = std::max(0.0, root - h);
        const double hi = root + h;
        const auto f_lo = pair_frequencies(levels_at(ham, n, lo))(i, j);
        const auto f_hi = pair_frequencies(levels_at(ham, n, hi))(i, j);
        t.gradient_MHz_per_mT = (f_hi - f_lo) / (hi - lo);
        found.push_back(std::move(t));
      }
    }
  }

  std::stable_sort(found.begin(), found.end(),
                   [](const Transition& a, const Transition& b) { return a.field_mT < b.field_mT; });
  std::vector<Transition> merged;
  for (Transition& t : found) {
    if (!merged.empty() && t.field_mT - merged.back().field_mT <= opt.merge_window_mT) {
      auto& pairs = merged.back().degenerate_pairs;
      if (std::find(pairs.begin(), pairs.end(), t.levels) == pairs.end()) pairs.push_back(t.levels);
      continue;
    }
    merged.push_back(std::move(t));
  }
  return merged;
}

std::vector<Transition> find_resonance_fields(const SpinSystem& sys, const ResonatorSpec& resonator,
                                              const Vec3& direction, FieldRange range,
                                              const ResonanceSearchOptions& options) {
  return find_resonance_fields(SpinHamiltonian(sys), resonator, direction, range, options);
}

namespace {

double matrix_element_sum(const EigenSystem& es, const SpinOperators& ops, LevelPair pair,
                          std::span<const Vec3> bmw) {
  double total = 0.0;
  const auto vi = es.states.col(pair.lower);
  const auto vj = es.states.col(pair.upper);
  for (const Vec3& a : bmw) {
    const ComplexMatrix op = a.x() * ops.sx + a.y() * ops.sy + a.z() * ops.sz;
    total += std::norm(vj.dot(op * vi));
  }
  return total;
}

}  // namespace

double pair_intensity(const SpinHamiltonian& ham, LevelPair pair, double field_mT, const Vec3& b0_direction,
                      std::span<const Vec3> bmw, const PopulationModel& pop) {
  const EigenSystem es = eigensolve(ham.at(b0_direction.normalized() * field_mT));
  return (pop.populations[pair.lower] - pop.populations[pair.upper]) *
         matrix_element_sum(es, ham.operators(), pair, bmw);
}

double transition_intensity(const SpinHamiltonian& ham, const Transition& t, const Vec3& b0_direction,
                            std::span<const Vec3> bmw, const PopulationModel& pop) {
  const EigenSystem es = eigensolve(ham.at(b0_direction.normalized() * t.field_mT));
  double total = 0.0;
  for (const LevelPair& pair : t.degenerate_pairs) {
    total += (pop.populations[pair.lower] - pop.populations[pair.upper]) *
             matrix_element_sum(es, ham.operators(), pair, bmw);
  }
  return total;
}

std::vector<Transition> transitions_at(const SpinSystem& sys, const ResonatorSpec& resonator,
                                       std::span<const ModeRegion> regions, LabOrientation theta,
                                       const OrientationSettings& settings) {
  const SpinHamiltonian ham(sys);
  std::vector<Transition> out;
  for (std::size_t r = 0; r < regions.size(); ++r) {
    for (std::size_t s = 0; s < sys.site_rotations_deg.size(); ++s) {
      const SiteFrameDirections dirs =
          lab_to_crystal(theta, regions[r], sys.site_rotations_deg[s], settings.sense);
      auto found = find_resonance_fields(ham, resonator, dirs.b0, settings.range, settings.search);
      for (Transition& t : found) {
        const EigenSystem es = eigensolve(ham.at(dirs.b0 * t.field_mT));
        const PopulationModel pop = boltzmann_populations(es.levels, settings.temperature_K);
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_index = 0;
        t.intensity = 0.0;
        for (std::size_t p = 0; p < t.degenerate_pairs.size(); ++p) {
          const LevelPair pair = t.degenerate_pairs[p];
          const double w = (pop.populations[pair.lower] - pop.populations[pair.upper]) *
                           matrix_element_sum(es, ham.operators(), pair, dirs.bmw);
          t.intensity += w;
          if (w > best) {
            best = w;
            best_index = p;
          }
        }
        std::swap(t.degenerate_pairs[0], t.degenerate_pairs[best_index]);
        t.levels = t.degenerate_pairs[0];
        t.intensity = std::max(0.0, t.intensity);
        t.mode = regions[r].label;
        t.site = static_cast<int>(s);
        t.region = static_cast<int>(r);
        out.push_back(std::move(t));
      }
    }
  }
  double strongest = 0.0;
  for (const Transition& t : out) strongest = std::max(strongest, t.intensity);
  for (Transition& t : out) t.below_threshold = t.intensity < kIntensityReportThreshold * strongest;
  return out;
}

}  // namespace mesr
