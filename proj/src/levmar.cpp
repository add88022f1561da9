#include "mesr/levmar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mesr {

std::string_view to_string(LevMarStatus s) { return s == LevMarStatus::converged ? "converged" : "iteration_cap"; }

namespace {

Eigen::VectorXd project(Eigen::VectorXd p, const std::optional<ParameterBounds>& bounds) {
  if (bounds) p = p.cwiseMax(bounds->lower).cwiseMin(bounds->upper);
  return p;
}

double half_squared_norm(const Eigen::VectorXd& r) { return 0.5 * r.squaredNorm(); }

}  // namespace

Eigen::MatrixXd numerical_jacobian(const ResidualFunction& fn, const Eigen::VectorXd& params, Eigen::Index m,
                                   double relative_step, const std::optional<ParameterBounds>& bounds) {
  const Eigen::Index n = params.size();
  Eigen::MatrixXd jac(m, n);
  Eigen::VectorXd r_plus(m), r_minus(m);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double h = relative_step * std::max(std::abs(params[k]), 1.0);
    Eigen::VectorXd hi = params, lo = params;
    hi[k] += h;
    lo[k] -= h;
    if (bounds) {
      hi[k] = std::min(hi[k], bounds->upper[k]);
      lo[k] = std::max(lo[k], bounds->lower[k]);
    }
    const double span = hi[k] - lo[k];
    if (span <= 0.0) {
      jac.col(k).setZero();
      continue;
    }
    fn(hi, r_plus);
    fn(lo, r_minus);
    jac.col(k) = (r_plus - r_minus) / span;
  }
  return jac;
}

LevMarResult levenberg_marquardt(const ResidualFunction& fn, const Eigen::VectorXd& initial, Eigen::Index m,
                                 const LevMarOptions& opt, const std::optional<ParameterBounds>& bounds) {
  const Eigen::Index n = initial.size();
  if (n == 0) throw std::invalid_argument("no parameters to fit");
  if (m < n) throw std::invalid_argument("fewer residuals than parameters");
  if (bounds && (bounds->lower.size() != n || bounds->upper.size() != n))
    throw std::invalid_argument("bounds do not match the parameter count");

  LevMarResult res;
  res.params = project(initial, bounds);
  res.residuals.resize(m);
  fn(res.params, res.residuals);
  res.cost = half_squared_norm(res.residuals);
  if (!std::isfinite(res.cost)) throw std::invalid_argument("residuals are not finite at the initial point");

  double mu = -1.0;
  double nu = 2.0;
  Eigen::VectorXd trial_r(m);
  res.jacobian = numerical_jacobian(fn, res.params, m, opt.jacobian_relative_step, bounds);

  for (res.iterations = 0; res.iterations < opt.max_iterations;) {
    ++res.iterations;
    if (res.cost == 0.0) {
      res.status = LevMarStatus::converged;
      break;
    }
    const Eigen::MatrixXd a = res.jacobian.transpose() * res.jacobian;
    const Eigen::VectorXd g = res.jacobian.transpose() * res.residuals;
    Eigen::VectorXd diag = a.diagonal();
    const double diag_floor = std::max(diag.maxCoeff(), 1e-300) * 1e-12;
    diag = diag.cwiseMax(diag_floor);
    if (mu < 0.0) mu = opt.initial_damping;

    bool accepted = false;
    bool stuck = false;
    while (!accepted) {
      Eigen::MatrixXd damped = a;
      damped.diagonal() += mu * diag;
      const Eigen::VectorXd step = damped.ldlt().solve(-g);
      const Eigen::VectorXd trial = project(res.params + step, bounds);
      const Eigen::VectorXd taken = trial - res.params;
      if (taken.norm() <= 1e-15 * (res.params.norm() + 1e-15)) {
        stuck = true;
        break;
      }
      fn(trial, trial_r);
      const double trial_cost = half_squared_norm(trial_r);
      const double predicted = -(taken.dot(g) + 0.5 * taken.dot(a * taken));
      if (std::isfinite(trial_cost) && trial_cost < res.cost) {
        const double rho = predicted > 0.0 ? (res.cost - trial_cost) / predicted : 1.0;
        const double relative_drop = (res.cost - trial_cost) / res.cost;
        res.params = trial;
        res.residuals = trial_r;
        res.cost = trial_cost;
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        accepted = true;
        res.jacobian = numerical_jacobian(fn, res.params, m, opt.jacobian_relative_step, bounds);
        if (relative_drop < opt.cost_tolerance) {
          res.status = LevMarStatus::converged;
          return res;
        }
      } else {
        mu *= nu;
        nu *= 2.0;
        if (mu > 1e20) {
          stuck = true;
          break;
        }
      }
    }
    if (stuck) {
      // No descent step exists at working precision: a (possibly bound-constrained) minimum.
      res.status = LevMarStatus::converged;
      return res;
    }
  }
  if (res.cost == 0.0) res.status = LevMarStatus::converged;
  return res;
}

CovarianceEstimate estimate_covariance(const Eigen::MatrixXd& jac, const Eigen::VectorXd& residuals,
                                       double singular_condition) {
  const Eigen::Index m = jac.rows(), n = jac.cols();
  CovarianceEstimate out;
  out.covariance = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd scale = jac.colwise().norm().transpose();
  for (Eigen::Index k = 0; k < n; ++k) scale[k] = scale[k] > 0.0 ? 1.0 / scale[k] : 0.0;
  const Eigen::MatrixXd normal = scale.asDiagonal() * (jac.transpose() * jac) * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normal);
  const Eigen::VectorXd& lambda = es.eigenvalues();
  const double top = lambda.maxCoeff();
  const double bottom = lambda.minCoeff();
  out.condition = bottom > 0.0 ? top / bottom : std::numeric_limits<double>::infinity();
  out.near_singular = !(out.condition < singular_condition) || scale.minCoeff() == 0.0;

  Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k)
    if (lambda[k] > top * 1e-14) inv[k] = 1.0 / lambda[k];
  const Eigen::MatrixXd pinv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  const double dof = static_cast<double>(std::max<Eigen::Index>(m - n, 1));
  const double s2 = residuals.squaredNorm() / dof;
  out.covariance = s2 * (scale.asDiagonal() * pinv * scale.asDiagonal());
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

}  // namespace mesr
