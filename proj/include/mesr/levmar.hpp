#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string_view>

namespace mesr {

/// Fills `residuals` (pre-sized) for parameter vector `params`.
using ResidualFunction = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& residuals)>;

struct LevMarOptions {
  int max_iterations = 500;
  /// Central-difference step, relative to max(|p|, 1).
  double jacobian_relative_step = 1e-6;
  /// Stop when an accepted step lowers the cost by less than this fraction.
  double cost_tolerance = 1e-10;
  double initial_damping = 1e-3;
};

/// Box constraints; parameters are projected onto [lower, upper] after each step.
struct ParameterBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

enum class LevMarStatus { converged, iteration_cap };

std::string_view to_string(LevMarStatus s);

struct LevMarResult {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  /// 0.5 * |r|^2
  double cost = 0.0;
  int iterations = 0;
  LevMarStatus status = LevMarStatus::iteration_cap;
};

/// Damped least squares (Marquardt diagonal scaling, Nielsen damping update)
/// with a central-difference Jacobian. Returns the best point seen.
LevMarResult levenberg_marquardt(const ResidualFunction& fn, const Eigen::VectorXd& initial, Eigen::Index n_residuals,
                                 const LevMarOptions& options = {},
                                 const std::optional<ParameterBounds>& bounds = std::nullopt);

/// Central-difference Jacobian, steps clipped to the bounds.
Eigen::MatrixXd numerical_jacobian(const ResidualFunction& fn, const Eigen::VectorXd& params, Eigen::Index n_residuals,
                                   double relative_step, const std::optional<ParameterBounds>& bounds = std::nullopt);

struct CovarianceEstimate {
  Eigen::MatrixXd covariance;
  /// Condition number of the column-normalized normal matrix (inf when singular).
  double condition = 0.0;
  bool near_singular = false;
};

/// s^2 (J^T J)^+ with s^2 = |r|^2 / (m - n). The pseudo-inverse keeps the
/// result symmetric positive semi-definite when J is rank deficient.
CovarianceEstimate estimate_covariance(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& residuals,
                                       double singular_condition = 1e12);

}  // namespace mesr
