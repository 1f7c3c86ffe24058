#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems.
// Private to the library.

#include <functional>

#include <Eigen/Dense>

namespace vsi::inversion::detail {

/// Fills the weighted residual vector r = w (model - y) and its Jacobian.
using ResidualFunction = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& residual,
                                            Eigen::MatrixXd& jacobian)>;

struct LmSettings {
  int max_iterations = 200;
  double initial_damping = 1e-3;
  double tolerance = 1e-13;
  double damping_increase = 2.0;
  double damping_decrease = 3.0;
  double damping_ceiling = 1e16;
};

struct LmOutcome {
  Eigen::VectorXd params;
  Eigen::MatrixXd jtj; // J^T J at the solution
  double sse = 0.0;
  int iterations = 0;
  double damping = 0.0;
  bool converged = false;
};

/// Solves (J^T J + lambda diag(J^T J)) delta = -J^T r. Accepted steps divide
/// lambda by damping_decrease, rejected ones multiply it by damping_increase.
/// Converges when the relative SSE change or step falls below tolerance, or
/// when no damped step can reduce the SSE any further.
LmOutcome levenberg_marquardt(const ResidualFunction& residuals, Eigen::VectorXd initial, int n_residuals,
                              const LmSettings& settings);

} // namespace vsi::inversion::detail
