#include "levenberg_marquardt.hpp"

#include <algorithm>
#include <cmath>

namespace vsi::inversion::detail {

LmOutcome levenberg_marquardt(const ResidualFunction& residuals, Eigen::VectorXd params, int n_residuals,
                              const LmSettings& settings) {
  const auto n_params = params.size();
  Eigen::VectorXd r(n_residuals), r_trial(n_residuals);
  Eigen::MatrixXd jac(n_residuals, n_params), jac_trial(n_residuals, n_params);

  residuals(params, r, jac);
  double sse = r.squaredNorm();
  double lambda = settings.initial_damping;

  LmOutcome out;
  int iter = 0;
  for (; iter < settings.max_iterations; ++iter) {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = jtj;
      for (Eigen::Index i = 0; i < n_params; ++i)
        damped(i, i) += lambda * std::max(jtj(i, i), 1e-300);
      const Eigen::VectorXd step = damped.ldlt().solve(-grad);
      if (!step.allFinite()) {
        lambda *= settings.damping_increase;
      } else {
        const Eigen::VectorXd trial = params + step;
        residuals(trial, r_trial, jac_trial);
        const double sse_trial = r_trial.allFinite() ? r_trial.squaredNorm() : HUGE_VAL;
        if (sse_trial < sse) {
          const double sse_change = sse - sse_trial;
          const bool small_step = step.norm() <= settings.tolerance * (params.norm() + settings.tolerance);
          params = trial;
          r.swap(r_trial);
          jac.swap(jac_trial);
          const double previous = sse;
          sse = sse_trial;
          lambda /= settings.damping_decrease;
          accepted = true;
          if (small_step || sse_change <= settings.tolerance * previous) {
            out.converged = true;
          }
        } else {
          lambda *= settings.damping_increase;
        }
      }
      if (!accepted && lambda > settings.damping_ceiling) {
        // No descent direction left: we sit at a (numerical) minimum.
        out.converged = true;
        break;
      }
    }
    if (out.converged)
      break;
  }

  out.params = params;
  out.jtj = jac.transpose() * jac;
  out.sse = sse;
  out.iterations = iter + (out.converged ? 1 : 0);
  out.damping = lambda;
  return out;
}

} // namespace vsi::inversion::detail
