#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "vsi/errors.hpp"
#include "vsi/inversion.hpp"

namespace vsi::inversion {

namespace {

std::size_t index_of(const std::vector<std::string>& names, std::string_view name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end())
    throw std::out_of_range("no fit parameter named " + std::string(name));
  return static_cast<std::size_t>(it - names.begin());
}

} // namespace

double FitResult::value(std::string_view name) const { return values[index_of(names, name)]; }
double FitResult::sigma_of(std::string_view name) const { return sigma[index_of(names, name)]; }

FitResult fit_stark(std::span<const StarkPoint> data, std::span<const double> sigmas) {
  if (!sigmas.empty() && sigmas.size() != data.size())
    throw DomainError("fit_stark: sigma count does not match data");
  std::set<double> distinct;
  for (const auto& p : data)
    distinct.insert(p.e_local);
  if (data.size() < 3 || distinct.size() < 3)
    throw DegenerateDataError("fit_stark needs >= 3 points at >= 3 distinct fields");

  const auto n = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = data[static_cast<std::size_t>(i)];
    double w = 1.0;
    if (!sigmas.empty()) {
      const double s = sigmas[static_cast<std::size_t>(i)];
      if (!(s > 0.0))
        throw DomainError("fit_stark: sigmas must be > 0");
      w = 1.0 / s;
    }
    design(i, 0) = -p.e_local * w;
    design(i, 1) = -0.5 * p.e_local * p.e_local * w;
    design(i, 2) = w;
    rhs(i) = p.delta_f * w;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < 3)
    throw DegenerateDataError("fit_stark: design matrix is rank deficient");
  const Eigen::VectorXd coef = qr.solve(rhs);

  FitResult fit;
  fit.names = {"d", "alpha", "f0"};
  fit.values = {coef(0), coef(1), coef(2)};
  fit.residual_sse = (design * coef - rhs).squaredNorm();

  const Eigen::MatrixXd normal_inverse = (design.transpose() * design).inverse();
  double scale = 1.0;
  if (sigmas.empty())
    scale = n > 3 ? fit.residual_sse / static_cast<double>(n - 3) : 0.0;
  const Eigen::MatrixXd cov = scale * normal_inverse;
  fit.covariance = 0.5 * (cov + cov.transpose());
  for (int i = 0; i < 3; ++i)
    fit.sigma.push_back(std::sqrt(std::max(0.0, fit.covariance(i, i))));
  return fit;
}

sensor::StarkParams to_stark_params(const FitResult& fit) {
  sensor::StarkParams p;
  p.d = fit.value("d");
  p.alpha = fit.value("alpha");
  p.f0 = fit.value("f0");
  p.sigma_d = fit.sigma_of("d");
  p.sigma_alpha = fit.sigma_of("alpha");
  p.sigma_f0 = fit.sigma_of("f0");
  return p;
}

FieldReconstruction reconstruct_field(double delta_f, const sensor::StarkParams& params) {
  // (alpha/2) E^2 + d E + (delta_f - f0) = 0
  const double a = 0.5 * params.alpha;
  const double b = params.d;
  const double c = delta_f - params.f0;

  if (a == 0.0) {
    if (b == 0.0)
      throw OutOfRangeError("reconstruct_field: Stark response is identically zero");
    const double e = -c / b;
    return {e, e < 0.0};
  }

  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0)
    throw OutOfRangeError("reconstruct_field: shift not reachable (no real root)");

  // Numerically stable pair of roots.
  const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
  double roots[2] = {0.0, 0.0};
  std::size_t count = 0;
  if (q != 0.0) {
    roots[count++] = q / a;
    roots[count++] = c / q;
  } else {
    roots[count++] = 0.0; // b == 0 and c == 0: double root at zero
  }

  double best = roots[0];
  if (b != 0.0) {
    const double linear = -c / b;
    for (std::size_t i = 1; i < count; ++i)
      if (std::abs(roots[i] - linear) < std::abs(best - linear))
        best = roots[i];
  }
  const bool both_negative = std::all_of(roots, roots + count, [](double r) { return r < 0.0; });
  return {best, both_negative};
}

} // namespace vsi::inversion
