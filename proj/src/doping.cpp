#include <algorithm>
#include <cmath>

#include "vsi/errors.hpp"
#include "vsi/inversion.hpp"
#include "vsi/units.hpp"

namespace vsi::inversion {

double extract_doping(double v_threshold, double x_um, double v_bi, const device::MaterialParams& material) {
  if (!(x_um > 0.0))
    throw DomainError("extract_doping: position must be > 0");
  const double potential = v_threshold + v_bi;
  if (!(potential > 0.0))
    throw DomainError("extract_doping: V + V_bi must be > 0");
  const double x = units::um_to_m(x_um);
  const double n_m3 = 2.0 * material.permittivity() / units::kElementaryCharge * potential / (x * x);
  return units::per_m3_to_per_cm3(n_m3);
}

DopingInterval doping_uncertainty(double v_threshold, double sigma_v, double x_um, double sigma_x_um,
                                  double v_bi, const device::MaterialParams& material) {
  if (sigma_v < 0.0 || sigma_x_um < 0.0)
    throw DomainError("doping_uncertainty: uncertainties must be >= 0");
  DopingInterval interval;
  interval.low = extract_doping(v_threshold - sigma_v, x_um + sigma_x_um, v_bi, material);
  interval.mid = extract_doping(v_threshold, x_um, v_bi, material);
  interval.high = extract_doping(v_threshold + sigma_v, x_um - sigma_x_um, v_bi, material);
  return interval;
}

void CvCurve::validate() const {
  if (!(contact_area_cm2 > 0.0))
    throw DomainError("CV contact area must be > 0");
  if (samples.size() < 5)
    throw DegenerateDataError("CV curve needs >= 5 samples");
  for (const auto& s : samples)
    if (!(s.capacitance > 0.0))
      throw DomainError("CV capacitance must be > 0");
}

std::vector<CvDopingPoint> cv_doping(const CvCurve& curve, const device::MaterialParams& material,
                                     const CvOptions& options) {
  curve.validate();
  if (options.window < options.degree + 1 || options.window % 2 == 0 || options.degree < 1)
    throw DomainError("cv_doping: window must be odd and exceed the polynomial degree");
  if (curve.samples.size() < static_cast<std::size_t>(options.window))
    throw DegenerateDataError("cv_doping: fewer samples than the smoothing window");

  auto samples = curve.samples;
  std::stable_sort(samples.begin(), samples.end(),
                   [](const auto& a, const auto& b) { return a.voltage < b.voltage; });

  const double area_m2 = curve.contact_area_cm2 * units::kM2PerCm2;
  const double prefactor = -2.0 / (units::kElementaryCharge * material.permittivity() * area_m2 * area_m2);
  // N_D = -2 / (q eps A^2 d(1/C^2)/dV)
  const int half = options.window / 2;
  const int n = static_cast<int>(samples.size());

  std::vector<CvDopingPoint> out;
  for (int i = half; i < n - half; ++i) {
    const double v0 = samples[static_cast<std::size_t>(i)].voltage;
    Eigen::MatrixXd basis(options.window, options.degree + 1);
    Eigen::VectorXd inv_c2(options.window);
    for (int k = 0; k < options.window; ++k) {
      const auto& s = samples[static_cast<std::size_t>(i - half + k)];
      const double dv = s.voltage - v0;
      double p = 1.0;
      for (int j = 0; j <= options.degree; ++j) {
        basis(k, j) = p;
        p *= dv;
      }
      inv_c2(k) = 1.0 / (s.capacitance * s.capacitance);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);
    CvDopingPoint point;
    point.voltage = v0;
    if (qr.rank() < options.degree + 1) {
      point.flagged = true;
      out.push_back(point);
      continue;
    }
    const double slope = qr.solve(inv_c2)(1);
    const double span = samples[static_cast<std::size_t>(i + half)].voltage - samples[static_cast<std::size_t>(i - half)].voltage;
    // a 1/C^2 change below rounding level means no measurable depletion
    if (std::abs(slope) * span <= 1e-10 * inv_c2.cwiseAbs().maxCoeff()) {
      point.flagged = true;
      out.push_back(point);
      continue;
    }
    point.n_d_cm3 = units::per_m3_to_per_cm3(prefactor / slope);
    point.flagged = !(point.n_d_cm3 > 0.0) || !std::isfinite(point.n_d_cm3);
    out.push_back(point);
  }
  return out;
}

} // namespace vsi::inversion
