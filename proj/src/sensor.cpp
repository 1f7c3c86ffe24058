#include "vsi/sensor.hpp"

#include <cmath>

#include "vsi/errors.hpp"
#include "vsi/units.hpp"

namespace vsi::sensor {

void StarkParams::validate() const {
  if (sigma_d < 0.0 || sigma_alpha < 0.0 || sigma_f0 < 0.0)
    throw DomainError("Stark parameter uncertainties must be >= 0");
}

void SpinModel::validate() const {
  if (!(d_mhz > 0.0))
    throw DomainError("zero-field splitting D must be > 0");
}

void PleModel::validate() const {
  if (!(fwhm_mhz > 0.0))
    throw DomainError("PLE fwhm must be > 0");
  if (amplitude < 0.0 || background < 0.0)
    throw DomainError("PLE amplitude and background must be >= 0");
}

void LinewidthModel::validate() const {
  if (!(gamma_floor_mhz <= gamma_depleted_mhz && gamma_depleted_mhz <= gamma_undepleted_mhz))
    throw DomainError("linewidth model needs floor <= depleted <= undepleted");
  if (!(n_half_cm3 > 0.0) || !(steepness > 0.0))
    throw DomainError("linewidth crossover density and steepness must be > 0");
}

double stark_shift(double e_local, const StarkParams& p) {
  return -p.d * e_local - 0.5 * p.alpha * e_local * e_local + p.f0;
}

Matrix4c spin_z() {
  Matrix4c sz = Matrix4c::Zero();
  for (int i = 0; i < 4; ++i)
    sz(i, i) = kSpinProjections[static_cast<std::size_t>(i)];
  return sz;
}

Matrix4c spin_x() {
  // <m+1|S_x|m> = sqrt(S(S+1) - m(m+1)) / 2
  Matrix4c sx = Matrix4c::Zero();
  const double outer = std::sqrt(3.0) / 2.0;
  sx(0, 1) = sx(1, 0) = outer;
  sx(1, 2) = sx(2, 1) = 1.0;
  sx(2, 3) = sx(3, 2) = outer;
  return sx;
}

Matrix4c ground_state_hamiltonian(double e_z, const SpinModel& model) {
  const double coupling_hz = model.d_mhz * units::kHzPerMHz + model.dz_hz_per_v_per_m * e_z;
  const Matrix4c sz = spin_z();
  return coupling_hz * sz * sz;
}

double odmr_transition_mhz(double e_z, const SpinModel& model) {
  return 2.0 * (model.d_mhz + model.dz_hz_per_v_per_m * e_z / units::kHzPerMHz);
}

double lorentzian(double x, double center, double fwhm) {
  const double u = 2.0 * (x - center) / fwhm;
  return 1.0 / (1.0 + u * u);
}

std::vector<double> ple_spectrum(const PleModel& model, std::span<const double> freqs) {
  model.validate();
  const double fwhm_ghz = model.fwhm_mhz / units::kMHzPerGHz;
  const double a2_center = model.a1_center_ghz + model.a1_a2_detuning_ghz;
  std::vector<double> counts;
  counts.reserve(freqs.size());
  for (double f : freqs) {
    counts.push_back(model.background +
                     model.amplitude * (lorentzian(f, model.a1_center_ghz, fwhm_ghz) +
                                        lorentzian(f, a2_center, fwhm_ghz)));
  }
  return counts;
}

double linewidth_response(double n_local, const LinewidthModel& lw) {
  lw.validate();
  if (n_local < 0.0)
    throw DomainError("local density must be >= 0");
  double fraction = 0.0;
  if (n_local > 0.0)
    fraction = 1.0 / (1.0 + std::pow(lw.n_half_cm3 / n_local, lw.steepness));
  const double fwhm = lw.gamma_depleted_mhz + (lw.gamma_undepleted_mhz - lw.gamma_depleted_mhz) * fraction;
  return std::max(fwhm, lw.gamma_floor_mhz);
}

} // namespace vsi::sensor
