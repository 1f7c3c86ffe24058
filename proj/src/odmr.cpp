// Pulsed ODMR of the spin-3/2 ground state.
//
// In the frame rotating at the microwave frequency w, and dropping the
// counter-rotating terms, the driven Hamiltonian (in MHz, with the |+-1/2>
// energy subtracted) is
//
//   H = (2K - w) (|3/2><3/2| + |-3/2><-3/2|) + Omega * S_x|{+-1/2 <-> +-3/2}
//
// with K = D + d_z E_z. The |+1/2> <-> |-1/2> element of S_x is off-resonant
// by w and is dropped with the other counter-rotating terms. H is constant,
// so the piecewise-constant propagator is exact; stepping it lets us check
// trace, hermiticity and positivity along the trajectory.

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "vsi/errors.hpp"
#include "vsi/parallel.hpp"
#include "vsi/sensor.hpp"
#include "vsi/units.hpp"

namespace vsi::sensor {

namespace {

constexpr double kInvariantTolerance = 1e-9;
constexpr double kStepsPerCycle = 50.0;

using cd = std::complex<double>;

struct StepResult {
  double population = 0.0;
  double max_trace_error = 0.0;
  double min_eigenvalue = 1.0;
};

Matrix4c rotating_frame_hamiltonian(double transition_mhz, double mw_mhz, double rabi_mhz) {
  const double detuning = transition_mhz - mw_mhz;
  const Matrix4c sx = spin_x();
  Matrix4c h = Matrix4c::Zero();
  h(0, 0) = detuning;
  h(3, 3) = detuning;
  h(0, 1) = h(1, 0) = rabi_mhz * sx(0, 1);
  h(2, 3) = h(3, 2) = rabi_mhz * sx(2, 3);
  return h;
}

StepResult evolve(const Matrix4c& h, double duration_us) {
  Eigen::SelfAdjointEigenSolver<Matrix4c> eig(h);
  const auto& energies = eig.eigenvalues();
  const double scale = std::max(energies.cwiseAbs().maxCoeff(), 1e-12);
  const auto steps = static_cast<long>(std::max(1.0, std::ceil(kStepsPerCycle * scale * duration_us)));
  const double dt = duration_us / static_cast<double>(steps);

  Eigen::Matrix<cd, 4, 1> phases;
  for (int i = 0; i < 4; ++i)
    phases(i) = std::exp(cd(0.0, -2.0 * std::numbers::pi * energies(i) * dt));
  const Matrix4c step = eig.eigenvectors() * phases.asDiagonal() * eig.eigenvectors().adjoint();
  const Matrix4c step_adj = step.adjoint();

  Matrix4c rho = Matrix4c::Zero();
  rho(1, 1) = 0.5;
  rho(2, 2) = 0.5;

  StepResult result;
  Eigen::SelfAdjointEigenSolver<Matrix4c> rho_eig;
  for (long k = 0; k < steps; ++k) {
    rho = step * rho * step_adj;
    const double hermiticity = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (hermiticity > kInvariantTolerance)
      throw InternalError("ODMR density matrix lost hermiticity");
    const double trace_error = std::abs(rho.trace() - 1.0);
    if (trace_error > kInvariantTolerance)
      throw InternalError("ODMR density matrix lost trace");
    result.max_trace_error = std::max(result.max_trace_error, trace_error);
    rho_eig.compute(rho, Eigen::EigenvaluesOnly);
    result.min_eigenvalue = std::min(result.min_eigenvalue, rho_eig.eigenvalues().minCoeff());
  }
  // readout 1/2 (|3/2><3/2| + |-3/2><-3/2|)
  result.population = 0.5 * (rho(0, 0).real() + rho(3, 3).real());
  return result;
}

} // namespace

OdmrSpectrum odmr_spectrum(double e_z, const SpinModel& model, const OdmrDrive& drive,
                           std::span<const double> mw_frequencies) {
  model.validate();
  if (!(drive.rabi_mhz > 0.0))
    throw DomainError("Rabi frequency must be > 0");
  if (!(drive.duration_us > 0.0))
    throw DomainError("drive duration must be > 0");
  if (mw_frequencies.empty())
    throw DomainError("microwave frequency list is empty");

  const double transition = odmr_transition_mhz(e_z, model);
  std::vector<StepResult> results(mw_frequencies.size());
  parallel_for(mw_frequencies.size(), [&](std::size_t i) {
    results[i] = evolve(rotating_frame_hamiltonian(transition, mw_frequencies[i], drive.rabi_mhz),
                        drive.duration_us);
  });

  OdmrSpectrum spectrum;
  spectrum.mw_frequencies.assign(mw_frequencies.begin(), mw_frequencies.end());
  spectrum.transfer_population.reserve(results.size());
  spectrum.min_eigenvalue = 1.0;
  for (const auto& r : results) {
    spectrum.transfer_population.push_back(r.population);
    spectrum.max_trace_error = std::max(spectrum.max_trace_error, r.max_trace_error);
    spectrum.min_eigenvalue = std::min(spectrum.min_eigenvalue, r.min_eigenvalue);
  }
  if (spectrum.min_eigenvalue < -kInvariantTolerance)
    throw InternalError("ODMR density matrix developed a negative eigenvalue");
  return spectrum;
}

} // namespace vsi::sensor
