#pragma once

// Forward model of a silicon-vacancy sensor: optical Stark shift, spin-3/2
// ground-state Hamiltonian, ODMR spectra, PLE line shape and a
// phenomenological linewidth-vs-charge-density response.

#include <array>
#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace vsi::sensor {

/// Quadratic Stark coefficients: shift = -d E - (alpha / 2) E^2 + f0.
struct StarkParams {
  double d = 0.0;      // GHz per (MV/m), signed as fitted
  double alpha = 0.0;  // GHz per (MV/m)^2
  double f0 = 0.0;     // GHz
  double sigma_d = 0.0;
  double sigma_alpha = 0.0;
  double sigma_f0 = 0.0;

  void validate() const;
};

/// Spin-3/2 ground state. The zero-field splitting is 2 D.
struct SpinModel {
  static constexpr int kDim = 4;

  double d_mhz = 35.0;
  /// Axial coupling d_z in Hz per (V/m). The |1/2> -> |3/2> line moves by
  /// 2 d_z E_z, so the default is half the measured peak-shift gradient of
  /// -0.07 Hz/(V/m).
  double dz_hz_per_v_per_m = -0.035;

  void validate() const;
};

/// Optical A1/A2 doublet seen in a PLE scan. Both lines share width and
/// amplitude; A2 sits a fixed detuning above A1.
struct PleModel {
  double a1_center_ghz = 0.0;
  double a1_a2_detuning_ghz = 1.0;
  double fwhm_mhz = 80.0;
  double amplitude = 1.0;   // counts/s at line centre
  double background = 0.0;  // counts/s

  void validate() const;
};

struct OdmrSpectrum {
  std::vector<double> mw_frequencies;     // MHz
  std::vector<double> transfer_population;
  double max_trace_error = 0.0;           // max |tr(rho) - 1| over all steps
  double min_eigenvalue = 0.0;            // smallest rho eigenvalue over all steps
};

/// Optical linewidth as a function of local free-charge density:
///   fwhm(n) = gamma_depleted + (gamma_undepleted - gamma_depleted) / (1 + (n_half / n)^steepness)
/// The shape is phenomenological; only the endpoints are calibrated.
struct LinewidthModel {
  double gamma_depleted_mhz = 80.0;
  double gamma_undepleted_mhz = 205.2;
  double gamma_floor_mhz = 14.0;
  double n_half_cm3 = 1e12;
  double steepness = 1.0;

  void validate() const;
};

using Matrix4c = Eigen::Matrix<std::complex<double>, 4, 4>;

/// Spin projections of the basis used by every 4x4 matrix here.
inline constexpr std::array<double, 4> kSpinProjections{1.5, 0.5, -0.5, -1.5};

double stark_shift(double e_local_mv_per_m, const StarkParams& params);

/// (D + d_z E_z) S_z^2 in Hz, basis ordered as kSpinProjections.
Matrix4c ground_state_hamiltonian(double e_z_v_per_m, const SpinModel& model);

/// |+-1/2> -> |+-3/2> transition frequency 2 (D + d_z E_z), in MHz.
double odmr_transition_mhz(double e_z_v_per_m, const SpinModel& model);

/// Spin operators S_x and S_z for S = 3/2 in the kSpinProjections basis.
Matrix4c spin_x();
Matrix4c spin_z();

struct OdmrDrive {
  double rabi_mhz = 2.0;      // amplitude Omega of the Omega * S_x drive
  double duration_us = 0.1;
};

/// Pulsed ODMR: start in the mixed |+-1/2> state, apply a microwave drive at
/// each frequency (rotating-wave approximation) and read out the |+-3/2>
/// population. Throws DomainError on invalid drive parameters and
/// InternalError if the propagated state loses hermiticity or trace.
OdmrSpectrum odmr_spectrum(double e_z_v_per_m, const SpinModel& model, const OdmrDrive& drive,
                           std::span<const double> mw_frequencies_mhz);

/// Counts/s of the A1/A2 doublet at each frequency (GHz).
std::vector<double> ple_spectrum(const PleModel& model, std::span<const double> freqs_ghz);

/// Single Lorentzian with unit peak height; fwhm and x in the same units.
double lorentzian(double x, double center, double fwhm);

double linewidth_response(double n_local_cm3, const LinewidthModel& lw);

} // namespace vsi::sensor
