#pragma once

// Inference procedures that turn sensor data back into device parameters.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vsi/device.hpp"
#include "vsi/sensor.hpp"

namespace vsi::inversion {

inline constexpr std::uint64_t kDefaultSeed = 20240917;

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> sigma;
  Eigen::MatrixXd covariance;
  double residual_sse = 0.0;
  int iterations = 0;
  std::optional<std::uint64_t> seed;

  double value(std::string_view name) const;
  double sigma_of(std::string_view name) const;
};

// ---------------------------------------------------------------- Stark ---

struct StarkPoint {
  double e_local = 0.0; // MV/m
  double delta_f = 0.0; // GHz
};

/// Ordinary least squares of delta_f on (-E, -E^2/2, 1). Parameters are
/// named "d", "alpha", "f0". Optional per-point sigmas switch to weighted
/// least squares. Throws DegenerateDataError on a rank-deficient design.
FitResult fit_stark(std::span<const StarkPoint> data, std::span<const double> sigmas = {});

sensor::StarkParams to_stark_params(const FitResult& fit);

struct FieldReconstruction {
  double e_local = 0.0; // MV/m
  /// Set when both roots are negative although a field magnitude is expected.
  bool flagged = false;
};

/// Inverts the Stark polynomial for E. Of the two roots, returns the one
/// closest to the linear-regime solution (f0 - delta_f) / d. Throws
/// OutOfRangeError when no real root exists.
FieldReconstruction reconstruct_field(double delta_f, const sensor::StarkParams& params);

// ------------------------------------------------------------ threshold ---

struct VoltageShift {
  double voltage = 0.0; // V
  double delta_f = 0.0; // GHz
};

struct ThresholdOptions {
  int bootstrap_resamples = 200;
  std::uint64_t seed = kDefaultSeed;
  /// Breakpoint candidates per interval between neighbouring voltages.
  int subdivisions = 20;
  /// Minimum relative SSE improvement over a constant fit to accept an onset.
  double min_improvement = 0.05;
};

struct ThresholdEstimate {
  double v_threshold = 0.0;
  double sigma_v = 0.0;
  double flat_level = 0.0;     // GHz
  double slope = 0.0;          // GHz/V after the breakpoint
  double sse = 0.0;
  double sse_constant = 0.0;   // SSE of the constant-only model
  double grid_step = 0.0;      // candidate spacing in V
  bool onset_before_scan = false; // breakpoint at the first scanned voltage
  std::uint64_t seed = 0;
  int resamples = 0;
};

/// Fits delta_f = c + m * max(0, V - b) by scanning b over a refined voltage
/// grid. sigma_v comes from a seeded residual bootstrap; noise_sigma is a
/// floor on the residual scale used for resampling. Throws NoOnsetError if
/// the breakpoint model improves the SSE of a constant fit by less than
/// min_improvement, DegenerateDataError for fewer than 6 points.
ThresholdEstimate detect_threshold(std::span<const VoltageShift> data, double noise_sigma,
                                   const ThresholdOptions& options = {});

// --------------------------------------------------------------- doping ---

/// N_D = (2 eps / q) (V + V_bi) / x^2, in cm^-3, with x in um.
double extract_doping(double v_threshold, double x_um, double v_bi, const device::MaterialParams& material);

struct DopingInterval {
  double low = 0.0;
  double mid = 0.0;
  double high = 0.0;
};

/// Worst-case corners: (V - sigma_V, x + sigma_x) and (V + sigma_V, x - sigma_x).
DopingInterval doping_uncertainty(double v_threshold, double sigma_v, double x_um, double sigma_x_um,
                                  double v_bi, const device::MaterialParams& material);

struct CvSample {
  double voltage = 0.0;     // V, forward-positive
  double capacitance = 0.0; // F
};

struct CvCurve {
  std::vector<CvSample> samples;
  double contact_area_cm2 = 0.0;

  void validate() const;
};

struct CvDopingPoint {
  double voltage = 0.0;
  double n_d_cm3 = 0.0;
  bool flagged = false; // non-positive doping (forward region or flat C)
};

struct CvOptions {
  int window = 5;
  int degree = 2;
};

/// N_D = -2 / (q eps A^2) * d(1/C^2)/dV with the derivative taken from a
/// local polynomial least-squares fit. One point per interior voltage.
std::vector<CvDopingPoint> cv_doping(const CvCurve& curve, const device::MaterialParams& material,
                                     const CvOptions& options = {});

// ------------------------------------------------------------ lineshape ---

struct LorentzianFitOptions {
  int max_iterations = 200;
  double initial_damping = 1e-3;
  double tolerance = 1e-13;
};

/// Single Lorentzian plus constant background. Parameters "center", "fwhm",
/// "amplitude", "background" in the units of the input. Throws
/// DegenerateDataError for fewer than 8 points and FitFailedError when the
/// data has no peak or the iteration does not converge.
FitResult fit_lorentzian(std::span<const double> freqs, std::span<const double> counts,
                         std::span<const double> sigmas = {}, const LorentzianFitOptions& options = {});

/// Centre of the dominant peak of an ODMR spectrum (MHz), from a Lorentzian
/// fit restricted to the main lobe.
FitResult fit_odmr_peak(const sensor::OdmrSpectrum& spectrum);

// ---------------------------------------------------------- sensitivity ---

struct CountTimeSeries {
  std::vector<double> counts; // counts per sample
  double sample_rate_hz = 0.0;
  double duration_s = 0.0;

  void validate() const;
};

struct SensitivityResult {
  double eta = 0.0;          // kV/m per sqrt(Hz)
  double uncertainty = 0.0;  // kV/m per sqrt(Hz)
  std::vector<double> per_bin_std; // kV/m, one per whole 1 s bin
};

/// Converts count fluctuations to field fluctuations through the PLE slope
/// (gradient in counts/s per GHz) and the dipole moment d (GHz per MV/m),
/// then averages the standard deviation over whole 1 s bins.
SensitivityResult sensitivity(const CountTimeSeries& series, double gradient_counts_per_s_per_ghz, double d);

} // namespace vsi::inversion
