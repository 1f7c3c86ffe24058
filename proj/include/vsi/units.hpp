#pragma once

// Physical constants and the unit conversions used at API boundaries.
//
// Public functions take and return device-scale units (um, MV/m, GHz, MHz,
// V, cm^-3). Everything inside the numerical kernels is SI.

namespace vsi::units {

inline constexpr double kElementaryCharge = 1.602176634e-19;    // C
inline constexpr double kVacuumPermittivity = 8.8541878128e-12; // F/m
inline constexpr double kBoltzmann = 1.380649e-23;              // J/K

inline constexpr double kMetersPerMicron = 1e-6;
inline constexpr double kPerM3PerCm3 = 1e6;      // cm^-3 -> m^-3
inline constexpr double kVoltsPerMeterPerMV = 1e6; // MV/m -> V/m
inline constexpr double kM2PerCm2 = 1e-4;
inline constexpr double kHzPerMHz = 1e6;
inline constexpr double kMHzPerGHz = 1e3;
inline constexpr double kKVPerMV = 1e3;

constexpr double um_to_m(double um) { return um * kMetersPerMicron; }
constexpr double m_to_um(double m) { return m / kMetersPerMicron; }
constexpr double per_cm3_to_per_m3(double n) { return n * kPerM3PerCm3; }
constexpr double per_m3_to_per_cm3(double n) { return n / kPerM3PerCm3; }
constexpr double mv_per_m_to_v_per_m(double e) { return e * kVoltsPerMeterPerMV; }
constexpr double v_per_m_to_mv_per_m(double e) { return e / kVoltsPerMeterPerMV; }

/// Thermal voltage kT/q in volts.
constexpr double thermal_voltage(double temperature_k) {
  return kBoltzmann * temperature_k / kElementaryCharge;
}

} // namespace vsi::units
