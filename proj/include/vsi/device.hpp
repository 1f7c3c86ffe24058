#pragma once

// One-dimensional electrostatics of the p++ / low-doped n / n++ diode in the
// depletion approximation: abrupt junctions, fully ionised dopants, no free
// carriers inside the space-charge region.
//
// Coordinates are in um measured from the p++/intrinsic interface into the
// intrinsic layer. Fields are magnitudes along the c-axis; the vector points
// from the n side towards the p side (i.e. along -x).

#include <optional>
#include <span>
#include <vector>

namespace vsi::device {

enum class LayerRole { p_contact, intrinsic_n, n_buffer };
enum class DopantType { donor, acceptor };

struct MaterialParams {
  double eps_r = 9.66;          // 4H-SiC
  double n_i_cm3 = 8.2e-9;      // intrinsic carrier concentration at 300 K
  double temperature_k = 300.0;
  double v_e_cm_s = 1e7;        // electron drift saturation velocity
  double bandgap_ev = 3.26;

  /// Throws DomainError when an invariant is violated.
  void validate() const;
  double permittivity() const; // eps0 * eps_r in F/m
};

struct LayerSpec {
  LayerRole role = LayerRole::intrinsic_n;
  DopantType dopant_type = DopantType::donor;
  double concentration_cm3 = 0.0;
  double thickness_um = 0.0;
};

/// Ordered layer stack p_contact -> intrinsic_n -> n_buffer.
class DeviceStack {
public:
  DeviceStack(std::vector<LayerSpec> layers, MaterialParams material,
              std::optional<double> builtin_voltage_override = std::nullopt);

  /// The 2 um p++ / 4.1 um intrinsic / n++ buffer diode with N_D = 9e14 cm^-3.
  static DeviceStack reference_pin_diode(double intrinsic_doping_cm3 = 9e14);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const MaterialParams& material() const { return material_; }
  const LayerSpec& p_contact() const;
  const LayerSpec& intrinsic() const;
  std::optional<double> builtin_voltage_override() const { return vbi_override_; }

  DeviceStack with_intrinsic_doping(double n_d_cm3) const;

private:
  std::vector<LayerSpec> layers_;
  MaterialParams material_;
  std::optional<double> vbi_override_;
};

struct BiasPoint {
  double reverse_voltage = 0.0; // V, positive = reverse bias
};

struct FieldProfile {
  std::vector<double> positions;  // um
  std::vector<double> e_macro;    // MV/m
  std::vector<double> e_local;    // MV/m, Lorentz-corrected
  double depletion_edge = 0.0;    // x_n in um (unclipped)
  bool punch_through = false;
  double v_bi = 0.0;              // V
  double eps_r = 1.0;

  // Closed-form description: e_macro(x) = max(0, peak - slope * x) on
  // [0, intrinsic_width], zero beyond.
  double peak_field = 0.0;        // MV/m at x = 0
  double slope = 0.0;             // MV/m per um
  double intrinsic_width = 0.0;   // um

  double macro_at(double x_um) const;
  double local_at(double x_um) const;
};

struct BandDiagram {
  std::vector<double> positions;       // um
  std::vector<double> valence_edge;    // eV, zero at the p-side reference
  std::vector<double> conduction_edge; // eV
};

struct CarrierProfile {
  std::vector<double> positions;   // um
  std::vector<double> electrons;   // cm^-3
  double depletion_edge = 0.0;     // um, identical to FieldProfile::depletion_edge
  bool punch_through = false;
};

inline constexpr int kDefaultGridPoints = 2000;

/// (kT/q) ln(N_A N_D / n_i^2) in volts.
double builtin_voltage(double n_a_cm3, double n_d_cm3, const MaterialParams& material);
/// Built-in voltage of the p_contact / intrinsic junction, or the stack's
/// override when one is configured.
double builtin_voltage(const DeviceStack& stack);

/// Depletion width into the intrinsic side, sqrt(2 eps (V_bi + V) / (q N_D)),
/// in um. Throws DomainError when V + V_bi < 0.
double depletion_width(double reverse_voltage, double n_d_cm3, double v_bi,
                       const MaterialParams& material);

/// Field at a point defect: ((2 + eps_r) / 3) * e_macro.
constexpr double lorentz_local_field(double e_macro, double eps_r) {
  return (2.0 + eps_r) / 3.0 * e_macro;
}

FieldProfile field_profile(const DeviceStack& stack, BiasPoint bias,
                           int grid_points = kDefaultGridPoints);

BandDiagram band_diagram(const DeviceStack& stack, BiasPoint bias,
                         int grid_points = kDefaultGridPoints);

CarrierProfile carrier_profile(const DeviceStack& stack, BiasPoint bias,
                               int grid_points = kDefaultGridPoints);
/// Free-electron concentration at explicit positions (um).
std::vector<double> carrier_profile(const DeviceStack& stack, BiasPoint bias,
                                    std::span<const double> positions_um);

/// n_e = j / (q v_e) with j in A/cm^2 and v_e in cm/s; returns cm^-3.
double electron_density_from_current(double j_a_cm2, double v_e_cm_s);

/// Cumulative trapezoid integral of `values` over `x`.
std::vector<double> cumulative_trapezoid(std::span<const double> x, std::span<const double> values);

} // namespace vsi::device
