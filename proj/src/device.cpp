#include "vsi/device.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vsi/errors.hpp"
#include "vsi/units.hpp"

namespace vsi::device {

namespace {

constexpr double kMinContactRatio = 1e3;

std::vector<double> uniform_grid(double length_um, int points) {
  if (points < 2)
    throw DomainError("grid needs at least 2 points");
  std::vector<double> x(static_cast<std::size_t>(points));
  const double h = length_um / static_cast<double>(points - 1);
  for (int i = 0; i < points; ++i)
    x[static_cast<std::size_t>(i)] = h * i;
  x.back() = length_um;
  return x;
}

// q N_D / eps expressed in (MV/m) per um.
double field_slope(double n_d_cm3, const MaterialParams& material) {
  const double slope_si =
      units::kElementaryCharge * units::per_cm3_to_per_m3(n_d_cm3) / material.permittivity();
  return slope_si * units::kMetersPerMicron / units::kVoltsPerMeterPerMV;
}

bool is_depleted(double x_um, double x_n_um) { return x_n_um > 0.0 && x_um <= x_n_um; }

} // namespace

void MaterialParams::validate() const {
  if (!(eps_r >= 1.0))
    throw DomainError("eps_r must be >= 1");
  if (!(n_i_cm3 > 0.0))
    throw DomainError("n_i must be > 0");
  if (!(temperature_k > 0.0))
    throw DomainError("temperature must be > 0");
  if (!(v_e_cm_s > 0.0))
    throw DomainError("v_e must be > 0");
  if (!(bandgap_ev > 0.0))
    throw DomainError("bandgap must be > 0");
}

double MaterialParams::permittivity() const { return units::kVacuumPermittivity * eps_r; }

DeviceStack::DeviceStack(std::vector<LayerSpec> layers, MaterialParams material,
                         std::optional<double> builtin_voltage_override)
    : layers_(std::move(layers)), material_(material), vbi_override_(builtin_voltage_override) {
  material_.validate();
  if (layers_.size() < 2 || layers_.size() > 3)
    throw DomainError("stack must be p_contact, intrinsic_n[, n_buffer]");
  const LayerRole expected[] = {LayerRole::p_contact, LayerRole::intrinsic_n, LayerRole::n_buffer};
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    if (layer.role != expected[i])
      throw DomainError("layer " + std::to_string(i) + " out of order (expected p_contact -> intrinsic_n -> n_buffer)");
    if (!(layer.concentration_cm3 > 0.0))
      throw DomainError("layer " + std::to_string(i) + ": concentration must be > 0");
    if (!(layer.thickness_um > 0.0))
      throw DomainError("layer " + std::to_string(i) + ": thickness must be > 0");
    const auto want = layer.role == LayerRole::p_contact ? DopantType::acceptor : DopantType::donor;
    if (layer.dopant_type != want)
      throw DomainError("layer " + std::to_string(i) + ": wrong dopant type for role");
  }
  if (layers_[0].concentration_cm3 < kMinContactRatio * layers_[1].concentration_cm3)
    throw DomainError("p_contact doping must exceed intrinsic doping by >= 1e3");
  if (vbi_override_ && !std::isfinite(*vbi_override_))
    throw DomainError("built-in voltage override must be finite");
}

DeviceStack DeviceStack::reference_pin_diode(double intrinsic_doping_cm3) {
  return DeviceStack(
      {
          {LayerRole::p_contact, DopantType::acceptor, 2e19, 2.0},
          {LayerRole::intrinsic_n, DopantType::donor, intrinsic_doping_cm3, 4.1},
          {LayerRole::n_buffer, DopantType::donor, 1e18, 1.0},
      },
      MaterialParams{});
}

const LayerSpec& DeviceStack::p_contact() const { return layers_[0]; }
const LayerSpec& DeviceStack::intrinsic() const { return layers_[1]; }

DeviceStack DeviceStack::with_intrinsic_doping(double n_d_cm3) const {
  auto layers = layers_;
  layers[1].concentration_cm3 = n_d_cm3;
  return DeviceStack(std::move(layers), material_, vbi_override_);
}

double builtin_voltage(double n_a_cm3, double n_d_cm3, const MaterialParams& material) {
  // N_A N_D / n_i^2 is ~1e50; take the log factor by factor.
  const double log_ratio = std::log(n_a_cm3 / material.n_i_cm3) + std::log(n_d_cm3 / material.n_i_cm3);
  return units::thermal_voltage(material.temperature_k) * log_ratio;
}

double builtin_voltage(const DeviceStack& stack) {
  if (auto v = stack.builtin_voltage_override())
    return *v;
  return builtin_voltage(stack.p_contact().concentration_cm3, stack.intrinsic().concentration_cm3,
                         stack.material());
}

double depletion_width(double reverse_voltage, double n_d_cm3, double v_bi,
                       const MaterialParams& material) {
  const double potential = reverse_voltage + v_bi;
  if (potential < 0.0)
    throw DomainError("V + V_bi < 0: junction is forward-flooded");
  if (!(n_d_cm3 > 0.0))
    throw DomainError("N_D must be > 0");
  const double w2 = 2.0 * material.permittivity() * potential /
                    (units::kElementaryCharge * units::per_cm3_to_per_m3(n_d_cm3));
  return units::m_to_um(std::sqrt(w2));
}

double FieldProfile::macro_at(double x_um) const {
  if (x_um < 0.0 || x_um > intrinsic_width)
    return 0.0;
  return std::max(0.0, peak_field - slope * x_um);
}

double FieldProfile::local_at(double x_um) const { return lorentz_local_field(macro_at(x_um), eps_r); }

FieldProfile field_profile(const DeviceStack& stack, BiasPoint bias, int grid_points) {
  const auto& material = stack.material();
  const double n_d = stack.intrinsic().concentration_cm3;
  const double width = stack.intrinsic().thickness_um;

  FieldProfile profile;
  profile.v_bi = builtin_voltage(stack);
  profile.eps_r = material.eps_r;
  profile.depletion_edge = depletion_width(bias.reverse_voltage, n_d, profile.v_bi, material);
  profile.punch_through = profile.depletion_edge >= width;
  profile.slope = field_slope(n_d, material);
  profile.intrinsic_width = width;

  if (!profile.punch_through) {
    profile.peak_field = profile.slope * profile.depletion_edge;
  } else {
    // Buffer is heavily doped, so the residual potential drops across [0, W].
    const double potential = bias.reverse_voltage + profile.v_bi; // V
    const double mean_field = potential / units::um_to_m(width);   // V/m
    profile.peak_field = units::v_per_m_to_mv_per_m(mean_field) + profile.slope * width / 2.0;
  }

  profile.positions = uniform_grid(width, grid_points);
  profile.e_macro.reserve(profile.positions.size());
  profile.e_local.reserve(profile.positions.size());
  for (double x : profile.positions) {
    const double e = profile.macro_at(x);
    profile.e_macro.push_back(e);
    profile.e_local.push_back(lorentz_local_field(e, material.eps_r));
  }
  return profile;
}

std::vector<double> cumulative_trapezoid(std::span<const double> x, std::span<const double> values) {
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 1; i < x.size(); ++i)
    out[i] = out[i - 1] + 0.5 * (values[i] + values[i - 1]) * (x[i] - x[i - 1]);
  return out;
}

BandDiagram band_diagram(const DeviceStack& stack, BiasPoint bias, int grid_points) {
  const auto field = field_profile(stack, bias, grid_points);
  // MV/m * um = V, so the integral is directly the potential in volts.
  const auto potential = cumulative_trapezoid(field.positions, field.e_macro);

  BandDiagram bands;
  bands.positions = field.positions;
  bands.valence_edge.reserve(potential.size());
  bands.conduction_edge.reserve(potential.size());
  const double gap = stack.material().bandgap_ev;
  for (double phi : potential) {
    bands.valence_edge.push_back(-phi);
    bands.conduction_edge.push_back(-phi + gap);
  }
  return bands;
}

CarrierProfile carrier_profile(const DeviceStack& stack, BiasPoint bias, int grid_points) {
  const auto field = field_profile(stack, bias, grid_points);
  CarrierProfile carriers;
  carriers.positions = field.positions;
  carriers.depletion_edge = field.depletion_edge;
  carriers.punch_through = field.punch_through;
  carriers.electrons = carrier_profile(stack, bias, field.positions);
  return carriers;
}

std::vector<double> carrier_profile(const DeviceStack& stack, BiasPoint bias,
                                    std::span<const double> positions_um) {
  const double n_d = stack.intrinsic().concentration_cm3;
  const double x_n = depletion_width(bias.reverse_voltage, n_d, builtin_voltage(stack), stack.material());
  std::vector<double> n(positions_um.size());
  std::transform(positions_um.begin(), positions_um.end(), n.begin(),
                 [&](double x) { return is_depleted(x, x_n) ? 0.0 : n_d; });
  return n;
}

double electron_density_from_current(double j_a_cm2, double v_e_cm_s) {
  if (!(v_e_cm_s > 0.0))
    throw DomainError("drift velocity must be > 0");
  if (j_a_cm2 < 0.0)
    throw DomainError("current density must be >= 0");
  return j_a_cm2 / (units::kElementaryCharge * v_e_cm_s);
}

} // namespace vsi::device
