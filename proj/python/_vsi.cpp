#include <optional>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vsi/device.hpp"
#include "vsi/errors.hpp"
#include "vsi/inversion.hpp"
#include "vsi/sensor.hpp"
#include "vsi/workbench.hpp"

namespace py = pybind11;
using namespace vsi;

namespace {

using Release = py::call_guard<py::gil_scoped_release>;

void bind_errors(py::module_& m) {
  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<DegenerateDataError>(m, "DegenerateDataError", base.ptr());
  py::register_exception<OutOfRangeError>(m, "OutOfRangeError", base.ptr());
  py::register_exception<FitFailedError>(m, "FitFailedError", base.ptr());
  py::register_exception<NoOnsetError>(m, "NoOnsetError", base.ptr());
  py::register_exception<InternalError>(m, "InternalError", base.ptr());
  py::register_exception<IngestionError>(m, "IngestionError", base.ptr());

  // ConfigError carries the offending key as an attribute.
  static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p)
        std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::object exc = py::handle(config.ptr())(e.what());
      exc.attr("key") = e.key();
      PyErr_SetObject(config.ptr(), exc.ptr());
    }
  });
}

void bind_device(py::module_& m) {
  using namespace device;
  py::enum_<LayerRole>(m, "LayerRole")
      .value("p_contact", LayerRole::p_contact)
      .value("intrinsic_n", LayerRole::intrinsic_n)
      .value("n_buffer", LayerRole::n_buffer);
  py::enum_<DopantType>(m, "DopantType")
      .value("donor", DopantType::donor)
      .value("acceptor", DopantType::acceptor);

  py::class_<MaterialParams>(m, "MaterialParams")
      .def(py::init<>())
      .def_readwrite("eps_r", &MaterialParams::eps_r)
      .def_readwrite("n_i_cm3", &MaterialParams::n_i_cm3)
      .def_readwrite("temperature_k", &MaterialParams::temperature_k)
      .def_readwrite("v_e_cm_s", &MaterialParams::v_e_cm_s)
      .def_readwrite("bandgap_ev", &MaterialParams::bandgap_ev)
      .def("validate", &MaterialParams::validate);

  py::class_<LayerSpec>(m, "LayerSpec")
      .def(py::init([](LayerRole role, DopantType type, double conc, double thickness) {
             return LayerSpec{role, type, conc, thickness};
           }),
           py::arg("role"), py::arg("dopant_type"), py::arg("concentration_cm3"), py::arg("thickness_um"))
      .def_readwrite("role", &LayerSpec::role)
      .def_readwrite("dopant_type", &LayerSpec::dopant_type)
      .def_readwrite("concentration_cm3", &LayerSpec::concentration_cm3)
      .def_readwrite("thickness_um", &LayerSpec::thickness_um);

  py::class_<DeviceStack>(m, "DeviceStack")
      .def(py::init<std::vector<LayerSpec>, MaterialParams, std::optional<double>>(), py::arg("layers"),
           py::arg("material") = MaterialParams{}, py::arg("builtin_voltage_override") = std::nullopt)
      .def_static("reference_pin_diode", &DeviceStack::reference_pin_diode,
                  py::arg("intrinsic_doping_cm3") = 9e14)
      .def_property_readonly("layers", &DeviceStack::layers)
      .def_property_readonly("material", &DeviceStack::material)
      .def_property_readonly("builtin_voltage_override", &DeviceStack::builtin_voltage_override)
      .def("with_intrinsic_doping", &DeviceStack::with_intrinsic_doping, py::arg("n_d_cm3"));

  py::class_<FieldProfile>(m, "FieldProfile")
      .def_readonly("positions", &FieldProfile::positions)
      .def_readonly("e_macro", &FieldProfile::e_macro)
      .def_readonly("e_local", &FieldProfile::e_local)
      .def_readonly("depletion_edge", &FieldProfile::depletion_edge)
      .def_readonly("punch_through", &FieldProfile::punch_through)
      .def_readonly("v_bi", &FieldProfile::v_bi)
      .def_readonly("peak_field", &FieldProfile::peak_field)
      .def_readonly("slope", &FieldProfile::slope)
      .def_readonly("intrinsic_width", &FieldProfile::intrinsic_width)
      .def("macro_at", &FieldProfile::macro_at, py::arg("x_um"))
      .def("local_at", &FieldProfile::local_at, py::arg("x_um"));

  py::class_<BandDiagram>(m, "BandDiagram")
      .def_readonly("positions", &BandDiagram::positions)
      .def_readonly("valence_edge", &BandDiagram::valence_edge)
      .def_readonly("conduction_edge", &BandDiagram::conduction_edge);

  py::class_<CarrierProfile>(m, "CarrierProfile")
      .def_readonly("positions", &CarrierProfile::positions)
      .def_readonly("electrons", &CarrierProfile::electrons)
      .def_readonly("depletion_edge", &CarrierProfile::depletion_edge)
      .def_readonly("punch_through", &CarrierProfile::punch_through);

  m.def("builtin_voltage", py::overload_cast<double, double, const MaterialParams&>(&builtin_voltage),
        py::arg("n_a_cm3"), py::arg("n_d_cm3"), py::arg("material") = MaterialParams{});
  m.def("builtin_voltage", py::overload_cast<const DeviceStack&>(&builtin_voltage), py::arg("stack"));
  m.def("depletion_width", &depletion_width, py::arg("reverse_voltage"), py::arg("n_d_cm3"), py::arg("v_bi"),
        py::arg("material") = MaterialParams{});
  m.def("lorentz_local_field", &lorentz_local_field, py::arg("e_macro"), py::arg("eps_r"));
  m.def("field_profile",
        [](const DeviceStack& s, double v, int n) { return field_profile(s, BiasPoint{v}, n); },
        py::arg("stack"), py::arg("reverse_voltage"), py::arg("grid_points") = kDefaultGridPoints);
  m.def("band_diagram",
        [](const DeviceStack& s, double v, int n) { return band_diagram(s, BiasPoint{v}, n); },
        py::arg("stack"), py::arg("reverse_voltage"), py::arg("grid_points") = kDefaultGridPoints);
  m.def("carrier_profile",
        [](const DeviceStack& s, double v, int n) { return carrier_profile(s, BiasPoint{v}, n); },
        py::arg("stack"), py::arg("reverse_voltage"), py::arg("grid_points") = kDefaultGridPoints);
  m.def("electron_density_from_current", &electron_density_from_current, py::arg("j_a_cm2"),
        py::arg("v_e_cm_s"));
}

void bind_sensor(py::module_& m) {
  using namespace sensor;
  py::class_<StarkParams>(m, "StarkParams")
      .def(py::init([](double d, double alpha, double f0) { return StarkParams{d, alpha, f0}; }),
           py::arg("d"), py::arg("alpha"), py::arg("f0"))
      .def_readwrite("d", &StarkParams::d)
      .def_readwrite("alpha", &StarkParams::alpha)
      .def_readwrite("f0", &StarkParams::f0)
      .def_readwrite("sigma_d", &StarkParams::sigma_d)
      .def_readwrite("sigma_alpha", &StarkParams::sigma_alpha)
      .def_readwrite("sigma_f0", &StarkParams::sigma_f0);

  py::class_<SpinModel>(m, "SpinModel")
      .def(py::init<>())
      .def_readwrite("d_mhz", &SpinModel::d_mhz)
      .def_readwrite("dz_hz_per_v_per_m", &SpinModel::dz_hz_per_v_per_m);

  py::class_<PleModel>(m, "PleModel")
      .def(py::init<>())
      .def_readwrite("a1_center_ghz", &PleModel::a1_center_ghz)
      .def_readwrite("a1_a2_detuning_ghz", &PleModel::a1_a2_detuning_ghz)
      .def_readwrite("fwhm_mhz", &PleModel::fwhm_mhz)
      .def_readwrite("amplitude", &PleModel::amplitude)
      .def_readwrite("background", &PleModel::background);

  py::class_<LinewidthModel>(m, "LinewidthModel")
      .def(py::init<>())
      .def_readwrite("gamma_depleted_mhz", &LinewidthModel::gamma_depleted_mhz)
      .def_readwrite("gamma_undepleted_mhz", &LinewidthModel::gamma_undepleted_mhz)
      .def_readwrite("gamma_floor_mhz", &LinewidthModel::gamma_floor_mhz)
      .def_readwrite("n_half_cm3", &LinewidthModel::n_half_cm3)
      .def_readwrite("steepness", &LinewidthModel::steepness);

  py::class_<OdmrSpectrum>(m, "OdmrSpectrum")
      .def_readonly("mw_frequencies", &OdmrSpectrum::mw_frequencies)
      .def_readonly("transfer_population", &OdmrSpectrum::transfer_population)
      .def_readonly("max_trace_error", &OdmrSpectrum::max_trace_error)
      .def_readonly("min_eigenvalue", &OdmrSpectrum::min_eigenvalue);

  m.def("stark_shift", &stark_shift, py::arg("e_local_mv_per_m"), py::arg("params"));
  m.def("odmr_transition_mhz", &odmr_transition_mhz, py::arg("e_z_v_per_m"), py::arg("model") = SpinModel{});
  m.def(
      "odmr_spectrum",
      [](double e_z, const SpinModel& model, double rabi, double duration, const std::vector<double>& f) {
        return odmr_spectrum(e_z, model, OdmrDrive{rabi, duration}, f);
      },
      py::arg("e_z_v_per_m"), py::arg("model"), py::arg("rabi_mhz"), py::arg("duration_us"),
      py::arg("mw_frequencies_mhz"), Release());
  m.def(
      "ple_spectrum",
      [](const PleModel& model, const std::vector<double>& f) { return ple_spectrum(model, f); },
      py::arg("model"), py::arg("freqs_ghz"));
  m.def("linewidth_response", &linewidth_response, py::arg("n_local_cm3"), py::arg("model") = LinewidthModel{});
}

void bind_inversion(py::module_& m) {
  using namespace inversion;
  py::class_<FitResult>(m, "FitResult")
      .def_readonly("names", &FitResult::names)
      .def_readonly("values", &FitResult::values)
      .def_readonly("sigma", &FitResult::sigma)
      .def_readonly("covariance", &FitResult::covariance)
      .def_readonly("residual_sse", &FitResult::residual_sse)
      .def_readonly("iterations", &FitResult::iterations)
      .def("value", &FitResult::value, py::arg("name"))
      .def("sigma_of", &FitResult::sigma_of, py::arg("name"))
      .def("to_stark_params", &to_stark_params);

  py::class_<FieldReconstruction>(m, "FieldReconstruction")
      .def_readonly("e_local", &FieldReconstruction::e_local)
      .def_readonly("flagged", &FieldReconstruction::flagged);

  py::class_<ThresholdEstimate>(m, "ThresholdEstimate")
      .def_readonly("v_threshold", &ThresholdEstimate::v_threshold)
      .def_readonly("sigma_v", &ThresholdEstimate::sigma_v)
      .def_readonly("flat_level", &ThresholdEstimate::flat_level)
      .def_readonly("slope", &ThresholdEstimate::slope)
      .def_readonly("sse", &ThresholdEstimate::sse)
      .def_readonly("sse_constant", &ThresholdEstimate::sse_constant)
      .def_readonly("grid_step", &ThresholdEstimate::grid_step)
      .def_readonly("onset_before_scan", &ThresholdEstimate::onset_before_scan)
      .def_readonly("seed", &ThresholdEstimate::seed)
      .def_readonly("resamples", &ThresholdEstimate::resamples);

  py::class_<DopingInterval>(m, "DopingInterval")
      .def_readonly("low", &DopingInterval::low)
      .def_readonly("mid", &DopingInterval::mid)
      .def_readonly("high", &DopingInterval::high);

  py::class_<CvDopingPoint>(m, "CvDopingPoint")
      .def_readonly("voltage", &CvDopingPoint::voltage)
      .def_readonly("n_d_cm3", &CvDopingPoint::n_d_cm3)
      .def_readonly("flagged", &CvDopingPoint::flagged);

  py::class_<SensitivityResult>(m, "SensitivityResult")
      .def_readonly("eta", &SensitivityResult::eta)
      .def_readonly("uncertainty", &SensitivityResult::uncertainty)
      .def_readonly("per_bin_std", &SensitivityResult::per_bin_std);

  m.def(
      "fit_stark",
      [](const std::vector<double>& e, const std::vector<double>& df, const std::vector<double>& sigmas) {
        if (e.size() != df.size())
          throw DegenerateDataError("fit_stark: e_local and delta_f differ in length");
        std::vector<StarkPoint> pts(e.size());
        for (std::size_t i = 0; i < e.size(); ++i)
          pts[i] = {e[i], df[i]};
        return fit_stark(pts, sigmas);
      },
      py::arg("e_local"), py::arg("delta_f"), py::arg("sigmas") = std::vector<double>{});
  m.def("reconstruct_field", &reconstruct_field, py::arg("delta_f"), py::arg("params"));
  m.def(
      "detect_threshold",
      [](const std::vector<double>& v, const std::vector<double>& df, double noise, int resamples,
         std::uint64_t seed, int subdivisions, double min_improvement) {
        if (v.size() != df.size())
          throw DegenerateDataError("detect_threshold: voltages and delta_f differ in length");
        std::vector<VoltageShift> pts(v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
          pts[i] = {v[i], df[i]};
        return detect_threshold(pts, noise, ThresholdOptions{resamples, seed, subdivisions, min_improvement});
      },
      py::arg("voltages"), py::arg("delta_f"), py::arg("noise_sigma"), py::arg("bootstrap_resamples") = 200,
      py::arg("seed") = kDefaultSeed, py::arg("subdivisions") = 20, py::arg("min_improvement") = 0.05,
      Release());
  m.def("extract_doping", &extract_doping, py::arg("v_threshold"), py::arg("x_um"), py::arg("v_bi"),
        py::arg("material") = device::MaterialParams{});
  m.def("doping_uncertainty", &doping_uncertainty, py::arg("v_threshold"), py::arg("sigma_v"), py::arg("x_um"),
        py::arg("sigma_x_um"), py::arg("v_bi"), py::arg("material") = device::MaterialParams{});
  m.def(
      "cv_doping",
      [](const std::vector<double>& v, const std::vector<double>& c, double area,
         const device::MaterialParams& material, int window, int degree) {
        if (v.size() != c.size())
          throw DegenerateDataError("cv_doping: voltages and capacitances differ in length");
        CvCurve curve;
        curve.contact_area_cm2 = area;
        for (std::size_t i = 0; i < v.size(); ++i)
          curve.samples.push_back({v[i], c[i]});
        return cv_doping(curve, material, CvOptions{window, degree});
      },
      py::arg("voltages"), py::arg("capacitances"), py::arg("area_cm2"),
      py::arg("material") = device::MaterialParams{}, py::arg("window") = 5, py::arg("degree") = 2);
  m.def(
      "fit_lorentzian",
      [](const std::vector<double>& f, const std::vector<double>& y, const std::vector<double>& sigmas) {
        return fit_lorentzian(f, y, sigmas);
      },
      py::arg("freqs"), py::arg("counts"), py::arg("sigmas") = std::vector<double>{});
  m.def(
      "sensitivity",
      [](const std::vector<double>& counts, double rate, double gradient, double d) {
        CountTimeSeries series{counts, rate, static_cast<double>(counts.size()) / rate};
        return sensitivity(series, gradient, d);
      },
      py::arg("counts"), py::arg("sample_rate_hz"), py::arg("gradient_counts_per_s_per_ghz"), py::arg("d"));
}

void bind_workbench(py::module_& m) {
  using namespace workbench;
  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_static("from_file", &load_config, py::arg("path"))
      .def_static("from_json", &parse_config, py::arg("text"))
      .def("to_json", [](const ExperimentConfig& c) { return config_to_json(c).dump(); })
      .def("resolve_seed", &resolve_seed, py::arg("seed") = std::nullopt)
      .def_readonly("stack", &ExperimentConfig::stack)
      .def_readonly("voltages_v", &ExperimentConfig::voltages_v)
      .def_readonly("seed", &ExperimentConfig::seed)
      .def_property_readonly("emitter_ids", [](const ExperimentConfig& c) {
        std::vector<std::string> ids;
        for (const auto& e : c.emitters)
          ids.push_back(e.id);
        return ids;
      });

  m.def("run_simulate", &cmd_simulate, py::arg("config"), py::arg("out"), Release());
  m.def(
      "run_synth",
      [](const ExperimentConfig& cfg, const fs::path& out, std::optional<std::uint64_t> seed) {
        cmd_synth(cfg, out, resolve_seed(cfg, seed));
      },
      py::arg("config"), py::arg("out"), py::arg("seed") = std::nullopt, Release());
  m.def(
      "run_invert",
      [](const ExperimentConfig& cfg, const fs::path& data, const fs::path& out,
         std::optional<std::uint64_t> seed) {
        return report_to_json(cmd_invert(cfg, data, out, resolve_seed(cfg, seed))).dump();
      },
      py::arg("config"), py::arg("data"), py::arg("out"), py::arg("seed") = std::nullopt, Release());
  m.def("run_odmr", &cmd_odmr, py::arg("config"), py::arg("out"), Release());
  m.def(
      "run_sensitivity",
      [](const ExperimentConfig& cfg, const std::optional<fs::path>& data, const fs::path& out,
         std::optional<std::uint64_t> seed) { return cmd_sensitivity(cfg, data, out, resolve_seed(cfg, seed)); },
      py::arg("config"), py::arg("data"), py::arg("out"), py::arg("seed") = std::nullopt, Release());
}

} // namespace

PYBIND11_MODULE(_vsi, m) {
  m.doc() = "Electrostatics, spin-sensor forward models and inversion for silicon-vacancy field sensing";
  bind_errors(m);
  bind_device(m);
  bind_sensor(m);
  bind_inversion(m);
  bind_workbench(m);
}
