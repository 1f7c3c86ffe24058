#pragma once

// Configuration, dataset I/O and the end-to-end pipeline:
// device -> sensor -> noise -> inversion -> report.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vsi/device.hpp"
#include "vsi/inversion.hpp"
#include "vsi/sensor.hpp"

namespace vsi::workbench {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct EmitterConfig {
  std::string id;
  double x_um = 0.0;
  double sigma_x_um = 0.25;
  sensor::StarkParams stark;
};

struct PleScanConfig {
  double amplitude_counts_per_s = 4000.0;
  double background_counts_per_s = 200.0;
  double a1_a2_detuning_ghz = 1.0;
  double half_width_ghz = 0.5;
  int points = 401;
  double dwell_s = 0.1;
  double center_step_ghz = 0.1; // scan windows are centred on this grid
};

struct NoiseConfig {
  bool enabled = true;          // Poisson counts, CV jitter, ODMR shots
  long odmr_shots = 0;          // 0 keeps ODMR populations noiseless
  double cv_relative_noise = 1e-5;
};

struct OdmrConfig {
  std::string emitter;
  double rabi_mhz = 2.0;
  double duration_us = 0.14433756729740643; // pi pulse for sqrt(3) * 2 MHz
  double f_min_mhz = 60.0;
  double f_max_mhz = 80.0;
  double step_mhz = 0.05;
};

struct CvConfig {
  double area_cm2 = 9e-4;
  double v_min_v = -10.0;       // forward-positive voltage
  double v_max_v = 0.0;
  int points = 41;
  int window = 5;
  int degree = 2;
};

struct SensitivityConfig {
  std::string emitter;
  double count_rate_per_s = 1e4;
  double sample_rate_hz = 100.0;
  double duration_s = 100.0;
  double gradient_counts_per_s_per_ghz = 1.2e4;
};

struct ExperimentConfig {
  device::DeviceStack stack = device::DeviceStack::reference_pin_diode();
  int grid_points = device::kDefaultGridPoints;
  sensor::SpinModel spin;
  sensor::LinewidthModel linewidth;
  PleScanConfig ple;
  std::vector<EmitterConfig> emitters;
  std::vector<double> voltages_v;
  double bias_min_v = -5.0;
  double bias_max_v = 40.0;
  NoiseConfig noise;
  OdmrConfig odmr;
  CvConfig cv;
  SensitivityConfig sens;
  inversion::ThresholdOptions threshold;
  std::optional<std::string> doping_emitter;
  std::uint64_t seed = inversion::kDefaultSeed;

  const EmitterConfig& emitter(const std::string& id) const;
};

/// Parses and validates a JSON config. Errors are ConfigError naming the key
/// (or line and column for syntax errors).
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const fs::path& path);
json config_to_json(const ExperimentConfig& cfg);

/// Seed precedence: explicit override, then VSI_SEED, then the config value.
std::uint64_t resolve_seed(const ExperimentConfig& cfg, std::optional<std::uint64_t> cli_seed);

// ---------------------------------------------------------------- datasets ---

struct PleScan {
  std::string emitter;
  double voltage_v = 0.0;
  std::vector<double> frequency_ghz;
  std::vector<double> counts;
};

struct OdmrScan {
  std::string emitter;
  double voltage_v = 0.0;
  std::vector<double> frequency_mhz;
  std::vector<double> population;
};

struct Dataset {
  std::vector<PleScan> ple;
  std::vector<OdmrScan> odmr;
  std::optional<inversion::CvCurve> cv;
  std::optional<inversion::CountTimeSeries> timeseries;
  std::optional<json> truth;
};

std::vector<double> odmr_frequencies(const OdmrConfig& odmr);
/// Depletion capacitance at a forward-positive voltage; clamps at punch-through.
double capacitance_forward_model(const device::DeviceStack& stack, double voltage_v, double area_cm2);

Dataset synthesize(const ExperimentConfig& cfg, std::uint64_t seed);
void write_dataset(const Dataset& data, const fs::path& dir);
/// Reads what write_dataset wrote; cv, timeseries and truth are optional.
Dataset read_dataset(const fs::path& dir, double cv_area_cm2, double sample_rate_hz);

// ------------------------------------------------------------------ report ---

struct VoltageRow {
  double voltage_v = 0.0;
  double delta_f_ghz = 0.0;
  double sigma_delta_f_ghz = 0.0;
  double fwhm_mhz = 0.0;
  double predicted_e_local = 0.0;     // MV/m, device model at the extracted N_D
  double reconstructed_e_local = 0.0; // MV/m, from the fitted Stark curve
  bool fit_failed = false;
  bool flagged = false;
};

struct EmitterReport {
  std::string id;
  double x_um = 0.0;
  double sigma_x_um = 0.0;
  std::vector<VoltageRow> rows;
  std::string threshold_status; // onset, no_onset, insufficient_data
  std::optional<inversion::ThresholdEstimate> threshold;
  std::optional<inversion::FitResult> stark_fit;
};

struct CvSummary {
  std::vector<inversion::CvDopingPoint> profile;
  double median_n_d_cm3 = 0.0;
  std::size_t valid_points = 0;
};

struct PipelineReport {
  std::uint64_t seed = 0;
  double v_bi = 0.0;
  std::vector<EmitterReport> emitters;
  std::optional<inversion::DopingInterval> doping;
  std::string doping_emitter;
  double field_model_n_d_cm3 = 0.0;
  std::string field_model_provenance; // fitted or configured
  std::optional<CvSummary> cv;
  std::optional<inversion::SensitivityResult> sensitivity;
  double sensitivity_d = 0.0;
  std::optional<json> truth_comparison;
};

PipelineReport invert(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed);
json report_to_json(const PipelineReport& report);

// ---------------------------------------------------------------- commands ---

void cmd_simulate(const ExperimentConfig& cfg, const fs::path& out);
void cmd_synth(const ExperimentConfig& cfg, const fs::path& out, std::uint64_t seed);
PipelineReport cmd_invert(const ExperimentConfig& cfg, const fs::path& data_dir, const fs::path& out,
                          std::uint64_t seed);
void cmd_odmr(const ExperimentConfig& cfg, const fs::path& out);
inversion::SensitivityResult cmd_sensitivity(const ExperimentConfig& cfg, const std::optional<fs::path>& data_dir,
                                             const fs::path& out, std::uint64_t seed);

// --------------------------------------------------------------------- csv ---

struct CsvTable {
  fs::path source;
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;

  bool has(const std::string& column) const;
  std::size_t index(const std::string& column) const;
  std::vector<double> numbers(const std::string& column) const;
  std::vector<std::string> strings(const std::string& column) const;
};

CsvTable read_csv(const fs::path& path);
void write_csv(const fs::path& path, const std::vector<std::string>& headers,
               const std::vector<std::vector<double>>& columns);
void write_csv(const fs::path& path, const std::vector<std::string>& headers,
               const std::vector<std::vector<std::string>>& rows);
void write_text_atomic(const fs::path& path, const std::string& text);
std::string format_number(double v);

} // namespace vsi::workbench
