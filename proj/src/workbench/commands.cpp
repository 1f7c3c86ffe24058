#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vsi/errors.hpp"
#include "vsi/units.hpp"
#include "vsi/workbench.hpp"

namespace vsi::workbench {

namespace {

std::string indexed(const char* stem, std::size_t k, const std::string& tag = "") {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%s%03zu.csv", stem, tag.empty() ? "" : (tag + "_").c_str(), k);
  return buf;
}

void write_json(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw IngestionError(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
}

bool warn_if_no_voltages(const ExperimentConfig& cfg, const char* cmd) {
  if (!cfg.voltages_v.empty())
    return false;
  std::cerr << "warning: " << cmd << ": voltages_v is empty, nothing to do\n";
  return true;
}

json plot(const std::string& file, const std::string& x, const std::vector<std::string>& y, const std::string& title) {
  return {{"file", file}, {"x", x}, {"y", y}, {"title", title}};
}

} // namespace

// ----------------------------------------------------------- dataset files ---

void write_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::vector<std::string>> index;
  for (std::size_t k = 0; k < data.ple.size(); ++k) {
    const auto& s = data.ple[k];
    const std::string file = "ple/" + indexed("ple_", k, s.emitter);
    write_csv(dir / file, {"frequency_ghz", "counts"}, {s.frequency_ghz, s.counts});
    index.push_back({s.emitter, format_number(s.voltage_v), file});
  }
  write_csv(dir / "ple_index.csv", {"emitter_id", "voltage_v", "file"}, index);

  if (!data.odmr.empty()) {
    std::vector<std::vector<std::string>> oindex;
    for (std::size_t k = 0; k < data.odmr.size(); ++k) {
      const auto& s = data.odmr[k];
      const std::string file = "odmr/" + indexed("odmr_", k, s.emitter);
      write_csv(dir / file, {"frequency_mhz", "population"}, {s.frequency_mhz, s.population});
      oindex.push_back({s.emitter, format_number(s.voltage_v), file});
    }
    write_csv(dir / "odmr_index.csv", {"emitter_id", "voltage_v", "file"}, oindex);
  }
  if (data.cv) {
    std::vector<double> v, c;
    for (const auto& s : data.cv->samples) {
      v.push_back(s.voltage);
      c.push_back(s.capacitance);
    }
    write_csv(dir / "cv_curve.csv", {"voltage_v", "capacitance_f"}, {v, c});
  }
  if (data.timeseries) {
    std::vector<double> t;
    for (std::size_t i = 0; i < data.timeseries->counts.size(); ++i)
      t.push_back(static_cast<double>(i) / data.timeseries->sample_rate_hz);
    write_csv(dir / "timeseries.csv", {"t_s", "counts"}, {t, data.timeseries->counts});
  }
  if (data.truth)
    write_json(dir / "truth.json", *data.truth);
}

namespace {

std::vector<double> counts_column(const CsvTable& t) {
  if (t.has("counts"))
    return t.numbers("counts");
  if (t.has("counts_per_s"))
    return t.numbers("counts_per_s");
  throw IngestionError(t.source.string() + ": missing column 'counts'");
}

fs::path resolve(const fs::path& dir, const std::string& file, const CsvTable& index, std::size_t row) {
  if (file.empty())
    throw IngestionError(index.source.string() + ": column 'file' row " + std::to_string(row + 1) + ": empty");
  const fs::path p = fs::path(file).is_absolute() ? fs::path(file) : dir / file;
  if (!fs::exists(p))
    throw IngestionError(index.source.string() + ": column 'file' row " + std::to_string(row + 1) +
                         ": no such file " + p.string());
  return p;
}

} // namespace

Dataset read_dataset(const fs::path& dir, double cv_area_cm2, double sample_rate_hz) {
  Dataset data;
  const auto index = read_csv(dir / "ple_index.csv");
  const auto ids = index.strings("emitter_id");
  const auto volts = index.numbers("voltage_v");
  const auto files = index.strings("file");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto t = read_csv(resolve(dir, files[i], index, i));
    PleScan s;
    s.emitter = ids[i];
    s.voltage_v = volts[i];
    s.frequency_ghz = t.numbers("frequency_ghz");
    s.counts = counts_column(t);
    data.ple.push_back(std::move(s));
  }

  if (fs::exists(dir / "odmr_index.csv")) {
    const auto oi = read_csv(dir / "odmr_index.csv");
    const auto oids = oi.strings("emitter_id");
    const auto ov = oi.numbers("voltage_v");
    const auto of = oi.strings("file");
    for (std::size_t i = 0; i < oids.size(); ++i) {
      const auto t = read_csv(resolve(dir, of[i], oi, i));
      data.odmr.push_back({oids[i], ov[i], t.numbers("frequency_mhz"), t.numbers("population")});
    }
  }

  if (fs::exists(dir / "cv_curve.csv")) {
    const auto t = read_csv(dir / "cv_curve.csv");
    const auto v = t.numbers("voltage_v");
    const auto c = t.numbers("capacitance_f");
    inversion::CvCurve cv;
    cv.contact_area_cm2 = cv_area_cm2;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(c[i] > 0.0))
        throw IngestionError(t.source.string() + ": column 'capacitance_f' row " + std::to_string(i + 1) +
                             ": must be > 0");
      cv.samples.push_back({v[i], c[i]});
    }
    data.cv = std::move(cv);
  }

  if (fs::exists(dir / "timeseries.csv")) {
    const auto t = read_csv(dir / "timeseries.csv");
    const auto ts = t.numbers("t_s");
    inversion::CountTimeSeries series;
    series.counts = t.numbers("counts");
    series.sample_rate_hz = sample_rate_hz;
    if (ts.size() >= 2) {
      const double dt = ts[1] - ts[0];
      if (!(dt > 0.0))
        throw IngestionError(t.source.string() + ": column 't_s' row 2: times must increase");
      series.sample_rate_hz = 1.0 / dt;
      // keep the configured rate when the file agrees with it to rounding
      if (std::abs(series.sample_rate_hz - sample_rate_hz) <= 1e-9 * sample_rate_hz)
        series.sample_rate_hz = sample_rate_hz;
    }
    series.duration_s = static_cast<double>(series.counts.size()) / series.sample_rate_hz;
    data.timeseries = std::move(series);
  }

  if (fs::exists(dir / "truth.json"))
    data.truth = read_json(dir / "truth.json");
  return data;
}

// ---------------------------------------------------------------- commands ---

void cmd_simulate(const ExperimentConfig& cfg, const fs::path& out) {
  if (warn_if_no_voltages(cfg, "simulate"))
    return;
  fs::create_directories(out);
  std::vector<std::vector<std::string>> summary;
  json plots = json::array();
  for (std::size_t k = 0; k < cfg.voltages_v.size(); ++k) {
    const double v = cfg.voltages_v[k];
    const auto field = device::field_profile(cfg.stack, {v}, cfg.grid_points);
    const auto bands = device::band_diagram(cfg.stack, {v}, cfg.grid_points);
    const auto carriers = device::carrier_profile(cfg.stack, {v}, cfg.grid_points);
    const std::string ff = indexed("field_", k), bf = indexed("band_", k), cf = indexed("carrier_", k);
    write_csv(out / ff, {"position_um", "e_macro_mv_per_m", "e_local_mv_per_m"},
              {field.positions, field.e_macro, field.e_local});
    write_csv(out / bf, {"position_um", "valence_ev", "conduction_ev"},
              {bands.positions, bands.valence_edge, bands.conduction_edge});
    write_csv(out / cf, {"position_um", "electrons_cm3"}, {carriers.positions, carriers.electrons});
    summary.push_back({format_number(v), format_number(field.v_bi), format_number(field.depletion_edge),
                       field.punch_through ? "1" : "0", ff, bf, cf});
    plots.push_back(plot(ff, "position_um", {"e_macro_mv_per_m", "e_local_mv_per_m"},
                         "Field at " + format_number(v) + " V"));
    plots.push_back(plot(bf, "position_um", {"valence_ev", "conduction_ev"}, "Bands at " + format_number(v) + " V"));
    plots.push_back(plot(cf, "position_um", {"electrons_cm3"}, "Electrons at " + format_number(v) + " V"));
  }
  write_csv(out / "simulate_summary.csv",
            {"voltage_v", "v_bi_v", "x_n_um", "punch_through", "field_file", "band_file", "carrier_file"}, summary);
  write_json(out / "plots.json", {{"plots", plots}});
}

void cmd_synth(const ExperimentConfig& cfg, const fs::path& out, std::uint64_t seed) {
  if (warn_if_no_voltages(cfg, "synth"))
    return;
  if (cfg.emitters.empty())
    throw ConfigError("emitters", "synth needs at least one emitter");
  write_dataset(synthesize(cfg, seed), out);
}

PipelineReport cmd_invert(const ExperimentConfig& cfg, const fs::path& data_dir, const fs::path& out,
                          std::uint64_t seed) {
  const Dataset data = read_dataset(data_dir, cfg.cv.area_cm2, cfg.sens.sample_rate_hz);
  const PipelineReport rep = invert(cfg, data, seed);
  fs::create_directories(out);
  json plots = json::array();
  for (const auto& er : rep.emitters) {
    std::vector<double> v, df, sdf, fw, pe, re, fl;
    for (const auto& r : er.rows) {
      if (r.fit_failed)
        continue; // listed in report.json
      v.push_back(r.voltage_v);
      df.push_back(r.delta_f_ghz);
      sdf.push_back(r.sigma_delta_f_ghz);
      fw.push_back(r.fwhm_mhz);
      pe.push_back(r.predicted_e_local);
      re.push_back(r.reconstructed_e_local);
      fl.push_back(r.flagged ? 1.0 : 0.0);
    }
    const std::string file = "stark_" + er.id + ".csv";
    write_csv(out / file,
              {"voltage_v", "delta_f_ghz", "sigma_delta_f_ghz", "fwhm_mhz", "e_local_mv_per_m",
               "e_local_reconstructed_mv_per_m", "flagged"},
              {v, df, sdf, fw, pe, re, fl});
    plots.push_back(plot(file, "voltage_v", {"delta_f_ghz"}, "Stark shift of " + er.id));
    plots.push_back(plot(file, "e_local_mv_per_m", {"delta_f_ghz"}, "Stark curve of " + er.id));
    plots.push_back(plot(file, "voltage_v", {"e_local_mv_per_m", "e_local_reconstructed_mv_per_m"},
                         "Predicted and reconstructed field at " + er.id));
  }
  if (rep.cv) {
    std::vector<double> v, n, f;
    for (const auto& p : rep.cv->profile) {
      v.push_back(p.voltage);
      n.push_back(p.n_d_cm3);
      f.push_back(p.flagged ? 1.0 : 0.0);
    }
    write_csv(out / "cv_doping.csv", {"voltage_v", "n_d_cm3", "flagged"}, {v, n, f});
    plots.push_back(plot("cv_doping.csv", "voltage_v", {"n_d_cm3"}, "CV doping profile"));
  }
  write_json(out / "report.json", report_to_json(rep));
  write_json(out / "plots.json", {{"plots", plots}});
  return rep;
}

void cmd_odmr(const ExperimentConfig& cfg, const fs::path& out) {
  if (warn_if_no_voltages(cfg, "odmr"))
    return;
  if (cfg.odmr.emitter.empty())
    throw ConfigError("odmr.emitter", "no emitter configured");
  const auto& em = cfg.emitter(cfg.odmr.emitter);
  const auto freqs = odmr_frequencies(cfg.odmr);
  const sensor::OdmrDrive drive{cfg.odmr.rabi_mhz, cfg.odmr.duration_us};
  fs::create_directories(out);
  std::vector<double> volts, fields, ez, transition, center, sigma;
  json plots = json::array();
  for (std::size_t k = 0; k < cfg.voltages_v.size(); ++k) {
    const double v = cfg.voltages_v[k];
    const double e_local = device::field_profile(cfg.stack, {v}, cfg.grid_points).local_at(em.x_um);
    const double e_z = units::mv_per_m_to_v_per_m(e_local);
    const auto spec = sensor::odmr_spectrum(e_z, cfg.spin, drive, freqs);
    const std::string file = indexed("odmr_", k);
    write_csv(out / file, {"frequency_mhz", "population"}, {spec.mw_frequencies, spec.transfer_population});
    const auto fit = inversion::fit_odmr_peak(spec);
    volts.push_back(v);
    fields.push_back(e_local);
    ez.push_back(e_z);
    transition.push_back(sensor::odmr_transition_mhz(e_z, cfg.spin));
    center.push_back(fit.value("center"));
    sigma.push_back(fit.sigma_of("center"));
    plots.push_back(plot(file, "frequency_mhz", {"population"}, "ODMR at " + format_number(v) + " V"));
  }
  write_csv(out / "odmr_summary.csv",
            {"voltage_v", "e_local_mv_per_m", "e_z_v_per_m", "transition_mhz", "peak_center_mhz",
             "sigma_center_mhz"},
            {volts, fields, ez, transition, center, sigma});
  plots.push_back(plot("odmr_summary.csv", "e_local_mv_per_m", {"peak_center_mhz"}, "ODMR peak vs field"));
  write_json(out / "plots.json", {{"plots", plots}});
}

inversion::SensitivityResult cmd_sensitivity(const ExperimentConfig& cfg, const std::optional<fs::path>& data_dir,
                                             const fs::path& out, std::uint64_t seed) {
  if (cfg.sens.emitter.empty())
    throw ConfigError("sensitivity.emitter", "no emitter configured");
  inversion::CountTimeSeries series;
  std::string source;
  if (data_dir) {
    auto data = read_dataset(*data_dir, cfg.cv.area_cm2, cfg.sens.sample_rate_hz);
    if (!data.timeseries)
      throw IngestionError((*data_dir / "timeseries.csv").string() + ": missing");
    series = std::move(*data.timeseries);
    source = (*data_dir / "timeseries.csv").string();
  } else {
    series = *synthesize(cfg, seed).timeseries;
    source = "synthesized";
  }
  const double d = cfg.emitter(cfg.sens.emitter).stark.d;
  const auto res = inversion::sensitivity(series, cfg.sens.gradient_counts_per_s_per_ghz, d);
  fs::create_directories(out);
  json j;
  j["seed"] = seed;
  j["source"] = source;
  j["eta"] = {{"value", res.eta}, {"unit", "kV/m/sqrt(Hz)"}, {"provenance", "fitted"}};
  j["uncertainty"] = {{"value", res.uncertainty}, {"unit", "kV/m/sqrt(Hz)"}, {"provenance", "fitted"}};
  j["abs_d"] = {{"value", std::abs(d)}, {"unit", "GHz/(MV/m)"}, {"provenance", "configured"}};
  j["gradient"] = {{"value", cfg.sens.gradient_counts_per_s_per_ghz}, {"unit", "(counts/s)/GHz"},
                   {"provenance", "configured"}};
  j["per_bin_std"] = res.per_bin_std;
  write_text_atomic(out / "sensitivity.json", j.dump(2) + "\n");
  return res;
}

} // namespace vsi::workbench
