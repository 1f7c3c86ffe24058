#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "vsi/errors.hpp"
#include "vsi/parallel.hpp"
#include "vsi/units.hpp"
#include "vsi/workbench.hpp"

namespace vsi::workbench {

namespace {

enum Stream : std::uint64_t { kPleStream = 1, kOdmrStream = 2, kCvStream = 3, kSeriesStream = 4 };

std::mt19937_64 stream_rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
  return std::mt19937_64(derive_seed(derive_seed(seed, stream), index));
}

double poisson(std::mt19937_64& rng, double mean) {
  if (mean <= 0.0)
    return 0.0;
  std::poisson_distribution<long long> pd(mean);
  return static_cast<double>(pd(rng));
}

// Reverse voltage at which the depletion edge reaches x.
double onset_voltage(const device::DeviceStack& stack, double x_um) {
  const double n_d = units::per_cm3_to_per_m3(stack.intrinsic().concentration_cm3);
  const double x = units::um_to_m(x_um);
  return units::kElementaryCharge * n_d * x * x / (2.0 * stack.material().permittivity()) -
         device::builtin_voltage(stack);
}

double median(std::vector<double> v) {
  if (v.empty())
    return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> odmr_grid(const OdmrConfig& o) {
  std::vector<double> f;
  const auto n = static_cast<std::size_t>(std::floor((o.f_max_mhz - o.f_min_mhz) / o.step_mhz + 1e-9)) + 1;
  for (std::size_t i = 0; i < n; ++i)
    f.push_back(o.f_min_mhz + static_cast<double>(i) * o.step_mhz);
  return f;
}

} // namespace

std::vector<double> odmr_frequencies(const OdmrConfig& o) { return odmr_grid(o); }

double capacitance_forward_model(const device::DeviceStack& stack, double voltage_v, double area_cm2) {
  const double v_bi = device::builtin_voltage(stack);
  const double x_n = device::depletion_width(-voltage_v, stack.intrinsic().concentration_cm3, v_bi, stack.material());
  const double w = std::min(x_n, stack.intrinsic().thickness_um);
  return stack.material().permittivity() * area_cm2 * units::kM2PerCm2 / units::um_to_m(w);
}

// ------------------------------------------------------------------ synth ---

Dataset synthesize(const ExperimentConfig& cfg, std::uint64_t seed) {
  Dataset data;
  const auto& stack = cfg.stack;
  const double v_bi = device::builtin_voltage(stack);
  const bool noisy = cfg.noise.enabled;

  json truth;
  truth["seed"] = seed;
  truth["n_d_cm3"] = stack.intrinsic().concentration_cm3;
  truth["v_bi_v"] = v_bi;
  truth["voltages_v"] = cfg.voltages_v;
  truth["noise_enabled"] = noisy;
  truth["emitters"] = json::array();

  std::uint64_t scan_index = 0;
  for (const auto& em : cfg.emitters) {
    json et;
    et["id"] = em.id;
    et["x_um"] = em.x_um;
    et["stark"] = {{"d_ghz_per_mv_per_m", em.stark.d},
                   {"alpha_ghz_per_mv2_per_m2", em.stark.alpha},
                   {"f0_ghz", em.stark.f0}};
    et["onset_v"] = onset_voltage(stack, em.x_um);
    std::vector<double> fields, shifts, widths;
    for (double v : cfg.voltages_v) {
      const auto field = device::field_profile(stack, {v}, cfg.grid_points);
      const double e_local = field.local_at(em.x_um);
      const double x[] = {em.x_um};
      const double n_e = device::carrier_profile(stack, {v}, x)[0];
      sensor::PleModel model;
      model.a1_center_ghz = sensor::stark_shift(e_local, em.stark);
      model.a1_a2_detuning_ghz = cfg.ple.a1_a2_detuning_ghz;
      model.fwhm_mhz = sensor::linewidth_response(n_e, cfg.linewidth);
      model.amplitude = cfg.ple.amplitude_counts_per_s;
      model.background = cfg.ple.background_counts_per_s;

      const double step = cfg.ple.center_step_ghz;
      const double window_center = step > 0.0 ? std::round(model.a1_center_ghz / step) * step : model.a1_center_ghz;
      PleScan scan;
      scan.emitter = em.id;
      scan.voltage_v = v;
      for (int i = 0; i < cfg.ple.points; ++i)
        scan.frequency_ghz.push_back(window_center - cfg.ple.half_width_ghz +
                                     2.0 * cfg.ple.half_width_ghz * i / (cfg.ple.points - 1));
      const auto rate = sensor::ple_spectrum(model, scan.frequency_ghz);
      auto rng = stream_rng(seed, kPleStream, scan_index++);
      for (double r : rate)
        scan.counts.push_back(noisy ? poisson(rng, r * cfg.ple.dwell_s) : r * cfg.ple.dwell_s);
      data.ple.push_back(std::move(scan));

      fields.push_back(e_local);
      shifts.push_back(model.a1_center_ghz);
      widths.push_back(model.fwhm_mhz);
    }
    et["e_local_mv_per_m"] = fields;
    et["delta_f_ghz"] = shifts;
    et["fwhm_mhz"] = widths;
    truth["emitters"].push_back(et);
  }

  if (!cfg.odmr.emitter.empty()) {
    const auto& em = cfg.emitter(cfg.odmr.emitter);
    const auto freqs = odmr_grid(cfg.odmr);
    const sensor::OdmrDrive drive{cfg.odmr.rabi_mhz, cfg.odmr.duration_us};
    for (std::size_t k = 0; k < cfg.voltages_v.size(); ++k) {
      const double v = cfg.voltages_v[k];
      const double e_z = units::mv_per_m_to_v_per_m(device::field_profile(stack, {v}, cfg.grid_points).local_at(em.x_um));
      const auto spec = sensor::odmr_spectrum(e_z, cfg.spin, drive, freqs);
      OdmrScan scan{em.id, v, freqs, spec.transfer_population};
      if (noisy && cfg.noise.odmr_shots > 0) {
        auto rng = stream_rng(seed, kOdmrStream, k);
        for (double& p : scan.population) {
          std::binomial_distribution<long> bd(cfg.noise.odmr_shots, std::clamp(p, 0.0, 1.0));
          p = static_cast<double>(bd(rng)) / static_cast<double>(cfg.noise.odmr_shots);
        }
      }
      data.odmr.push_back(std::move(scan));
    }
  }

  {
    inversion::CvCurve cv;
    cv.contact_area_cm2 = cfg.cv.area_cm2;
    auto rng = stream_rng(seed, kCvStream, 0);
    std::normal_distribution<double> jitter(0.0, 1.0);
    for (int i = 0; i < cfg.cv.points; ++i) {
      const double v = cfg.cv.v_min_v + (cfg.cv.v_max_v - cfg.cv.v_min_v) * i / (cfg.cv.points - 1);
      double c = capacitance_forward_model(stack, v, cfg.cv.area_cm2);
      if (noisy && cfg.noise.cv_relative_noise > 0.0)
        c *= 1.0 + cfg.noise.cv_relative_noise * jitter(rng);
      cv.samples.push_back({v, c});
    }
    data.cv = std::move(cv);
    truth["cv"] = {{"n_d_cm3", stack.intrinsic().concentration_cm3}, {"area_cm2", cfg.cv.area_cm2}};
  }

  {
    inversion::CountTimeSeries ts;
    ts.sample_rate_hz = cfg.sens.sample_rate_hz;
    ts.duration_s = cfg.sens.duration_s;
    const auto n = static_cast<std::size_t>(std::llround(ts.sample_rate_hz * ts.duration_s));
    const double mean = cfg.sens.count_rate_per_s / ts.sample_rate_hz;
    auto rng = stream_rng(seed, kSeriesStream, 0);
    ts.counts.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      ts.counts.push_back(noisy ? poisson(rng, mean) : mean);
    data.timeseries = std::move(ts);
    truth["sensitivity"] = {{"count_rate_per_s", cfg.sens.count_rate_per_s},
                            {"sample_rate_hz", cfg.sens.sample_rate_hz},
                            {"duration_s", cfg.sens.duration_s},
                            {"gradient_counts_per_s_per_ghz", cfg.sens.gradient_counts_per_s_per_ghz}};
  }

  data.truth = std::move(truth);
  return data;
}

// ----------------------------------------------------------------- invert ---

namespace {

EmitterReport analyse_emitter(const ExperimentConfig& cfg, const EmitterConfig& em, std::vector<const PleScan*> scans,
                              std::uint64_t seed) {
  EmitterReport rep;
  rep.id = em.id;
  rep.x_um = em.x_um;
  rep.sigma_x_um = em.sigma_x_um;
  std::sort(scans.begin(), scans.end(), [](auto a, auto b) { return a->voltage_v < b->voltage_v; });

  std::vector<inversion::VoltageShift> shifts;
  std::vector<double> sigmas;
  for (const PleScan* s : scans) {
    VoltageRow row;
    row.voltage_v = s->voltage_v;
    try {
      const auto fit = inversion::fit_lorentzian(s->frequency_ghz, s->counts);
      row.delta_f_ghz = fit.value("center");
      row.sigma_delta_f_ghz = fit.sigma_of("center");
      row.fwhm_mhz = fit.value("fwhm") * units::kMHzPerGHz;
      shifts.push_back({row.voltage_v, row.delta_f_ghz});
      sigmas.push_back(row.sigma_delta_f_ghz);
    } catch (const FitFailedError&) {
      row.fit_failed = true;
      row.flagged = true;
    } catch (const DegenerateDataError&) {
      row.fit_failed = true;
      row.flagged = true;
    }
    rep.rows.push_back(row);
  }

  inversion::ThresholdOptions opts = cfg.threshold;
  opts.seed = seed;
  try {
    const auto est = inversion::detect_threshold(shifts, median(sigmas), opts);
    rep.threshold = est;
    rep.threshold_status = est.onset_before_scan ? "no_onset" : "onset";
  } catch (const NoOnsetError&) {
    rep.threshold_status = "no_onset";
  } catch (const DegenerateDataError&) {
    rep.threshold_status = "insufficient_data";
  }
  return rep;
}

void fit_fields(const ExperimentConfig& cfg, const device::DeviceStack& model_stack, EmitterReport& rep) {
  std::vector<inversion::StarkPoint> points;
  for (auto& row : rep.rows) {
    row.predicted_e_local = device::field_profile(model_stack, {row.voltage_v}, cfg.grid_points).local_at(rep.x_um);
    if (!row.fit_failed)
      points.push_back({row.predicted_e_local, row.delta_f_ghz});
  }
  try {
    rep.stark_fit = inversion::fit_stark(points);
  } catch (const DegenerateDataError&) {
    return;
  }
  const auto params = inversion::to_stark_params(*rep.stark_fit);
  for (auto& row : rep.rows) {
    if (row.fit_failed)
      continue;
    try {
      const auto r = inversion::reconstruct_field(row.delta_f_ghz, params);
      row.reconstructed_e_local = r.e_local;
      row.flagged = r.flagged;
    } catch (const OutOfRangeError&) {
      row.flagged = true;
    }
  }
}

json truth_block(const ExperimentConfig& cfg, const PipelineReport& rep, const json& truth) {
  json out;
  const double n_true = truth.at("n_d_cm3").get<double>();
  out["n_d_cm3"] = n_true;
  if (rep.doping)
    out["n_d_in_interval"] = rep.doping->low <= n_true && n_true <= rep.doping->high;
  if (rep.cv && rep.cv->valid_points > 0)
    out["cv_n_d_relative_error"] = (rep.cv->median_n_d_cm3 - n_true) / n_true;
  out["emitters"] = json::array();
  for (const auto& er : rep.emitters) {
    const json* et = nullptr;
    for (const auto& e : truth.at("emitters"))
      if (e.at("id") == er.id)
        et = &e;
    if (!et)
      continue;
    json block;
    block["id"] = er.id;
    block["onset_v"] = et->at("onset_v");
    if (er.threshold && er.threshold_status == "onset") {
      const double onset = et->at("onset_v").get<double>();
      block["threshold_error_v"] = er.threshold->v_threshold - onset;
    }
    if (er.stark_fit) {
      const double d_true = et->at("stark").at("d_ghz_per_mv_per_m").get<double>();
      block["d_error"] = er.stark_fit->value("d") - d_true;
      block["d_sigma"] = er.stark_fit->sigma_of("d");
    }
    const auto& fields = et->at("e_local_mv_per_m");
    const auto& volts = truth.at("voltages_v");
    double sq = 0.0;
    std::size_t n = 0;
    for (const auto& row : er.rows) {
      if (row.flagged || row.fit_failed)
        continue;
      for (std::size_t k = 0; k < volts.size(); ++k)
        if (volts[k].get<double>() == row.voltage_v) {
          const double diff = row.reconstructed_e_local - fields[k].get<double>();
          sq += diff * diff;
          ++n;
        }
    }
    if (n)
      block["field_rms_error_mv_per_m"] = std::sqrt(sq / static_cast<double>(n));
    out["emitters"].push_back(block);
  }
  (void)cfg;
  return out;
}

} // namespace

PipelineReport invert(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed) {
  if (data.ple.empty())
    throw IngestionError("no PLE scans to invert");
  PipelineReport rep;
  rep.seed = seed;
  rep.v_bi = device::builtin_voltage(cfg.stack);

  std::map<std::string, std::vector<const PleScan*>> by_emitter;
  for (const auto& s : data.ple)
    by_emitter[s.emitter].push_back(&s);
  for (const auto& [id, scans] : by_emitter) {
    bool known = false;
    for (const auto& e : cfg.emitters)
      known = known || e.id == id;
    if (!known)
      throw IngestionError("PLE scans reference emitter '" + id + "' that the config does not define");
  }

  for (const auto& em : cfg.emitters) {
    auto it = by_emitter.find(em.id);
    if (it == by_emitter.end())
      continue;
    rep.emitters.push_back(analyse_emitter(cfg, em, it->second, seed));
  }

  // doping from the first emitter whose onset lies inside the scan
  for (const auto& er : rep.emitters) {
    if (cfg.doping_emitter && er.id != *cfg.doping_emitter)
      continue;
    if (er.threshold_status != "onset")
      continue;
    try {
      rep.doping = inversion::doping_uncertainty(er.threshold->v_threshold, er.threshold->sigma_v, er.x_um,
                                                 er.sigma_x_um, rep.v_bi, cfg.stack.material());
      rep.doping_emitter = er.id;
      break;
    } catch (const DomainError&) {
    }
  }

  device::DeviceStack model_stack = cfg.stack;
  rep.field_model_provenance = "configured";
  if (rep.doping) {
    model_stack = cfg.stack.with_intrinsic_doping(rep.doping->mid);
    rep.field_model_provenance = "fitted";
  }
  rep.field_model_n_d_cm3 = model_stack.intrinsic().concentration_cm3;
  for (auto& er : rep.emitters)
    fit_fields(cfg, model_stack, er);

  if (data.cv) {
    CvSummary cv;
    inversion::CvOptions opts;
    opts.window = cfg.cv.window;
    opts.degree = cfg.cv.degree;
    cv.profile = inversion::cv_doping(*data.cv, cfg.stack.material(), opts);
    std::vector<double> good;
    for (const auto& p : cv.profile)
      if (!p.flagged)
        good.push_back(p.n_d_cm3);
    cv.valid_points = good.size();
    cv.median_n_d_cm3 = median(good);
    rep.cv = std::move(cv);
  }

  if (data.timeseries && !cfg.sens.emitter.empty()) {
    rep.sensitivity_d = cfg.emitter(cfg.sens.emitter).stark.d;
    for (const auto& er : rep.emitters)
      if (er.id == cfg.sens.emitter && er.stark_fit)
        rep.sensitivity_d = er.stark_fit->value("d");
    rep.sensitivity = inversion::sensitivity(*data.timeseries, cfg.sens.gradient_counts_per_s_per_ghz, rep.sensitivity_d);
  }

  if (data.truth)
    rep.truth_comparison = truth_block(cfg, rep, *data.truth);
  return rep;
}

// ----------------------------------------------------------------- report ---

namespace {

json quantity(double value, const char* unit, const char* provenance) {
  return {{"value", value}, {"unit", unit}, {"provenance", provenance}};
}

json fit_to_json(const inversion::FitResult& fit) {
  json j;
  for (std::size_t i = 0; i < fit.names.size(); ++i)
    j["parameters"][fit.names[i]] = {{"value", fit.values[i]}, {"sigma", fit.sigma[i]}};
  json cov = json::array();
  for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < fit.covariance.cols(); ++c)
      row.push_back(fit.covariance(r, c));
    cov.push_back(row);
  }
  j["covariance"] = cov;
  j["residual_sse"] = fit.residual_sse;
  if (fit.seed)
    j["seed"] = *fit.seed;
  return j;
}

} // namespace

json report_to_json(const PipelineReport& rep) {
  json j;
  j["seed"] = rep.seed;
  j["v_bi"] = quantity(rep.v_bi, "V", "simulated");
  j["field_model_n_d"] = quantity(rep.field_model_n_d_cm3, "cm^-3", rep.field_model_provenance.c_str());
  j["emitters"] = json::array();
  for (const auto& er : rep.emitters) {
    json e;
    e["id"] = er.id;
    e["x"] = quantity(er.x_um, "um", "configured");
    e["sigma_x"] = quantity(er.sigma_x_um, "um", "configured");
    e["threshold_status"] = er.threshold_status;
    if (er.threshold && er.threshold_status == "onset") {
      const auto& t = *er.threshold;
      e["threshold"] = {{"v_threshold", quantity(t.v_threshold, "V", "fitted")},
                        {"sigma_v", quantity(t.sigma_v, "V", "fitted")},
                        {"flat_level", quantity(t.flat_level, "GHz", "fitted")},
                        {"slope", quantity(t.slope, "GHz/V", "fitted")},
                        {"grid_step_v", t.grid_step},
                        {"bootstrap_resamples", t.resamples},
                        {"seed", t.seed}};
    }
    if (er.stark_fit) {
      e["stark_fit"] = fit_to_json(*er.stark_fit);
      e["stark_fit"]["units"] = {{"d", "GHz/(MV/m)"}, {"alpha", "GHz/(MV/m)^2"}, {"f0", "GHz"}};
      e["stark_fit"]["abs_d"] = std::abs(er.stark_fit->value("d"));
      e["stark_fit"]["provenance"] = "fitted";
    }
    json rows = json::array();
    for (const auto& r : er.rows)
      rows.push_back({{"voltage_v", r.voltage_v},
                      {"delta_f_ghz", r.delta_f_ghz},
                      {"sigma_delta_f_ghz", r.sigma_delta_f_ghz},
                      {"fwhm_mhz", r.fwhm_mhz},
                      {"predicted_e_local_mv_per_m", r.predicted_e_local},
                      {"reconstructed_e_local_mv_per_m", r.reconstructed_e_local},
                      {"fit_failed", r.fit_failed},
                      {"flagged", r.flagged}});
    e["voltages"] = rows;
    e["voltages_provenance"] = {{"delta_f_ghz", "fitted"},
                                {"predicted_e_local_mv_per_m", "simulated"},
                                {"reconstructed_e_local_mv_per_m", "fitted"}};
    j["emitters"].push_back(e);
  }
  if (rep.doping) {
    j["doping"] = {{"emitter", rep.doping_emitter},
                   {"low", quantity(rep.doping->low, "cm^-3", "fitted")},
                   {"mid", quantity(rep.doping->mid, "cm^-3", "fitted")},
                   {"high", quantity(rep.doping->high, "cm^-3", "fitted")}};
  } else {
    j["doping"] = nullptr;
  }
  if (rep.cv) {
    j["cv"] = {{"median_n_d", quantity(rep.cv->median_n_d_cm3, "cm^-3", "fitted")},
               {"valid_points", rep.cv->valid_points},
               {"total_points", rep.cv->profile.size()}};
  }
  if (rep.sensitivity) {
    j["sensitivity"] = {{"eta", quantity(rep.sensitivity->eta, "kV/m/sqrt(Hz)", "fitted")},
                        {"uncertainty", quantity(rep.sensitivity->uncertainty, "kV/m/sqrt(Hz)", "fitted")},
                        {"bins", rep.sensitivity->per_bin_std.size()},
                        {"abs_d", quantity(std::abs(rep.sensitivity_d), "GHz/(MV/m)", "fitted")}};
  }
  if (rep.truth_comparison)
    j["truth_comparison"] = *rep.truth_comparison;
  return j;
}

} // namespace vsi::workbench
