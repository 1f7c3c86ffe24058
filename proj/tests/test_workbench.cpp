#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "vsi/errors.hpp"
#include "vsi/workbench.hpp"

using namespace vsi;
using namespace vsi::workbench;

namespace {

const fs::path kConfig = fs::path(VSI_CONFIG_DIR) / "reference_device.json";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("vsi_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

json bundled_json() { return json::parse(slurp(kConfig)); }

ExperimentConfig config_with(const std::function<void(json&)>& edit) {
  json j = bundled_json();
  edit(j);
  return parse_config(j.dump());
}

std::string config_error_key(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<no error>";
}

// Every regular file under dir, relative path -> contents.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file())
      files[fs::relative(entry.path(), dir).string()] = slurp(entry.path());
  return files;
}

} // namespace

// ------------------------------------------------------------------ config ---

TEST_CASE("bundled config loads") {
  const auto cfg = load_config(kConfig);
  CHECK(cfg.emitters.size() == 2);
  CHECK(cfg.emitter("V2").x_um == 2.71);
  CHECK(cfg.voltages_v.size() == 31);
  CHECK(cfg.stack.intrinsic().concentration_cm3 == 9e14);
  CHECK_FALSE(cfg.stack.builtin_voltage_override().has_value());
}

TEST_CASE("config round trip through JSON") {
  const auto cfg = load_config(kConfig);
  const json once = config_to_json(cfg);
  const json twice = config_to_json(parse_config(once.dump()));
  CHECK(once == twice);
}

TEST_CASE("config diagnostics name the key") {
  CHECK(config_error_key("{\"bogus\": 1}") == "bogus");
  json j = bundled_json();
  j["emitters"][1]["x_um"] = 5.0;
  CHECK(config_error_key(j.dump()) == "emitters[1].x_um");
  j = bundled_json();
  j["voltages_v"].push_back(55.0);
  CHECK(config_error_key(j.dump()) == "voltages_v[31]");
  j = bundled_json();
  j["material"]["eps_r"] = "high";
  CHECK(config_error_key(j.dump()) == "material.eps_r");
  j = bundled_json();
  j["device"]["layers"][0]["role"] = "emitter";
  CHECK(config_error_key(j.dump()) == "device.layers[0].role");
  j = bundled_json();
  j["sensor"]["ple"]["amplitude"] = 3;
  CHECK(config_error_key(j.dump()) == "sensor.ple.amplitude");
  j = bundled_json();
  j["odmr"]["emitter"] = "V9";
  CHECK(config_error_key(j.dump()) == "odmr.emitter");
}

TEST_CASE("config syntax errors report line and column") {
  try {
    parse_config("{\n  \"seed\": 1,\n  \"voltages_v\": [0, 1,, 2]\n}");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("seed precedence") {
  const auto cfg = load_config(kConfig);
  ::unsetenv("VSI_SEED");
  CHECK(resolve_seed(cfg, std::nullopt) == cfg.seed);
  ::setenv("VSI_SEED", "77", 1);
  CHECK(resolve_seed(cfg, std::nullopt) == 77);
  CHECK(resolve_seed(cfg, 5) == 5);
  ::setenv("VSI_SEED", "seven", 1);
  CHECK_THROWS_AS(resolve_seed(cfg, std::nullopt), ConfigError);
  ::unsetenv("VSI_SEED");
}

// --------------------------------------------------------------------- csv ---

TEST_CASE("csv numbers round trip exactly") {
  TempDir dir("csv");
  const std::vector<double> v = {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0};
  write_csv(dir.path / "a.csv", {"x_um"}, {v});
  CHECK(read_csv(dir.path / "a.csv").numbers("x_um") == v);
}

TEST_CASE("csv ingestion errors name column and row") {
  TempDir dir("csvbad");
  std::ofstream(dir.path / "b.csv") << "frequency_ghz,counts\n0.1,3\n0.2,abc\n";
  const auto t = read_csv(dir.path / "b.csv");
  try {
    t.numbers("counts");
    FAIL("expected IngestionError");
  } catch (const IngestionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("column 'counts'") != std::string::npos);
    CHECK(msg.find("row 2") != std::string::npos);
  }
  CHECK_THROWS_AS(t.numbers("voltage_v"), IngestionError);
  std::ofstream(dir.path / "c.csv") << "a,b\n1\n";
  CHECK_THROWS_AS(read_csv(dir.path / "c.csv"), IngestionError);
}

// ------------------------------------------------------------------- synth ---

TEST_CASE("synth is byte-identical for a fixed seed and independent of thread count") {
  const auto cfg = load_config(kConfig);
  TempDir a("synth_a"), b("synth_b");
  ::setenv("VSI_THREADS", "1", 1);
  cmd_synth(cfg, a.path, 42);
  cmd_invert(cfg, a.path, a.path, 42);
  ::setenv("VSI_THREADS", "3", 1);
  cmd_synth(cfg, b.path, 42);
  cmd_invert(cfg, b.path, b.path, 42);
  ::unsetenv("VSI_THREADS");
  const auto sa = snapshot(a.path), sb = snapshot(b.path);
  CHECK(sa.size() > 60);
  CHECK(sa == sb);

  TempDir c("synth_c");
  cmd_synth(cfg, c.path, 43);
  CHECK(slurp(a.path / "ple" / "ple_V2_031.csv") != slurp(c.path / "ple" / "ple_V2_031.csv"));
}

TEST_CASE("noise disabled reproduces the forward model exactly") {
  auto cfg = config_with([](json& j) { j["noise"]["enabled"] = false; });
  const auto data = synthesize(cfg, 1);
  const auto& truth = *data.truth;
  for (std::size_t k = 0; k < data.ple.size(); ++k) {
    const auto& scan = data.ple[k];
    const auto& em = cfg.emitter(scan.emitter);
    std::size_t vi = k % cfg.voltages_v.size();
    const json* et = nullptr;
    for (const auto& e : truth["emitters"])
      if (e["id"] == em.id)
        et = &e;
    REQUIRE(et);
    sensor::PleModel model;
    model.a1_center_ghz = (*et)["delta_f_ghz"][vi].get<double>();
    model.fwhm_mhz = (*et)["fwhm_mhz"][vi].get<double>();
    model.a1_a2_detuning_ghz = cfg.ple.a1_a2_detuning_ghz;
    model.amplitude = cfg.ple.amplitude_counts_per_s;
    model.background = cfg.ple.background_counts_per_s;
    const auto rate = sensor::ple_spectrum(model, scan.frequency_ghz);
    for (std::size_t i = 0; i < rate.size(); ++i)
      REQUIRE(scan.counts[i] == rate[i] * cfg.ple.dwell_s);
  }
  for (const auto& s : data.cv->samples)
    CHECK(s.capacitance == capacitance_forward_model(cfg.stack, s.voltage, cfg.cv.area_cm2));
  for (double c : data.timeseries->counts)
    CHECK(c == 100.0);
  const auto rep = invert(cfg, data, 1);
  CHECK(rep.sensitivity->eta == 0.0);
}

TEST_CASE("emitter at 2.71 um: flat below the onset, shifting above") {
  const auto data = synthesize(config_with([](json& j) { j["noise"]["enabled"] = false; }), 1);
  const auto& v2 = (*data.truth)["emitters"][1];
  REQUIRE(v2["id"] == "V2");
  const auto& df = v2["delta_f_ghz"];
  for (int v = 0; v <= 3; ++v)
    CHECK(df[v].get<double>() == -0.67);
  CHECK(df[4].get<double>() > -0.67 + 1.0);
  CHECK(df[30].get<double>() > df[10].get<double>());
  CHECK(std::abs(v2["onset_v"].get<double>() - 3.19) < 0.01);
}

TEST_CASE("dataset schema round trip") {
  const auto cfg = load_config(kConfig);
  const auto data = synthesize(cfg, 9);
  TempDir dir("schema");
  write_dataset(data, dir.path);
  const auto back = read_dataset(dir.path, cfg.cv.area_cm2, cfg.sens.sample_rate_hz);
  REQUIRE(back.ple.size() == data.ple.size());
  for (std::size_t i = 0; i < data.ple.size(); ++i) {
    CHECK(back.ple[i].emitter == data.ple[i].emitter);
    CHECK(back.ple[i].voltage_v == data.ple[i].voltage_v);
    CHECK(back.ple[i].frequency_ghz == data.ple[i].frequency_ghz);
    CHECK(back.ple[i].counts == data.ple[i].counts);
  }
  REQUIRE(back.odmr.size() == data.odmr.size());
  CHECK(back.odmr[7].population == data.odmr[7].population);
  REQUIRE(back.cv.has_value());
  for (std::size_t i = 0; i < data.cv->samples.size(); ++i) {
    CHECK(back.cv->samples[i].voltage == data.cv->samples[i].voltage);
    CHECK(back.cv->samples[i].capacitance == data.cv->samples[i].capacitance);
  }
  CHECK(back.timeseries->counts == data.timeseries->counts);
  CHECK(back.timeseries->sample_rate_hz == data.timeseries->sample_rate_hz);
  CHECK(*back.truth == *data.truth);

  // inverting the files gives the same report as inverting in memory
  CHECK(report_to_json(invert(cfg, back, 9)) == report_to_json(invert(cfg, data, 9)));
}

// ------------------------------------------------------------------ invert ---

TEST_CASE("full synthetic round trip at paper parameters") {
  const auto cfg = load_config(kConfig);
  const auto rep = invert(cfg, synthesize(cfg, cfg.seed), cfg.seed);
  REQUIRE(rep.doping.has_value());
  CHECK(rep.doping_emitter == "V2");
  CHECK(rep.doping->low <= 9e14);
  CHECK(rep.doping->high >= 9e14);
  REQUIRE(rep.emitters.size() == 2);
  CHECK(rep.emitters[0].threshold_status == "no_onset");
  CHECK(rep.emitters[1].threshold_status == "onset");
  CHECK(rep.field_model_provenance == "fitted");
  REQUIRE(rep.cv.has_value());
  CHECK(std::abs(rep.cv->median_n_d_cm3 - 9e14) / 9e14 < 0.01);
  REQUIRE(rep.sensitivity.has_value());
  CHECK(rep.sensitivity->eta > 10.0);
  CHECK(rep.sensitivity->eta < 20.0);
  REQUIRE(rep.truth_comparison.has_value());
  CHECK((*rep.truth_comparison)["n_d_in_interval"] == true);

  const json j = report_to_json(rep);
  CHECK(j["doping"]["mid"]["unit"] == "cm^-3");
  CHECK(j["doping"]["mid"]["provenance"] == "fitted");
  CHECK(j["emitters"][1]["threshold"]["seed"] == cfg.seed);
  CHECK(j["emitters"][1]["stark_fit"]["covariance"].size() == 3);
}

TEST_CASE("truth recovery over 20 seeded runs") {
  // ODMR spectra do not enter the inversion; skip them for speed
  const auto cfg = config_with([](json& j) { j["odmr"]["emitter"] = ""; });
  int contained = 0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto rep = invert(cfg, synthesize(cfg, 1000 + i), 1000 + i);
    contained += rep.doping && rep.doping->low <= 9e14 && 9e14 <= rep.doping->high;
  }
  CHECK(contained >= 18);
}

TEST_CASE("report omits truth block without a sidecar") {
  const auto cfg = load_config(kConfig);
  TempDir dir("notruth");
  cmd_synth(cfg, dir.path, 3);
  fs::remove(dir.path / "truth.json");
  const auto rep = cmd_invert(cfg, dir.path, dir.path, 3);
  CHECK_FALSE(rep.truth_comparison.has_value());
  CHECK_FALSE(json::parse(slurp(dir.path / "report.json")).contains("truth_comparison"));
  for (const char* f : {"stark_V1.csv", "stark_V2.csv", "cv_doping.csv", "plots.json"})
    CHECK(fs::exists(dir.path / f));
}

TEST_CASE("invert reports schema problems as ingestion errors") {
  const auto cfg = load_config(kConfig);
  TempDir dir("badschema");
  cmd_synth(cfg, dir.path, 3);
  std::ofstream(dir.path / "ple" / "ple_V1_002.csv") << "frequency_ghz,cnts\n0,1\n";
  try {
    cmd_invert(cfg, dir.path, dir.path, 3);
    FAIL("expected IngestionError");
  } catch (const IngestionError& e) {
    CHECK(std::string(e.what()).find("counts") != std::string::npos);
  }
  TempDir empty("emptydata");
  CHECK_THROWS_AS(cmd_invert(cfg, empty.path, empty.path, 3), IngestionError);
}

// --------------------------------------------------------------- simulate ---

TEST_CASE("simulate: depletion edge and punch-through per voltage") {
  const auto cfg = config_with([](json& j) {
    j["device"]["builtin_voltage_v"] = 2.95;
    j["voltages_v"] = {0, 10, 20, 30, -2.95};
  });
  TempDir dir("simulate");
  cmd_simulate(cfg, dir.path);
  const auto t = read_csv(dir.path / "simulate_summary.csv");
  const auto xn = t.numbers("x_n_um");
  const auto pt = t.numbers("punch_through");
  CHECK(xn[0] == doctest::Approx(1.870735907821384).epsilon(1e-12));
  CHECK(xn[1] == doctest::Approx(3.919551350870177).epsilon(1e-12));
  CHECK(pt == std::vector<double>{0, 0, 1, 1, 0});
  const auto flooded = read_csv(dir.path / "field_004.csv");
  for (double e : flooded.numbers("e_macro_mv_per_m"))
    CHECK(e == 0.0);
  const auto band = read_csv(dir.path / "band_001.csv");
  CHECK(band.headers == std::vector<std::string>{"position_um", "valence_ev", "conduction_ev"});
  CHECK(read_csv(dir.path / "carrier_000.csv").numbers("electrons_cm3").back() == 9e14);
}

TEST_CASE("simulate with no voltages writes nothing") {
  const auto cfg = config_with([](json& j) { j["voltages_v"] = json::array(); });
  TempDir dir("novolt");
  cmd_simulate(cfg, dir.path);
  cmd_odmr(cfg, dir.path);
  CHECK(fs::is_empty(dir.path));
}

// ------------------------------------------------------------------- odmr ---

TEST_CASE("odmr sweep at the 2.71 um emitter") {
  const auto cfg = config_with([](json& j) { j["voltages_v"] = {0, 2, 5, 10, 15, 20, 25, 30}; });
  TempDir dir("odmr");
  cmd_odmr(cfg, dir.path);
  const auto t = read_csv(dir.path / "odmr_summary.csv");
  const auto e = t.numbers("e_local_mv_per_m");
  const auto c = t.numbers("peak_center_mhz");
  CHECK(e[0] == 0.0);
  CHECK(std::abs(c[0] - 70.0) <= cfg.odmr.step_mhz / 2);
  CHECK(std::abs(c[1] - 70.0) <= cfg.odmr.step_mhz / 2);
  // peak centre linear in the local field
  const double slope = (c.back() - c[0]) / (e.back() - e[0]);
  for (std::size_t i = 0; i < e.size(); ++i)
    CHECK(std::abs(c[i] - (c[0] + slope * (e[i] - e[0]))) <= cfg.odmr.step_mhz / 2);
  CHECK(slope == doctest::Approx(2.0 * cfg.spin.dz_hz_per_v_per_m).epsilon(0.02));
}

// ------------------------------------------------------------- sensitivity ---

TEST_CASE("sensitivity command") {
  const auto cfg = load_config(kConfig);
  TempDir dir("sens");
  const auto res = cmd_sensitivity(cfg, std::nullopt, dir.path, cfg.seed);
  CHECK(res.eta > 10.0);
  CHECK(res.eta < 20.0);
  cmd_synth(cfg, dir.path, cfg.seed);
  const auto from_files = cmd_sensitivity(cfg, dir.path, dir.path, cfg.seed);
  CHECK(from_files.eta == res.eta);
  CHECK(json::parse(slurp(dir.path / "sensitivity.json"))["eta"]["unit"] == "kV/m/sqrt(Hz)");
}

// -------------------------------------------------------------------- cli ---

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VSI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("cli exit codes") {
  TempDir dir("cli");
  const std::string cfg = kConfig.string();
  const std::string out = dir.path.string();
  CHECK(run_cli("simulate --config " + cfg + " --out " + out + "/sim") == 0);
  CHECK(run_cli("synth --config " + cfg + " --out " + out + "/data --seed 5") == 0);
  CHECK(run_cli("invert --config " + cfg + " --out " + out + "/inv --data " + out + "/data --seed 5") == 0);
  CHECK(fs::exists(dir.path / "inv" / "report.json"));

  std::ofstream(dir.path / "bad.json") << "{\"voltages_v\": [0, 1], \"unknown_key\": true}";
  CHECK(run_cli("simulate --config " + out + "/bad.json --out " + out + "/x") == 2);
  CHECK(run_cli("simulate --out " + out + "/x") == 2);

  CHECK(run_cli("invert --config " + cfg + " --out " + out + "/inv2 --data " + out + "/nowhere") == 3);

  fs::create_directories(dir.path / "short");
  std::ofstream(dir.path / "short" / "ple_index.csv") << "emitter_id,voltage_v,file\n";
  std::ofstream(dir.path / "short" / "timeseries.csv") << "t_s,counts\n0,1\n0.01,2\n0.02,1\n";
  CHECK(run_cli("sensitivity --config " + cfg + " --out " + out + "/s --data " + out + "/short") == 4);
}
