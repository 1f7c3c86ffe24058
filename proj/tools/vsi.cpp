// vsi: device simulation, synthetic experiments and inversion from the shell.
//
// Exit codes: 0 success, 2 config error, 3 ingestion error, 4 numerical failure.

#include <iostream>
#include <optional>
#include <string>
#include <utility>

#include <CLI11.hpp>

#include "vsi/errors.hpp"
#include "vsi/workbench.hpp"

namespace wb = vsi::workbench;

namespace {

enum Exit { kOk = 0, kConfig = 2, kIngestion = 3, kNumerical = 4 };

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Options& o, bool with_data) {
  cmd->add_option("--config", o.config, "JSON experiment config")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--seed", o.seed, "seed override (else VSI_SEED, else config)");
  if (with_data)
    cmd->add_option("--data", o.data, "dataset directory (default: --out)");
}

int run(const std::string& name, const Options& o) {
  const auto cfg = wb::load_config(o.config);
  const auto seed = wb::resolve_seed(cfg, o.seed);
  if (name == "simulate") {
    wb::cmd_simulate(cfg, o.out);
    std::cout << "simulated " << cfg.voltages_v.size() << " bias points into " << o.out << "\n";
  } else if (name == "synth") {
    wb::cmd_synth(cfg, o.out, seed);
    std::cout << "dataset written to " << o.out << " (seed " << seed << ")\n";
  } else if (name == "invert") {
    const auto rep = wb::cmd_invert(cfg, o.data.empty() ? o.out : o.data, o.out, seed);
    for (const auto& e : rep.emitters) {
      std::cout << e.id << ": threshold " << e.threshold_status;
      if (e.threshold && e.threshold_status == "onset")
        std::cout << " " << e.threshold->v_threshold << " +- " << e.threshold->sigma_v << " V";
      if (e.stark_fit)
        std::cout << ", |d| = " << std::abs(e.stark_fit->value("d")) << " GHz/(MV/m)";
      std::cout << "\n";
    }
    if (rep.doping)
      std::cout << "N_D in [" << rep.doping->low << ", " << rep.doping->high << "] cm^-3 (mid " << rep.doping->mid
                << ")\n";
    else
      std::cout << "N_D: no emitter with an onset inside the scan\n";
  } else if (name == "odmr") {
    wb::cmd_odmr(cfg, o.out);
    std::cout << "ODMR spectra written to " << o.out << "\n";
  } else if (name == "sensitivity") {
    std::optional<wb::fs::path> data;
    if (!o.data.empty())
      data = o.data;
    const auto res = wb::cmd_sensitivity(cfg, data, o.out, seed);
    std::cout << "eta = " << res.eta << " +- " << res.uncertainty << " kV/m/sqrt(Hz)\n";
  }
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Field sensing in a SiC pin diode with embedded spin defects"};
  app.require_subcommand(1);
  Options opts;
  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "field, band and carrier profiles for each configured voltage"},
      {"synth", "synthetic PLE, ODMR, C-V and time-series dataset with a truth sidecar"},
      {"invert", "threshold, doping, Stark fit and sensitivity from a dataset"},
      {"odmr", "ODMR spectra and peak positions versus bias"},
      {"sensitivity", "field sensitivity from a count time series"},
  };
  for (const auto& [name, help] : commands) {
    const bool with_data = std::string(name) == "invert" || std::string(name) == "sensitivity";
    add_common(app.add_subcommand(name, help), opts, with_data);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run(name, opts);
  } catch (const vsi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const vsi::IngestionError& e) {
    std::cerr << "ingestion error: " << e.what() << "\n";
    return kIngestion;
  } catch (const vsi::Error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIngestion;
  }
}
