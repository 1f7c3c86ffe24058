#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "vsi/errors.hpp"
#include "vsi/workbench.hpp"

namespace vsi::workbench {

namespace {

// Reads keys out of one JSON object and rejects anything it did not consume.
class Section {
public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object())
      throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

  bool has(const std::string& name) {
    used_.insert(name);
    return node_.contains(name) && !node_.at(name).is_null();
  }

  const json& raw(const std::string& name) {
    used_.insert(name);
    if (!node_.contains(name))
      throw ConfigError(key(name), "required key missing");
    return node_.at(name);
  }

  double number(const std::string& name, double fallback) {
    return has(name) ? as_number(node_.at(name), key(name)) : fallback;
  }
  double number(const std::string& name) { return as_number(raw(name), key(name)); }

  int integer(const std::string& name, int fallback) {
    if (!has(name))
      return fallback;
    const double v = as_number(node_.at(name), key(name));
    if (v != std::floor(v) || std::abs(v) > 1e9)
      throw ConfigError(key(name), "expected an integer");
    return static_cast<int>(v);
  }

  bool boolean(const std::string& name, bool fallback) {
    if (!has(name))
      return fallback;
    const auto& v = node_.at(name);
    if (!v.is_boolean())
      throw ConfigError(key(name), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& name, const std::string& fallback) {
    if (!has(name))
      return fallback;
    const auto& v = node_.at(name);
    if (!v.is_string())
      throw ConfigError(key(name), "expected a string");
    return v.get<std::string>();
  }

  Section child(const std::string& name) { return Section(has(name) ? node_.at(name) : empty(), key(name)); }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it)
      if (!used_.count(it.key()))
        throw ConfigError(key(it.key()), "unknown key");
  }

  static double as_number(const json& v, const std::string& key) {
    if (!v.is_number())
      throw ConfigError(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d))
      throw ConfigError(key, "must be finite");
    return d;
  }

private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

device::LayerRole parse_role(const std::string& s, const std::string& key) {
  if (s == "p_contact")
    return device::LayerRole::p_contact;
  if (s == "intrinsic_n")
    return device::LayerRole::intrinsic_n;
  if (s == "n_buffer")
    return device::LayerRole::n_buffer;
  throw ConfigError(key, "unknown layer role '" + s + "' (p_contact, intrinsic_n, n_buffer)");
}

device::DopantType parse_dopant(const std::string& s, const std::string& key) {
  if (s == "donor")
    return device::DopantType::donor;
  if (s == "acceptor")
    return device::DopantType::acceptor;
  throw ConfigError(key, "unknown dopant type '" + s + "' (donor, acceptor)");
}

const char* role_name(device::LayerRole r) {
  switch (r) {
  case device::LayerRole::p_contact: return "p_contact";
  case device::LayerRole::intrinsic_n: return "intrinsic_n";
  case device::LayerRole::n_buffer: return "n_buffer";
  }
  return "?";
}

sensor::StarkParams parse_stark(Section s, const sensor::StarkParams& fallback) {
  sensor::StarkParams p;
  p.d = s.number("d_ghz_per_mv_per_m", fallback.d);
  p.alpha = s.number("alpha_ghz_per_mv2_per_m2", fallback.alpha);
  p.f0 = s.number("f0_ghz", fallback.f0);
  s.finish();
  return p;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok)
    throw ConfigError(key, what);
}

ExperimentConfig build(const json& root) {
  ExperimentConfig cfg;
  Section top(root, "");

  if (top.has("seed")) {
    const auto& v = top.raw("seed");
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      throw ConfigError("seed", "expected a non-negative integer");
    cfg.seed = v.get<std::uint64_t>();
  }

  // material and layers
  device::MaterialParams material;
  {
    Section m = top.child("material");
    material.eps_r = m.number("eps_r", material.eps_r);
    material.n_i_cm3 = m.number("n_i_cm3", material.n_i_cm3);
    material.temperature_k = m.number("temperature_k", material.temperature_k);
    material.v_e_cm_s = m.number("v_e_cm_s", material.v_e_cm_s);
    material.bandgap_ev = m.number("bandgap_ev", material.bandgap_ev);
    m.finish();
    try {
      material.validate();
    } catch (const DomainError& e) {
      throw ConfigError("material", e.what());
    }
  }

  Section dev = top.child("device");
  std::optional<double> vbi;
  if (dev.has("builtin_voltage_v"))
    vbi = dev.number("builtin_voltage_v");
  cfg.grid_points = dev.integer("grid_points", cfg.grid_points);
  require(cfg.grid_points >= 2, dev.key("grid_points"), "must be >= 2");
  std::vector<device::LayerSpec> layers = device::DeviceStack::reference_pin_diode().layers();
  if (dev.has("layers")) {
    const auto& arr = dev.raw("layers");
    if (!arr.is_array())
      throw ConfigError(dev.key("layers"), "expected an array");
    layers.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section l(arr[i], dev.key("layers[" + std::to_string(i) + "]"));
      device::LayerSpec spec;
      spec.role = parse_role(l.string("role", ""), l.key("role"));
      spec.dopant_type = parse_dopant(l.string("dopant_type", ""), l.key("dopant_type"));
      spec.concentration_cm3 = l.number("concentration_cm3");
      spec.thickness_um = l.number("thickness_um");
      l.finish();
      layers.push_back(spec);
    }
  }
  dev.finish();
  try {
    cfg.stack = device::DeviceStack(layers, material, vbi);
  } catch (const DomainError& e) {
    throw ConfigError("device.layers", e.what());
  }
  const double v_bi = device::builtin_voltage(cfg.stack);
  const double w_i = cfg.stack.intrinsic().thickness_um;

  // sensor
  Section sensor_s = top.child("sensor");
  {
    Section s = sensor_s.child("spin");
    cfg.spin.d_mhz = s.number("d_mhz", cfg.spin.d_mhz);
    cfg.spin.dz_hz_per_v_per_m = s.number("dz_hz_per_v_per_m", cfg.spin.dz_hz_per_v_per_m);
    s.finish();
    require(cfg.spin.d_mhz > 0.0, s.key("d_mhz"), "must be > 0");
  }
  sensor::StarkParams default_stark{-5.60, -0.03, -0.67};
  if (sensor_s.has("stark"))
    default_stark = parse_stark(sensor_s.child("stark"), default_stark);
  {
    Section s = sensor_s.child("ple");
    cfg.ple.amplitude_counts_per_s = s.number("amplitude_counts_per_s", cfg.ple.amplitude_counts_per_s);
    cfg.ple.background_counts_per_s = s.number("background_counts_per_s", cfg.ple.background_counts_per_s);
    cfg.ple.a1_a2_detuning_ghz = s.number("a1_a2_detuning_ghz", cfg.ple.a1_a2_detuning_ghz);
    s.finish();
    require(cfg.ple.amplitude_counts_per_s > 0.0, s.key("amplitude_counts_per_s"), "must be > 0");
    require(cfg.ple.background_counts_per_s >= 0.0, s.key("background_counts_per_s"), "must be >= 0");
  }
  {
    Section s = sensor_s.child("linewidth");
    auto& lw = cfg.linewidth;
    lw.gamma_depleted_mhz = s.number("depleted_mhz", lw.gamma_depleted_mhz);
    lw.gamma_undepleted_mhz = s.number("undepleted_mhz", lw.gamma_undepleted_mhz);
    lw.gamma_floor_mhz = s.number("floor_mhz", lw.gamma_floor_mhz);
    lw.n_half_cm3 = s.number("n_half_cm3", lw.n_half_cm3);
    lw.steepness = s.number("steepness", lw.steepness);
    s.finish();
    require(lw.gamma_depleted_mhz > 0.0 && lw.gamma_undepleted_mhz > 0.0, s.key("depleted_mhz"),
            "line widths must be > 0");
    require(lw.n_half_cm3 > 0.0, s.key("n_half_cm3"), "must be > 0");
  }
  sensor_s.finish();

  // emitters
  if (top.has("emitters")) {
    const auto& arr = top.raw("emitters");
    if (!arr.is_array())
      throw ConfigError("emitters", "expected an array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section e(arr[i], "emitters[" + std::to_string(i) + "]");
      EmitterConfig em;
      em.id = e.string("id", "");
      require(!em.id.empty(), e.key("id"), "required non-empty string");
      require(em.id.find_first_of(",/\\ ") == std::string::npos, e.key("id"),
              "must not contain commas, slashes or spaces");
      require(ids.insert(em.id).second, e.key("id"), "duplicate emitter id '" + em.id + "'");
      em.x_um = e.number("x_um");
      require(em.x_um > 0.0 && em.x_um < w_i, e.key("x_um"), "must lie inside the intrinsic layer (0, " +
                                                                 format_number(w_i) + ") um");
      em.sigma_x_um = e.number("sigma_x_um", em.sigma_x_um);
      require(em.sigma_x_um >= 0.0 && em.sigma_x_um < em.x_um, e.key("sigma_x_um"), "must be in [0, x_um)");
      em.stark = e.has("stark") ? parse_stark(e.child("stark"), default_stark) : default_stark;
      e.finish();
      cfg.emitters.push_back(em);
    }
  }

  // voltages
  if (top.has("bias_limits_v")) {
    const auto& b = top.raw("bias_limits_v");
    if (!b.is_array() || b.size() != 2)
      throw ConfigError("bias_limits_v", "expected [min, max]");
    cfg.bias_min_v = Section::as_number(b[0], "bias_limits_v[0]");
    cfg.bias_max_v = Section::as_number(b[1], "bias_limits_v[1]");
    require(cfg.bias_min_v < cfg.bias_max_v, "bias_limits_v", "min must be below max");
  }
  if (top.has("voltages_v")) {
    const auto& arr = top.raw("voltages_v");
    if (!arr.is_array())
      throw ConfigError("voltages_v", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string key = "voltages_v[" + std::to_string(i) + "]";
      const double v = Section::as_number(arr[i], key);
      require(v >= cfg.bias_min_v && v <= cfg.bias_max_v, key,
              "outside bias_limits_v [" + format_number(cfg.bias_min_v) + ", " + format_number(cfg.bias_max_v) + "]");
      require(v + v_bi >= -1e-12, key, "forward bias beyond the built-in voltage (" + format_number(v_bi) + " V)");
      cfg.voltages_v.push_back(v);
    }
  }

  {
    Section s = top.child("ple_scan");
    cfg.ple.half_width_ghz = s.number("half_width_ghz", cfg.ple.half_width_ghz);
    cfg.ple.points = s.integer("points", cfg.ple.points);
    cfg.ple.dwell_s = s.number("dwell_s", cfg.ple.dwell_s);
    cfg.ple.center_step_ghz = s.number("center_step_ghz", cfg.ple.center_step_ghz);
    s.finish();
    require(cfg.ple.half_width_ghz > 0.0, s.key("half_width_ghz"), "must be > 0");
    require(cfg.ple.points >= 8, s.key("points"), "must be >= 8");
    require(cfg.ple.dwell_s > 0.0, s.key("dwell_s"), "must be > 0");
    require(cfg.ple.center_step_ghz >= 0.0, s.key("center_step_ghz"), "must be >= 0");
  }
  {
    Section s = top.child("noise");
    cfg.noise.enabled = s.boolean("enabled", cfg.noise.enabled);
    cfg.noise.odmr_shots = s.integer("odmr_shots", static_cast<int>(cfg.noise.odmr_shots));
    cfg.noise.cv_relative_noise = s.number("cv_relative_noise", cfg.noise.cv_relative_noise);
    s.finish();
    require(cfg.noise.odmr_shots >= 0, s.key("odmr_shots"), "must be >= 0");
    require(cfg.noise.cv_relative_noise >= 0.0, s.key("cv_relative_noise"), "must be >= 0");
  }

  auto check_emitter_ref = [&](const std::string& id, const std::string& key) {
    if (id.empty())
      return;
    for (const auto& e : cfg.emitters)
      if (e.id == id)
        return;
    throw ConfigError(key, "no emitter with id '" + id + "'");
  };
  // ODMR and sensitivity default to the deepest-listed emitter
  const std::string default_id = cfg.emitters.empty() ? "" : cfg.emitters.back().id;

  {
    Section s = top.child("odmr");
    auto& o = cfg.odmr;
    o.emitter = s.string("emitter", default_id);
    o.rabi_mhz = s.number("rabi_mhz", o.rabi_mhz);
    o.duration_us = s.number("duration_us", o.duration_us);
    o.f_min_mhz = s.number("f_min_mhz", o.f_min_mhz);
    o.f_max_mhz = s.number("f_max_mhz", o.f_max_mhz);
    o.step_mhz = s.number("step_mhz", o.step_mhz);
    s.finish();
    check_emitter_ref(o.emitter, s.key("emitter"));
    require(o.rabi_mhz > 0.0, s.key("rabi_mhz"), "must be > 0");
    require(o.duration_us > 0.0, s.key("duration_us"), "must be > 0");
    require(o.step_mhz > 0.0, s.key("step_mhz"), "must be > 0");
    require(o.f_max_mhz > o.f_min_mhz, s.key("f_max_mhz"), "must exceed f_min_mhz");
  }
  {
    Section s = top.child("cv");
    auto& c = cfg.cv;
    c.area_cm2 = s.number("area_cm2", c.area_cm2);
    c.v_min_v = s.number("v_min_v", c.v_min_v);
    c.v_max_v = s.number("v_max_v", c.v_max_v);
    c.points = s.integer("points", c.points);
    c.window = s.integer("window", c.window);
    c.degree = s.integer("degree", c.degree);
    s.finish();
    require(c.area_cm2 > 0.0, s.key("area_cm2"), "must be > 0");
    require(c.v_max_v > c.v_min_v, s.key("v_max_v"), "must exceed v_min_v");
    require(c.v_max_v < v_bi, s.key("v_max_v"), "must stay below the built-in voltage");
    require(c.window % 2 == 1 && c.window > c.degree && c.degree >= 1, s.key("window"),
            "window must be odd and larger than degree >= 1");
    require(c.points >= c.window, s.key("points"), "must be >= window");
  }
  {
    Section s = top.child("sensitivity");
    auto& c = cfg.sens;
    c.emitter = s.string("emitter", default_id);
    c.count_rate_per_s = s.number("count_rate_per_s", c.count_rate_per_s);
    c.sample_rate_hz = s.number("sample_rate_hz", c.sample_rate_hz);
    c.duration_s = s.number("duration_s", c.duration_s);
    c.gradient_counts_per_s_per_ghz = s.number("gradient_counts_per_s_per_ghz", c.gradient_counts_per_s_per_ghz);
    s.finish();
    check_emitter_ref(c.emitter, s.key("emitter"));
    require(c.count_rate_per_s >= 0.0, s.key("count_rate_per_s"), "must be >= 0");
    require(c.sample_rate_hz >= 1.0, s.key("sample_rate_hz"), "must be >= 1");
    require(c.duration_s >= 2.0, s.key("duration_s"), "must be >= 2");
    require(c.gradient_counts_per_s_per_ghz != 0.0, s.key("gradient_counts_per_s_per_ghz"), "must be nonzero");
  }
  {
    Section s = top.child("inversion");
    cfg.threshold.bootstrap_resamples = s.integer("bootstrap_resamples", cfg.threshold.bootstrap_resamples);
    cfg.threshold.subdivisions = s.integer("subdivisions", cfg.threshold.subdivisions);
    cfg.threshold.min_improvement = s.number("min_improvement", cfg.threshold.min_improvement);
    if (s.has("doping_emitter")) {
      cfg.doping_emitter = s.string("doping_emitter", "");
      check_emitter_ref(*cfg.doping_emitter, s.key("doping_emitter"));
    }
    s.finish();
    require(cfg.threshold.bootstrap_resamples >= 2, s.key("bootstrap_resamples"), "must be >= 2");
    require(cfg.threshold.subdivisions >= 1, s.key("subdivisions"), "must be >= 1");
  }
  top.finish();
  return cfg;
}

} // namespace

const EmitterConfig& ExperimentConfig::emitter(const std::string& id) const {
  for (const auto& e : emitters)
    if (e.id == id)
      return e;
  throw ConfigError("emitters", "no emitter with id '" + id + "'");
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("", "syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                              ": " + e.what());
  }
  return build(root);
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  const auto& m = cfg.stack.material();
  j["material"] = {{"eps_r", m.eps_r},
                   {"n_i_cm3", m.n_i_cm3},
                   {"temperature_k", m.temperature_k},
                   {"v_e_cm_s", m.v_e_cm_s},
                   {"bandgap_ev", m.bandgap_ev}};
  json layers = json::array();
  for (const auto& l : cfg.stack.layers())
    layers.push_back({{"role", role_name(l.role)},
                      {"dopant_type", l.dopant_type == device::DopantType::donor ? "donor" : "acceptor"},
                      {"concentration_cm3", l.concentration_cm3},
                      {"thickness_um", l.thickness_um}});
  j["device"] = {{"layers", layers}, {"grid_points", cfg.grid_points}};
  if (cfg.stack.builtin_voltage_override())
    j["device"]["builtin_voltage_v"] = *cfg.stack.builtin_voltage_override();
  j["sensor"]["spin"] = {{"d_mhz", cfg.spin.d_mhz}, {"dz_hz_per_v_per_m", cfg.spin.dz_hz_per_v_per_m}};
  j["sensor"]["ple"] = {{"amplitude_counts_per_s", cfg.ple.amplitude_counts_per_s},
                        {"background_counts_per_s", cfg.ple.background_counts_per_s},
                        {"a1_a2_detuning_ghz", cfg.ple.a1_a2_detuning_ghz}};
  const auto& lw = cfg.linewidth;
  j["sensor"]["linewidth"] = {{"depleted_mhz", lw.gamma_depleted_mhz},
                              {"undepleted_mhz", lw.gamma_undepleted_mhz},
                              {"floor_mhz", lw.gamma_floor_mhz},
                              {"n_half_cm3", lw.n_half_cm3},
                              {"steepness", lw.steepness}};
  j["emitters"] = json::array();
  for (const auto& e : cfg.emitters)
    j["emitters"].push_back({{"id", e.id},
                             {"x_um", e.x_um},
                             {"sigma_x_um", e.sigma_x_um},
                             {"stark",
                              {{"d_ghz_per_mv_per_m", e.stark.d},
                               {"alpha_ghz_per_mv2_per_m2", e.stark.alpha},
                               {"f0_ghz", e.stark.f0}}}});
  j["voltages_v"] = cfg.voltages_v;
  j["bias_limits_v"] = {cfg.bias_min_v, cfg.bias_max_v};
  j["ple_scan"] = {{"half_width_ghz", cfg.ple.half_width_ghz},
                   {"points", cfg.ple.points},
                   {"dwell_s", cfg.ple.dwell_s},
                   {"center_step_ghz", cfg.ple.center_step_ghz}};
  j["noise"] = {{"enabled", cfg.noise.enabled},
                {"odmr_shots", cfg.noise.odmr_shots},
                {"cv_relative_noise", cfg.noise.cv_relative_noise}};
  j["odmr"] = {{"emitter", cfg.odmr.emitter},     {"rabi_mhz", cfg.odmr.rabi_mhz},
               {"duration_us", cfg.odmr.duration_us}, {"f_min_mhz", cfg.odmr.f_min_mhz},
               {"f_max_mhz", cfg.odmr.f_max_mhz},   {"step_mhz", cfg.odmr.step_mhz}};
  j["cv"] = {{"area_cm2", cfg.cv.area_cm2}, {"v_min_v", cfg.cv.v_min_v}, {"v_max_v", cfg.cv.v_max_v},
             {"points", cfg.cv.points},     {"window", cfg.cv.window},   {"degree", cfg.cv.degree}};
  j["sensitivity"] = {{"emitter", cfg.sens.emitter},
                      {"count_rate_per_s", cfg.sens.count_rate_per_s},
                      {"sample_rate_hz", cfg.sens.sample_rate_hz},
                      {"duration_s", cfg.sens.duration_s},
                      {"gradient_counts_per_s_per_ghz", cfg.sens.gradient_counts_per_s_per_ghz}};
  j["inversion"] = {{"bootstrap_resamples", cfg.threshold.bootstrap_resamples},
                    {"subdivisions", cfg.threshold.subdivisions},
                    {"min_improvement", cfg.threshold.min_improvement}};
  if (cfg.doping_emitter)
    j["inversion"]["doping_emitter"] = *cfg.doping_emitter;
  return j;
}

std::uint64_t resolve_seed(const ExperimentConfig& cfg, std::optional<std::uint64_t> cli_seed) {
  if (cli_seed)
    return *cli_seed;
  if (const char* env = std::getenv("VSI_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0' || env[0] == '-')
      throw ConfigError("VSI_SEED", std::string("not a non-negative integer: '") + env + "'");
    return v;
  }
  return cfg.seed;
}

} // namespace vsi::workbench
