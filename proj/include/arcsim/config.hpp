#pragma once

// Key-value configuration file: one `key = value` per line, `#` starts a
// comment. Lists are whitespace separated. All simulator parameters load from
// here; angles in the file are degrees.

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "arcsim/actuation.hpp"
#include "arcsim/control.hpp"
#include "arcsim/errors.hpp"
#include "arcsim/kinematics.hpp"
#include "arcsim/locomotion.hpp"

namespace arcsim {

class Config {
 public:
  static Config parse(std::string_view text) {
    Config cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t nl = text.find('\n', pos);
      std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      ++line_no;
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
      }
      const std::string key(trim(line.substr(0, eq)));
      const std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
      if (cfg.values_.count(key)) {
        throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      }
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  double number(const std::string& key, double fallback) const {
    auto it = find(key);
    if (!it) return fallback;
    return to_number(key, *it);
  }

  int integer(const std::string& key, int fallback) const {
    const double v = number(key, fallback);
    if (v != std::floor(v)) throw ConfigError("'" + key + "' must be an integer");
    return static_cast<int>(v);
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    auto it = find(key);
    if (!it) return fallback;
    std::vector<double> out;
    std::istringstream ss(*it);
    std::string token;
    while (ss >> token) out.push_back(to_number(key, token));
    return out;
  }

  std::string text(const std::string& key, std::string fallback) const {
    auto it = find(key);
    return it ? *it : fallback;
  }

  /// Keys present in the file that were never read.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) out.push_back(k);
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

  static double to_number(const std::string& key, std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError("'" + key + "': not a number: " + std::string(s));
    }
    return v;
  }

  const std::string* find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

struct PowerParams {
  double v_in_min = 12.0;
  double v_in_max = 60.0;
  double rail_voltage = 24.0;
  double current_limit_at_min_vin = 12.7;  // A
  double current_limit_at_max_vin = 10.2;  // A
  double module_power_limit = 310.0;       // W
  double system_power_limit = 1240.0;      // W
  double electronics_overhead = 5.0;       // W per module
};

struct ExperimentParams {
  // Locomotion configurations.
  double config_screw_rpm = 100.0;
  double config_locomotion_s = 5.0;
  double config_settle_timeout_s = 10.0;
  double config_hold_s = 0.5;
  std::string terrain = "granular";
  // Torque transparency sweep.
  double load_mass_kg = 0.5;
  double load_arm_m = 0.3;
  double sweep_amplitude_deg = 60.0;
  double sweep_period_s = 9.6;
  double min_sweep_period_s = 8.0;
  // Inverted pendulum circle.
  double pendulum_off_angle_deg = 45.0;
  double pendulum_period_s = 10.0;
  double pendulum_cycles = 1.0;
  std::vector<double> pendulum_vin = {12.0, 24.0, 36.0};
};

struct SimConfig {
  ChainModel chain;
  ModuleParams module;
  std::map<std::string, TerrainParams> terrains = {{"granular", TerrainParams::granular()},
                                                   {"rigid", TerrainParams::rigid()}};
  PowerParams power;
  ExperimentParams experiment;
  std::uint64_t seed = 1;

  const TerrainParams& terrain(const std::string& name) const {
    auto it = terrains.find(name);
    if (it == terrains.end()) throw LookupError("unknown terrain preset: " + name);
    return it->second;
  }
};

namespace detail {

inline DhRow dh_row_from(const Config& cfg, const std::string& key, const DhRow& fallback) {
  const auto v = cfg.numbers(key, {fallback.a, rad_to_deg(fallback.alpha), fallback.d,
                                   rad_to_deg(fallback.theta_offset)});
  if (v.size() != 4) throw ConfigError("'" + key + "' needs 4 values: a_cm alpha_deg d_cm theta_offset_deg");
  return {v[0], deg_to_rad(v[1]), v[2], deg_to_rad(v[3]), fallback.joint_kind};
}

inline TransmissionSpec transmission_from(const Config& cfg, const std::string& prefix, TransmissionSpec s) {
  s.motor_speed_limit_rpm = cfg.number(prefix + ".motor_speed_limit_rpm", s.motor_speed_limit_rpm);
  s.stage_ratios = cfg.numbers(prefix + ".stage_ratios", s.stage_ratios);
  s.continuous_torque = cfg.number(prefix + ".continuous_torque_nm", s.continuous_torque);
  s.peak_torque = cfg.number(prefix + ".peak_torque_nm", s.peak_torque);
  s.efficiency = cfg.number(prefix + ".efficiency", s.efficiency);
  s.validate();
  return s;
}

inline std::string fmt_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string fmt_numbers(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += fmt_number(v[i]);
  }
  return out;
}

}  // namespace detail

/// Builds the simulator parameters; every key is optional and unknown keys are rejected.
inline SimConfig load_sim_config(const Config& cfg) {
  SimConfig c;
  auto& links = c.chain.links;
  const int n_bodies = cfg.integer("chain.n_bodies", c.chain.n_bodies);
  c.chain = ChainModel::with_bodies(n_bodies);
  links.body_length_cm = cfg.number("chain.body_length_cm", links.body_length_cm);
  links.body_diameter_cm = cfg.number("chain.body_diameter_cm", links.body_diameter_cm);
  links.ujoint_length_cm = cfg.number("chain.ujoint_length_cm", links.ujoint_length_cm);
  links.ujoint_diameter_cm = cfg.number("chain.ujoint_diameter_cm", links.ujoint_diameter_cm);
  links.body_mass_kg = cfg.number("mass.body_kg", links.body_mass_kg);
  links.ujoint_mass_kg = cfg.number("mass.ujoint_kg", links.ujoint_mass_kg);
  links.head_mass_kg = cfg.number("mass.head_kg", links.head_mass_kg);
  links.reported_system_length_cm = cfg.number("reported.system_length_cm", links.reported_system_length_cm);
  links.reported_system_mass_kg = cfg.number("reported.system_mass_kg", links.reported_system_mass_kg);

  const ModuleRows base = canonical_module_rows();
  const ModuleRows rows = {detail::dh_row_from(cfg, "dh.pitch", base[0]), detail::dh_row_from(cfg, "dh.yaw", base[1]),
                           detail::dh_row_from(cfg, "dh.fixed", base[2])};
  c.chain.segments.assign(static_cast<std::size_t>(n_bodies - 1), rows);

  auto& m = c.module;
  m.screw.spec = detail::transmission_from(cfg, "screw", m.screw.spec);
  m.screw.time_constant = cfg.number("screw.time_constant_s", m.screw.time_constant);
  m.screw.inertia = cfg.number("screw.inertia_kgm2", m.screw.inertia);
  m.screw.torque_constant = cfg.number("screw.torque_constant_nm_per_a", m.screw.torque_constant);
  m.screw.drag_coulomb = cfg.number("screw.drag_coulomb_nm", m.screw.drag_coulomb);
  m.screw.drag_viscous = cfg.number("screw.drag_viscous_nm_s", m.screw.drag_viscous);
  m.screw.current_noise_sigma = cfg.number("screw.current_noise_a", m.screw.current_noise_sigma);

  AxisParams axis = m.pitch_axis;
  axis.spec = detail::transmission_from(cfg, "ujoint", axis.spec);
  axis.inertia = cfg.number("ujoint.inertia_kgm2", axis.inertia);
  axis.torque_constant = cfg.number("ujoint.torque_constant_nm_per_a", axis.torque_constant);
  axis.current_noise_sigma = cfg.number("ujoint.current_noise_a", axis.current_noise_sigma);
  axis.current_offset = cfg.number("ujoint.current_offset_a", axis.current_offset);
  axis.servo_kp = cfg.number("ujoint.servo_kp", axis.servo_kp);
  axis.servo_ki = cfg.number("ujoint.servo_ki", axis.servo_ki);
  axis.substeps = cfg.integer("ujoint.substeps", axis.substeps);
  axis.motor_counts_per_rev = cfg.number("ujoint.motor_counts_per_rev", axis.motor_counts_per_rev);
  auto& f = axis.friction;
  f.coulomb = cfg.number("friction.coulomb_nm", f.coulomb);
  f.viscous = cfg.number("friction.viscous_nm_s", f.viscous);
  f.stiction = cfg.number("friction.stiction_nm", f.stiction);
  f.cogging_amplitude = cfg.number("friction.cogging_amplitude_nm", f.cogging_amplitude);
  f.cogging_frequency = cfg.number("friction.cogging_cycles_per_rad", f.cogging_frequency);
  f.stop_velocity = cfg.number("friction.stop_velocity_rad_s", f.stop_velocity);
  f.validate();
  m.pitch_axis = axis;
  m.yaw_axis = axis;

  auto& g = m.gains;
  g.kp = cfg.number("pid.kp", g.kp);
  g.ki = cfg.number("pid.ki", g.ki);
  g.kd = cfg.number("pid.kd", g.kd);
  g.output_limit = cfg.number("pid.output_limit", g.output_limit);
  g.integral_limit = cfg.number("pid.integral_limit", g.integral_limit);
  g.derivative_cutoff_hz = cfg.number("pid.derivative_cutoff_hz", g.derivative_cutoff_hz);

  m.control_rate_hz = cfg.number("rates.control_hz", m.control_rate_hz);
  m.interface_rate_hz = cfg.number("rates.interface_hz", m.interface_rate_hz);
  if (!(m.control_rate_hz > 0 && m.interface_rate_hz > 0)) throw ConfigError("rates must be positive");
  m.slip_threshold_rad = deg_to_rad(cfg.number("control.slip_threshold_deg", rad_to_deg(m.slip_threshold_rad)));
  m.command_timeout_s = cfg.number("control.command_timeout_s", m.command_timeout_s);
  m.ambient_temperature_c = cfg.number("control.ambient_temperature_c", m.ambient_temperature_c);

  for (const auto& [key, value] : cfg.values()) {
    if (key.rfind("terrain.", 0) != 0) continue;
    const auto dot = key.find('.', 8);
    if (dot == std::string::npos) throw ConfigError("terrain keys look like terrain.<name>.<field>: " + key);
    const std::string name = key.substr(8, dot - 8);
    if (!c.terrains.count(name)) c.terrains[name] = TerrainParams{name, 0.0, 0.0};
  }
  for (auto& [name, t] : c.terrains) {
    t.axial_slip = cfg.number("terrain." + name + ".axial_slip", t.axial_slip);
    t.lateral_coupling = cfg.number("terrain." + name + ".lateral_coupling_m", t.lateral_coupling);
    if (t.axial_slip < 0.0 || t.axial_slip > 1.0) throw ConfigError("terrain axial slip must be in [0, 1]");
  }

  auto& p = c.power;
  p.v_in_min = cfg.number("power.v_in_min_v", p.v_in_min);
  p.v_in_max = cfg.number("power.v_in_max_v", p.v_in_max);
  p.rail_voltage = cfg.number("power.rail_v", p.rail_voltage);
  p.current_limit_at_min_vin = cfg.number("power.current_limit_at_min_vin_a", p.current_limit_at_min_vin);
  p.current_limit_at_max_vin = cfg.number("power.current_limit_at_max_vin_a", p.current_limit_at_max_vin);
  p.module_power_limit = cfg.number("power.module_limit_w", p.module_power_limit);
  p.system_power_limit = cfg.number("power.system_limit_w", p.system_power_limit);
  p.electronics_overhead = cfg.number("power.electronics_overhead_w", p.electronics_overhead);

  auto& e = c.experiment;
  e.config_screw_rpm = cfg.number("experiment.config.screw_rpm", e.config_screw_rpm);
  e.config_locomotion_s = cfg.number("experiment.config.locomotion_s", e.config_locomotion_s);
  e.config_settle_timeout_s = cfg.number("experiment.config.settle_timeout_s", e.config_settle_timeout_s);
  e.config_hold_s = cfg.number("experiment.config.hold_s", e.config_hold_s);
  e.terrain = cfg.text("experiment.config.terrain", e.terrain);
  e.load_mass_kg = cfg.number("experiment.transparency.load_mass_kg", e.load_mass_kg);
  e.load_arm_m = cfg.number("experiment.transparency.load_arm_m", e.load_arm_m);
  e.sweep_amplitude_deg = cfg.number("experiment.transparency.amplitude_deg", e.sweep_amplitude_deg);
  e.sweep_period_s = cfg.number("experiment.transparency.period_s", e.sweep_period_s);
  e.min_sweep_period_s = cfg.number("experiment.transparency.min_period_s", e.min_sweep_period_s);
  e.pendulum_off_angle_deg = cfg.number("experiment.pendulum.off_angle_deg", e.pendulum_off_angle_deg);
  e.pendulum_period_s = cfg.number("experiment.pendulum.period_s", e.pendulum_period_s);
  e.pendulum_cycles = cfg.number("experiment.pendulum.cycles", e.pendulum_cycles);
  e.pendulum_vin = cfg.numbers("experiment.pendulum.vin_v", e.pendulum_vin);
  c.terrain(e.terrain);

  c.seed = static_cast<std::uint64_t>(cfg.integer("sim.seed", static_cast<int>(c.seed)));

  if (const auto unused = cfg.unused_keys(); !unused.empty()) {
    std::string list;
    for (const auto& k : unused) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("unknown configuration keys: " + list);
  }
  return c;
}

inline SimConfig load_sim_config_file(const std::string& path) { return load_sim_config(Config::load(path)); }

/// Serializes every parameter in the format load_sim_config reads.
inline std::string to_config_text(const SimConfig& c) {
  using detail::fmt_number;
  using detail::fmt_numbers;
  std::ostringstream o;
  auto kv = [&](const std::string& key, const std::string& value) { o << key << " = " << value << '\n'; };
  auto num = [&](const std::string& key, double v) { kv(key, fmt_number(v)); };
  const auto& l = c.chain.links;
  num("chain.n_bodies", c.chain.n_bodies);
  num("chain.body_length_cm", l.body_length_cm);
  num("chain.body_diameter_cm", l.body_diameter_cm);
  num("chain.ujoint_length_cm", l.ujoint_length_cm);
  num("chain.ujoint_diameter_cm", l.ujoint_diameter_cm);
  num("mass.body_kg", l.body_mass_kg);
  num("mass.ujoint_kg", l.ujoint_mass_kg);
  num("mass.head_kg", l.head_mass_kg);
  num("reported.system_length_cm", l.reported_system_length_cm);
  num("reported.system_mass_kg", l.reported_system_mass_kg);
  const ModuleRows rows = c.chain.segments.empty() ? canonical_module_rows() : c.chain.segments.front();
  const char* names[3] = {"dh.pitch", "dh.yaw", "dh.fixed"};
  for (int i = 0; i < 3; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    kv(names[i], fmt_numbers({r.a, rad_to_deg(r.alpha), r.d, rad_to_deg(r.theta_offset)}));
  }
  auto transmission = [&](const std::string& prefix, const TransmissionSpec& s) {
    num(prefix + ".motor_speed_limit_rpm", s.motor_speed_limit_rpm);
    kv(prefix + ".stage_ratios", fmt_numbers(s.stage_ratios));
    num(prefix + ".continuous_torque_nm", s.continuous_torque);
    num(prefix + ".peak_torque_nm", s.peak_torque);
    num(prefix + ".efficiency", s.efficiency);
  };
  const auto& m = c.module;
  transmission("screw", m.screw.spec);
  num("screw.time_constant_s", m.screw.time_constant);
  num("screw.inertia_kgm2", m.screw.inertia);
  num("screw.torque_constant_nm_per_a", m.screw.torque_constant);
  num("screw.drag_coulomb_nm", m.screw.drag_coulomb);
  num("screw.drag_viscous_nm_s", m.screw.drag_viscous);
  num("screw.current_noise_a", m.screw.current_noise_sigma);
  const auto& a = m.pitch_axis;
  transmission("ujoint", a.spec);
  num("ujoint.inertia_kgm2", a.inertia);
  num("ujoint.torque_constant_nm_per_a", a.torque_constant);
  num("ujoint.current_noise_a", a.current_noise_sigma);
  num("ujoint.current_offset_a", a.current_offset);
  num("ujoint.servo_kp", a.servo_kp);
  num("ujoint.servo_ki", a.servo_ki);
  num("ujoint.substeps", a.substeps);
  num("ujoint.motor_counts_per_rev", a.motor_counts_per_rev);
  num("friction.coulomb_nm", a.friction.coulomb);
  num("friction.viscous_nm_s", a.friction.viscous);
  num("friction.stiction_nm", a.friction.stiction);
  num("friction.cogging_amplitude_nm", a.friction.cogging_amplitude);
  num("friction.cogging_cycles_per_rad", a.friction.cogging_frequency);
  num("friction.stop_velocity_rad_s", a.friction.stop_velocity);
  num("pid.kp", m.gains.kp);
  num("pid.ki", m.gains.ki);
  num("pid.kd", m.gains.kd);
  num("pid.output_limit", m.gains.output_limit);
  num("pid.integral_limit", m.gains.integral_limit);
  num("pid.derivative_cutoff_hz", m.gains.derivative_cutoff_hz);
  num("rates.control_hz", m.control_rate_hz);
  num("rates.interface_hz", m.interface_rate_hz);
  num("control.slip_threshold_deg", rad_to_deg(m.slip_threshold_rad));
  num("control.command_timeout_s", m.command_timeout_s);
  num("control.ambient_temperature_c", m.ambient_temperature_c);
  for (const auto& [name, t] : c.terrains) {
    num("terrain." + name + ".axial_slip", t.axial_slip);
    num("terrain." + name + ".lateral_coupling_m", t.lateral_coupling);
  }
  const auto& p = c.power;
  num("power.v_in_min_v", p.v_in_min);
  num("power.v_in_max_v", p.v_in_max);
  num("power.rail_v", p.rail_voltage);
  num("power.current_limit_at_min_vin_a", p.current_limit_at_min_vin);
  num("power.current_limit_at_max_vin_a", p.current_limit_at_max_vin);
  num("power.module_limit_w", p.module_power_limit);
  num("power.system_limit_w", p.system_power_limit);
  num("power.electronics_overhead_w", p.electronics_overhead);
  const auto& e = c.experiment;
  num("experiment.config.screw_rpm", e.config_screw_rpm);
  num("experiment.config.locomotion_s", e.config_locomotion_s);
  num("experiment.config.settle_timeout_s", e.config_settle_timeout_s);
  num("experiment.config.hold_s", e.config_hold_s);
  kv("experiment.config.terrain", e.terrain);
  num("experiment.transparency.load_mass_kg", e.load_mass_kg);
  num("experiment.transparency.load_arm_m", e.load_arm_m);
  num("experiment.transparency.amplitude_deg", e.sweep_amplitude_deg);
  num("experiment.transparency.period_s", e.sweep_period_s);
  num("experiment.transparency.min_period_s", e.min_sweep_period_s);
  num("experiment.pendulum.off_angle_deg", e.pendulum_off_angle_deg);
  num("experiment.pendulum.period_s", e.pendulum_period_s);
  num("experiment.pendulum.cycles", e.pendulum_cycles);
  kv("experiment.pendulum.vin_v", fmt_numbers(e.pendulum_vin));
  num("sim.seed", static_cast<double>(c.seed));
  return o.str();
}

}  // namespace arcsim
