#include "arcsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "arcsim/messages.hpp"

namespace arcsim {

namespace {

constexpr double kGravity = 9.81;

std::int64_t to_us(double seconds) { return std::llround(seconds * 1e6); }

double max_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  return m;
}

const std::vector<double>& channel(const ExperimentRecord& r, const std::string& name) {
  auto it = r.channels.find(name);
  if (it == r.channels.end()) throw LookupError("record has no channel '" + name + "'");
  return it->second;
}

std::string voltage_key(double v) { return "v" + detail::fmt_number(v); }

// Power bookkeeping shared by the experiments: one sample per interface tick.
Json power_metrics(const ModuleParams& params, const PowerParams& power,
                   const std::vector<std::vector<ModuleState>>& series) {
  const PowerReport report = power_budget_check(params, power, series);
  Json j;
  j["instants"] = report.instants;
  j["peak_module_w"] = report.peak_module_power;
  j["peak_system_w"] = report.peak_system_power;
  j["violations"] = report.violations.size();
  return j;
}

std::vector<std::vector<ModuleState>> group_states(const std::vector<ModuleState>& states, std::size_t n_modules) {
  std::vector<std::vector<ModuleState>> out;
  if (n_modules == 0) return out;
  for (std::size_t i = 0; i + n_modules <= states.size(); i += n_modules) {
    out.emplace_back(states.begin() + static_cast<std::ptrdiff_t>(i),
                     states.begin() + static_cast<std::ptrdiff_t>(i + n_modules));
  }
  return out;
}

Json configuration_metrics(const ExperimentRecord& r) {
  const auto& p = r.parameters;
  const double tol = p.at("tolerance_rad").get<double>();
  const double hold = p.at("hold_s").get<double>();
  const auto& t = channel(r, "t");
  const auto& phase = channel(r, "phase");
  const auto& err = channel(r, "max_joint_error_rad");
  const auto& speed = channel(r, "centroid_speed_m_s");
  const auto& torque = channel(r, "max_abs_joint_torque_nm");

  // Settling: start of the last in-tolerance window of the approach phase.
  double window_start = -1.0;
  double settle = -1.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (phase[i] != 1.0) continue;
    if (err[i] <= tol) {
      if (window_start < 0.0) window_start = t[i];
      if (t[i] - window_start >= hold - 1e-9 && settle < 0.0) settle = window_start;
    } else {
      window_start = -1.0;
      settle = -1.0;
    }
  }

  double max_speed = 0.0;
  double steady_error = 0.0;
  std::size_t moving = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (phase[i] != 2.0) continue;
    ++moving;
    max_speed = std::max(max_speed, speed[i]);
    steady_error = std::max(steady_error, err[i]);
  }

  Json j;
  j["converged"] = settle >= 0.0;
  j["settle_time_s"] = settle;
  j["max_steady_joint_error_rad"] = steady_error;
  j["max_speed_m_s"] = max_speed;
  j["speed_bound_m_s"] = p.at("speed_bound_m_s").get<double>();
  j["max_abs_joint_torque_nm"] = max_of(torque);
  if (!r.pose_track.empty()) {
    const Pose2& end = r.pose_track.back();
    const Pose2& start = r.pose_track.front();
    const double dist = std::hypot(end.x - start.x, end.y - start.y);
    const double duration = p.at("locomotion_s").get<double>();
    j["final_x_m"] = end.x;
    j["final_y_m"] = end.y;
    j["final_heading_rad"] = end.heading;
    j["distance_m"] = dist;
    j["mean_speed_m_s"] = moving > 0 && duration > 0.0 ? dist / duration : 0.0;
    j["mean_yaw_rate_rad_s"] = duration > 0.0 ? (end.heading - start.heading) / duration : 0.0;
  }
  return j;
}

Json transparency_metrics(const ExperimentRecord& r) {
  const double stop = r.parameters.at("stop_velocity_rad_s").get<double>();
  const auto& q = channel(r, "q_true_rad");
  const auto& v = channel(r, "velocity_rad_s");
  const auto& est = channel(r, "tau_estimate_nm");
  const auto& truth = channel(r, "tau_truth_nm");

  // Hysteresis: per 1 degree bin, mean estimator error on the rising sweep
  // minus the mean on the falling sweep; the width is the widest bin.
  struct Bin {
    double up = 0.0, down = 0.0;
    int n_up = 0, n_down = 0;
  };
  std::map<long, Bin> bins;
  double max_error = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double e = est[i] - truth[i];
    max_error = std::max(max_error, std::abs(e));
    const long key = std::lround(std::floor(rad_to_deg(q[i])));
    if (v[i] > stop) {
      bins[key].up += e;
      ++bins[key].n_up;
    } else if (v[i] < -stop) {
      bins[key].down += e;
      ++bins[key].n_down;
    }
  }
  double width = 0.0;
  double sum = 0.0;
  int counted = 0;
  for (const auto& [key, b] : bins) {
    if (b.n_up < 2 || b.n_down < 2) continue;
    const double w = b.up / b.n_up - b.down / b.n_down;
    width = std::max(width, w);
    sum += w;
    ++counted;
  }
  Json j;
  j["hysteresis_width_nm"] = width;
  j["mean_hysteresis_nm"] = counted ? sum / counted : 0.0;
  j["bins_compared"] = counted;
  j["max_error_nm"] = max_error;
  return j;
}

Json pendulum_metrics(const ExperimentRecord& r) {
  Json per = Json::object();
  const std::vector<double>* ref_p = nullptr;
  const std::vector<double>* ref_y = nullptr;
  double deviation = 0.0;
  for (const auto& vj : r.parameters.at("v_in")) {
    const double v = vj.get<double>();
    const std::string k = voltage_key(v);
    Json m;
    if (!r.channels.count(k + ".q_pitch")) {
      m["faulted"] = true;
      per[k] = m;
      continue;
    }
    const auto& qp = channel(r, k + ".q_pitch");
    const auto& qy = channel(r, k + ".q_yaw");
    const auto& sp = channel(r, k + ".sp_pitch");
    const auto& sy = channel(r, k + ".sp_yaw");
    const auto& current = channel(r, k + ".rail_current_a");
    double sq = 0.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < qp.size(); ++i) {
      const double e2 = (qp[i] - sp[i]) * (qp[i] - sp[i]) + (qy[i] - sy[i]) * (qy[i] - sy[i]);
      sq += e2;
      worst = std::max(worst, std::sqrt(e2));
    }
    m["faulted"] = false;
    m["rms_error_deg"] = qp.empty() ? 0.0 : rad_to_deg(std::sqrt(sq / static_cast<double>(qp.size())));
    m["max_error_deg"] = rad_to_deg(worst);
    m["peak_rail_current_a"] = max_of(current);
    const double limit = r.parameters.at("current_limits").at(k).get<double>();
    m["rail_current_limit_a"] = limit;
    m["overcurrent_samples"] = static_cast<std::size_t>(
        std::count_if(current.begin(), current.end(), [&](double c) { return c > limit; }));
    per[k] = m;
    if (!ref_p) {
      ref_p = &qp;
      ref_y = &qy;
    } else {
      const std::size_t n = std::min(qp.size(), ref_p->size());
      if (qp.size() != ref_p->size()) deviation = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        deviation = std::max({deviation, std::abs(qp[i] - (*ref_p)[i]), std::abs(qy[i] - (*ref_y)[i])});
      }
    }
  }
  Json j;
  j["per_voltage"] = per;
  j["trajectory_max_deviation_rad"] = deviation;
  return j;
}

}  // namespace

RailState supply(const PowerParams& params, double v_in) {
  RailState s;
  s.v_in = v_in;
  if (!std::isfinite(v_in) || v_in < params.v_in_min || v_in > params.v_in_max) {
    s.fault = true;
    return s;
  }
  s.v_rail_24 = params.rail_voltage;
  s.v_rail_5 = 5.0;
  s.v_rail_3v3 = 3.3;
  const double span = params.v_in_max - params.v_in_min;
  const double f = span > 0.0 ? (v_in - params.v_in_min) / span : 0.0;
  s.current_limit = params.current_limit_at_min_vin + f * (params.current_limit_at_max_vin - params.current_limit_at_min_vin);
  return s;
}

Simulation::Simulation(const SimConfig& config, int n_modules)
    : control_period_us_(to_us(config.module.control_period())),
      interface_period_us_(to_us(config.module.interface_period())),
      next_control_us_(control_period_us_),
      next_interface_us_(interface_period_us_) {
  if (n_modules < 1) throw DomainError("simulation needs at least one module");
  if (control_period_us_ <= 0 || interface_period_us_ <= 0) throw TimingError("rates too high for the clock");
  for (int i = 0; i < n_modules; ++i) modules_.emplace_back(i, config.module, config.seed);
}

void Simulation::run_until(double until, const ControlHook& on_control, const InterfaceHook& on_interface) {
  const std::int64_t end = to_us(until);
  std::vector<ActuatorEfforts> efforts(modules_.size());
  std::vector<ModuleState> states(modules_.size());
  while (std::min(next_control_us_, next_interface_us_) <= end) {
    // Control work at an instant runs before the interface snapshot of that instant.
    if (next_control_us_ <= next_interface_us_) {
      now_us_ = next_control_us_;
      const double t = now();
      for (std::size_t i = 0; i < modules_.size(); ++i) efforts[i] = modules_[i].control_tick(t);
      ++control_ticks_;
      next_control_us_ += control_period_us_;
      if (on_control) on_control(t, efforts);
    } else {
      now_us_ = next_interface_us_;
      const double t = now();
      for (std::size_t i = 0; i < modules_.size(); ++i) states[i] = modules_[i].interface_tick(t);
      ++interface_ticks_;
      next_interface_us_ += interface_period_us_;
      if (on_interface) on_interface(t, states);
    }
  }
  now_us_ = std::max(now_us_, end);
}

Json recompute_metrics(const ExperimentRecord& record) {
  Json j;
  if (record.name.rfind("configuration/", 0) == 0) {
    j = configuration_metrics(record);
  } else if (record.name == "transparency") {
    j = transparency_metrics(record);
  } else if (record.name == "pendulum") {
    j = pendulum_metrics(record);
  } else {
    throw LookupError("unknown experiment: " + record.name);
  }
  if (record.parameters.contains("n_modules") && !record.states.empty()) {
    // Electrical parameters come from the configuration the run used.
    const SimConfig c = load_sim_config(Config::parse(record.config_snapshot));
    const auto n = record.parameters["n_modules"].get<std::size_t>();
    j["power"] = power_metrics(c.module, c.power, group_states(record.states, n));
  }
  return j;
}

std::string metrics_block(const ExperimentRecord& record) {
  Json j;
  j["experiment"] = record.name;
  j["failed"] = record.failed;
  j["failure"] = record.failure;
  j["faults"] = record.faults;
  j["metrics"] = record.metrics;
  return j.dump(2) + "\n";
}

void write_record(const ExperimentRecord& record, const std::string& directory, bool csv) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  const fs::path dir(directory);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("states.jsonl");
    for (const auto& s : record.states) out << to_json(s).dump() << '\n';
  }
  open("metrics.json") << metrics_block(record);
  open("config.txt") << record.config_snapshot;
  open("parameters.json") << record.parameters.dump(2) << '\n';
  {
    auto out = open("track.jsonl");
    for (const auto& p : record.pose_track) out << Json{{"x", p.x}, {"y", p.y}, {"heading", p.heading}}.dump() << '\n';
  }
  if (csv) {
    auto out = open("channels.csv");
    std::size_t rows = 0;
    bool first = true;
    for (const auto& [name, values] : record.channels) {
      out << (first ? "" : ",") << name;
      first = false;
      rows = std::max(rows, values.size());
    }
    out << '\n';
    for (std::size_t i = 0; i < rows; ++i) {
      first = true;
      for (const auto& [name, values] : record.channels) {
        out << (first ? "" : ",");
        if (i < values.size()) out << detail::fmt_number(values[i]);
        first = false;
      }
      out << '\n';
    }
  }
}

ExperimentRecord run_configuration_experiment(const SimConfig& config, Preset preset) {
  ExperimentRecord rec;
  rec.name = "configuration/" + std::string(to_string(preset));
  rec.config_snapshot = to_config_text(config);
  const auto& ex = config.experiment;
  const TerrainParams& terrain = config.terrain(ex.terrain);
  const int n = config.chain.n_bodies;
  const double tol = encoder_tick_rad(kJointEncoderBits);
  const double dt = config.module.control_period();
  const double rpm = config.module.screw.spec.max_output_rpm() < std::abs(ex.config_screw_rpm)
                         ? std::copysign(config.module.screw.spec.max_output_rpm(), ex.config_screw_rpm)
                         : ex.config_screw_rpm;
  const double speed_bound = kScrewLeadM * rpm / 60.0;

  rec.parameters = {{"n_modules", n},
                    {"tolerance_rad", tol},
                    {"hold_s", ex.config_hold_s},
                    {"locomotion_s", ex.config_locomotion_s},
                    {"screw_rpm", rpm},
                    {"speed_bound_m_s", speed_bound},
                    {"terrain", terrain.name}};

  Simulation sim(config, n);
  // Module i's U-joint sits behind body i; the last one carries the head and stays straight.
  std::vector<JointAngles> targets = preset_configuration(preset, n - 1);
  targets.push_back({});

  Pose2 pose;
  int phase = 1;
  double in_tol_since = -1.0;
  auto& ch = rec.channels;

  const auto on_control = [&](double t, const std::vector<ActuatorEfforts>& efforts) {
    double err = 0.0;
    double torque = 0.0;
    std::vector<JointAngles> q(static_cast<std::size_t>(n - 1));
    for (int i = 0; i < n; ++i) {
      const JointAngles a = sim.module(i).true_angles();
      err = std::max({err, std::abs(a.pitch - targets[static_cast<std::size_t>(i)].pitch),
                      std::abs(a.yaw - targets[static_cast<std::size_t>(i)].yaw)});
      if (i < n - 1) q[static_cast<std::size_t>(i)] = a;
      torque = std::max({torque, std::abs(efforts[static_cast<std::size_t>(i)].joint_torques[0]),
                         std::abs(efforts[static_cast<std::size_t>(i)].joint_torques[1])});
    }
    const auto poses = chain_fk(config.chain, q);
    const auto contacts = contacts_from_chain(config.chain, poses, terrain);
    double speed = 0.0;
    if (!contacts.empty()) {
      std::vector<double> omegas;
      for (const auto& c : contacts) omegas.push_back(sim.module(c.body_index).screw().speed_rad_s());
      const Twist2 tw = solve_body_twist(contacts, omegas);
      speed = std::hypot(tw.vx, tw.vy);
      pose = integrate_pose(pose, shift_twist(tw, contact_centroid(contacts), Eigen::Vector2d::Zero()), dt);
    }
    const Eigen::Matrix3d heading = Eigen::AngleAxisd(pose.heading, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    for (int i = 0; i < n; ++i) {
      sim.module(i).set_orientation(Eigen::Quaterniond(heading * poses[static_cast<std::size_t>(i)].rotation));
    }
    ch["t"].push_back(t);
    ch["phase"].push_back(phase);
    ch["max_joint_error_rad"].push_back(err);
    ch["centroid_speed_m_s"].push_back(speed);
    ch["max_abs_joint_torque_nm"].push_back(torque);
    ch["x_m"].push_back(pose.x);
    ch["y_m"].push_back(pose.y);
    ch["heading_rad"].push_back(pose.heading);
    if (phase == 1) in_tol_since = err <= tol ? (in_tol_since < 0.0 ? t : in_tol_since) : -1.0;
  };
  const auto on_interface = [&](double, const std::vector<ModuleState>& states) {
    rec.states.insert(rec.states.end(), states.begin(), states.end());
    rec.pose_track.push_back(pose);
  };

  for (int i = 0; i < n; ++i) sim.module(i).submit_command({i, targets[static_cast<std::size_t>(i)], 0.0, 0.0});
  const std::int64_t step_us = to_us(dt);
  std::int64_t k = 0;
  bool settled = false;
  while (static_cast<double>(k * step_us) * 1e-6 < ex.config_settle_timeout_s) {
    ++k;
    sim.run_until(static_cast<double>(k * step_us) * 1e-6, on_control, on_interface);
    if (in_tol_since >= 0.0 && sim.now() - in_tol_since >= ex.config_hold_s - 1e-9) {
      settled = true;
      break;
    }
  }
  if (!settled) {
    rec.failed = true;
    rec.failure = "joints did not settle within " + detail::fmt_number(ex.config_settle_timeout_s) + " s";
  } else {
    phase = 2;
    const double t0 = sim.now();
    for (int i = 0; i < n; ++i) sim.module(i).submit_command({i, targets[static_cast<std::size_t>(i)], rpm, t0});
    const std::int64_t steps = std::llround(ex.config_locomotion_s / dt);
    for (std::int64_t s = 1; s <= steps; ++s) {
      sim.run_until(t0 + static_cast<double>(s * step_us) * 1e-6, on_control, on_interface);
    }
  }
  rec.metrics = recompute_metrics(rec);
  return rec;
}

TransparencyOptions TransparencyOptions::from(const SimConfig& config) {
  const auto& e = config.experiment;
  return {e.load_mass_kg, e.load_arm_m, deg_to_rad(e.sweep_amplitude_deg), e.sweep_period_s};
}

ExperimentRecord run_transparency_experiment(const SimConfig& config, const TransparencyOptions& options) {
  if (std::abs(options.amplitude_rad) > kJointLimit) throw JointLimitError("pitch", options.amplitude_rad);
  if (!(options.period_s >= config.experiment.min_sweep_period_s)) {
    throw DomainError("sweep period " + detail::fmt_number(options.period_s) + " s is below the quasi-static minimum of " +
                      detail::fmt_number(config.experiment.min_sweep_period_s) + " s");
  }
  if (!(options.load_mass_kg >= 0.0) || !(options.load_arm_m >= 0.0)) throw DomainError("load must be non-negative");

  ExperimentRecord rec;
  rec.name = "transparency";
  rec.config_snapshot = to_config_text(config);
  const double m = options.load_mass_kg;
  const double arm = options.load_arm_m;
  const double amp = options.amplitude_rad;
  const double period = options.period_s;

  SimConfig c = config;
  c.module.pitch_axis.inertia += m * arm * arm;
  rec.parameters = {{"n_modules", 1},
                    {"stop_velocity_rad_s", c.module.pitch_axis.friction.stop_velocity},
                    {"load_mass_kg", m},
                    {"load_arm_m", arm},
                    {"amplitude_rad", amp},
                    {"period_s", period}};

  Simulation sim(c, 1);
  ModuleNode& node = sim.module(0);
  const double mgl = m * kGravity * arm;
  // Pitch rotates the load away from vertical: gravity pulls it further over.
  node.set_load_model([mgl](const JointAngles& q) { return std::array<double, 2>{mgl * std::sin(q.pitch), 0.0}; });
  const auto setpoint = [&](double t) { return -amp * std::cos(kTwoPi * t / period); };
  node.reset_joints({setpoint(0.0), 0.0});

  auto& ch = rec.channels;
  const auto on_control = [&](double t, const std::vector<ActuatorEfforts>&) {
    const ModuleState s = node.snapshot();
    const double q = node.pitch_axis().angle();
    ch["t"].push_back(t);
    ch["q_true_rad"].push_back(q);
    ch["q_measured_rad"].push_back(s.q_measured.pitch);
    ch["q_setpoint_rad"].push_back(s.q_setpoint.pitch);
    ch["velocity_rad_s"].push_back(node.pitch_axis().velocity());
    // The actuator holds the load: its torque balances gravity.
    ch["tau_truth_nm"].push_back(-mgl * std::sin(q));
    ch["tau_estimate_nm"].push_back(s.joint_torque_estimates[0]);
  };
  const auto on_interface = [&](double, const std::vector<ModuleState>& states) {
    rec.states.insert(rec.states.end(), states.begin(), states.end());
  };

  const double dt = c.module.control_period();
  const std::int64_t step_us = to_us(dt);
  const std::int64_t steps = std::llround(period / dt);
  for (std::int64_t k = 1; k <= steps; ++k) {
    const double t = static_cast<double>(k * step_us) * 1e-6;
    node.submit_command({0, {setpoint(t), 0.0}, 0.0, t});
    sim.run_until(t, on_control, on_interface);
  }
  rec.metrics = recompute_metrics(rec);
  return rec;
}

PendulumOptions PendulumOptions::from(const SimConfig& config) {
  const auto& e = config.experiment;
  return {e.pendulum_vin, deg_to_rad(e.pendulum_off_angle_deg), e.pendulum_period_s, e.pendulum_cycles};
}

JointAngles circle_setpoint(double off_angle, double azimuth) {
  // Body axis d = Ry(p) Rz(y) x = (cp cy, sy, -sp cy); the target points it
  // along (cos off, sin off cos az, sin off sin az) with x vertical.
  const double s = std::sin(off_angle);
  const double yaw = std::asin(std::clamp(s * std::cos(azimuth), -1.0, 1.0));
  const double cy = std::cos(yaw);
  const double pitch = cy > 1e-12 ? std::asin(std::clamp(-s * std::sin(azimuth) / cy, -1.0, 1.0)) : 0.0;
  return {pitch, yaw};
}

std::array<double, 2> upright_gravity_torque(const ChainModel& chain, double mass_kg, const JointAngles& q) {
  const ModuleRows rows = chain.segments.empty() ? canonical_module_rows() : chain.segments.front();
  const Transform t_pitch = dh_transform(rows[0], q.pitch);
  const Transform t_yaw = t_pitch * dh_transform(rows[1], q.yaw);
  const Transform t_body = t_yaw * dh_transform(rows[2], 0.0);
  const Eigen::Vector3d com = t_body.apply({chain.links.body_length_cm / 2.0, 0.0, 0.0});
  const Eigen::Vector3d r = (com - t_pitch.translation) / 100.0;
  // The base body stands vertically: its x axis points up.
  const Eigen::Vector3d force(-mass_kg * kGravity, 0.0, 0.0);
  const Eigen::Vector3d tau = r.cross(force);
  return {t_pitch.rotation.col(2).dot(tau), t_yaw.rotation.col(2).dot(tau)};
}

ExperimentRecord run_pendulum_voltage_experiment(const SimConfig& config, const PendulumOptions& options) {
  if (std::abs(options.off_angle_rad) >= kJointLimit) throw JointLimitError("pitch", options.off_angle_rad);
  if (!(options.period_s > 0.0) || !(options.cycles > 0.0)) throw DomainError("pendulum period and cycles must be positive");
  if (options.v_in.empty()) throw ArityError("pendulum experiment needs at least one input voltage");

  ExperimentRecord rec;
  rec.name = "pendulum";
  rec.config_snapshot = to_config_text(config);
  Json limits = Json::object();
  for (double v : options.v_in) limits[voltage_key(v)] = supply(config.power, v).current_limit;
  rec.parameters = {{"v_in", options.v_in},
                    {"off_angle_rad", options.off_angle_rad},
                    {"period_s", options.period_s},
                    {"cycles", options.cycles},
                    {"current_limits", limits}};

  const double mass = config.chain.links.body_mass_kg;
  const double dt = config.module.control_period();
  const std::int64_t step_us = to_us(dt);
  const std::int64_t steps = std::llround(options.cycles * options.period_s / dt);
  const double off = options.off_angle_rad;
  const double period = options.period_s;

  for (double v : options.v_in) {
    const RailState rail = supply(config.power, v);
    const std::string k = voltage_key(v);
    if (rail.fault) {
      rec.faults.push_back("input " + detail::fmt_number(v) + " V outside " + detail::fmt_number(config.power.v_in_min) +
                           "-" + detail::fmt_number(config.power.v_in_max) + " V: rail fault");
      continue;
    }
    Simulation sim(config, 1);
    ModuleNode& node = sim.module(0);
    const ChainModel chain = config.chain;
    node.set_load_model([chain, mass](const JointAngles& q) { return upright_gravity_torque(chain, mass, q); });
    node.reset_joints(circle_setpoint(off, 0.0));

    auto& qp = rec.channels[k + ".q_pitch"];
    auto& qy = rec.channels[k + ".q_yaw"];
    auto& sp = rec.channels[k + ".sp_pitch"];
    auto& sy = rec.channels[k + ".sp_yaw"];
    auto& current = rec.channels[k + ".rail_current_a"];
    const auto on_control = [&](double, const std::vector<ActuatorEfforts>&) {
      const JointAngles q = node.true_angles();
      const JointAngles s = node.setpoint();
      qp.push_back(q.pitch);
      qy.push_back(q.yaw);
      sp.push_back(s.pitch);
      sy.push_back(s.yaw);
      current.push_back(module_power(config.module, config.power, node.snapshot()) / rail.v_rail_24);
    };
    for (std::int64_t i = 1; i <= steps; ++i) {
      const double t = static_cast<double>(i * step_us) * 1e-6;
      node.submit_command({0, circle_setpoint(off, kTwoPi * t / period), 0.0, t});
      sim.run_until(t, on_control);
    }
  }
  rec.metrics = recompute_metrics(rec);
  return rec;
}

double module_power(const ModuleParams& params, const PowerParams& power, const ModuleState& state) {
  const AxisParams* axes[2] = {&params.pitch_axis, &params.yaw_axis};
  double watts = power.electronics_overhead;
  for (int i = 0; i < 2; ++i) {
    const double tau = state.joint_torque_estimates[static_cast<std::size_t>(i)];
    watts += std::abs(tau * state.joint_velocities[static_cast<std::size_t>(i)]) / axes[i]->spec.efficiency;
  }
  const double screw_tau = estimate_torque_from_current(state.screw_current, params.screw.torque_constant, params.screw.spec);
  watts += std::abs(screw_tau * rpm_to_rad_s(state.screw_velocity_measured)) / params.screw.spec.efficiency;
  return watts;
}

PowerReport power_budget_check(const ModuleParams& params, const PowerParams& power,
                               const std::vector<std::vector<ModuleState>>& series) {
  PowerReport report;
  for (const auto& instant : series) {
    ++report.instants;
    double total = 0.0;
    double t = 0.0;
    for (const auto& s : instant) {
      const double w = module_power(params, power, s);
      t = s.timestamp;
      total += w;
      report.peak_module_power = std::max(report.peak_module_power, w);
      if (w > power.module_power_limit) report.violations.push_back({t, s.module_id, w});
    }
    report.peak_system_power = std::max(report.peak_system_power, total);
    if (total > power.system_power_limit) report.violations.push_back({t, -1, total});
  }
  return report;
}

}  // namespace arcsim
