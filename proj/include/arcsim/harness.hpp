#pragma once

// Experiment harness: the virtual-clock stepper over a set of module nodes,
// the power rail model, the locomotion/transparency/pendulum experiments and
// their recorded results.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "arcsim/config.hpp"
#include "arcsim/control.hpp"
#include "arcsim/kinematics.hpp"
#include "arcsim/locomotion.hpp"
#include "arcsim/wire.hpp"

namespace arcsim {

struct RailState {
  double v_in = 0.0;
  bool fault = false;
  double v_rail_24 = 0.0;
  double v_rail_5 = 0.0;
  double v_rail_3v3 = 0.0;
  double current_limit = 0.0;  // A on the 24 V rail
};

/// Buck-boost regulation of the input into the 24 V motor rail.
RailState supply(const PowerParams& params, double v_in);

/// Fixed-step virtual clock driving module nodes deterministically in id order.
class Simulation {
 public:
  Simulation(const SimConfig& config, int n_modules);

  using ControlHook = std::function<void(double t, const std::vector<ActuatorEfforts>&)>;
  using InterfaceHook = std::function<void(double t, const std::vector<ModuleState>&)>;

  /// Advances simulated time to `until` seconds, running control ticks at the
  /// control rate and interface ticks at the interface rate.
  void run_until(double until, const ControlHook& on_control = {}, const InterfaceHook& on_interface = {});

  double now() const { return static_cast<double>(now_us_) * 1e-6; }
  std::deque<ModuleNode>& modules() { return modules_; }
  ModuleNode& module(int id) { return modules_.at(static_cast<std::size_t>(id)); }
  std::uint64_t control_ticks() const { return control_ticks_; }
  std::uint64_t interface_ticks() const { return interface_ticks_; }

 private:
  std::deque<ModuleNode> modules_;
  std::int64_t control_period_us_;
  std::int64_t interface_period_us_;
  std::int64_t now_us_ = 0;
  std::int64_t next_control_us_;
  std::int64_t next_interface_us_;
  std::uint64_t control_ticks_ = 0;
  std::uint64_t interface_ticks_ = 0;
};

struct ExperimentRecord {
  std::string name;
  std::string config_snapshot;
  std::vector<ModuleState> states;                       // every interface tick, all modules
  std::map<std::string, std::vector<double>> channels;   // raw per-sample series
  std::vector<Pose2> pose_track;
  std::vector<std::string> faults;
  bool failed = false;
  std::string failure;
  Json parameters = Json::object();   // constants the metrics depend on
  Json metrics = Json::object();
};

/// Metrics of a record recomputed from its raw series.
Json recompute_metrics(const ExperimentRecord& record);

/// Byte-stable rendering of the metrics block.
std::string metrics_block(const ExperimentRecord& record);

/// Writes states.jsonl, metrics.json, config.txt, parameters.json, track.jsonl and
/// optionally channels.csv: enough to recompute the metrics.
void write_record(const ExperimentRecord& record, const std::string& directory, bool csv = false);

ExperimentRecord run_configuration_experiment(const SimConfig& config, Preset preset);

struct TransparencyOptions {
  double load_mass_kg = 0.5;
  double load_arm_m = 0.3;
  double amplitude_rad = deg_to_rad(60.0);
  double period_s = 9.6;

  static TransparencyOptions from(const SimConfig& config);
};

ExperimentRecord run_transparency_experiment(const SimConfig& config, const TransparencyOptions& options);

struct PendulumOptions {
  std::vector<double> v_in = {12.0, 24.0, 36.0};
  double off_angle_rad = deg_to_rad(45.0);
  double period_s = 10.0;
  double cycles = 1.0;

  static PendulumOptions from(const SimConfig& config);
};

ExperimentRecord run_pendulum_voltage_experiment(const SimConfig& config, const PendulumOptions& options);

/// Joint setpoints that point the body of an upright module along a cone of
/// the given half-angle around the vertical, at the given azimuth.
JointAngles circle_setpoint(double off_angle, double azimuth);

/// Gravity torque on the pitch and yaw axes of an upright module whose
/// carried body has mass `mass_kg`.
std::array<double, 2> upright_gravity_torque(const ChainModel& chain, double mass_kg, const JointAngles& q);

struct PowerViolation {
  double time = 0.0;
  int module_id = -1;  // -1 for the system total
  double power = 0.0;
};

struct PowerReport {
  std::size_t instants = 0;
  double peak_module_power = 0.0;
  double peak_system_power = 0.0;
  std::vector<PowerViolation> violations;
};

/// Electrical power drawn by one module: mechanical power through the
/// transmissions divided by efficiency, plus electronics overhead.
double module_power(const ModuleParams& params, const PowerParams& power, const ModuleState& state);

/// `series` holds one vector of module states per instant.
PowerReport power_budget_check(const ModuleParams& params, const PowerParams& power,
                               const std::vector<std::vector<ModuleState>>& series);

}  // namespace arcsim
