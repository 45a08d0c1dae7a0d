#pragma once

// Per-module control stack. A fast task regulates both U-joint axes with PID
// on the absolute encoder and passes the screw velocity through to its driver;
// a slow task snapshots the module state for publication.

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <random>

#include "arcsim/actuation.hpp"
#include "arcsim/errors.hpp"
#include "arcsim/kinematics.hpp"

namespace arcsim {

struct PidState {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double integral = 0.0;
  double last_error = 0.0;
  double output_limit = 1.0;
  double integral_limit = 1.0;
  double derivative_cutoff_hz = 20.0;
  double filtered_derivative = 0.0;
  bool primed = false;

  void reset() {
    integral = 0.0;
    last_error = 0.0;
    filtered_derivative = 0.0;
    primed = false;
  }
};

/// One PID update. Derivative acts on the error through a first-order low-pass.
inline double pid_step(PidState& s, double setpoint, double measurement, double dt) {
  if (!(dt > 0.0)) throw TimingError("pid_step requires dt > 0");
  const double error = setpoint - measurement;

  s.integral = std::clamp(s.integral + error * dt, -s.integral_limit, s.integral_limit);

  double raw_derivative = s.primed ? (error - s.last_error) / dt : 0.0;
  if (s.derivative_cutoff_hz > 0.0) {
    const double rc = 1.0 / (kTwoPi * s.derivative_cutoff_hz);
    s.filtered_derivative += dt / (dt + rc) * (raw_derivative - s.filtered_derivative);
  } else {
    s.filtered_derivative = raw_derivative;
  }
  s.last_error = error;
  s.primed = true;

  const double out = s.kp * error + s.ki * s.integral + s.kd * s.filtered_derivative;
  return std::clamp(out, -s.output_limit, s.output_limit);
}

struct PidGains {
  double kp = 2.5;
  double ki = 0.0;
  double kd = 0.05;
  double output_limit = 1.0;
  double integral_limit = 0.5;
  double derivative_cutoff_hz = 20.0;

  PidState make_state() const {
    PidState s;
    s.kp = kp;
    s.ki = ki;
    s.kd = kd;
    s.output_limit = output_limit;
    s.integral_limit = integral_limit;
    s.derivative_cutoff_hz = derivative_cutoff_hz;
    return s;
  }
};

/// Simulated U-joint axis behind a velocity-mode motor driver.
struct AxisParams {
  TransmissionSpec spec = ujoint_transmission();
  FrictionParams friction;
  double inertia = 0.035;                 // kg·m² at the joint
  double torque_constant = 0.0076;        // N·m/A at the motor
  double current_noise_sigma = 0.002;     // A
  double current_offset = 0.0;            // A, sensor bias
  double servo_kp = 10.0;                 // N·m per rad/s, driver velocity loop
  double servo_ki = 150.0;                // N·m per rad
  int substeps = 8;                       // physics steps per control tick
  double motor_counts_per_rev = 2048.0;   // optical encoder, quadrature counts

  double max_speed_rad_s() const { return rpm_to_rad_s(spec.max_output_rpm()); }
};

/// Screw drive: the driver's velocity loop is ideal first order.
struct ScrewParams {
  TransmissionSpec spec = screw_transmission();
  double time_constant = 0.05;           // s
  double inertia = 0.004;                // kg·m² about the screw axis
  double torque_constant = 0.0045;       // N·m/A at the motor
  double drag_coulomb = 0.3;             // N·m of soil drag while turning
  double drag_viscous = 0.02;            // N·m per rad/s
  double current_noise_sigma = 0.002;    // A
};

/// External torque on the pitch and yaw axes as a function of the true joint angles.
using LoadModel = std::function<std::array<double, 2>(const JointAngles&)>;

/// State of one joint axis, including the stick-slip state of its transmission.
class JointAxis {
 public:
  explicit JointAxis(AxisParams params = {}) : p_(std::move(params)) {}

  const AxisParams& params() const { return p_; }

  void reset(double angle) {
    angle_ = angle;
    velocity_ = 0.0;
    servo_integral_ = 0.0;
    motor_torque_ = 0.0;
    motor_slip_ = 0.0;
  }

  /// Pre-loads the driver so the axis starts holding a static load.
  void preload(double holding_torque) {
    if (p_.servo_ki > 0.0) servo_integral_ = holding_torque / p_.servo_ki;
    motor_torque_ = holding_torque;
  }

  /// Advances the axis by dt, split into physics substeps.
  void step(double duty, double external_torque, double dt) {
    const int n = std::max(1, p_.substeps);
    const double h = dt / n;
    const double omega_cmd = std::clamp(duty, -1.0, 1.0) * p_.max_speed_rad_s();
    const double peak = p_.spec.peak_torque;
    for (int i = 0; i < n; ++i) {
      const double err = omega_cmd - velocity_;
      if (p_.servo_ki > 0.0) {
        servo_integral_ = std::clamp(servo_integral_ + err * h, -peak / p_.servo_ki, peak / p_.servo_ki);
      }
      motor_torque_ = std::clamp(p_.servo_kp * err + p_.servo_ki * servo_integral_, -peak, peak);

      const double net = apply_friction(p_.friction, motor_torque_ + external_torque, velocity_, angle_);
      const bool stationary = std::abs(velocity_) <= p_.friction.stop_velocity;
      if (stationary && net == 0.0) {
        velocity_ = 0.0;
      } else {
        const double v_old = velocity_;
        velocity_ += net / p_.inertia * h;
        if (!stationary && v_old * velocity_ < 0.0) velocity_ = 0.0;
      }
      angle_ += velocity_ * h;
      if (angle_ > kJointLimit) {
        angle_ = kJointLimit;
        velocity_ = std::min(velocity_, 0.0);
      } else if (angle_ < -kJointLimit) {
        angle_ = -kJointLimit;
        velocity_ = std::max(velocity_, 0.0);
      }
    }
  }

  double angle() const { return angle_; }
  double velocity() const { return velocity_; }
  /// Motor torque referred to the joint output.
  double motor_torque() const { return motor_torque_; }
  double ideal_current() const {
    return current_for_output_torque(motor_torque_, p_.torque_constant, p_.spec);
  }

  double measured_angle() const {
    return wrap_angle(dequantize_encoder(quantize_encoder(angle_, kJointEncoderBits), kJointEncoderBits));
  }

  /// Fault injection: the motor side advances by this many joint radians
  /// without the joint moving (belt ratcheting).
  void inject_slip(double joint_radians) { motor_slip_ += joint_radians; }

  EncoderPair encoders() const {
    EncoderPair e;
    e.joint_absolute = quantize_encoder(angle_, kJointEncoderBits);
    e.gear_ratio = p_.spec.total_ratio();
    e.motor_counts_per_rev = p_.motor_counts_per_rev;
    const double motor_angle = (angle_ + motor_slip_) * e.gear_ratio;
    e.motor_incremental = static_cast<std::int64_t>(std::llround(motor_angle / kTwoPi * p_.motor_counts_per_rev));
    return e;
  }

 private:
  AxisParams p_;
  double angle_ = 0.0;
  double velocity_ = 0.0;
  double servo_integral_ = 0.0;
  double motor_torque_ = 0.0;
  double motor_slip_ = 0.0;
};

class ScrewDrive {
 public:
  explicit ScrewDrive(ScrewParams params = {}) : p_(std::move(params)) {}

  const ScrewParams& params() const { return p_; }

  /// Setpoint clamp at the driver: the motor speed limit bounds the screw speed.
  double clamp_rpm(double rpm) const {
    if (std::isnan(rpm)) return 0.0;
    const double limit = p_.spec.max_output_rpm();
    return std::clamp(rpm, -limit, limit);
  }

  void step(double target_rpm, double dt) {
    const double target = rpm_to_rad_s(clamp_rpm(target_rpm));
    const double alpha = p_.time_constant > 0.0 ? 1.0 - std::exp(-dt / p_.time_constant) : 1.0;
    const double prev = speed_;
    speed_ += (target - speed_) * alpha;
    const double accel = (speed_ - prev) / dt;
    const double drag = signum(speed_) * p_.drag_coulomb + p_.drag_viscous * speed_;
    torque_ = std::clamp(p_.inertia * accel + drag, -p_.spec.peak_torque, p_.spec.peak_torque);
  }

  double speed_rad_s() const { return speed_; }
  double speed_rpm() const { return rad_s_to_rpm(speed_); }
  double torque() const { return torque_; }
  double ideal_current() const { return current_for_output_torque(torque_, p_.torque_constant, p_.spec); }

 private:
  ScrewParams p_;
  double speed_ = 0.0;
  double torque_ = 0.0;
};

struct ModuleParams {
  AxisParams pitch_axis;
  AxisParams yaw_axis;
  ScrewParams screw;
  PidGains gains;
  double control_rate_hz = 125.0;
  double interface_rate_hz = 50.0;
  double slip_threshold_rad = deg_to_rad(1.0);
  double command_timeout_s = 0.5;
  double ambient_temperature_c = 25.0;

  double control_period() const { return 1.0 / control_rate_hz; }
  double interface_period() const { return 1.0 / interface_rate_hz; }
};

struct JointCommand {
  int module_id = 0;
  JointAngles q_target;
  double screw_velocity_target = 0.0;  // RPM
  double stamp = 0.0;
};

struct ModuleState {
  int module_id = 0;
  double timestamp = 0.0;
  std::uint64_t control_cycle = 0;
  double control_stamp = 0.0;
  JointAngles q_measured;
  JointAngles q_setpoint;
  std::array<double, 2> joint_velocities{};  // rad/s
  double screw_velocity_measured = 0.0;  // RPM
  double screw_velocity_setpoint = 0.0;  // RPM
  std::array<double, 2> joint_currents{};
  double screw_current = 0.0;
  std::array<double, 2> joint_torque_estimates{};
  Eigen::Quaterniond imu_orientation = Eigen::Quaterniond::Identity();
  double temperature = 25.0;
  std::array<bool, 3> slip_flags{};
};

struct ActuatorEfforts {
  std::array<double, 2> joint_torques{};  // N·m at the joint outputs
  double screw_torque = 0.0;
  std::array<double, 2> joint_duties{};
};

/// One simulated module: a U-joint (pitch, yaw) and a screw, with the
/// embedded controller. control_tick and interface_tick may run on different
/// threads; submit_command may be called from any thread.
class ModuleNode {
 public:
  ModuleNode(int id, ModuleParams params, std::uint64_t seed = 0)
      : id_(id),
        p_(std::move(params)),
        pitch_(p_.pitch_axis),
        yaw_(p_.yaw_axis),
        screw_(p_.screw),
        pid_pitch_(p_.gains.make_state()),
        pid_yaw_(p_.gains.make_state()),
        rng_(seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(id + 1))) {
    publish_snapshot(0.0);
  }

  int id() const { return id_; }
  const ModuleParams& params() const { return p_; }

  void set_load_model(LoadModel load) { load_ = std::move(load); }

  /// Places the joints at the given angles with no motion and aligns the setpoint.
  void reset_joints(const JointAngles& q) {
    const JointAngles qc = clamp_to_limits(q);
    pitch_.reset(qc.pitch);
    yaw_.reset(qc.yaw);
    if (load_) {
      const auto tau = load_(qc);
      pitch_.preload(-tau[0]);
      yaw_.preload(-tau[1]);
    }
    pid_pitch_.reset();
    pid_yaw_.reset();
    std::lock_guard lock(command_mutex_);
    active_.q_target = qc;
    pending_.reset();
  }

  /// Clamps targets into the admissible range; never rejects.
  void submit_command(const JointCommand& cmd) {
    JointCommand c = cmd;
    c.module_id = id_;
    c.q_target = clamp_to_limits(cmd.q_target);
    c.screw_velocity_target = screw_.clamp_rpm(cmd.screw_velocity_target);
    std::lock_guard lock(command_mutex_);
    pending_ = c;
  }

  void set_orientation(const Eigen::Quaterniond& q) {
    std::lock_guard lock(snapshot_mutex_);
    orientation_ = q.normalized();
  }

  /// Runs one control period ending at `now`.
  ActuatorEfforts control_tick(double now) {
    const double dt = p_.control_period();
    if (last_control_time_ && now - *last_control_time_ > 1.5 * dt) ++missed_deadlines_;
    last_control_time_ = now;

    {
      std::lock_guard lock(command_mutex_);
      if (pending_) {
        active_ = *pending_;
        pending_.reset();
        command_received_at_ = now;
      }
    }

    ActuatorEfforts efforts;
    const double duty_p = pid_step(pid_pitch_, active_.q_target.pitch, pitch_.measured_angle(), dt);
    const double duty_y = pid_step(pid_yaw_, active_.q_target.yaw, yaw_.measured_angle(), dt);
    const std::array<double, 2> ext =
        load_ ? load_(JointAngles{pitch_.angle(), yaw_.angle()}) : std::array<double, 2>{0.0, 0.0};
    pitch_.step(duty_p, ext[0], dt);
    yaw_.step(duty_y, ext[1], dt);
    screw_.step(active_.screw_velocity_target, dt);

    efforts.joint_torques = {pitch_.motor_torque(), yaw_.motor_torque()};
    efforts.screw_torque = screw_.torque();
    efforts.joint_duties = {duty_p, duty_y};
    ++cycle_;
    publish_snapshot(now);
    return efforts;
  }

  /// Snapshot for publication; stamps are non-decreasing.
  ModuleState interface_tick(double now) {
    std::lock_guard lock(snapshot_mutex_);
    ModuleState s = snapshot_;
    s.timestamp = std::max(now, last_interface_stamp_);
    last_interface_stamp_ = s.timestamp;
    return s;
  }

  /// Latest control-cycle state without stamping it for publication.
  ModuleState snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
  }

  JointAngles true_angles() const { return {pitch_.angle(), yaw_.angle()}; }
  JointAngles setpoint() const { return active_.q_target; }
  const JointAxis& pitch_axis() const { return pitch_; }
  const JointAxis& yaw_axis() const { return yaw_; }
  JointAxis& pitch_axis() { return pitch_; }
  JointAxis& yaw_axis() { return yaw_; }
  const ScrewDrive& screw() const { return screw_; }
  std::uint64_t cycle() const { return cycle_; }
  std::uint64_t missed_deadlines() const { return missed_deadlines_; }

  bool command_stale(double now) const {
    return !command_received_at_ || now - *command_received_at_ > p_.command_timeout_s;
  }

 private:
  double noisy(double value, double sigma) {
    if (sigma <= 0.0) return value;
    return value + std::normal_distribution<double>(0.0, sigma)(rng_);
  }

  void publish_snapshot(double now) {
    ModuleState s;
    s.module_id = id_;
    s.control_cycle = cycle_;
    s.control_stamp = now;
    s.q_measured = {pitch_.measured_angle(), yaw_.measured_angle()};
    s.q_setpoint = active_.q_target;
    s.joint_velocities = {pitch_.velocity(), yaw_.velocity()};
    s.screw_velocity_measured = screw_.speed_rpm();
    s.screw_velocity_setpoint = active_.screw_velocity_target;
    s.joint_currents = {noisy(pitch_.ideal_current(), p_.pitch_axis.current_noise_sigma) + p_.pitch_axis.current_offset,
                        noisy(yaw_.ideal_current(), p_.yaw_axis.current_noise_sigma) + p_.yaw_axis.current_offset};
    s.screw_current = noisy(screw_.ideal_current(), p_.screw.current_noise_sigma);
    s.joint_torque_estimates = {
        estimate_torque_from_current(s.joint_currents[0], p_.pitch_axis.torque_constant, p_.pitch_axis.spec),
        estimate_torque_from_current(s.joint_currents[1], p_.yaw_axis.torque_constant, p_.yaw_axis.spec)};
    s.temperature = p_.ambient_temperature_c;
    s.slip_flags = {detect_slip(pitch_.encoders(), p_.slip_threshold_rad) == SlipStatus::slip,
                    detect_slip(yaw_.encoders(), p_.slip_threshold_rad) == SlipStatus::slip, false};
    std::lock_guard lock(snapshot_mutex_);
    s.imu_orientation = orientation_;
    s.timestamp = snapshot_.timestamp;
    snapshot_ = s;
  }

  int id_;
  ModuleParams p_;
  JointAxis pitch_;
  JointAxis yaw_;
  ScrewDrive screw_;
  PidState pid_pitch_;
  PidState pid_yaw_;
  LoadModel load_;
  std::mt19937_64 rng_;

  std::mutex command_mutex_;
  std::optional<JointCommand> pending_;
  JointCommand active_;
  std::optional<double> command_received_at_;

  mutable std::mutex snapshot_mutex_;
  ModuleState snapshot_;
  Eigen::Quaterniond orientation_ = Eigen::Quaterniond::Identity();
  double last_interface_stamp_ = 0.0;

  std::optional<double> last_control_time_;
  std::uint64_t cycle_ = 0;
  std::uint64_t missed_deadlines_ = 0;
};

}  // namespace arcsim
