#pragma once

// Motor, gearbox and belt transmission models: speed limits, torque ratings,
// friction as seen through the transmission, encoders and slip detection.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <vector>

#include "arcsim/errors.hpp"

namespace arcsim {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double rpm_to_rad_s(double rpm) { return rpm * kTwoPi / 60.0; }
inline double rad_s_to_rpm(double w) { return w * 60.0 / kTwoPi; }

struct TransmissionSpec {
  double motor_speed_limit_rpm = 12000.0;
  std::vector<double> stage_ratios;
  double continuous_torque = 0.0;  // N·m at output
  double peak_torque = 0.0;        // N·m at output
  double efficiency = 1.0;

  double total_ratio() const {
    return std::accumulate(stage_ratios.begin(), stage_ratios.end(), 1.0, std::multiplies<>());
  }

  double max_output_rpm() const { return motor_speed_limit_rpm / total_ratio(); }

  void validate() const {
    if (!(efficiency > 0.0 && efficiency <= 1.0)) throw DomainError("efficiency must be in (0, 1]");
    if (!(peak_torque >= continuous_torque)) throw DomainError("peak torque below continuous torque");
    if (!(motor_speed_limit_rpm > 0.0)) throw DomainError("motor speed limit must be positive");
    for (double r : stage_ratios) {
      if (!(r > 0.0)) throw DomainError("stage ratios must be positive");
    }
  }
};

/// ECXSP16L with a 35:1 gearhead driving the screw through a 3.4:1 pinion-ring gear.
inline TransmissionSpec screw_transmission() {
  return {12000.0, {35.0, 3.4}, 1.6, 2.0, 0.8};
}

/// ECXSP22M with a 44:1 gearhead and a 3.125:1 GT2 belt stage.
inline TransmissionSpec ujoint_transmission() {
  return {12000.0, {44.0, 3.125}, 2.1, 2.7, 0.8};
}

/// Output speed for a requested motor speed after the electronic speed limit.
inline double output_speed(const TransmissionSpec& spec, double motor_rpm) {
  const double limit = spec.motor_speed_limit_rpm;
  double clamped = motor_rpm;
  if (clamped > limit) clamped = limit;
  if (clamped < -limit) clamped = -limit;
  return clamped / spec.total_ratio();
}

/// Axial advance speed (m/s) of a screw thread with the given helical pitch (mm).
inline double screw_lead_speed(double screw_rpm, double helical_pitch_mm) {
  if (!(helical_pitch_mm > 0.0)) throw DomainError("helical pitch must be positive");
  return helical_pitch_mm / 1000.0 * screw_rpm / 60.0;
}

inline constexpr double kScrewHelicalPitchMm = 137.0;
inline constexpr double kScrewOuterDiameterMm = 128.0;
inline constexpr double kScrewRootDiameterMm = 112.5;
inline constexpr double kScrewHelixAngleDeg = 22.0;

struct FrictionParams {
  double coulomb = 0.48;            // N·m
  double viscous = 0.0;             // N·m per rad/s
  double stiction = 0.55;           // N·m
  double cogging_amplitude = 0.0;   // N·m
  double cogging_frequency = 0.0;   // cycles per rad of output angle
  double stop_velocity = 1e-3;      // rad/s, stick band of the Karnopp model

  void validate() const {
    if (coulomb < 0 || viscous < 0 || stiction < 0 || cogging_amplitude < 0) {
      throw DomainError("friction parameters must be non-negative");
    }
    if (stiction < coulomb) throw DomainError("stiction must be at least the coulomb level");
  }

  static FrictionParams frictionless() { return {0.0, 0.0, 0.0, 0.0, 0.0, 1e-3}; }
};

inline double signum(double v) { return (v > 0.0) - (v < 0.0); }

/// Karnopp stick-slip friction. Returns the net torque that reaches the
/// joint for a given applied torque and joint velocity.
inline double apply_friction(const FrictionParams& p, double applied_torque, double velocity,
                             double position = 0.0) {
  if (std::abs(velocity) > p.stop_velocity) {
    const double cogging =
        p.cogging_amplitude == 0.0 ? 0.0
                                   : p.cogging_amplitude * std::sin(kTwoPi * p.cogging_frequency * position);
    return applied_torque - signum(velocity) * p.coulomb - p.viscous * velocity - cogging;
  }
  if (std::abs(applied_torque) <= p.stiction) return 0.0;
  return applied_torque - signum(applied_torque) * p.coulomb;
}

/// Output torque inferred from motor current through the transmission.
inline double estimate_torque_from_current(double current, double torque_constant,
                                           const TransmissionSpec& spec) {
  return torque_constant * current * spec.total_ratio() * spec.efficiency;
}

inline double current_for_output_torque(double torque, double torque_constant,
                                        const TransmissionSpec& spec) {
  return torque / (torque_constant * spec.total_ratio() * spec.efficiency);
}

inline double encoder_tick_rad(int bits) { return kTwoPi / std::ldexp(1.0, bits); }

/// Absolute encoder reading in [0, 2^bits).
inline std::uint32_t quantize_encoder(double angle, int bits) {
  if (bits < 1 || bits > 32) throw DomainError("encoder bits must be in [1, 32]");
  const std::int64_t counts = std::int64_t{1} << bits;
  const auto ticks = static_cast<std::int64_t>(std::llround(angle / encoder_tick_rad(bits)));
  std::int64_t wrapped = ticks % counts;
  if (wrapped < 0) wrapped += counts;
  return static_cast<std::uint32_t>(wrapped);
}

inline double dequantize_encoder(std::uint32_t ticks, int bits) {
  return static_cast<double>(ticks) * encoder_tick_rad(bits);
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double angle) {
  double a = std::remainder(angle, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  return a;
}

inline constexpr int kJointEncoderBits = 14;

struct EncoderPair {
  std::uint32_t joint_absolute = 0;     // magnetic, joint side
  std::int64_t motor_incremental = 0;   // optical, motor side, counts since power-up
  double gear_ratio = 1.0;              // motor revolutions per joint revolution
  int joint_bits = kJointEncoderBits;
  double motor_counts_per_rev = 2048.0;

  double joint_angle() const { return wrap_angle(dequantize_encoder(joint_absolute, joint_bits)); }
  double motor_angle() const { return static_cast<double>(motor_incremental) * kTwoPi / motor_counts_per_rev; }
};

enum class SlipStatus { ok, slip };

/// Compares the joint-side absolute angle with the motor-side angle mapped
/// through the gear ratio. Discrepancies exactly at the threshold pass.
inline SlipStatus detect_slip(const EncoderPair& pair, double threshold) {
  if (!(threshold > 0.0)) throw DomainError("slip threshold must be positive");
  const double discrepancy = wrap_angle(pair.joint_angle() - pair.motor_angle() / pair.gear_ratio);
  return std::abs(discrepancy) > threshold ? SlipStatus::slip : SlipStatus::ok;
}

}  // namespace arcsim
