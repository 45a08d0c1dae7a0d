#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "arcsim/actuation.hpp"
#include "arcsim/control.hpp"

using namespace arcsim;

TEST(Transmission, SpecsFromTheDriveTrains) {
  const auto s = screw_transmission();
  EXPECT_EQ(s.motor_speed_limit_rpm, 12000.0);
  EXPECT_EQ(s.stage_ratios, (std::vector<double>{35.0, 3.4}));
  EXPECT_EQ(s.continuous_torque, 1.6);
  EXPECT_EQ(s.peak_torque, 2.0);
  const auto u = ujoint_transmission();
  EXPECT_EQ(u.stage_ratios, (std::vector<double>{44.0, 3.125}));
  EXPECT_EQ(u.continuous_torque, 2.1);
  EXPECT_EQ(u.peak_torque, 2.7);
  EXPECT_NO_THROW(s.validate());
  EXPECT_NO_THROW(u.validate());
}

TEST(Transmission, OutputSpeeds) {
  EXPECT_NEAR(output_speed(screw_transmission(), 12000.0), 12000.0 / (35.0 * 3.4), 1e-12);
  EXPECT_NEAR(output_speed(screw_transmission(), 12000.0), 100.84, 0.005);
  EXPECT_NEAR(output_speed(ujoint_transmission(), 12000.0), 87.27, 0.005);
  EXPECT_EQ(output_speed(screw_transmission(), 0.0), 0.0);
}

TEST(Transmission, SpeedClampIsMonotoneAndSaturates) {
  for (const auto& spec : {screw_transmission(), ujoint_transmission()}) {
    double prev = -1e300;
    for (double rpm = -30000.0; rpm <= 30000.0; rpm += 37.0) {
      const double out = output_speed(spec, rpm);
      EXPECT_GE(out, prev);
      EXPECT_LE(std::abs(out), spec.max_output_rpm() + 1e-12);
      prev = out;
    }
    EXPECT_EQ(output_speed(spec, 1e9), spec.motor_speed_limit_rpm / spec.total_ratio());
    EXPECT_EQ(output_speed(spec, -1e9), -spec.motor_speed_limit_rpm / spec.total_ratio());
  }
}

TEST(Transmission, ValidationRejectsBadSpecs) {
  auto s = screw_transmission();
  s.efficiency = 0.0;
  EXPECT_THROW(s.validate(), DomainError);
  s = screw_transmission();
  s.peak_torque = 1.0;
  EXPECT_THROW(s.validate(), DomainError);
  s = screw_transmission();
  s.stage_ratios = {35.0, -1.0};
  EXPECT_THROW(s.validate(), DomainError);
}

TEST(ScrewLead, Speeds) {
  EXPECT_NEAR(screw_lead_speed(100.84, 137.0), 0.2303, 0.0001);
  EXPECT_NEAR(screw_lead_speed(output_speed(screw_transmission(), 12000.0), kScrewHelicalPitchMm), 0.2303, 0.0005);
  EXPECT_EQ(screw_lead_speed(0.0, 137.0), 0.0);
  EXPECT_NEAR(screw_lead_speed(60.0, 100.0), 0.100, 1e-12);
  EXPECT_THROW(screw_lead_speed(10.0, 0.0), DomainError);
  EXPECT_THROW(screw_lead_speed(10.0, -5.0), DomainError);
}

TEST(Friction, Examples) {
  const FrictionParams p;
  EXPECT_EQ(p.coulomb, 0.48);
  EXPECT_NEAR(apply_friction(p, 1.0, 0.5), 0.52, 1e-12);
  EXPECT_NEAR(apply_friction(p, 1.0, -0.5), 1.48, 1e-12);
  EXPECT_EQ(apply_friction(p, 0.0, 0.0), 0.0);
  EXPECT_EQ(apply_friction(p, 0.55, 0.0), 0.0);  // stiction holds up to and including its level
  EXPECT_NEAR(apply_friction(p, 0.6, 0.0), 0.12, 1e-12);
  FrictionParams v = p;
  v.viscous = 0.1;
  EXPECT_NEAR(apply_friction(v, 1.0, 2.0), 0.52 - 0.2, 1e-12);
}

TEST(Friction, ValidationRejectsInconsistentParameters) {
  FrictionParams p;
  p.stiction = 0.3;
  EXPECT_THROW(p.validate(), DomainError);
  p = FrictionParams{};
  p.viscous = -1.0;
  EXPECT_THROW(p.validate(), DomainError);
}

// When stuck, friction never transmits more than is applied and never flips
// its sign. When sliding it only ever removes energy: (out - in) * v <= 0.
TEST(Friction, PassivityProperty) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> torque(-5.0, 5.0);
  std::uniform_real_distribution<double> vel(-3.0, 3.0);
  std::uniform_real_distribution<double> coef(0.0, 1.0);
  for (int i = 0; i < 20000; ++i) {
    FrictionParams p;
    p.coulomb = coef(rng);
    p.stiction = p.coulomb + coef(rng) * 0.3;
    p.viscous = coef(rng) * 0.2;
    const double in = torque(rng);

    const double stuck = apply_friction(p, in, 0.0);
    EXPECT_LE(std::abs(stuck), std::abs(in));
    EXPECT_TRUE(stuck == 0.0 || signum(stuck) == signum(in));

    const double v = vel(rng);
    if (std::abs(v) <= p.stop_velocity) continue;
    const double out = apply_friction(p, in, v);
    EXPECT_LE((out - in) * v, 1e-15);
  }
}

// Dense quasi-static sweep of a gravity load through the friction model,
// with the joint driven kinematically slowly in both directions. Each
// sample solves for the actuator torque that keeps the joint sliding at the
// commanded velocity; the loop width is the gap between the two branches.
TEST(Friction, DenseSweepLoopWidthIsTwiceCoulomb) {
  const FrictionParams p;
  const double mgl = 0.5 * 9.81 * 0.3;
  const double amplitude = 1.0;
  const int n = 20001;
  std::map<int, std::pair<double, double>> branches;  // bin -> (up, down)
  for (int dir : {+1, -1}) {
    for (int i = 0; i < n; ++i) {
      const double q = -amplitude + 2.0 * amplitude * i / (n - 1);
      const double v = dir * 0.01;
      const double load = mgl * std::sin(q);
      // Bisection for the actuator torque that leaves zero net torque.
      double lo = -10.0, hi = 10.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double net = apply_friction(p, mid + load, v, q);
        (net > 0.0 ? hi : lo) = mid;
      }
      const double applied = 0.5 * (lo + hi);
      auto& b = branches[i / 200];
      (dir > 0 ? b.first : b.second) = applied;
    }
  }
  for (const auto& [bin, b] : branches) {
    EXPECT_NEAR(b.first - b.second, 2.0 * p.coulomb, 0.02 * 2.0 * p.coulomb) << "bin " << bin;
  }
}

TEST(Friction, SimulatedAxisSweepLoopWidth) {
  // The actuator model with its drive: a slow sinusoidal sweep of a gravity
  // load; the loop width, from motor torque on each branch, is 2 * coulomb.
  AxisParams ap;
  ap.inertia = 0.035 + 0.5 * 0.3 * 0.3;
  JointAxis axis(ap);
  const double mgl = 0.5 * 9.81 * 0.3;
  const double amp = 1.0;
  const double period = 60.0;
  const double dt = 1e-3;
  axis.reset(-amp);
  axis.preload(-mgl * std::sin(-amp));
  std::map<long, std::array<double, 4>> bins;
  for (double t = dt; t <= period; t += dt) {
    const double target = -amp * std::cos(2 * std::numbers::pi * t / period);
    const double duty = 3.0 * (target - axis.angle());
    axis.step(duty, mgl * std::sin(axis.angle()), dt);
    const double v = axis.velocity();
    const long key = std::lround(std::floor(rad_to_deg(axis.angle())));
    if (std::abs(axis.angle()) > 0.8 * amp) continue;
    const double tau = axis.motor_torque();
    if (v > 1e-3) {
      bins[key][0] += tau;
      bins[key][1] += 1;
    } else if (v < -1e-3) {
      bins[key][2] += tau;
      bins[key][3] += 1;
    }
  }
  int compared = 0;
  for (const auto& [key, b] : bins) {
    if (b[1] < 5 || b[3] < 5) continue;
    ++compared;
    EXPECT_NEAR(b[0] / b[1] - b[2] / b[3], 0.96, 0.02 * 0.96) << "bin " << key;
  }
  EXPECT_GT(compared, 60);
}

TEST(TorqueEstimate, FormulaAndInverse) {
  const auto u = ujoint_transmission();
  const double kt = 0.0076;
  EXPECT_EQ(estimate_torque_from_current(0.0, kt, u), 0.0);
  const double current = 2.1 / (kt * 44.0 * 3.125 * u.efficiency);
  EXPECT_NEAR(estimate_torque_from_current(current, kt, u), 2.1, 1e-12);
  EXPECT_NEAR(current_for_output_torque(2.1, kt, u), current, 1e-15);
  // Continuous torque stays inside a 5 A driver class.
  EXPECT_LT(current, 5.0);
}

TEST(Encoder, TickAndQuantization) {
  EXPECT_NEAR(rad_to_deg(encoder_tick_rad(14)), 360.0 / 16384.0, 1e-15);
  EXPECT_NEAR(rad_to_deg(encoder_tick_rad(14)), 0.02197, 0.0005);
  EXPECT_EQ(quantize_encoder(0.0, 14), 0u);
  EXPECT_EQ(quantize_encoder(std::numbers::pi, 14), 8192u);
  EXPECT_EQ(quantize_encoder(-encoder_tick_rad(14), 14), 16383u);
  EXPECT_EQ(quantize_encoder(2 * std::numbers::pi, 14), 0u);
  EXPECT_THROW(quantize_encoder(0.0, 0), DomainError);
  EXPECT_THROW(quantize_encoder(0.0, 33), DomainError);
  EXPECT_NO_THROW(quantize_encoder(1.0, 32));
}

TEST(Encoder, RoundTripWithinHalfTick) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2 * std::numbers::pi);
  for (int bits : {8, 12, 14, 20}) {
    const double half = encoder_tick_rad(bits) / 2;
    for (int i = 0; i < 20000; ++i) {
      const double theta = u(rng);
      const double back = dequantize_encoder(quantize_encoder(theta, bits), bits);
      EXPECT_LE(std::abs(wrap_angle(back - theta)), half + 1e-12);
    }
  }
}

TEST(Slip, Detection) {
  EncoderPair pair;
  pair.gear_ratio = 137.5;
  pair.motor_counts_per_rev = 2048.0;
  const double q = 0.3;
  pair.joint_absolute = quantize_encoder(q, 14);
  pair.motor_incremental = std::llround(q * pair.gear_ratio / kTwoPi * 2048.0);
  EXPECT_EQ(detect_slip(pair, deg_to_rad(1.0)), SlipStatus::ok);

  // Motor advanced 10 degrees (joint-referred) while the joint stayed put.
  pair.motor_incremental += std::llround(deg_to_rad(10.0) * pair.gear_ratio / kTwoPi * 2048.0);
  EXPECT_EQ(detect_slip(pair, deg_to_rad(1.0)), SlipStatus::slip);

  EXPECT_THROW(detect_slip(pair, 0.0), DomainError);
}

TEST(Slip, ExactlyAtThresholdPasses) {
  EncoderPair pair;
  pair.gear_ratio = 1.0;
  pair.motor_counts_per_rev = 360.0;
  pair.joint_absolute = 0;
  pair.motor_incremental = 1;  // exactly one degree
  const double threshold = pair.motor_angle();
  EXPECT_EQ(detect_slip(pair, threshold), SlipStatus::ok);
  EXPECT_EQ(detect_slip(pair, std::nextafter(threshold, 0.0)), SlipStatus::slip);
}

TEST(Slip, AxisFaultInjectionRaisesFlag) {
  JointAxis axis;
  axis.reset(0.2);
  EXPECT_EQ(detect_slip(axis.encoders(), deg_to_rad(1.0)), SlipStatus::ok);
  axis.inject_slip(deg_to_rad(5.0));
  EXPECT_EQ(detect_slip(axis.encoders(), deg_to_rad(1.0)), SlipStatus::slip);
}

TEST(Saturation, ActuatorsNeverExceedPeakTorque) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> duty(-3.0, 3.0);
  std::uniform_real_distribution<double> ext(-4.0, 4.0);
  std::uniform_real_distribution<double> rpm(-500.0, 500.0);
  JointAxis axis;
  ScrewDrive screw;
  for (int i = 0; i < 20000; ++i) {
    axis.step(duty(rng), ext(rng), 0.008);
    screw.step(rpm(rng), 0.008);
    ASSERT_LE(std::abs(axis.motor_torque()), axis.params().spec.peak_torque);
    ASSERT_LE(std::abs(screw.torque()), screw.params().spec.peak_torque);
    ASSERT_LE(std::abs(axis.angle()), std::numbers::pi / 2);
  }
}
