// Joint PID tuning on the simulated single-axis plant.
//
// 1. Ziegler-Nichols: raise a P-only gain until a step response sustains
//    oscillation; that gain and its period are Ku and Tu.
// 2. Detune: scan kp/kd below the "no overshoot" Ziegler-Nichols point and
//    keep every pair with no sustained oscillation, overshoot <= 15%
//    and a steady error within one encoder tick.
// 3. Validate: walk the admissible pairs from fastest to slowest and keep the
//    first that also passes the full experiments (every preset settles within
//    2 s, transparency width 0.96 +/- 5% and max error <= 0.62 N*m). A stiff
//    position loop fights the friction model and inflates the current-based
//    torque error, so the single-axis optimum is usually not the answer.
//
// Prints the scan and the chosen gains as config lines.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "CLI11.hpp"
#include "arcsim/harness.hpp"

using namespace arcsim;

namespace {

struct Candidate {
  PidGains gains;
  double settle = 0.0;
};

/// Empty when the gains pass every experiment, otherwise the first reason they do not.
std::string validate(SimConfig config, const PidGains& gains) {
  config.module.gains = gains;
  const double tick = encoder_tick_rad(kJointEncoderBits);
  for (const Preset p : {Preset::straight, Preset::square, Preset::m_shape}) {
    const ExperimentRecord r = run_configuration_experiment(config, p);
    if (r.failed) return std::string(to_string(p)) + ": " + r.failure;
    if (!r.metrics["converged"].get<bool>() || r.metrics["settle_time_s"].get<double>() > 2.0 ||
        r.metrics["max_steady_joint_error_rad"].get<double>() > tick) {
      return std::string(to_string(p)) + " does not settle";
    }
  }
  const ExperimentRecord t = run_transparency_experiment(config, TransparencyOptions::from(config));
  const double width = t.metrics["hysteresis_width_nm"].get<double>();
  const double err = t.metrics["max_error_nm"].get<double>();
  if (std::abs(width - 0.96) > 0.05 * 0.96 || err > 0.62) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "transparency width %.3f, max error %.3f", width, err);
    return buf;
  }
  return {};
}

struct StepResponse {
  double overshoot = 0.0;        // fraction of the step
  double settle_time = INFINITY; // s until the error stays within one tick
  double steady_error = INFINITY;
  double late_swing = 0.0;       // peak-to-peak of the error over the last second
  int late_crossings = 0;        // sign changes of the error over the last second
};

StepResponse step_response(const ModuleParams& module, const PidGains& gains, double step, double duration) {
  JointAxis axis(module.pitch_axis);
  axis.reset(0.0);
  PidState pid = gains.make_state();
  const double dt = module.control_period();
  const double tick = encoder_tick_rad(kJointEncoderBits);
  const auto steps = static_cast<int>(std::lround(duration / dt));
  const int late_from = steps - static_cast<int>(std::lround(1.0 / dt));

  StepResponse r;
  double last_outside = 0.0, lo = INFINITY, hi = -INFINITY, prev = 0.0;
  for (int k = 1; k <= steps; ++k) {
    const double q = axis.measured_angle();
    axis.step(pid_step(pid, step, q, dt), 0.0, dt);
    const double e = step - axis.measured_angle();
    const double t = k * dt;
    r.overshoot = std::max(r.overshoot, -e / step);
    if (std::abs(e) > tick) last_outside = t;
    if (k >= late_from) {
      lo = std::min(lo, e);
      hi = std::max(hi, e);
      if (k > late_from && e * prev < 0.0) ++r.late_crossings;
    }
    prev = e;
    r.steady_error = std::abs(e);
  }
  r.settle_time = last_outside < duration - 1.0 ? last_outside : INFINITY;
  r.late_swing = hi - lo;
  return r;
}

bool sustained(const StepResponse& r, double step) { return r.late_crossings >= 2 && r.late_swing > 0.05 * step; }

/// Oscillation period from zero crossings of the error over the last seconds.
double oscillation_period(const ModuleParams& module, const PidGains& gains, double step, double duration) {
  JointAxis axis(module.pitch_axis);
  axis.reset(0.0);
  PidState pid = gains.make_state();
  const double dt = module.control_period();
  const auto steps = static_cast<int>(std::lround(duration / dt));
  std::vector<double> crossings;
  double prev = step;
  for (int k = 1; k <= steps; ++k) {
    axis.step(pid_step(pid, step, axis.measured_angle(), dt), 0.0, dt);
    const double e = step - axis.measured_angle();
    if (k * dt > duration / 2 && e * prev < 0.0) crossings.push_back(k * dt);
    prev = e;
  }
  if (crossings.size() < 3) return NAN;
  return 2.0 * (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint PID tuning on the simulated single-axis plant"};
  std::string config_path;
  double step_deg = 30.0;
  double duration = 4.0;
  bool verbose = false;
  app.add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
  app.add_option("--step-deg", step_deg, "Step size in degrees")->check(CLI::Range(0.5, 85.0));
  app.add_option("--duration", duration, "Simulated seconds per trial")->check(CLI::Range(2.0, 60.0));
  app.add_flag("-v,--verbose", verbose, "Print every scanned pair and every rejection");
  CLI11_PARSE(app, argc, argv);

  const SimConfig config = config_path.empty() ? SimConfig{} : load_sim_config_file(config_path);
  const ModuleParams& module = config.module;
  const double step = deg_to_rad(step_deg);
  const double tick = encoder_tick_rad(kJointEncoderBits);

  // Ultimate gain by geometric search, refined by bisection.
  PidGains p_only = config.module.gains;
  p_only.ki = 0.0;
  p_only.kd = 0.0;
  const auto oscillates = [&](double kp) {
    p_only.kp = kp;
    return sustained(step_response(module, p_only, step, duration), step);
  };
  double lo = 0.25, hi = 0.25;
  while (!oscillates(hi)) {
    lo = hi;
    hi *= 1.5;
    if (hi > 1e4) {
      std::fprintf(stderr, "no sustained oscillation below kp = 1e4\n");
      return 1;
    }
  }
  for (int i = 0; i < 30; ++i) {
    const double mid = 0.5 * (lo + hi);
    (oscillates(mid) ? hi : lo) = mid;
  }
  const double ku = hi;
  p_only.kp = ku * 1.05;
  const double tu = oscillation_period(module, p_only, step, 2.0 * duration);
  std::printf("ultimate gain Ku = %.4f, period Tu = %.4f s\n", ku, tu);
  std::printf("Ziegler-Nichols no-overshoot point: kp %.4f ki %.4f kd %.4f\n", 0.2 * ku, 0.4 * ku / tu,
              0.066 * ku * tu);

  // Detuned scan. ki stays 0: the driver's velocity loop already integrates,
  // and a position integral on quantized feedback hunts by one tick forever.
  std::vector<Candidate> admissible;
  if (verbose) std::printf("%8s %8s %10s %10s %12s\n", "kp", "kd", "overshoot", "settle_s", "steady_tick");
  for (double kp_frac = 0.025; kp_frac <= 0.5 + 1e-9; kp_frac += 0.0125) {
    for (double kd_frac = 0.0; kd_frac <= 0.1 + 1e-9; kd_frac += 0.01) {
      PidGains g = config.module.gains;
      g.kp = kp_frac * ku;
      g.kd = kd_frac * ku * tu;
      g.ki = 0.0;
      const StepResponse r = step_response(module, g, step, duration);
      const bool ok = !sustained(r, step) && r.overshoot <= 0.15 && r.steady_error <= tick && std::isfinite(r.settle_time);
      if (verbose) {
        std::printf("%8.4f %8.4f %9.1f%% %10.3f %12.3f%s\n", g.kp, g.kd, 100.0 * r.overshoot, r.settle_time,
                    r.steady_error / tick, ok ? "" : "  rejected");
      }
      if (ok) admissible.push_back({g, r.settle_time});
    }
  }
  std::stable_sort(admissible.begin(), admissible.end(),
                   [](const Candidate& a, const Candidate& b) { return a.settle < b.settle; });
  std::printf("%zu admissible pairs on the single-axis plant\n", admissible.size());

  const StepResponse current = step_response(module, config.module.gains, step, duration);
  const std::string current_check = validate(config, config.module.gains);
  std::printf("configured gains kp %.4f ki %.4f kd %.4f: overshoot %.1f%%, settle %.3f s, %s\n",
              config.module.gains.kp, config.module.gains.ki, config.module.gains.kd, 100.0 * current.overshoot,
              current.settle_time, current_check.empty() ? "passes the experiments" : current_check.c_str());

  for (const Candidate& c : admissible) {
    const std::string why = validate(config, c.gains);
    if (!why.empty()) {
      if (verbose) std::printf("  kp %.4f kd %.4f rejected: %s\n", c.gains.kp, c.gains.kd, why.c_str());
      continue;
    }
    std::printf("chosen: single-axis settle %.3f s\n", c.settle);
    std::printf("pid.kp = %s\npid.ki = %s\npid.kd = %s\n", detail::fmt_number(c.gains.kp).c_str(),
                detail::fmt_number(c.gains.ki).c_str(), detail::fmt_number(c.gains.kd).c_str());
    return 0;
  }
  std::fprintf(stderr, "no scanned gains pass the experiments\n");
  return 1;
}
