// arcsim command line: experiments on the virtual clock, and the live
// broker / gateway / module processes.

#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "arcsim/bus.hpp"
#include "arcsim/gateway.hpp"
#include "arcsim/harness.hpp"
#include "arcsim/node.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void wait_for_signal() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

void set_log_level(const std::string& level) {
  const auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && level != "off") throw CLI::ValidationError("--log", "unknown level " + level);
  spdlog::set_level(lvl);
}

arcsim::SimConfig load_config(const std::string& path) {
  return path.empty() ? arcsim::SimConfig{} : arcsim::load_sim_config_file(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ARCSnake screw-propelled serpentine robot simulator"};
  app.require_subcommand(1);

  // run
  std::string config_path;
  std::string experiment = "config";
  std::string preset = "straight";
  std::vector<double> vin;
  long long seed = -1;
  std::string out_dir;
  bool csv = false;
  auto* run = app.add_subcommand("run", "Run an experiment on the virtual clock");
  run->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
  run->add_option("--experiment", experiment, "Experiment")
      ->check(CLI::IsMember({"config", "transparency", "pendulum"}));
  run->add_option("--preset", preset, "Body configuration for the config experiment")
      ->check(CLI::IsMember({"straight", "square", "m_shape"}));
  run->add_option("--vin", vin, "Input voltages for the pendulum experiment")->delimiter(',');
  run->add_option("--seed", seed, "Noise seed (overrides the config)");
  run->add_option("--out", out_dir, "Directory for the run record (states, metrics, config, parameters, track)");
  run->add_flag("--csv", csv, "Also write channels.csv");

  // broker
  arcsim::BrokerOptions broker_opts;
  std::string log_level = "info";
  auto* broker = app.add_subcommand("broker", "Run the message broker");
  broker->add_option("--port", broker_opts.port, "TCP port");
  broker->add_option("--bind", broker_opts.bind_address, "Bind address");
  broker->add_option("--max-frame", broker_opts.max_frame, "Largest accepted payload in bytes");
  broker->add_option("--queue-limit", broker_opts.queue_limit, "Frames queued per subscriber before dropping");
  broker->add_option("--log", log_level, "Log level (trace, debug, info, warn, error, off)");

  // gateway
  arcsim::GatewayOptions gw_opts;
  auto* gateway = app.add_subcommand("gateway", "Run the WebSocket gateway for teleoperation clients");
  gateway->add_option("--port", gw_opts.port, "HTTP/WebSocket port");
  gateway->add_option("--bind", gw_opts.bind_address, "Bind address");
  gateway->add_option("--broker-host", gw_opts.bus.host, "Broker host");
  gateway->add_option("--broker-port", gw_opts.bus.port, "Broker port");
  gateway->add_option("--static", gw_opts.static_dir, "Directory with the UI files")->check(CLI::ExistingDirectory);
  gateway->add_option("--rate", gw_opts.stream_rate_hz, "State stream rate in Hz")->check(CLI::PositiveNumber);
  gateway->add_option("--log", log_level, "Log level");

  // node
  int n_modules = 4;
  int first_id = 0;
  arcsim::ClientOptions node_bus;
  std::string node_config;
  auto* node = app.add_subcommand("node", "Run simulated modules on the live bus (wall clock)");
  node->add_option("--modules", n_modules, "Number of modules")->check(CLI::PositiveNumber);
  node->add_option("--first-id", first_id, "Id of the first module")->check(CLI::NonNegativeNumber);
  node->add_option("--config", node_config, "Configuration file")->check(CLI::ExistingFile);
  node->add_option("--broker-host", node_bus.host, "Broker host");
  node->add_option("--broker-port", node_bus.port, "Broker port");
  node->add_option("--log", log_level, "Log level");

  auto* print = app.add_subcommand("print-config", "Print the default configuration file");
  std::string print_from;
  print->add_option("--config", print_from, "Normalize this file instead of the defaults")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    set_log_level(log_level);

    if (*run) {
      arcsim::SimConfig cfg = load_config(config_path);
      if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
      arcsim::ExperimentRecord record;
      if (experiment == "config") {
        record = arcsim::run_configuration_experiment(cfg, arcsim::parse_preset(preset));
      } else if (experiment == "transparency") {
        record = arcsim::run_transparency_experiment(cfg, arcsim::TransparencyOptions::from(cfg));
      } else {
        auto opts = arcsim::PendulumOptions::from(cfg);
        if (!vin.empty()) opts.v_in = vin;
        record = arcsim::run_pendulum_voltage_experiment(cfg, opts);
      }
      std::cout << arcsim::metrics_block(record);
      if (!out_dir.empty()) arcsim::write_record(record, out_dir, csv);
      return record.failed ? 1 : 0;
    }

    if (*broker) {
      arcsim::Broker b(broker_opts);
      b.start();
      wait_for_signal();
      b.stop();
      return 0;
    }

    if (*gateway) {
      arcsim::Gateway g(gw_opts);
      g.start();
      wait_for_signal();
      g.stop();
      return 0;
    }

    if (*node) {
      const arcsim::SimConfig cfg = load_config(node_config);
      std::vector<std::unique_ptr<arcsim::LiveModule>> modules;
      for (int i = 0; i < n_modules; ++i) {
        modules.push_back(std::make_unique<arcsim::LiveModule>(first_id + i, cfg.module, node_bus, cfg.seed));
        modules.back()->start();
        spdlog::info("module {} online", first_id + i);
      }
      wait_for_signal();
      for (auto& m : modules) m->stop();
      return 0;
    }

    if (*print) {
      std::cout << arcsim::to_config_text(load_config(print_from));
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
