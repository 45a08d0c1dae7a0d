#pragma once

// A module node on the live bus: the control stack on wall-clock threads,
// commands from /module/<id>/cmd, state and IMU published at the interface rate.

#include <atomic>
#include <memory>
#include <thread>

#include "arcsim/bus.hpp"
#include "arcsim/control.hpp"

namespace arcsim {

class LiveModule {
 public:
  LiveModule(int id, ModuleParams params, ClientOptions bus, std::uint64_t seed = 0);
  ~LiveModule();
  LiveModule(const LiveModule&) = delete;
  LiveModule& operator=(const LiveModule&) = delete;

  /// Connects, registers the id and starts the control and interface threads.
  /// Throws RegistrationError if the id is taken or the broker is unreachable.
  void start();
  void stop();

  int id() const { return id_; }
  ModuleNode& node() { return node_; }
  BusClient& bus() { return bus_; }
  std::uint64_t commands_rejected() const { return rejected_; }

 private:
  void control_loop();
  void interface_loop();
  double elapsed() const;

  int id_;
  ModuleNode node_;
  BusClient bus_;
  std::chrono::steady_clock::time_point epoch_;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> rejected_{0};
  std::thread control_thread_;
  std::thread interface_thread_;
};

}  // namespace arcsim
