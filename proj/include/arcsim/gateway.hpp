#pragma once

// WebSocket bridge between browser clients and the bus. Streams the latest
// state of every module with server-side chain poses, and turns client
// commands into JointCommand messages on /module/<id>/cmd.
//
// Client -> gateway:
//   {"type":"command","module_id":0,"q_target":{"pitch":0,"yaw":0.5},"screw_velocity_target":0}
//   {"type":"preset","name":"square","screw_velocity_target":0}
// Gateway -> client:
//   {"type":"state","stamp":..,"modules":[ModuleState..],"poses":[..],"head_tip":[x,y,z]}
//   {"type":"ack",..} or {"type":"error","message":..}
//
// Plain HTTP requests are served from a static directory (or a built-in page).

#include <cstdint>
#include <memory>
#include <string>

#include "arcsim/bus.hpp"
#include "arcsim/kinematics.hpp"

namespace arcsim {

struct GatewayOptions {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  ClientOptions bus;
  std::string static_dir;     // empty: built-in page
  double stream_rate_hz = 20.0;
  LinkRegistry links;
};

struct GatewayStats {
  std::uint64_t clients = 0;
  std::uint64_t frames_sent = 0;
  std::uint64_t commands_forwarded = 0;
  std::uint64_t errors = 0;
};

class Gateway {
 public:
  explicit Gateway(GatewayOptions options = {});
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Connects to the broker and serves on a background thread.
  void start();
  /// Same, but serves on the calling thread until stop().
  void run();
  void stop();

  std::uint16_t port() const;
  GatewayStats stats() const;

  /// Handles one client text message and returns the reply (exposed for tests).
  std::string handle_client_message(const std::string& text);
  /// The state frame that would be streamed now.
  std::string state_frame();

  // Session types in the implementation share this state.
  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace arcsim
