#pragma once

// Topic pub/sub over TCP. A central broker forwards every frame to the
// connections whose subscription patterns match its topic; frames are passed
// through unmodified. Control requests travel on /system/* topics:
//
//   /system/subscribe    {"pattern", "request_id"}   -> ack | error
//   /system/unsubscribe  {"pattern", "request_id"}   -> ack
//   /system/register     {"module_id", "request_id"} -> ack {"topics"} | error
//
// Registrations and departures are announced on /system/registry.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "arcsim/wire.hpp"

namespace arcsim {

inline constexpr const char* kSubscribeTopic = "/system/subscribe";
inline constexpr const char* kUnsubscribeTopic = "/system/unsubscribe";
inline constexpr const char* kRegisterTopic = "/system/register";
inline constexpr const char* kRegistryTopic = "/system/registry";
inline constexpr const char* kErrorTopic = "/system/error";

struct BrokerOptions {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = kDefaultBusPort;  // 0 picks a free port
  std::size_t max_frame = kMaxPayloadBytes;
  std::size_t queue_limit = 8192;        // frames per subscriber before drop-oldest
};

struct BrokerStats {
  std::uint64_t frames_in = 0;
  std::uint64_t frames_out = 0;
  std::uint64_t dropped = 0;       // frames discarded from full subscriber queues
  std::uint64_t rejected = 0;      // malformed or oversize frames
  std::uint64_t connections = 0;   // currently open
};

class Broker {
 public:
  explicit Broker(BrokerOptions options = {});
  ~Broker();
  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  /// Binds and serves on a background thread.
  void start();
  /// Binds and serves on the calling thread until stop() is called.
  void run();
  void stop();

  std::uint16_t port() const;
  BrokerStats stats() const;
  std::vector<int> registered_modules() const;

  // Session types in the implementation share this state.
  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

struct ClientOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultBusPort;
  std::size_t max_frame = kMaxPayloadBytes;
  std::chrono::milliseconds reconnect_initial{50};
  std::chrono::milliseconds reconnect_max{1000};
  std::chrono::milliseconds request_timeout{2000};
};

/// Bus node. Thread-safe; writes are serialized per client. Callbacks run on
/// the client's reader thread and receive the decoded message and the raw frame.
class BusClient {
 public:
  using Callback = std::function<void(const Message&, std::string_view frame)>;

  explicit BusClient(ClientOptions options = {});
  ~BusClient();
  BusClient(const BusClient&) = delete;
  BusClient& operator=(const BusClient&) = delete;

  /// Starts the connection loop and waits for the first connection.
  bool connect(std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));
  void close();
  bool connected() const;

  /// Assigns the next per-topic sequence number. Returns false and counts a
  /// drop when not connected.
  bool publish(const std::string& topic, const std::string& type, Json data, double stamp);
  /// Sends a message as given (the caller owns seq).
  bool publish_message(const Message& message);

  /// Subscribes and waits for the broker's acknowledgement. Throws on an
  /// invalid pattern or timeout. Subscriptions are restored after reconnects.
  void subscribe(const std::string& pattern, Callback callback);
  void unsubscribe(const std::string& pattern);

  /// Claims a module id and returns its topics. Throws RegistrationError if
  /// the id is taken.
  std::vector<std::string> register_module(int id);

  std::uint64_t dropped() const;
  std::uint64_t received() const;
  std::uint64_t sent() const;
  std::uint64_t reconnects() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

}  // namespace arcsim
