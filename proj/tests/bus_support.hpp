#pragma once

// Helpers for tests that run a broker and clients on loopback.

#include <boost/asio.hpp>

#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "arcsim/bus.hpp"

namespace bus_test {

inline bool wait_until(const std::function<bool()>& pred, std::chrono::milliseconds timeout) {
  const auto end = std::chrono::steady_clock::now() + timeout;
  while (!pred()) {
    if (std::chrono::steady_clock::now() > end) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  return true;
}

inline arcsim::ClientOptions client_options(std::uint16_t port) {
  arcsim::ClientOptions o;
  o.port = port;
  o.reconnect_initial = std::chrono::milliseconds(20);
  o.reconnect_max = std::chrono::milliseconds(200);
  return o;
}

/// Thread-safe collector of received messages and their raw frames.
struct Inbox {
  std::mutex mutex;
  std::vector<arcsim::Message> messages;
  std::vector<std::string> frames;

  arcsim::BusClient::Callback callback() {
    return [this](const arcsim::Message& m, std::string_view frame) {
      std::lock_guard lock(mutex);
      messages.push_back(m);
      frames.emplace_back(frame);
    };
  }

  std::size_t size() {
    std::lock_guard lock(mutex);
    return messages.size();
  }
};

/// A bare TCP connection for speaking raw bytes to the broker.
struct RawConnection {
  boost::asio::io_context io;
  boost::asio::ip::tcp::socket socket{io};

  explicit RawConnection(std::uint16_t port) {
    socket.connect({boost::asio::ip::make_address("127.0.0.1"), port});
  }

  void send(const std::string& bytes) { boost::asio::write(socket, boost::asio::buffer(bytes)); }

  static std::string frame_of(const std::string& payload) {
    std::string f;
    for (int i = 0; i < 4; ++i) f.push_back(static_cast<char>((payload.size() >> (8 * i)) & 0xFF));
    return f + payload;
  }

  /// Reads one frame; returns its payload.
  std::string read_payload() {
    std::array<char, 4> header{};
    boost::asio::read(socket, boost::asio::buffer(header));
    const std::uint32_t len = arcsim::read_frame_length(std::string_view(header.data(), 4));
    std::string body(len, '\0');
    boost::asio::read(socket, boost::asio::buffer(body));
    return body;
  }

  /// True once the peer has closed the connection.
  bool closed_by_peer() {
    boost::system::error_code ec;
    std::array<char, 1024> sink{};
    for (;;) {
      socket.read_some(boost::asio::buffer(sink), ec);
      if (ec) return ec == boost::asio::error::eof || ec == boost::asio::error::connection_reset;
    }
  }
};

}  // namespace bus_test
