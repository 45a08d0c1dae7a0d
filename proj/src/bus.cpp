#include "arcsim/bus.hpp"

#include <spdlog/spdlog.h>

#include <boost/asio.hpp>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

namespace arcsim {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;

namespace {

bool is_control_topic(std::string_view topic) {
  return topic == kSubscribeTopic || topic == kUnsubscribeTopic || topic == kRegisterTopic;
}

std::vector<std::string> module_topics(int id) {
  return {module_topic(id, "state"), module_topic(id, "cmd"), module_topic(id, "imu")};
}

}  // namespace

// ---------------------------------------------------------------------------
// Broker

class BrokerSession;

struct Broker::Impl {
  explicit Impl(BrokerOptions o) : options(std::move(o)) {}

  BrokerOptions options;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::thread thread;
  std::atomic<std::uint16_t> bound_port{0};

  std::atomic<std::uint64_t> frames_in{0};
  std::atomic<std::uint64_t> frames_out{0};
  std::atomic<std::uint64_t> dropped{0};
  std::atomic<std::uint64_t> rejected{0};
  std::atomic<std::uint64_t> connections{0};

  // Touched only on the io thread.
  std::set<std::shared_ptr<BrokerSession>> sessions;
  std::map<int, BrokerSession*> registry;
  std::map<std::string, std::uint64_t> seq;

  mutable std::mutex registry_mutex;
  std::vector<int> registry_view;

  void bind();
  void accept();
  void handle(const std::shared_ptr<BrokerSession>& from, std::string frame);
  void reply(BrokerSession& to, const std::string& topic, const std::string& type, Json data);
  void broadcast(const std::string& topic, const std::string& type, Json data);
  void forward(const std::string& topic, const std::shared_ptr<const std::string>& frame);
  void remove(const std::shared_ptr<BrokerSession>& session);
  void publish_registry_view();
  std::shared_ptr<const std::string> own_frame(const std::string& topic, const std::string& type, Json data);
};

class BrokerSession : public std::enable_shared_from_this<BrokerSession> {
 public:
  BrokerSession(tcp::socket socket, Broker::Impl& broker) : socket_(std::move(socket)), broker_(broker) {}

  void start() { read_header(); }

  void deliver(std::shared_ptr<const std::string> frame) {
    if (closed_) return;
    if (queue_.size() >= broker_.options.queue_limit) {
      // Drop the oldest frame that is not already being written.
      const std::size_t victim = writing_ ? 1 : 0;
      if (queue_.size() > victim) {
        queue_.erase(queue_.begin() + static_cast<std::ptrdiff_t>(victim));
        ++broker_.dropped;
      }
    }
    queue_.push_back(std::move(frame));
    if (!writing_) write_next();
  }

  bool wants(std::string_view topic) const {
    for (const auto& p : patterns_) {
      if (topic_matches(p, topic)) return true;
    }
    return false;
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    boost::system::error_code ec;
    socket_.shutdown(tcp::socket::shutdown_both, ec);
    socket_.close(ec);
    broker_.remove(shared_from_this());
  }

  void close_after_flush() {
    if (!writing_) {
      close();
    } else {
      closing_ = true;
    }
  }

  std::set<std::string> patterns_;
  std::set<int> modules_;

 private:
  void read_header() {
    auto self = shared_from_this();
    asio::async_read(socket_, asio::buffer(header_), [this, self](boost::system::error_code ec, std::size_t) {
      if (ec) return close();
      const std::uint32_t len = read_frame_length(std::string_view(header_.data(), header_.size()));
      if (len > broker_.options.max_frame) {
        ++broker_.rejected;
        spdlog::warn("broker: closing connection after oversize frame of {} bytes", len);
        broker_.reply(*this, kErrorTopic, "error",
                      {{"message", "frame of " + std::to_string(len) + " bytes exceeds limit"}});
        return close_after_flush();
      }
      body_.resize(len);
      read_body();
    });
  }

  void read_body() {
    auto self = shared_from_this();
    asio::async_read(socket_, asio::buffer(body_), [this, self](boost::system::error_code ec, std::size_t) {
      if (ec) return close();
      std::string frame;
      frame.reserve(kFrameHeaderBytes + body_.size());
      frame.append(header_.data(), header_.size());
      frame += body_;
      broker_.handle(self, std::move(frame));
      if (!closed_ && !closing_) read_header();
    });
  }

  void write_next() {
    writing_ = true;
    auto self = shared_from_this();
    asio::async_write(socket_, asio::buffer(*queue_.front()), [this, self](boost::system::error_code ec, std::size_t) {
      queue_.pop_front();
      if (ec) return close();
      ++broker_.frames_out;
      if (queue_.empty()) {
        writing_ = false;
        if (closing_) close();
      } else {
        write_next();
      }
    });
  }

  tcp::socket socket_;
  Broker::Impl& broker_;
  std::array<char, kFrameHeaderBytes> header_{};
  std::string body_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool writing_ = false;
  bool closing_ = false;
  bool closed_ = false;
};

void Broker::Impl::bind() {
  const tcp::endpoint ep(asio::ip::make_address(options.bind_address), options.port);
  acceptor.open(ep.protocol());
  acceptor.set_option(tcp::acceptor::reuse_address(true));
  acceptor.bind(ep);
  acceptor.listen();
  bound_port = acceptor.local_endpoint().port();
  spdlog::info("broker: listening on {}:{}", options.bind_address, bound_port.load());
  accept();
}

void Broker::Impl::accept() {
  acceptor.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    boost::system::error_code opt_ec;
    socket.set_option(tcp::no_delay(true), opt_ec);
    auto session = std::make_shared<BrokerSession>(std::move(socket), *this);
    sessions.insert(session);
    ++connections;
    spdlog::debug("broker: connection opened ({} open)", connections.load());
    session->start();
    accept();
  });
}

std::shared_ptr<const std::string> Broker::Impl::own_frame(const std::string& topic, const std::string& type,
                                                           Json data) {
  Message m{topic, type, ++seq[topic], 0.0, std::move(data)};
  return std::make_shared<const std::string>(encode_frame(m, options.max_frame));
}

void Broker::Impl::reply(BrokerSession& to, const std::string& topic, const std::string& type, Json data) {
  to.deliver(own_frame(topic, type, std::move(data)));
}

void Broker::Impl::broadcast(const std::string& topic, const std::string& type, Json data) {
  forward(topic, own_frame(topic, type, std::move(data)));
}

void Broker::Impl::forward(const std::string& topic, const std::shared_ptr<const std::string>& frame) {
  // Snapshot first: a failed delivery may remove a session mid-iteration.
  std::vector<std::shared_ptr<BrokerSession>> targets;
  for (const auto& s : sessions) {
    if (s->wants(topic)) targets.push_back(s);
  }
  for (const auto& s : targets) s->deliver(frame);
}

void Broker::Impl::handle(const std::shared_ptr<BrokerSession>& from, std::string frame) {
  Message m;
  try {
    m = decode_payload(std::string_view(frame).substr(kFrameHeaderBytes));
  } catch (const FrameError& e) {
    ++rejected;
    spdlog::debug("broker: rejected frame: {}", e.what());
    reply(*from, kErrorTopic, "error", {{"message", e.what()}});
    return;
  }
  ++frames_in;

  if (!is_control_topic(m.topic)) {
    forward(m.topic, std::make_shared<const std::string>(std::move(frame)));
    return;
  }

  Json response = Json::object();
  if (m.data.contains("request_id")) response["request_id"] = m.data["request_id"];
  auto fail = [&](const std::string& message) {
    response["message"] = message;
    reply(*from, m.topic, "error", response);
  };

  if (m.topic == kSubscribeTopic || m.topic == kUnsubscribeTopic) {
    const auto it = m.data.find("pattern");
    if (it == m.data.end() || !it->is_string() || !is_valid_pattern(it->get<std::string>())) {
      return fail("invalid topic pattern");
    }
    const std::string pattern = it->get<std::string>();
    if (m.topic == kSubscribeTopic) {
      from->patterns_.insert(pattern);
    } else {
      from->patterns_.erase(pattern);
    }
    response["pattern"] = pattern;
    reply(*from, m.topic, "ack", response);
    return;
  }

  // Registration.
  const auto it = m.data.find("module_id");
  if (it == m.data.end() || !it->is_number_integer() || it->get<long long>() < 0 || it->get<long long>() > 999999999) {
    return fail("module_id must be a non-negative integer");
  }
  const int id = it->get<int>();
  if (auto owner = registry.find(id); owner != registry.end() && owner->second != from.get()) {
    return fail("module id " + std::to_string(id) + " is already registered");
  }
  const bool fresh = registry.emplace(id, from.get()).second;
  from->modules_.insert(id);
  // The view is current before the owner can observe its acknowledgement.
  if (fresh) publish_registry_view();
  response["module_id"] = id;
  response["topics"] = module_topics(id);
  reply(*from, m.topic, "ack", response);
  if (fresh) {
    spdlog::info("broker: module {} registered", id);
    broadcast(kRegistryTopic, "module_added", {{"module_id", id}, {"topics", module_topics(id)}});
  }
}

void Broker::Impl::remove(const std::shared_ptr<BrokerSession>& session) {
  if (!sessions.erase(session)) return;
  --connections;
  for (int id : session->modules_) {
    auto it = registry.find(id);
    if (it == registry.end() || it->second != session.get()) continue;
    registry.erase(it);
    spdlog::info("broker: module {} left", id);
    publish_registry_view();
    broadcast(kRegistryTopic, "module_removed", {{"module_id", id}});
  }
}

void Broker::Impl::publish_registry_view() {
  std::vector<int> ids;
  for (const auto& [id, s] : registry) ids.push_back(id);
  std::lock_guard lock(registry_mutex);
  registry_view = std::move(ids);
}

Broker::Broker(BrokerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Broker::~Broker() { stop(); }

void Broker::start() {
  impl_->bind();
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

void Broker::run() {
  impl_->bind();
  impl_->io.run();
}

void Broker::stop() {
  if (!impl_) return;
  asio::post(impl_->io, [impl = impl_.get()] {
    boost::system::error_code ec;
    impl->acceptor.close(ec);
    auto sessions = impl->sessions;
    for (const auto& s : sessions) s->close();
  });
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::uint16_t Broker::port() const { return impl_->bound_port; }

BrokerStats Broker::stats() const {
  return {impl_->frames_in, impl_->frames_out, impl_->dropped, impl_->rejected, impl_->connections};
}

std::vector<int> Broker::registered_modules() const {
  std::lock_guard lock(impl_->registry_mutex);
  return impl_->registry_view;
}

// ---------------------------------------------------------------------------
// Client

struct BusClient::Impl {
  explicit Impl(ClientOptions o) : options(std::move(o)) {}

  using Subscriptions = std::vector<std::pair<std::string, Callback>>;

  ClientOptions options;
  asio::io_context io;
  tcp::socket socket{io};
  std::mutex write_mutex;
  std::map<std::string, std::uint64_t> seqs;  // guarded by write_mutex

  std::mutex state_mutex;
  std::condition_variable cv;
  std::shared_ptr<const Subscriptions> subscriptions = std::make_shared<Subscriptions>();
  std::set<int> registered;
  std::map<std::uint64_t, std::optional<Message>> pending;
  std::uint64_t next_request = 1;

  std::atomic<bool> connected{false};
  std::atomic<bool> stopping{false};
  std::thread reader;

  std::atomic<std::uint64_t> dropped{0};
  std::atomic<std::uint64_t> received{0};
  std::atomic<std::uint64_t> sent{0};
  std::atomic<std::uint64_t> reconnects{0};

  bool send_frame(const std::string& frame) {
    std::lock_guard lock(write_mutex);
    return send_locked(frame);
  }

  bool send_locked(const std::string& frame) {
    if (!connected) {
      ++dropped;
      return false;
    }
    boost::system::error_code ec;
    asio::write(socket, asio::buffer(frame), ec);
    if (ec) {
      ++dropped;
      connected = false;
      socket.shutdown(tcp::socket::shutdown_both, ec);
      return false;
    }
    ++sent;
    return true;
  }

  bool publish(Message m) {
    std::lock_guard lock(write_mutex);
    m.seq = seqs[m.topic] + 1;
    const std::string frame = encode_frame(m, options.max_frame);
    seqs[m.topic] = m.seq;
    return send_locked(frame);
  }

  /// Sends a control request and waits for the broker's reply.
  std::optional<Message> request(const std::string& topic, Json data) {
    if (std::this_thread::get_id() == reader.get_id()) {
      throw std::logic_error("bus requests cannot be made from a subscription callback");
    }
    std::uint64_t id;
    {
      std::lock_guard lock(state_mutex);
      id = next_request++;
      pending[id];
    }
    data["request_id"] = id;
    publish(Message{topic, "request", 0, 0.0, std::move(data)});
    std::unique_lock lock(state_mutex);
    cv.wait_for(lock, options.request_timeout, [&] { return stopping || pending[id].has_value(); });
    std::optional<Message> reply = std::move(pending[id]);
    pending.erase(id);
    return reply;
  }

  void restore() {
    std::shared_ptr<const Subscriptions> subs;
    std::set<int> ids;
    {
      std::lock_guard lock(state_mutex);
      subs = subscriptions;
      ids = registered;
    }
    std::set<std::string> patterns;
    for (const auto& [p, cb] : *subs) patterns.insert(p);
    for (const auto& p : patterns) publish(Message{kSubscribeTopic, "request", 0, 0.0, {{"pattern", p}}});
    for (int id : ids) publish(Message{kRegisterTopic, "request", 0, 0.0, {{"module_id", id}}});
  }

  void dispatch(const Message& m, std::string_view frame) {
    ++received;
    if (is_control_topic(m.topic)) {
      if (auto it = m.data.find("request_id"); it != m.data.end() && it->is_number_unsigned()) {
        std::lock_guard lock(state_mutex);
        if (auto p = pending.find(it->get<std::uint64_t>()); p != pending.end()) p->second = m;
        cv.notify_all();
      }
      return;
    }
    if (m.topic == kErrorTopic) spdlog::warn("bus: broker reported: {}", m.data.value("message", ""));
    std::shared_ptr<const Subscriptions> subs;
    {
      std::lock_guard lock(state_mutex);
      subs = subscriptions;
    }
    for (const auto& [pattern, callback] : *subs) {
      if (topic_matches(pattern, m.topic)) callback(m, frame);
    }
  }

  void read_loop() {
    std::array<char, kFrameHeaderBytes> header{};
    std::string body;
    for (;;) {
      boost::system::error_code ec;
      asio::read(socket, asio::buffer(header), ec);
      if (ec) return;
      const std::uint32_t len = read_frame_length(std::string_view(header.data(), header.size()));
      if (len > options.max_frame) {
        spdlog::warn("bus: oversize frame from broker ({} bytes), reconnecting", len);
        return;
      }
      body.resize(len);
      asio::read(socket, asio::buffer(body), ec);
      if (ec) return;
      std::string frame(header.data(), header.size());
      frame += body;
      Message m;
      try {
        m = decode_payload(body);
      } catch (const FrameError& e) {
        spdlog::warn("bus: undecodable frame: {}", e.what());
        continue;
      }
      dispatch(m, frame);
    }
  }

  void run() {
    auto backoff = options.reconnect_initial;
    bool ever_connected = false;
    while (!stopping) {
      boost::system::error_code ec;
      {
        std::lock_guard lock(write_mutex);
        socket = tcp::socket(io);
        tcp::resolver resolver(io);
        const auto endpoints = resolver.resolve(options.host, std::to_string(options.port), ec);
        if (!ec) asio::connect(socket, endpoints, ec);
        if (!ec) socket.set_option(tcp::no_delay(true), ec);
        if (!ec && !stopping) connected = true;
      }
      if (ec || stopping) {
        std::unique_lock lock(state_mutex);
        cv.wait_for(lock, backoff, [&] { return stopping.load(); });
        backoff = std::min(backoff * 2, options.reconnect_max);
        continue;
      }
      backoff = options.reconnect_initial;
      if (ever_connected) {
        ++reconnects;
        spdlog::info("bus: reconnected to {}:{}", options.host, options.port);
      }
      ever_connected = true;
      cv.notify_all();
      restore();
      read_loop();
      connected = false;
      std::lock_guard lock(write_mutex);
      socket.close(ec);
    }
  }
};

BusClient::BusClient(ClientOptions options) : impl_(std::make_shared<Impl>(std::move(options))) {}

BusClient::~BusClient() { close(); }

bool BusClient::connect(std::chrono::milliseconds timeout) {
  if (!impl_->reader.joinable()) {
    impl_->stopping = false;
    impl_->reader = std::thread([impl = impl_] { impl->run(); });
  }
  std::unique_lock lock(impl_->state_mutex);
  return impl_->cv.wait_for(lock, timeout, [&] { return impl_->connected.load(); });
}

void BusClient::close() {
  if (!impl_->reader.joinable()) return;
  impl_->stopping = true;
  {
    std::lock_guard lock(impl_->state_mutex);
    impl_->cv.notify_all();
  }
  {
    // Unblocks the reader; the socket itself is closed by its own thread.
    std::lock_guard lock(impl_->write_mutex);
    impl_->connected = false;
    boost::system::error_code ec;
    if (impl_->socket.is_open()) impl_->socket.shutdown(tcp::socket::shutdown_both, ec);
  }
  impl_->reader.join();
}

bool BusClient::connected() const { return impl_->connected; }

bool BusClient::publish(const std::string& topic, const std::string& type, Json data, double stamp) {
  return impl_->publish(Message{topic, type, 0, stamp, std::move(data)});
}

bool BusClient::publish_message(const Message& message) {
  return impl_->send_frame(encode_frame(message, impl_->options.max_frame));
}

void BusClient::subscribe(const std::string& pattern, Callback callback) {
  if (!is_valid_pattern(pattern)) throw FrameError("invalid topic pattern: " + pattern);
  {
    std::lock_guard lock(impl_->state_mutex);
    auto next = std::make_shared<Impl::Subscriptions>(*impl_->subscriptions);
    next->emplace_back(pattern, std::move(callback));
    impl_->subscriptions = std::move(next);
  }
  const auto reply = impl_->request(kSubscribeTopic, {{"pattern", pattern}});
  if (!reply || reply->type != "ack") {
    throw FrameError("subscription to " + pattern + " was not acknowledged" +
                     (reply ? ": " + reply->data.value("message", std::string()) : std::string()));
  }
}

void BusClient::unsubscribe(const std::string& pattern) {
  {
    std::lock_guard lock(impl_->state_mutex);
    auto next = std::make_shared<Impl::Subscriptions>();
    for (const auto& entry : *impl_->subscriptions) {
      if (entry.first != pattern) next->push_back(entry);
    }
    impl_->subscriptions = std::move(next);
  }
  impl_->request(kUnsubscribeTopic, {{"pattern", pattern}});
}

std::vector<std::string> BusClient::register_module(int id) {
  const auto reply = impl_->request(kRegisterTopic, {{"module_id", id}});
  if (!reply) throw RegistrationError("registration of module " + std::to_string(id) + " timed out");
  if (reply->type != "ack") throw RegistrationError(reply->data.value("message", std::string("registration refused")));
  {
    std::lock_guard lock(impl_->state_mutex);
    impl_->registered.insert(id);
  }
  return reply->data.at("topics").get<std::vector<std::string>>();
}

std::uint64_t BusClient::dropped() const { return impl_->dropped; }
std::uint64_t BusClient::received() const { return impl_->received; }
std::uint64_t BusClient::sent() const { return impl_->sent; }
std::uint64_t BusClient::reconnects() const { return impl_->reconnects; }

}  // namespace arcsim
