#include "arcsim/gateway.hpp"

#include <spdlog/spdlog.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "arcsim/messages.hpp"

namespace arcsim {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kClientQueueLimit = 64;

constexpr const char* kFallbackPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>arcsim gateway</title></head>
<body>
<h1>arcsim gateway</h1>
<p>State stream on this address over WebSocket. Latest frame:</p>
<pre id="state">waiting...</pre>
<script>
const ws = new WebSocket(`ws://${location.host}/`);
ws.onmessage = (e) => {
  const f = JSON.parse(e.data);
  if (f.type === "state") document.getElementById("state").textContent = JSON.stringify(f, null, 1);
};
</script>
</body></html>
)";

std::string mime_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

Json error_reply(const std::string& message) { return Json{{"type", "error"}, {"message", message}}; }

Json transform_json(const Transform& t) {
  Json rot = Json::array();
  for (int r = 0; r < 3; ++r) rot.push_back({t.rotation(r, 0), t.rotation(r, 1), t.rotation(r, 2)});
  return Json{{"position", {t.translation.x(), t.translation.y(), t.translation.z()}}, {"rotation", rot}};
}

}  // namespace

class WsSession;

struct Gateway::Impl {
  explicit Impl(GatewayOptions o) : options(std::move(o)), bus(options.bus) {}

  GatewayOptions options;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  asio::steady_timer timer{io};
  std::thread thread;
  BusClient bus;
  std::chrono::steady_clock::time_point epoch = std::chrono::steady_clock::now();
  std::atomic<std::uint16_t> bound_port{0};

  struct Latest {
    ModuleState state;
    Json json;
  };
  std::mutex states_mutex;
  std::map<int, Latest> latest;

  std::set<std::shared_ptr<WsSession>> sessions;  // io thread only

  std::atomic<std::uint64_t> clients{0};
  std::atomic<std::uint64_t> frames_sent{0};
  std::atomic<std::uint64_t> commands{0};
  std::atomic<std::uint64_t> errors{0};

  void connect_bus();
  void bind();
  void accept();
  void tick();
  std::string state_frame();
  std::string handle(const std::string& text);
  void shutdown();

  double now() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch).count(); }
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, Gateway::Impl& gw) : ws_(std::move(socket)), gw_(gw) {}

  void accept(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    auto self = shared_from_this();
    ws_.async_accept(req, [this, self](beast::error_code ec) {
      if (ec) return;
      gw_.sessions.insert(self);
      ++gw_.clients;
      spdlog::info("gateway: client connected ({} open)", gw_.sessions.size());
      read();
    });
  }

  void send(std::shared_ptr<const std::string> text) {
    if (closed_) return;
    if (queue_.size() >= kClientQueueLimit) {
      const std::size_t victim = writing_ ? 1 : 0;
      if (queue_.size() > victim) queue_.erase(queue_.begin() + static_cast<std::ptrdiff_t>(victim));
    }
    queue_.push_back(std::move(text));
    if (!writing_) write_next();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
    beast::get_lowest_layer(ws_).close();
    if (gw_.sessions.erase(shared_from_this())) --gw_.clients;
  }

 private:
  void read() {
    auto self = shared_from_this();
    ws_.async_read(buffer_, [this, self](beast::error_code ec, std::size_t) {
      if (ec) return close();
      const std::string text = beast::buffers_to_string(buffer_.data());
      buffer_.consume(buffer_.size());
      send(std::make_shared<const std::string>(gw_.handle(text)));
      read();
    });
  }

  void write_next() {
    writing_ = true;
    ws_.text(true);
    auto self = shared_from_this();
    ws_.async_write(asio::buffer(*queue_.front()), [this, self](beast::error_code ec, std::size_t) {
      queue_.pop_front();
      if (ec) return close();
      ++gw_.frames_sent;
      if (queue_.empty()) {
        writing_ = false;
      } else {
        write_next();
      }
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  Gateway::Impl& gw_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool writing_ = false;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, Gateway::Impl& gw) : stream_(std::move(socket)), gw_(gw) {}

  void start() {
    stream_.expires_after(std::chrono::seconds(30));
    auto self = shared_from_this();
    http::async_read(stream_, buffer_, req_, [this, self](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (websocket::is_upgrade(req_)) {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), gw_)->accept(std::move(req_));
        return;
      }
      respond();
    });
  }

 private:
  void respond() {
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(false);
    std::string target(req_.target());
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target.empty() || target == "/") target = "/index.html";

    bool served = false;
    if (req_.method() == http::verb::get && target.find("..") == std::string::npos && !gw_.options.static_dir.empty()) {
      const std::filesystem::path path = std::filesystem::path(gw_.options.static_dir) / target.substr(1);
      std::ifstream in(path, std::ios::binary);
      if (std::filesystem::is_regular_file(path) && in) {
        std::ostringstream body;
        body << in.rdbuf();
        res->result(http::status::ok);
        res->set(http::field::content_type, mime_type(path));
        res->body() = body.str();
        served = true;
      }
    }
    if (!served && req_.method() == http::verb::get && target == "/index.html") {
      res->result(http::status::ok);
      res->set(http::field::content_type, "text/html");
      res->body() = kFallbackPage;
      served = true;
    }
    if (!served) {
      res->result(http::status::not_found);
      res->set(http::field::content_type, "text/plain");
      res->body() = "not found\n";
    }
    res->prepare_payload();
    auto self = shared_from_this();
    http::async_write(stream_, *res, [this, self, res](beast::error_code, std::size_t) {
      beast::error_code ec;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  beast::tcp_stream stream_;
  Gateway::Impl& gw_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

void Gateway::Impl::connect_bus() {
  if (!bus.connect()) throw std::runtime_error("gateway: broker unreachable");
  bus.subscribe("/module/*/state", [this](const Message& m, std::string_view) {
    try {
      ModuleState s = module_state_from_json(m.data);
      std::lock_guard lock(states_mutex);
      latest[s.module_id] = {s, m.data};
    } catch (const SchemaError& e) {
      spdlog::warn("gateway: bad state on {}: {}", m.topic, e.what());
    }
  });
  bus.subscribe(kRegistryTopic, [this](const Message& m, std::string_view) {
    if (m.type != "module_removed") return;
    std::lock_guard lock(states_mutex);
    latest.erase(m.data.value("module_id", -1));
  });
}

void Gateway::Impl::bind() {
  const tcp::endpoint ep(asio::ip::make_address(options.bind_address), options.port);
  acceptor.open(ep.protocol());
  acceptor.set_option(tcp::acceptor::reuse_address(true));
  acceptor.bind(ep);
  acceptor.listen();
  bound_port = acceptor.local_endpoint().port();
  spdlog::info("gateway: serving on {}:{}", options.bind_address, bound_port.load());
  accept();
  tick();
}

void Gateway::Impl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    std::make_shared<HttpSession>(std::move(socket), *this)->start();
    accept();
  });
}

void Gateway::Impl::tick() {
  timer.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / options.stream_rate_hz)));
  timer.async_wait([this](beast::error_code ec) {
    if (ec) return;
    if (!sessions.empty()) {
      auto frame = std::make_shared<const std::string>(state_frame());
      auto targets = sessions;
      for (const auto& s : targets) s->send(frame);
    }
    tick();
  });
}

std::string Gateway::Impl::state_frame() {
  std::map<int, Latest> snapshot;
  {
    std::lock_guard lock(states_mutex);
    snapshot = latest;
  }
  Json frame;
  frame["type"] = "state";
  frame["stamp"] = now();
  Json modules = Json::array();
  std::vector<JointAngles> q;
  for (const auto& [id, l] : snapshot) {
    modules.push_back(l.json);
    q.push_back(l.state.q_measured);
  }
  frame["modules"] = modules;
  Json poses = Json::array();
  Json tip = nullptr;
  if (!q.empty()) {
    // The last module's joint carries the head, which has no body of its own.
    ChainModel chain = ChainModel::with_bodies(static_cast<int>(q.size()));
    chain.links = options.links;
    q.pop_back();
    const auto fk = chain_fk(chain, q);
    for (const auto& t : fk) poses.push_back(transform_json(t));
    const Eigen::Vector3d h = head_tip(chain, fk);
    tip = {h.x(), h.y(), h.z()};
  }
  frame["poses"] = poses;
  frame["head_tip"] = tip;
  return frame.dump();
}

std::string Gateway::Impl::handle(const std::string& text) {
  Json reply;
  const Json msg = Json::parse(text, nullptr, false);
  try {
    if (msg.is_discarded() || !msg.is_object()) throw SchemaError("message is not a JSON object");
    const auto type_it = msg.find("type");
    if (type_it == msg.end() || !type_it->is_string()) throw SchemaError("missing string field 'type'");
    const std::string type = type_it->get<std::string>();

    std::set<int> online;
    {
      std::lock_guard lock(states_mutex);
      for (const auto& [id, l] : latest) online.insert(id);
    }

    if (type == "command") {
      JointCommand cmd = joint_command_from_json(msg);
      check_joint_limits(cmd.q_target);
      if (!online.count(cmd.module_id)) throw SchemaError("module " + std::to_string(cmd.module_id) + " is not online");
      cmd.stamp = now();
      if (!bus.publish(module_topic(cmd.module_id, "cmd"), "joint_command", to_json(cmd), cmd.stamp)) {
        throw std::runtime_error("bus unavailable");
      }
      ++commands;
      reply = {{"type", "ack"}, {"command", "command"}, {"module_id", cmd.module_id}};
    } else if (type == "preset") {
      const auto name = msg.find("name");
      if (name == msg.end() || !name->is_string()) throw SchemaError("missing string field 'name'");
      const Preset preset = parse_preset(name->get<std::string>());
      double rpm = 0.0;
      if (msg.contains("screw_velocity_target")) rpm = detail::number_at(msg, "screw_velocity_target");
      if (online.empty()) throw SchemaError("no modules online");
      const std::vector<int> ids(online.begin(), online.end());
      std::vector<JointAngles> targets = preset_configuration(preset, static_cast<int>(ids.size()) - 1);
      targets.push_back({});
      const double stamp = now();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const JointCommand cmd{ids[i], targets[i], rpm, stamp};
        if (!bus.publish(module_topic(ids[i], "cmd"), "joint_command", to_json(cmd), stamp)) {
          throw std::runtime_error("bus unavailable");
        }
        ++commands;
      }
      reply = {{"type", "ack"}, {"command", "preset"}, {"name", to_string(preset)}, {"modules", ids.size()}};
    } else {
      throw SchemaError("unknown message type '" + type + "'");
    }
  } catch (const std::exception& e) {
    ++errors;
    reply = error_reply(e.what());
  }
  return reply.dump();
}

void Gateway::Impl::shutdown() {
  beast::error_code ec;
  acceptor.close(ec);
  timer.cancel();
  auto targets = sessions;
  for (const auto& s : targets) s->close();
}

Gateway::Gateway(GatewayOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Gateway::~Gateway() { stop(); }

void Gateway::start() {
  impl_->connect_bus();
  impl_->bind();
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

void Gateway::run() {
  impl_->connect_bus();
  impl_->bind();
  impl_->io.run();
}

void Gateway::stop() {
  if (!impl_) return;
  asio::post(impl_->io, [impl = impl_.get()] { impl->shutdown(); });
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->bus.close();
}

std::uint16_t Gateway::port() const { return impl_->bound_port; }

GatewayStats Gateway::stats() const {
  return {impl_->clients, impl_->frames_sent, impl_->commands, impl_->errors};
}

std::string Gateway::handle_client_message(const std::string& text) { return impl_->handle(text); }

std::string Gateway::state_frame() { return impl_->state_frame(); }

}  // namespace arcsim
