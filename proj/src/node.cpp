#include "arcsim/node.hpp"

#include <spdlog/spdlog.h>

#include "arcsim/messages.hpp"

namespace arcsim {

namespace {

std::chrono::steady_clock::duration period_of(double seconds) {
  return std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(seconds));
}

}  // namespace

LiveModule::LiveModule(int id, ModuleParams params, ClientOptions bus, std::uint64_t seed)
    : id_(id), node_(id, std::move(params), seed), bus_(std::move(bus)) {}

LiveModule::~LiveModule() { stop(); }

double LiveModule::elapsed() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
}

void LiveModule::start() {
  if (running_) return;
  if (!bus_.connect()) throw RegistrationError("module " + std::to_string(id_) + ": broker unreachable");
  bus_.register_module(id_);
  bus_.subscribe(module_topic(id_, "cmd"), [this](const Message& m, std::string_view) {
    try {
      JointCommand c = joint_command_from_json(m.data);
      node_.submit_command(c);
    } catch (const SchemaError& e) {
      ++rejected_;
      spdlog::warn("module {}: rejected command: {}", id_, e.what());
    }
  });
  epoch_ = std::chrono::steady_clock::now();
  running_ = true;
  control_thread_ = std::thread([this] { control_loop(); });
  interface_thread_ = std::thread([this] { interface_loop(); });
}

void LiveModule::stop() {
  running_ = false;
  if (control_thread_.joinable()) control_thread_.join();
  if (interface_thread_.joinable()) interface_thread_.join();
  bus_.close();
}

void LiveModule::control_loop() {
  const auto period = period_of(node_.params().control_period());
  auto next = epoch_ + period;
  while (running_) {
    std::this_thread::sleep_until(next);
    node_.control_tick(elapsed());
    next += period;
    // After a stall, resume on the grid instead of bursting to catch up.
    const auto now = std::chrono::steady_clock::now();
    while (next + period < now) next += period;
  }
}

void LiveModule::interface_loop() {
  const auto period = period_of(node_.params().interface_period());
  auto next = epoch_ + period;
  while (running_) {
    std::this_thread::sleep_until(next);
    next += period;
    // Orientation from the encoder snapshot: the physics belongs to the control thread.
    node_.set_orientation(Eigen::Quaterniond(module_fk(node_.snapshot().q_measured).rotation));
    const ModuleState s = node_.interface_tick(elapsed());
    bus_.publish(module_topic(id_, "state"), "module_state", to_json(s), s.timestamp);
    const auto& q = s.imu_orientation;
    bus_.publish(module_topic(id_, "imu"), "imu",
                 {{"orientation", {{"w", q.w()}, {"x", q.x()}, {"y", q.y()}, {"z", q.z()}}}}, s.timestamp);
    const auto now = std::chrono::steady_clock::now();
    while (next + period < now) next += period;
  }
}

}  // namespace arcsim
