#pragma once

// JSON schemas shared by the bus nodes, the gateway and the experiment logs.

#include <cmath>
#include <string>

#include "arcsim/control.hpp"
#include "arcsim/errors.hpp"
#include "arcsim/wire.hpp"

namespace arcsim {

inline Json to_json(const JointAngles& q) { return Json{{"pitch", q.pitch}, {"yaw", q.yaw}}; }

inline Json to_json(const ModuleState& s) {
  Json j;
  j["module_id"] = s.module_id;
  j["timestamp"] = s.timestamp;
  j["control_cycle"] = s.control_cycle;
  j["control_stamp"] = s.control_stamp;
  j["q_measured"] = to_json(s.q_measured);
  j["q_setpoint"] = to_json(s.q_setpoint);
  j["joint_velocities"] = {s.joint_velocities[0], s.joint_velocities[1]};
  j["screw_velocity_measured"] = s.screw_velocity_measured;
  j["screw_velocity_setpoint"] = s.screw_velocity_setpoint;
  j["joint_currents"] = {s.joint_currents[0], s.joint_currents[1]};
  j["screw_current"] = s.screw_current;
  j["joint_torque_estimates"] = {s.joint_torque_estimates[0], s.joint_torque_estimates[1]};
  j["imu_orientation"] = {{"w", s.imu_orientation.w()},
                          {"x", s.imu_orientation.x()},
                          {"y", s.imu_orientation.y()},
                          {"z", s.imu_orientation.z()}};
  j["temperature"] = s.temperature;
  j["slip_flags"] = {s.slip_flags[0], s.slip_flags[1], s.slip_flags[2]};
  return j;
}

namespace detail {

inline double number_at(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) throw SchemaError(std::string("expected numeric field '") + key + "'");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw SchemaError(std::string("field '") + key + "' is not finite");
  return v;
}

inline const Json& object_at(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_object()) throw SchemaError(std::string("expected object field '") + key + "'");
  return *it;
}

inline int index_at(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer() || it->get<long long>() < 0 ||
      it->get<long long>() > 999999999) {
    throw SchemaError(std::string("expected non-negative integer field '") + key + "'");
  }
  return it->get<int>();
}

inline JointAngles angles_at(const Json& j, const char* key) {
  const Json& o = object_at(j, key);
  return {number_at(o, "pitch"), number_at(o, "yaw")};
}

}  // namespace detail

inline ModuleState module_state_from_json(const Json& j) try {
  if (!j.is_object()) throw SchemaError("module state must be an object");
  ModuleState s;
  s.module_id = detail::index_at(j, "module_id");
  s.timestamp = detail::number_at(j, "timestamp");
  s.control_cycle = j.at("control_cycle").get<std::uint64_t>();
  s.control_stamp = detail::number_at(j, "control_stamp");
  s.q_measured = detail::angles_at(j, "q_measured");
  s.q_setpoint = detail::angles_at(j, "q_setpoint");
  const Json& velocities = j.at("joint_velocities");
  s.joint_velocities = {velocities.at(0).get<double>(), velocities.at(1).get<double>()};
  s.screw_velocity_measured = detail::number_at(j, "screw_velocity_measured");
  s.screw_velocity_setpoint = detail::number_at(j, "screw_velocity_setpoint");
  const Json& currents = j.at("joint_currents");
  s.joint_currents = {currents.at(0).get<double>(), currents.at(1).get<double>()};
  s.screw_current = detail::number_at(j, "screw_current");
  const Json& est = j.at("joint_torque_estimates");
  s.joint_torque_estimates = {est.at(0).get<double>(), est.at(1).get<double>()};
  const Json& q = detail::object_at(j, "imu_orientation");
  s.imu_orientation = Eigen::Quaterniond(detail::number_at(q, "w"), detail::number_at(q, "x"),
                                         detail::number_at(q, "y"), detail::number_at(q, "z"));
  s.temperature = detail::number_at(j, "temperature");
  const Json& slip = j.at("slip_flags");
  s.slip_flags = {slip.at(0).get<bool>(), slip.at(1).get<bool>(), slip.at(2).get<bool>()};
  return s;
} catch (const Json::exception& e) {
  throw SchemaError(std::string("malformed module state: ") + e.what());
}

inline Json to_json(const JointCommand& c) {
  Json j;
  j["module_id"] = c.module_id;
  j["q_target"] = to_json(c.q_target);
  j["screw_velocity_target"] = c.screw_velocity_target;
  j["stamp"] = c.stamp;
  return j;
}

/// Parses a command; angles in radians, screw speed in RPM. The stamp is optional.
inline JointCommand joint_command_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("joint command must be an object");
  JointCommand c;
  c.module_id = detail::index_at(j, "module_id");
  c.q_target = detail::angles_at(j, "q_target");
  c.screw_velocity_target = detail::number_at(j, "screw_velocity_target");
  if (j.contains("stamp")) c.stamp = detail::number_at(j, "stamp");
  return c;
}

}  // namespace arcsim
