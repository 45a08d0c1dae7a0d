#pragma once

// Modified Denavit-Hartenberg kinematics of a single screw module and of the
// serially chained robot. Lengths are centimeters, angles radians.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "arcsim/errors.hpp"

namespace arcsim {

enum class JointKind { pitch, yaw, fixed };

inline std::string_view to_string(JointKind kind) {
  switch (kind) {
    case JointKind::pitch: return "pitch";
    case JointKind::yaw: return "yaw";
    case JointKind::fixed: return "fixed";
  }
  return "fixed";
}

struct DhRow {
  double a = 0.0;             // cm
  double alpha = 0.0;         // rad
  double d = 0.0;             // cm
  double theta_offset = 0.0;  // rad
  JointKind joint_kind = JointKind::fixed;
};

using ModuleRows = std::array<DhRow, 3>;

/// Rows of one module: pitch axis, yaw axis, then the fixed link to the next body.
inline constexpr ModuleRows canonical_module_rows() {
  return {DhRow{28.0, -std::numbers::pi / 2, 0.0, 0.0, JointKind::pitch},
          DhRow{0.0, std::numbers::pi / 2, 0.0, 0.0, JointKind::yaw},
          DhRow{8.4, 0.0, 0.0, 0.0, JointKind::fixed}};
}

inline constexpr double kJointLimit = std::numbers::pi / 2;

struct JointAngles {
  double pitch = 0.0;
  double yaw = 0.0;

  friend bool operator==(const JointAngles&, const JointAngles&) = default;
};

inline void check_joint_limits(const JointAngles& q) {
  if (!(std::abs(q.pitch) <= kJointLimit)) throw JointLimitError("pitch", q.pitch);
  if (!(std::abs(q.yaw) <= kJointLimit)) throw JointLimitError("yaw", q.yaw);
}

inline JointAngles clamp_to_limits(const JointAngles& q) {
  auto clamp = [](double v) {
    if (std::isnan(v)) return 0.0;
    return std::clamp(v, -kJointLimit, kJointLimit);
  };
  return {clamp(q.pitch), clamp(q.yaw)};
}

/// Rigid transform; translation in centimeters.
struct Transform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Transform identity() { return {}; }

  static Transform rot_x(double angle) {
    Transform t;
    t.rotation = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitX()).toRotationMatrix();
    return t;
  }
  static Transform rot_z(double angle) {
    Transform t;
    t.rotation = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    return t;
  }
  static Transform trans(const Eigen::Vector3d& v) {
    Transform t;
    t.translation = v;
    return t;
  }

  Transform operator*(const Transform& rhs) const {
    Transform out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  Transform inverse() const {
    Transform out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }
};

/// Craig's modified convention: Rx(alpha) * Tx(a) * Rz(theta) * Tz(d).
inline Transform dh_transform(const DhRow& row, double q) {
  const double theta = row.theta_offset + (row.joint_kind == JointKind::fixed ? 0.0 : q);
  return Transform::rot_x(row.alpha) * Transform::trans({row.a, 0.0, 0.0}) *
         Transform::rot_z(theta) * Transform::trans({0.0, 0.0, row.d});
}

inline double joint_value(const DhRow& row, const JointAngles& q) {
  switch (row.joint_kind) {
    case JointKind::pitch: return q.pitch;
    case JointKind::yaw: return q.yaw;
    case JointKind::fixed: return 0.0;
  }
  return 0.0;
}

inline Transform module_fk(const ModuleRows& rows, const JointAngles& q) {
  check_joint_limits(q);
  Transform t;
  for (const auto& row : rows) t = t * dh_transform(row, joint_value(row, q));
  return t;
}

inline Transform module_fk(const JointAngles& q) { return module_fk(canonical_module_rows(), q); }

/// Dimensions and masses of the physical robot.
struct LinkRegistry {
  double body_length_cm = 19.6;
  double body_diameter_cm = 12.5;
  double ujoint_length_cm = 16.8;
  double ujoint_diameter_cm = 11.0;
  double body_mass_kg = 1.0;
  double ujoint_mass_kg = 0.88;
  double head_mass_kg = 0.68;
  // As reported for the assembled system; kept alongside the per-part sums.
  double reported_system_length_cm = 128.7;
  double reported_system_mass_kg = 6.1;
};

struct ChainModel {
  int n_bodies = 4;
  std::vector<ModuleRows> segments = std::vector<ModuleRows>(3, canonical_module_rows());
  LinkRegistry links;

  static ChainModel with_bodies(int n) {
    if (n < 1) throw DomainError("chain needs at least one body");
    ChainModel m;
    m.n_bodies = n;
    m.segments.assign(static_cast<std::size_t>(n - 1), canonical_module_rows());
    return m;
  }

  int n_ujoints() const { return n_bodies - 1; }

  /// Bodies, the U-joints between them, and the head.
  double summed_mass_kg() const {
    return n_bodies * links.body_mass_kg + n_ujoints() * links.ujoint_mass_kg + links.head_mass_kg;
  }

  double mass_discrepancy_kg() const { return summed_mass_kg() - links.reported_system_mass_kg; }

  double nominal_length_cm() const {
    return n_bodies * links.body_length_cm + n_ujoints() * links.ujoint_length_cm;
  }
};

/// One pose per body (body frames at the rear end of each body, x along the
/// body, z up), expressed in the base body frame.
inline std::vector<Transform> chain_fk(const ChainModel& model, const std::vector<JointAngles>& all_q) {
  if (model.n_bodies < 1) throw DomainError("chain needs at least one body");
  if (static_cast<int>(all_q.size()) != model.n_bodies - 1) {
    throw ArityError("chain_fk expects " + std::to_string(model.n_bodies - 1) + " joint pairs, got " +
                     std::to_string(all_q.size()));
  }
  if (static_cast<int>(model.segments.size()) != model.n_bodies - 1) {
    throw ArityError("chain model segment count does not match n_bodies");
  }
  std::vector<Transform> poses;
  poses.reserve(static_cast<std::size_t>(model.n_bodies));
  poses.push_back(Transform::identity());
  for (std::size_t i = 0; i < all_q.size(); ++i) {
    poses.push_back(poses.back() * module_fk(model.segments[i], all_q[i]));
  }
  return poses;
}

/// The head is a rigid extension of the last body with no joint of its own.
inline Eigen::Vector3d head_tip(const ChainModel& model, const std::vector<Transform>& poses) {
  if (poses.empty()) throw ArityError("head_tip needs at least one pose");
  return poses.back().apply({model.links.body_length_cm, 0.0, 0.0});
}

inline Eigen::Vector3d body_center(const ChainModel& model, const Transform& pose) {
  return pose.apply({model.links.body_length_cm / 2.0, 0.0, 0.0});
}

enum class Preset { straight, square, m_shape };

inline Preset parse_preset(std::string_view name) {
  if (name == "straight") return Preset::straight;
  if (name == "square") return Preset::square;
  if (name == "m_shape") return Preset::m_shape;
  throw LookupError("unknown preset configuration: " + std::string(name));
}

inline std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::straight: return "straight";
    case Preset::square: return "square";
    case Preset::m_shape: return "m_shape";
  }
  return "straight";
}

inline constexpr double kMShapeYaw = 75.0 * std::numbers::pi / 180.0;

/// Joint setpoints for the named body configuration, one pair per U-joint.
inline std::vector<JointAngles> preset_configuration(Preset preset, int n_ujoints = 3) {
  std::vector<JointAngles> q(static_cast<std::size_t>(std::max(n_ujoints, 0)));
  for (std::size_t i = 0; i < q.size(); ++i) {
    switch (preset) {
      case Preset::straight: break;
      case Preset::square: q[i].yaw = std::numbers::pi / 2; break;
      case Preset::m_shape: q[i].yaw = (i % 2 == 0) ? kMShapeYaw : -kMShapeYaw; break;
    }
  }
  return q;
}

inline std::vector<JointAngles> preset_configuration(std::string_view name, int n_ujoints = 3) {
  return preset_configuration(parse_preset(name), n_ujoints);
}

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace arcsim
