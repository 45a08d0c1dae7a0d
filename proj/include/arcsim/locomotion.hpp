#pragma once

// Screw/ground contact and the omni-drive twist solver. Each screw in contact
// with the ground contributes a planar velocity at its contact point; the
// body twist is the least-squares rigid motion that best explains them.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "arcsim/actuation.hpp"
#include "arcsim/errors.hpp"
#include "arcsim/kinematics.hpp"

namespace arcsim {

inline constexpr double kScrewLeadM = kScrewHelicalPitchMm / 1000.0;
inline constexpr double kScrewOuterRadiusM = kScrewOuterDiameterMm / 2000.0;

/// Two-parameter traction model of one screw lying on the ground.
struct ScrewContact {
  int body_index = 0;
  Eigen::Vector2d axis_direction = Eigen::Vector2d::UnitX();  // unit, ground plane
  Eigen::Vector2d position = Eigen::Vector2d::Zero();         // m, base frame
  double axial_slip = 0.1;                                    // [0, 1]
  double lateral_coupling = 0.0;                              // m/rad, r_eff * (1 - lateral_slip)
  double lead = kScrewLeadM;                                  // m per revolution
};

struct TerrainParams {
  std::string name = "granular";
  double axial_slip = 0.1;
  double lateral_coupling = 0.0;

  /// Tunneling through loose media: thrust along the axis, no rolling.
  static TerrainParams granular() { return {"granular", 0.1, 0.0}; }
  /// Hard ground: the thread rolls sideways like a wheel and barely bites axially.
  static TerrainParams rigid() { return {"rigid", 0.95, kScrewOuterRadiusM * 0.8}; }
};

struct Twist2 {
  double vx = 0.0;       // m/s
  double vy = 0.0;       // m/s
  double omega_z = 0.0;  // rad/s
};

struct Pose2 {
  double x = 0.0;        // m
  double y = 0.0;        // m
  double heading = 0.0;  // rad
};

inline Eigen::Vector2d perp(const Eigen::Vector2d& v) { return {-v.y(), v.x()}; }

/// Planar velocity of the ground contact of one screw turning at screw_omega (rad/s).
inline Eigen::Vector2d screw_contact_velocity(const ScrewContact& c, double screw_omega) {
  const double axial = c.lead / kTwoPi * screw_omega * (1.0 - c.axial_slip);
  const double lateral = c.lateral_coupling * screw_omega;
  return c.axis_direction * axial + perp(c.axis_direction) * lateral;
}

inline Eigen::Vector2d contact_centroid(const std::vector<ScrewContact>& contacts) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  for (const auto& c : contacts) sum += c.position;
  return sum / static_cast<double>(contacts.size());
}

/// Least-squares rigid twist, expressed at the centroid of the contact points
/// in the base frame orientation. Rank-deficient stacks give the minimum-norm
/// solution, so a single screw yields no yaw rate.
inline Twist2 solve_body_twist(const std::vector<ScrewContact>& contacts, const std::vector<double>& omegas) {
  if (contacts.empty()) throw ArityError("solve_body_twist needs at least one contact");
  if (omegas.size() != contacts.size()) throw ArityError("one screw speed per contact is required");

  const auto n = static_cast<Eigen::Index>(contacts.size());
  const Eigen::Vector2d centroid = contact_centroid(contacts);
  Eigen::MatrixXd a(2 * n, 3);
  Eigen::VectorXd b(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = contacts[static_cast<std::size_t>(i)];
    const Eigen::Vector2d r = c.position - centroid;
    const Eigen::Vector2d v = screw_contact_velocity(c, omegas[static_cast<std::size_t>(i)]);
    a.row(2 * i) << 1.0, 0.0, -r.y();
    a.row(2 * i + 1) << 0.0, 1.0, r.x();
    b(2 * i) = v.x();
    b(2 * i + 1) = v.y();
  }
  const Eigen::Vector3d x = a.completeOrthogonalDecomposition().solve(b);
  return {x(0), x(1), x(2)};
}

/// Twist of a different reference point on the same rigid body.
inline Twist2 shift_twist(const Twist2& t, const Eigen::Vector2d& from, const Eigen::Vector2d& to) {
  const Eigen::Vector2d r = to - from;
  return {t.vx - t.omega_z * r.y(), t.vy + t.omega_z * r.x(), t.omega_z};
}

/// Exact SE(2) integration of a body-frame twist held constant over dt.
inline Pose2 integrate_pose(const Pose2& pose, const Twist2& twist, double dt) {
  if (!(dt > 0.0)) throw TimingError("integrate_pose requires dt > 0");
  const double dtheta = twist.omega_z * dt;
  double dx_body;
  double dy_body;
  if (std::abs(dtheta) < 1e-8) {
    dx_body = twist.vx * dt;
    dy_body = twist.vy * dt;
  } else {
    const double s = std::sin(dtheta) / twist.omega_z;
    const double c = (1.0 - std::cos(dtheta)) / twist.omega_z;
    dx_body = s * twist.vx - c * twist.vy;
    dy_body = c * twist.vx + s * twist.vy;
  }
  const double ch = std::cos(pose.heading);
  const double sh = std::sin(pose.heading);
  return {pose.x + ch * dx_body - sh * dy_body, pose.y + sh * dx_body + ch * dy_body,
          pose.heading + dtheta};
}

/// Contacts for every body whose center lies on the ground plane of the base
/// body and whose axis is close to horizontal.
inline std::vector<ScrewContact> contacts_from_chain(const ChainModel& model, const std::vector<Transform>& poses,
                                                     const TerrainParams& terrain,
                                                     double height_tolerance_cm = 2.0) {
  std::vector<ScrewContact> contacts;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Eigen::Vector3d center = body_center(model, poses[i]);
    const Eigen::Vector3d axis = poses[i].rotation.col(0);
    const Eigen::Vector2d planar(axis.x(), axis.y());
    if (std::abs(center.z()) > height_tolerance_cm || planar.norm() < 0.9) continue;
    ScrewContact c;
    c.body_index = static_cast<int>(i);
    c.axis_direction = planar.normalized();
    c.position = Eigen::Vector2d(center.x(), center.y()) / 100.0;
    c.axial_slip = terrain.axial_slip;
    c.lateral_coupling = terrain.lateral_coupling;
    contacts.push_back(c);
  }
  return contacts;
}

}  // namespace arcsim
