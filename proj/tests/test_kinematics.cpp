#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "arcsim/kinematics.hpp"

using namespace arcsim;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent oracle: plain 4x4 homogeneous matrices with hand-expanded
// elementary rotations, multiplied with explicit loops.
using M4 = std::array<std::array<double, 4>, 4>;

M4 eye() {
  M4 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

M4 mul(const M4& a, const M4& b) {
  M4 c{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

M4 rx(double t) {
  M4 m = eye();
  m[1][1] = std::cos(t);
  m[1][2] = -std::sin(t);
  m[2][1] = std::sin(t);
  m[2][2] = std::cos(t);
  return m;
}

M4 rz(double t) {
  M4 m = eye();
  m[0][0] = std::cos(t);
  m[0][1] = -std::sin(t);
  m[1][0] = std::sin(t);
  m[1][1] = std::cos(t);
  return m;
}

M4 tx(double a) {
  M4 m = eye();
  m[0][3] = a;
  return m;
}

M4 tz(double d) {
  M4 m = eye();
  m[2][3] = d;
  return m;
}

M4 oracle_row(double a, double alpha, double d, double theta) { return mul(mul(mul(rx(alpha), tx(a)), rz(theta)), tz(d)); }

M4 oracle_module(double qp, double qy) {
  return mul(mul(oracle_row(28.0, -kPi / 2, 0.0, qp), oracle_row(0.0, kPi / 2, 0.0, qy)), oracle_row(8.4, 0.0, 0.0, 0.0));
}

void expect_same(const Transform& t, const M4& m, double tol = 1e-12) {
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(t.rotation(i, j), m[i][j], tol) << i << "," << j;
    EXPECT_NEAR(t.translation(i), m[i][3], tol) << "translation " << i;
  }
}

void expect_orthonormal(const Transform& t) {
  EXPECT_LT((t.rotation * t.rotation.transpose() - Eigen::Matrix3d::Identity()).norm(), 1e-9);
  EXPECT_NEAR(t.rotation.determinant(), 1.0, 1e-9);
}

}  // namespace

TEST(DhRows, CanonicalRowsMatchModuleTable) {
  const auto rows = canonical_module_rows();
  EXPECT_EQ(rows[0].a, 28.0);
  EXPECT_EQ(rows[0].alpha, -kPi / 2);
  EXPECT_EQ(rows[0].d, 0.0);
  EXPECT_EQ(rows[0].joint_kind, JointKind::pitch);
  EXPECT_EQ(rows[1].a, 0.0);
  EXPECT_EQ(rows[1].alpha, kPi / 2);
  EXPECT_EQ(rows[1].joint_kind, JointKind::yaw);
  EXPECT_EQ(rows[2].a, 8.4);
  EXPECT_EQ(rows[2].alpha, 0.0);
  EXPECT_EQ(rows[2].joint_kind, JointKind::fixed);
}

TEST(DhTransform, ZeroRowIsIdentity) {
  const Transform t = dh_transform(DhRow{}, 0.0);
  EXPECT_TRUE(t.rotation.isIdentity(0.0));
  EXPECT_TRUE(t.translation.isZero(0.0));
}

TEST(DhTransform, PitchRowAtZero) {
  const auto rows = canonical_module_rows();
  const Transform t = dh_transform(rows[0], 0.0);
  expect_same(t, oracle_row(28.0, -kPi / 2, 0.0, 0.0));
  EXPECT_NEAR(t.translation.x(), 28.0, 1e-12);
  EXPECT_NEAR(t.rotation(1, 2), 1.0, 1e-12);  // Rx(-pi/2) carries the row z axis onto +y
}

TEST(DhTransform, YawRowAtQuarterTurn) {
  const auto rows = canonical_module_rows();
  const Transform t = dh_transform(rows[1], kPi / 2);
  expect_same(t, mul(rx(kPi / 2), rz(kPi / 2)));
  EXPECT_TRUE(t.translation.isZero(1e-12));
}

TEST(DhTransform, FixedRowIgnoresJointValue) {
  const auto rows = canonical_module_rows();
  expect_same(dh_transform(rows[2], 1.234), oracle_row(8.4, 0.0, 0.0, 0.0));
}

TEST(DhTransform, ThetaOffsetAddsToJoint) {
  const DhRow row{1.0, 0.3, 2.0, 0.25, JointKind::yaw};
  expect_same(dh_transform(row, 0.5), oracle_row(1.0, 0.3, 2.0, 0.75));
}

TEST(ModuleFk, ZeroConfigurationIsPureTranslation) {
  const Transform t = module_fk({0.0, 0.0});
  EXPECT_TRUE(t.rotation.isIdentity(1e-12));
  EXPECT_NEAR(t.translation.x(), 36.4, 1e-12);
  EXPECT_NEAR(t.translation.y(), 0.0, 1e-12);
  EXPECT_NEAR(t.translation.z(), 0.0, 1e-12);
  EXPECT_NEAR(t.translation.norm(), 36.4, 1e-12);
}

TEST(ModuleFk, PitchQuarterTurnMatchesMatrixProduct) {
  const Transform t = module_fk({kPi / 2, 0.0});
  expect_same(t, oracle_module(kPi / 2, 0.0));
  // Pitch turns the body axis about y: it ends up pointing down.
  EXPECT_NEAR(t.translation.x(), 28.0, 1e-12);
  EXPECT_NEAR(t.translation.y(), 0.0, 1e-12);
  EXPECT_NEAR(t.translation.z(), -8.4, 1e-12);
  EXPECT_NEAR(t.rotation(2, 0), -1.0, 1e-12);
}

TEST(ModuleFk, YawQuarterTurnMatchesMatrixProduct) {
  const Transform t = module_fk({0.0, kPi / 2});
  expect_same(t, oracle_module(0.0, kPi / 2));
  EXPECT_NEAR(t.translation.x(), 28.0, 1e-12);
  EXPECT_NEAR(t.translation.y(), 8.4, 1e-12);
  EXPECT_NEAR(t.rotation(1, 0), 1.0, 1e-12);  // body x now along base y
}

TEST(ModuleFk, RandomConfigurationsMatchOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-kPi / 2, kPi / 2);
  for (int i = 0; i < 500; ++i) {
    const double qp = u(rng);
    const double qy = u(rng);
    const Transform t = module_fk({qp, qy});
    expect_same(t, oracle_module(qp, qy));
    expect_orthonormal(t);
  }
}

TEST(ModuleFk, LimitViolationNamesTheAxis) {
  try {
    module_fk({0.0, 1.6});
    FAIL() << "expected a joint limit error";
  } catch (const JointLimitError& e) {
    EXPECT_EQ(e.axis(), "yaw");
  }
  try {
    module_fk({-1.6, 0.0});
    FAIL() << "expected a joint limit error";
  } catch (const JointLimitError& e) {
    EXPECT_EQ(e.axis(), "pitch");
  }
  EXPECT_THROW(module_fk({std::nan(""), 0.0}), JointLimitError);
  EXPECT_NO_THROW(module_fk({kPi / 2, -kPi / 2}));
}

TEST(Chain, ZeroConfigurationHeadTip) {
  const ChainModel chain;
  const auto poses = chain_fk(chain, std::vector<JointAngles>(3));
  ASSERT_EQ(poses.size(), 4u);
  const Eigen::Vector3d tip = head_tip(chain, poses);
  EXPECT_NEAR(tip.x(), 4 * 19.6 + 3 * 16.8, 1e-9);
  EXPECT_NEAR(tip.x(), 128.8, 1e-9);
  EXPECT_NEAR(tip.x(), chain.links.reported_system_length_cm, 0.2);
  EXPECT_NEAR(chain.nominal_length_cm(), 128.8, 1e-9);
}

TEST(Chain, SingleBodyHasIdentityPose) {
  const ChainModel chain = ChainModel::with_bodies(1);
  const auto poses = chain_fk(chain, {});
  ASSERT_EQ(poses.size(), 1u);
  EXPECT_TRUE(poses[0].rotation.isIdentity(0.0));
  EXPECT_TRUE(poses[0].translation.isZero(0.0));
  EXPECT_THROW(ChainModel::with_bodies(0), DomainError);
}

TEST(Chain, ArityMismatchThrows) {
  const ChainModel chain;
  EXPECT_THROW(chain_fk(chain, std::vector<JointAngles>(2)), ArityError);
  EXPECT_THROW(chain_fk(chain, std::vector<JointAngles>(4)), ArityError);
}

TEST(Chain, SquarePresetBodiesArePerpendicular) {
  const ChainModel chain;
  const auto poses = chain_fk(chain, preset_configuration(Preset::square));
  for (std::size_t i = 1; i < poses.size(); ++i) {
    const Eigen::Vector3d a = poses[i - 1].rotation.col(0);
    const Eigen::Vector3d b = poses[i].rotation.col(0);
    EXPECT_NEAR(a.dot(b), 0.0, 1e-9);
    EXPECT_NEAR(b.z(), 0.0, 1e-9);  // stays in the ground plane
  }
}

TEST(Chain, MassesAndDiscrepancy) {
  const ChainModel chain;
  EXPECT_NEAR(chain.summed_mass_kg(), 4 * 1.0 + 3 * 0.88 + 0.68, 1e-12);
  EXPECT_NEAR(chain.summed_mass_kg(), 7.32, 1e-12);
  EXPECT_NEAR(chain.mass_discrepancy_kg(), 7.32 - 6.1, 1e-12);
  EXPECT_EQ(chain.n_ujoints(), 3);
}

class ChainProperties : public ::testing::TestWithParam<int> {};

TEST_P(ChainProperties, OrthonormalAssociativeMirrored) {
  const int n = GetParam();
  const ChainModel chain = ChainModel::with_bodies(n);
  std::mt19937_64 rng(100 + n);
  std::uniform_real_distribution<double> u(-kPi / 2, kPi / 2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<JointAngles> q(static_cast<std::size_t>(n - 1));
    for (auto& a : q) a = {u(rng), u(rng)};
    const auto poses = chain_fk(chain, q);

    // Left fold of module transforms, and a right fold, agree with the chain.
    Transform left;
    for (std::size_t i = 0; i < q.size(); ++i) {
      left = left * module_fk(q[i]);
      expect_orthonormal(poses[i + 1]);
      EXPECT_LT((left.rotation - poses[i + 1].rotation).norm(), 1e-9);
      EXPECT_LT((left.translation - poses[i + 1].translation).norm(), 1e-9);
    }
    Transform right;
    for (std::size_t i = q.size(); i-- > 0;) right = module_fk(q[i]) * right;
    EXPECT_LT((right.translation - poses.back().translation).norm(), 1e-9);

    // Negating every yaw mirrors all positions across the x-z plane.
    auto mirrored_q = q;
    for (auto& a : mirrored_q) a.yaw = -a.yaw;
    const auto mirrored = chain_fk(chain, mirrored_q);
    for (std::size_t i = 0; i < poses.size(); ++i) {
      EXPECT_NEAR(mirrored[i].translation.x(), poses[i].translation.x(), 1e-9);
      EXPECT_NEAR(mirrored[i].translation.y(), -poses[i].translation.y(), 1e-9);
      EXPECT_NEAR(mirrored[i].translation.z(), poses[i].translation.z(), 1e-9);
    }
  }

  // Zero configuration: every body origin on the x axis.
  const auto zero = chain_fk(chain, std::vector<JointAngles>(static_cast<std::size_t>(n - 1)));
  for (const auto& p : zero) {
    EXPECT_NEAR(p.translation.y(), 0.0, 1e-9);
    EXPECT_NEAR(p.translation.z(), 0.0, 1e-9);
  }
}

INSTANTIATE_TEST_SUITE_P(BodyCounts, ChainProperties, ::testing::Values(1, 2, 4, 7));

TEST(Presets, Tables) {
  EXPECT_EQ(preset_configuration("straight"), std::vector<JointAngles>(3));
  const std::vector<JointAngles> square(3, JointAngles{0.0, kPi / 2});
  EXPECT_EQ(preset_configuration("square"), square);
  const auto m = preset_configuration("m_shape");
  ASSERT_EQ(m.size(), 3u);
  EXPECT_DOUBLE_EQ(m[0].yaw, deg_to_rad(75.0));
  EXPECT_DOUBLE_EQ(m[1].yaw, -deg_to_rad(75.0));
  EXPECT_DOUBLE_EQ(m[2].yaw, deg_to_rad(75.0));
  for (const auto& a : m) EXPECT_EQ(a.pitch, 0.0);
  EXPECT_THROW(preset_configuration("zigzag"), LookupError);
  EXPECT_EQ(parse_preset(to_string(Preset::m_shape)), Preset::m_shape);
}

TEST(Presets, ClampHandlesNanAndRange) {
  const JointAngles c = clamp_to_limits({std::nan(""), 3.0});
  EXPECT_EQ(c.pitch, 0.0);
  EXPECT_EQ(c.yaw, kPi / 2);
}
