#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "arcsim/config.hpp"

using namespace arcsim;

namespace {

std::string error_of(const std::string& text) {
  try {
    load_sim_config(Config::parse(text));
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ConfigParse, KeysValuesCommentsAndLists) {
  const Config c = Config::parse("# header\n a = 1.5  # trailing\n\nlist = 1 2  3\nname = granular\r\n");
  EXPECT_EQ(c.number("a", 0.0), 1.5);
  EXPECT_EQ(c.numbers("list", {}), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(c.text("name", ""), "granular");
  EXPECT_EQ(c.number("missing", 7.0), 7.0);
  EXPECT_TRUE(c.has("a"));
  EXPECT_FALSE(c.has("missing"));
}

TEST(ConfigParse, ErrorsCarryLineNumbers) {
  EXPECT_THROW(Config::parse("a = 1\na = 2\n"), ConfigError);
  try {
    Config::parse("a = 1\n\n# c\na = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos);
  }
  try {
    Config::parse("a = 1\nnonsense\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Config::parse(" = 3\n"), ConfigError);
}

TEST(ConfigParse, NumbersAreStrict) {
  const Config c = Config::parse("a = 1.5x\nb = 2.5\nc = 1 two\n");
  EXPECT_THROW(c.number("a", 0.0), ConfigError);
  EXPECT_THROW(c.integer("b", 0), ConfigError);
  EXPECT_THROW(c.numbers("c", {}), ConfigError);
}

TEST(SimConfigFile, DefaultsRoundTrip) {
  const SimConfig d;
  const std::string text = to_config_text(d);
  const SimConfig back = load_sim_config(Config::parse(text));
  EXPECT_EQ(to_config_text(back), text);
}

TEST(SimConfigFile, ModifiedValuesRoundTrip) {
  const std::string text =
      "chain.n_bodies = 6\n"
      "pid.kp = 3.25\n"
      "friction.coulomb_nm = 0.3\n"
      "friction.stiction_nm = 0.4\n"
      "ujoint.stage_ratios = 50 2\n"
      "terrain.sand.axial_slip = 0.4\n"
      "terrain.sand.lateral_coupling_m = 0.01\n"
      "experiment.config.terrain = sand\n"
      "experiment.pendulum.vin_v = 12 48\n"
      "sim.seed = 99\n";
  const SimConfig c = load_sim_config(Config::parse(text));
  EXPECT_EQ(c.chain.n_bodies, 6);
  EXPECT_EQ(c.chain.segments.size(), 5u);
  EXPECT_EQ(c.module.gains.kp, 3.25);
  EXPECT_EQ(c.module.yaw_axis.friction.coulomb, 0.3);
  EXPECT_EQ(c.module.pitch_axis.spec.total_ratio(), 100.0);
  EXPECT_EQ(c.terrain("sand").axial_slip, 0.4);
  EXPECT_EQ(c.terrain("sand").lateral_coupling, 0.01);
  EXPECT_EQ(c.experiment.pendulum_vin, (std::vector<double>{12, 48}));
  EXPECT_EQ(c.seed, 99u);
  const std::string again = to_config_text(c);
  EXPECT_EQ(to_config_text(load_sim_config(Config::parse(again))), again);
}

TEST(SimConfigFile, AnglesInTheFileAreDegrees) {
  const SimConfig c = load_sim_config(Config::parse("dh.yaw = 0 -90 0 90\n"));
  EXPECT_NEAR(c.chain.segments[0][1].alpha, -std::numbers::pi / 2, 1e-15);
  EXPECT_NEAR(c.chain.segments[0][1].theta_offset, std::numbers::pi / 2, 1e-15);
  const SimConfig s = load_sim_config(Config::parse("control.slip_threshold_deg = 2\n"));
  EXPECT_NEAR(s.module.slip_threshold_rad, deg_to_rad(2.0), 1e-15);
}

TEST(SimConfigFile, RejectsBadInput) {
  EXPECT_NE(error_of("pid.kpp = 1\n").find("unknown configuration keys: pid.kpp"), std::string::npos);
  EXPECT_NE(error_of("chain.n_bodies = 2.5\n").find("integer"), std::string::npos);
  EXPECT_THROW(load_sim_config(Config::parse("chain.n_bodies = 0\n")), DomainError);
  EXPECT_THROW(load_sim_config(Config::parse("dh.pitch = 1 2 3\n")), ConfigError);
  EXPECT_THROW(load_sim_config(Config::parse("friction.stiction_nm = 0.1\n")), DomainError);
  EXPECT_THROW(load_sim_config(Config::parse("screw.efficiency = 1.5\n")), DomainError);
  EXPECT_THROW(load_sim_config(Config::parse("rates.control_hz = 0\n")), ConfigError);
  EXPECT_THROW(load_sim_config(Config::parse("terrain.granular.axial_slip = 1.2\n")), ConfigError);
  EXPECT_THROW(load_sim_config(Config::parse("terrain.x = 1\n")), ConfigError);
  EXPECT_THROW(load_sim_config(Config::parse("experiment.config.terrain = ice\n")), LookupError);
}

TEST(SimConfigFile, LoadsFromDisk) {
  const std::string path = ::testing::TempDir() + "arcsim_cfg_test.conf";
  {
    std::ofstream out(path);
    out << "# bench rig\npid.kd = 0.07\n";
  }
  EXPECT_EQ(load_sim_config_file(path).module.gains.kd, 0.07);
  std::remove(path.c_str());
  EXPECT_THROW(load_sim_config_file(path), ConfigError);
}

TEST(SimConfigFile, ShippedConfigMatchesDefaults) {
  const SimConfig shipped = load_sim_config_file(ARCSIM_SOURCE_DIR "/config/arcsnake.conf");
  EXPECT_EQ(to_config_text(shipped), to_config_text(SimConfig{}));
}
