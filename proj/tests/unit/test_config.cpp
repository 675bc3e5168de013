#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "diffcap/config.hpp"

using namespace diffcap;

TEST(Config, DefaultsAreValid) {
  const ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.build_gmm().dim(), 16);
}

TEST(Config, ParsesKeysCommentsAndBroadcast) {
  const auto cfg = parse_config(R"(
# comment line
seed = 99
gmm.dim = 4              # trailing comment
gmm.means = [[1.0], [0.1, 0.2, 0.3, 0.4]]
encoder.kind = "mlp"   # "quoted # inside" below
output_dir = "out#dir"
attack.eps = 0.3
purify.reverse_mode = "probability-flow"
schedule.beta_max = 10
)");
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.output_dir, "out#dir");
  EXPECT_EQ(cfg.encoder.kind, "mlp");
  EXPECT_EQ(cfg.attack.eps, std::vector<double>{0.3});
  EXPECT_EQ(cfg.purify.reverse.mode, ReverseMode::kProbabilityFlow);
  EXPECT_DOUBLE_EQ(cfg.schedule.beta_max(), 10.0);
  const auto gmm = cfg.build_gmm();
  EXPECT_EQ(gmm.means()[0], Vector::Ones(4));
  EXPECT_DOUBLE_EQ(gmm.means()[1][3], 0.4);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse_config("seed = 1\nbogus.key = 3\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bogus.key"), std::string::npos);
  }
  EXPECT_THROW(parse_config("seed 1"), ConfigError);
  EXPECT_THROW(parse_config("seed = one"), ConfigError);
  EXPECT_THROW(parse_config("seed = -1"), ConfigError);
  EXPECT_THROW(parse_config("data.n_per_class = 1.5"), ConfigError);
  EXPECT_THROW(parse_config("purify.injection = \"sometimes\""), ConfigError);
  EXPECT_THROW(parse_config("schedule.beta_min = 0"), ConfigError);
}

TEST(Config, ValidationCatchesBadSubConfigs) {
  EXPECT_THROW(parse_config("data.n_per_class = 0").validate(), ConfigError);
  EXPECT_THROW(parse_config("gmm.means = [[0.5, 0.5, 0.5], [-0.5]]").validate(), ConfigError);
  EXPECT_THROW(parse_config("gmm.weights = [0.5, 0.6]").validate(), ConfigError);
  EXPECT_THROW(parse_config("purify.T = 0").validate(), ConfigError);
  EXPECT_THROW(parse_config("attack.eps = []").validate(), ConfigError);
  EXPECT_THROW(parse_config("certify.n_mc = 10").validate(), ConfigError);
  EXPECT_THROW(parse_config("calibrate.test = \"t\"").validate(), ConfigError);
  EXPECT_THROW(parse_config("encoder.kind = \"cnn\"").validate(), ConfigError);
}

TEST(Config, EchoOmitsOutputDirAndRoundTrips) {
  const auto cfg = parse_config("seed = 5\noutput_dir = \"a\"\n");
  const auto echo = cfg.to_json();
  EXPECT_FALSE(echo.contains("output_dir"));
  std::string text;
  for (const auto& [k, v] : echo.items()) text += k + " = " + v.dump() + "\n";
  EXPECT_EQ(parse_config(text).to_json(), echo);
}

TEST(Config, OutputDirectoryEnvironmentOverride) {
  const auto path = std::filesystem::temp_directory_path() / "diffcap_cfg_test.conf";
  std::ofstream(path) << "output_dir = \"from_file\"\n";
  unsetenv("DIFFCAP_OUTPUT_DIR");
  EXPECT_EQ(load_config(path).output_dir, "from_file");
  setenv("DIFFCAP_OUTPUT_DIR", "from_env", 1);
  EXPECT_EQ(load_config(path).output_dir, "from_env");
  unsetenv("DIFFCAP_OUTPUT_DIR");
  std::filesystem::remove(path);
  EXPECT_THROW(load_config("/nonexistent.conf"), ConfigError);
}
