#include <gtest/gtest.h>

#include "i2m2/config.hpp"

using namespace i2m2;

TEST(ParseConfig, EmptyInputYieldsDefaults) {
  EXPECT_EQ(parse_config(""), ExperimentConfig{});
}

TEST(ParseConfig, ReadsSectionsAndLists) {
  const auto cfg = parse_config(
      "[generator]\n"
      "preset = discrete-d1\n"
      "n_train = 500\n"
      "\n"
      "[experiment]\n"
      "seeds = 1,2,3\n"
      "variants = inter, i2m2\n"
      "noise_grid = 0, 0.5\n"
      "\n"
      "[train]\n"
      "hidden = 16,8\n"
      "lr_stage1 = 0.1\n");
  EXPECT_EQ(cfg.preset_name, "discrete-d1");
  EXPECT_EQ(cfg.n_train, 500);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(cfg.variants, (std::vector<std::string>{"inter", "i2m2"}));
  EXPECT_EQ(cfg.noise_grid, (std::vector<double>{0.0, 0.5}));
  EXPECT_EQ(cfg.train.hidden_sizes, (std::vector<int>{16, 8}));
  EXPECT_DOUBLE_EQ(cfg.train.lr_stage1, 0.1);
}

TEST(ParseConfig, CommentsAndBlankLinesAreIgnored) {
  const auto cfg = parse_config(
      "# a comment\n"
      "\n"
      "[generator]\n"
      "# another\n"
      "n_test = 256\n");
  EXPECT_EQ(cfg.n_test, 256);
}

TEST(ParseConfig, ConstraintViolationNamesTheKey) {
  try {
    parse_config("[generator]\nn_train = -5\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("n_train"), std::string::npos);
  }
}

TEST(ParseConfig, UnknownKeyNamesTheLine) {
  try {
    parse_config("[generator]\npreset = discrete-d1\nbogus = 3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos);
    EXPECT_NE(msg.find("bogus"), std::string::npos);
  }
}

TEST(ParseConfig, TypeMismatchNamesLineAndKey) {
  try {
    parse_config("[train]\nbatch_size = many\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos);
    EXPECT_NE(msg.find("batch_size"), std::string::npos);
  }
}

TEST(ParseConfig, RejectsUnknownSectionVariantAndPreset) {
  EXPECT_THROW(parse_config("[nowhere]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[experiment]\nvariants = warp-drive\n"), ConfigError);
  EXPECT_THROW(parse_config("[generator]\npreset = unknown\n"), ConfigError);
  EXPECT_THROW(parse_config("key_without_section = 1\n"), ConfigError);
}

TEST(DumpConfig, RoundTripsToTheSameConfig) {
  ExperimentConfig cfg;
  cfg.preset_name = "inter-world";
  cfg.seeds = {42, 43};
  cfg.train.hidden_sizes = {8, 8};
  cfg.train.validation_fraction = 0.2;
  cfg.noise_grid = {0.0, 0.125};
  cfg.timings = true;
  EXPECT_EQ(parse_config(dump_config(cfg)), cfg);
  EXPECT_EQ(parse_config(dump_config(ExperimentConfig{})), ExperimentConfig{});
}

TEST(ApplyOverride, ChangesSingleKeys) {
  ExperimentConfig cfg;
  apply_override(cfg, "generator.n_train=999");
  apply_override(cfg, "experiment.seeds=7");
  apply_override(cfg, "output.timings=true");
  EXPECT_EQ(cfg.n_train, 999);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{7}));
  EXPECT_TRUE(cfg.timings);
}

TEST(ApplyOverride, RejectsMalformedAssignments) {
  ExperimentConfig cfg;
  EXPECT_THROW(apply_override(cfg, "no-equals-sign"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "nodot=3"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "generator.bogus=3"), ConfigError);
}

TEST(ConfigDigest, TracksContent) {
  ExperimentConfig a, b;
  EXPECT_EQ(config_digest(a), config_digest(b));
  b.n_train += 1;
  EXPECT_NE(config_digest(a), config_digest(b));
}
