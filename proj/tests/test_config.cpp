#include <filesystem>
#include <gtest/gtest.h>

#include <fstream>

#include "forgetlab/config.hpp"

using namespace forgetlab;

namespace {

std::string write_ini(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / ("forgetlab_cfg_" + name + ".ini");
  std::ofstream(p) << body;
  return p.string();
}

}  // namespace

TEST(Config, DefaultsMatchTheReferenceSetup) {
  const ExperimentConfig c;
  EXPECT_EQ(c.n_features, 80);
  EXPECT_EQ(c.m_dims, 20);
  EXPECT_EQ(c.n_tasks, 5);
  EXPECT_EQ(c.n_samples, 20000);
  EXPECT_EQ(c.sparsity, 0.9);
  EXPECT_EQ(c.optimizer, OptimizerKind::adam);
  EXPECT_EQ(c.learning_rate, 0.01);
  EXPECT_EQ(c.epochs, 10000);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(c.crosscoder.expansion, 1.5);
  EXPECT_EQ(c.crosscoder.k, 6);
  EXPECT_EQ(c.crosscoder.learning_rate, 5e-4);
  EXPECT_EQ(c.crosscoder.batch_size, 256);
  EXPECT_EQ(c.crosscoder.epochs, 3);
  EXPECT_EQ(c.crosscoder.lambda_max, 1e-3);
  EXPECT_NO_THROW(validate(c));
}

TEST(Config, Profiles) {
  ExperimentConfig c;
  apply_profile(c, "fast");
  EXPECT_EQ(c.n_samples, 2000);
  EXPECT_EQ(c.epochs, 1000);
  EXPECT_EQ(c.seeds.size(), 3u);
  apply_profile(c, "paper");
  EXPECT_EQ(c.epochs, 10000);
  EXPECT_THROW(apply_profile(c, "huge"), ConfigError);
}

TEST(Config, SetValueParsesEveryKind) {
  ExperimentConfig c;
  set_config_value(c, "scenario", "none");
  set_config_value(c, "seeds", "7, 8,9");
  set_config_value(c, "lr", "0.5");
  set_config_value(c, "probes_share_label", "true");
  set_config_value(c, "loss", "cross_entropy");
  set_config_value(c, "crosscoder.k", "4");
  EXPECT_EQ(c.scenario, Scenario::none);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7, 8, 9}));
  EXPECT_EQ(c.learning_rate, 0.5);
  EXPECT_TRUE(c.probes_share_label);
  EXPECT_EQ(c.loss, LossKind::cross_entropy);
  EXPECT_EQ(c.crosscoder.k, 4);
  EXPECT_THROW(set_config_value(c, "nonsense", "1"), ConfigError);
  EXPECT_THROW(set_config_value(c, "epochs", "12x"), ConfigError);
  EXPECT_THROW(set_config_value(c, "scenario", "partial"), ConfigError);
  EXPECT_THROW(set_config_value(c, "probes_share_label", "maybe"), ConfigError);
}

TEST(Config, IniFileWithSections) {
  const auto path = write_ini("ok", "scenario = none\nepochs = 50\n[training]\nlr = 0.2\n[crosscoder]\nenabled = true\nepochs = 9\n");
  ExperimentConfig c;
  load_config_file(c, path);
  EXPECT_EQ(c.scenario, Scenario::none);
  EXPECT_EQ(c.epochs, 50);
  EXPECT_EQ(c.learning_rate, 0.2);
  EXPECT_TRUE(c.crosscoder.enabled);
  EXPECT_EQ(c.crosscoder.epochs, 9);
}

TEST(Config, IniErrors) {
  ExperimentConfig c;
  EXPECT_THROW(load_config_file(c, write_ini("unknown", "wat = 1\n")), ConfigError);
  EXPECT_THROW(load_config_file(c, "/nonexistent/forgetlab.ini"), ConfigError);
}

TEST(Config, Validation) {
  auto bad = [](auto mutate) {
    ExperimentConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(validate(bad([](ExperimentConfig& c) { c.depth = 11; })), ConfigError);
  EXPECT_THROW(validate(bad([](ExperimentConfig& c) { c.seeds.clear(); })), ConfigError);
  EXPECT_THROW(validate(bad([](ExperimentConfig& c) { c.sparsity = 1.0; })), ConfigError);
  EXPECT_THROW(validate(bad([](ExperimentConfig& c) { c.learning_rate = 0.0; })), ConfigError);
  EXPECT_THROW(validate(bad([](ExperimentConfig& c) { c.depths = {0}; })), ConfigError);
}

TEST(Config, HashIsStableAndSensitive) {
  ExperimentConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.epochs = 9999;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Config, SequenceSettingsFollowConfig) {
  ExperimentConfig c;
  c.probe_mode = ProbeMode::coadapt;
  c.weight_decay = 0.1;
  const SequenceConfig s = sequence_config(c, 4, 3, 2, 0.002);
  EXPECT_EQ(s.seed, 4u);
  EXPECT_EQ(s.depth, 3);
  EXPECT_EQ(s.probes_per_task, 2);
  EXPECT_EQ(s.train.learning_rate, 0.002);
  EXPECT_EQ(s.train.probe_mode, ProbeMode::coadapt);
  EXPECT_EQ(s.train.weight_decay, 0.1);
}
