#include <doctest.h>

#include "snm/config.hpp"

using namespace snm;

TEST_CASE("config: missing keys fall back to documented defaults") {
  ExperimentConfig cfg;
  CHECK(cfg.get_int("data.height") == 64);
  CHECK(cfg.get_double("mask.rate") == 0.2);
  CHECK(cfg.get_double("train.learning_rate") == 0.0005);
  CHECK(cfg.get_double("train.beta1") == 0.9);
  CHECK(cfg.get_double("train.beta2") == 0.999);
  CHECK(cfg.get_double("train.lambda") == 0.01);
  CHECK(cfg.get_bool("train.augment") == true);
  CHECK(cfg.get_str("data.volume").empty());
}

TEST_CASE("config: unknown keys are rejected") {
  ExperimentConfig cfg;
  CHECK_THROWS_AS(cfg.set("train.lr", "0.1"), config_error);
  CHECK_THROWS_AS(ExperimentConfig::from_string("no.such.key = 1"), config_error);
  CHECK_THROWS_AS(cfg.get_str("bogus"), config_error);
}

TEST_CASE("config: parses key=value text with comments and blank lines") {
  const auto cfg = ExperimentConfig::from_string(
      "# experiment\n"
      "data.height = 128   # inline comment\n"
      "\n"
      "mask.rate=0.25\n"
      "train.augment = false\n");
  CHECK(cfg.get_int("data.height") == 128);
  CHECK(cfg.get_double("mask.rate") == 0.25);
  CHECK(cfg.get_bool("train.augment") == false);
  CHECK(cfg.is_set("data.height"));
  CHECK_FALSE(cfg.is_set("data.width"));
}

TEST_CASE("config: malformed lines and values raise config errors") {
  CHECK_THROWS_AS(ExperimentConfig::from_string("data.height 128"), config_error);
  auto cfg = ExperimentConfig::from_string("data.height = twelve");
  CHECK_THROWS_AS(cfg.get_int("data.height"), config_error);
  auto cfg2 = ExperimentConfig::from_string("train.augment = maybe");
  CHECK_THROWS_AS(cfg2.get_bool("train.augment"), config_error);
  auto cfg3 = ExperimentConfig::from_string("train.seed = -3");
  CHECK_THROWS_AS(cfg3.get_seed("train.seed"), config_error);
}

TEST_CASE("config: render echoes the effective configuration and reparses") {
  auto cfg = ExperimentConfig::from_string("data.height = 96\nmask.rate = 0.3\n");
  const auto text = cfg.render();
  const auto back = ExperimentConfig::from_string(text);
  CHECK(back.get_int("data.height") == 96);
  CHECK(back.get_double("mask.rate") == 0.3);
  CHECK(back.get_int("data.width") == 64);  // default carried through
}

TEST_CASE("config: per-phase training defaults mirror the protocol") {
  ExperimentConfig cfg;
  const auto mrn = make_train_config(cfg, Phase::pretrain_mrn);
  CHECK(mrn.iterations == 30000);
  CHECK(mrn.batch_size == 4);
  const auto msn = make_train_config(cfg, Phase::pretrain_msn);
  CHECK(msn.iterations == 60000);
  CHECK(msn.batch_size == 16);
  CHECK(msn.patch_size == 64);
  const auto fine = make_train_config(cfg, Phase::finetune_joint);
  CHECK(fine.iterations == 8000);
  CHECK(fine.batch_size == 4);
  CHECK(fine.lambda == 0.01);
  CHECK(fine.learning_rate == 0.0005);

  const auto over = ExperimentConfig::from_string(
      "train.iterations = 12\ntrain.batch_size = 2\nmodel.blocks = 3\nmodel.depth = 2\n");
  const auto tc = make_train_config(over, Phase::pretrain_mrn);
  CHECK(tc.iterations == 12);
  CHECK(tc.batch_size == 2);
  CHECK(tc.blocks == 3);
  CHECK(tc.depth == 2);
}
