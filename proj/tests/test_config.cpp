#include <gtest/gtest.h>

#include "attrnet/config.hpp"

using namespace attrnet;
using nlohmann::json;

namespace {

RunConfig applied(const json& doc) {
  RunConfig cfg;
  apply_config(cfg, doc);
  return cfg;
}

TEST(RunConfig, DefaultsAreSmallPresetAt32) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.preset, "small");
  EXPECT_EQ(cfg.resolved_input_size(), 32u);
  EXPECT_EQ(cfg.train.adam.lr, 1e-3);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(RunConfig, UnknownKeysAreRejectedAtEveryLevel) {
  for (const auto& doc : {json{{"trian", json::object()}}, json{{"train", {{"learning_rate", 0.1}}}},
                          json{{"crop", {{"pad", 0.1}}}}, json{{"augment", {{"rotate", true}}}},
                          json{{"split", {{"train_fraction", 0.5}}}}, json{{"architecture", {{"depth", 18}}}},
                          json{{"architecture", {{"preset", "custom"}, {"stem", {{"filters", 8}}}}}},
                          json{{"architecture", {{"preset", "custom"}, {"stages", {{{"width", 8}, {"depth", 2}}}}}}}}) {
    EXPECT_THROW(applied(doc), ConfigError) << doc.dump();
  }
}

TEST(RunConfig, WrongValueTypesAreConfigErrors) {
  EXPECT_THROW(applied({{"train", {{"epochs", "ten"}}}}), ConfigError);
  EXPECT_THROW(applied({{"train", {{"loss", "hinge"}}}}), ConfigError);
  EXPECT_THROW(applied({{"architecture", {{"preset", "resnet101"}}}}), ConfigError);
  EXPECT_THROW(applied(json::array()), ConfigError);
}

TEST(RunConfig, FieldsOverrideDefaults) {
  const auto cfg = applied({{"train", {{"epochs", 7}, {"batch_size", 4}, {"lr", 0.01}, {"loss", "bce"}, {"seed", 3}}},
                            {"crop", {{"pad_top", 0.25}}},
                            {"augment", {{"flip", false}}},
                            {"split", {{"stratified", true}, {"test_fraction", 0.1}}},
                            {"architecture", {{"preset", "resnet18"}}}});
  EXPECT_EQ(cfg.train.epochs, 7u);
  EXPECT_EQ(cfg.train.batch_size, 4u);
  EXPECT_EQ(cfg.train.adam.lr, 0.01);
  EXPECT_EQ(cfg.train.loss, LossKind::binary);
  EXPECT_EQ(cfg.train.seed, 3u);
  EXPECT_EQ(cfg.crop.pad_top, 0.25);
  EXPECT_FALSE(cfg.train.augment.flip);
  EXPECT_TRUE(cfg.split.stratified);
  EXPECT_EQ(cfg.split.test_fraction, 0.1);
  EXPECT_EQ(cfg.resolved_input_size(), 224u);
  EXPECT_EQ(cfg.arch.stages.size(), resnet_preset(18).stages.size());
}

TEST(RunConfig, StemAndStagesNeedCustomPreset) {
  EXPECT_THROW(applied({{"architecture", {{"stages", json::array()}}}}), ConfigError);
  const auto cfg = applied({{"architecture",
                             {{"preset", "custom"},
                              {"input_size", 24},
                              {"stem", {{"channels", 8}, {"kernel", 3}, {"stride", 1}, {"pad", 1}, {"pool", nullptr}}},
                              {"stages", {{{"kind", "bottleneck"}, {"blocks", 2}, {"width", 4}, {"stride", 2}}}}}}});
  ASSERT_TRUE(cfg.arch.stem.has_value());
  EXPECT_EQ(cfg.arch.stem->channels, 8u);
  EXPECT_FALSE(cfg.arch.stem->pool.has_value());
  ASSERT_EQ(cfg.arch.stages.size(), 1u);
  EXPECT_EQ(cfg.arch.stages[0].kind, BlockKind::bottleneck);
  EXPECT_EQ(cfg.arch.stages[0].blocks, 2u);
  EXPECT_EQ(cfg.resolved_input_size(), 24u);
}

TEST(RunConfig, InvalidValuesFailValidation) {
  EXPECT_THROW(applied({{"train", {{"epochs", 0}}}}).validate(), ConfigError);
  EXPECT_THROW(applied({{"train", {{"jobs", 0}}}}).validate(), ConfigError);
  EXPECT_THROW(applied({{"crop", {{"pad_left", -0.5}}}}).validate(), ConfigError);
  EXPECT_THROW(applied({{"split", {{"test_fraction", 1.0}}}}).validate(), ConfigError);
}

TEST(RunConfig, ResolvedJsonReappliesToTheSameConfig) {
  for (const auto& doc : {json::object(), json{{"train", {{"loss", "cce"}, {"attributes", {"height", "gender"}}}}},
                          json{{"architecture",
                                {{"preset", "custom"},
                                 {"stem", {{"channels", 8}, {"pool", {{"kernel", 3}, {"stride", 2}, {"pad", 1}}}}},
                                 {"stages", {{{"width", 8}}, {{"width", 16}, {"stride", 2}}}}}}}}) {
    const auto first = applied(doc);
    const auto resolved = to_json(first);
    const auto second = applied(resolved);
    EXPECT_EQ(to_json(second), resolved) << doc.dump();
    EXPECT_EQ(second.train.loss, first.train.loss);
    EXPECT_EQ(second.attributes, first.attributes);
  }
}

}  // namespace
