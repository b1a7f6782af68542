#include <gtest/gtest.h>

#include "osdg/config.hpp"
#include "osdg/error.hpp"
#include "osdg/types.hpp"

using namespace osdg;

TEST(LabelSpace, AssignsIdsInOrder) {
  const auto ls = make_label_space({"dog", "elephant", "giraffe", "guitar"});
  EXPECT_EQ(ls.size(), 4);
  EXPECT_EQ(*ls.id_of("dog"), 0);
  EXPECT_EQ(*ls.id_of("guitar"), 3);
  EXPECT_EQ(ls.unknown_token(), 4);
  EXPECT_EQ(ls.name_of(4), "unknown");
  EXPECT_FALSE(ls.id_of("horse").has_value());
  EXPECT_FALSE(ls.is_known(4));
}

TEST(LabelSpace, TwoClasses) {
  const auto ls = make_label_space({"a", "b"});
  EXPECT_EQ(*ls.id_of("a"), 0);
  EXPECT_EQ(*ls.id_of("b"), 1);
  EXPECT_EQ(ls.unknown_token(), 2);
}

TEST(LabelSpace, RejectsDegenerateLists) {
  EXPECT_THROW(make_label_space({"a"}), ConfigError);
  EXPECT_THROW(make_label_space({"a", "a"}), ConfigError);
  EXPECT_THROW(make_label_space({}), ConfigError);
}

TEST(Config, DefaultsValidate) {
  TrainConfig cfg;
  EXPECT_NO_THROW(validate_config(cfg));
  EXPECT_EQ(cfg.batch_size, 32);
  EXPECT_DOUBLE_EQ(cfg.lr, 0.001);
  EXPECT_DOUBLE_EQ(cfg.weight_decay, 0.0005);
  EXPECT_DOUBLE_EQ(cfg.alpha, 0.8);
  EXPECT_DOUBLE_EQ(cfg.lambda1, 1.0);
}

TEST(Config, RangeChecks) {
  TrainConfig cfg;
  cfg.alpha = 1.5;
  EXPECT_THROW(validate_config(cfg), ConfigError);
  cfg = {};
  cfg.tau = 0;
  EXPECT_THROW(validate_config(cfg), ConfigError);
  cfg = {};
  cfg.lambda2 = -1;
  EXPECT_THROW(validate_config(cfg), ConfigError);
  cfg = {};
  cfg.gpsa_prob = 1.01;
  EXPECT_THROW(validate_config(cfg), ConfigError);
  try {
    cfg = {};
    cfg.tau = -2;
    validate_config(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("tau"), std::string::npos);
  }
}

TEST(Config, StepDecaySchedule) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 0), 0.001);
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 19), 0.001);
  EXPECT_NEAR(scheduled_lr(cfg, 25), 0.0001, 1e-15);
  EXPECT_NEAR(scheduled_lr(cfg, 40), 0.00001, 1e-16);
}

TEST(Config, KeyValueRoundTrip) {
  TrainConfig cfg;
  cfg.lr = 0.0125;
  cfg.lambda1 = 0.5;
  cfg.gpsa_stages = {"stage2"};
  cfg.seed = 12345678901ULL;
  KeyValues kv = parse_key_values(to_key_values(cfg));
  TrainConfig back;
  apply_train_keys(back, kv);
  EXPECT_TRUE(kv.empty());
  EXPECT_EQ(back, cfg);
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  cfg.lr = 0.0126;
  EXPECT_NE(config_hash(back), config_hash(cfg));
}

TEST(Config, ParserErrors) {
  EXPECT_THROW(parse_key_values("lr = 1\nlr = 2\n"), ConfigError);
  EXPECT_THROW(parse_key_values("just words\n"), ConfigError);
  KeyValues kv = parse_key_values("# comment\n  lr = abc  # trailing\n");
  TrainConfig cfg;
  EXPECT_THROW(apply_train_keys(cfg, kv), ConfigError);
}

TEST(Config, UnknownKeysAreLeftForTheCaller) {
  KeyValues kv = parse_key_values("epochs = 3\nwidths = 8,16\n");
  TrainConfig cfg;
  apply_train_keys(cfg, kv);
  EXPECT_EQ(cfg.epochs, 3);
  ASSERT_EQ(kv.size(), 1u);
  EXPECT_EQ(kv.begin()->first, "widths");
}

TEST(FeatureMap, ValidatesShapeAndFiniteness) {
  EXPECT_NO_THROW(FeatureMap<float>(Tensor<float>({1, 1, 1, 1}), "s"));
  EXPECT_THROW(FeatureMap<float>(Tensor<float>({1, 1, 1}), "s"), ShapeError);
  EXPECT_THROW(FeatureMap<float>(Tensor<float>({1, 0, 2, 2}), "s"), ShapeError);
  Tensor<float> bad({1, 1, 1, 2});
  bad[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(FeatureMap<float>(bad, "s"), NumericError);
}
