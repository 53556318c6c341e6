#include <gtest/gtest.h>

#include "vartex/config.hpp"
#include "vartex/error.hpp"

using namespace vartex;

TEST(Config, PresetsRoundTripThroughJson) {
  for (const std::string& name : preset_names()) {
    const RunConfig rc = preset(name);
    const RunConfig back = run_config_from_json(to_json(rc));
    EXPECT_EQ(back.model, rc.model) << name;
    EXPECT_EQ(back.plan, rc.plan) << name;
    EXPECT_EQ(model_config_from_json(to_json(rc.model)), rc.model);
    EXPECT_EQ(train_plan_from_json(to_json(rc.plan)), rc.plan);
  }
}

TEST(Config, FullScalePresetValues) {
  const RunConfig r2 = preset("paper-r2");
  EXPECT_EQ(r2.model.representatives, 2u);
  EXPECT_EQ(r2.model.embed_dim, 1024u);
  EXPECT_EQ(r2.model.blocks, 8u);
  EXPECT_EQ(r2.model.heads, 16u);
  EXPECT_EQ(r2.model.patch, 2u);
  EXPECT_EQ(r2.model.variables, 47u);
  EXPECT_DOUBLE_EQ(r2.plan.lr_peak, 5e-7);
  EXPECT_EQ(preset("paper-r1").model.representatives, 1u);
  EXPECT_EQ(preset("paper-r4-wide").model.stream_width(), 512u);
  EXPECT_EQ(preset("desk-tiny").model.variables, 8u);
  EXPECT_THROW(preset("nope"), Error);
}

TEST(Config, OverridesApplyOnTopOfPreset) {
  const RunConfig rc = run_config_from_json(R"({"preset": "desk-tiny", "model": {"blocks": 3}, "train": {"split": 2}})");
  EXPECT_EQ(rc.model.blocks, 3u);
  EXPECT_EQ(rc.model.embed_dim, preset("desk-tiny").model.embed_dim);
  EXPECT_EQ(rc.plan.split, 2u);
}

TEST(Config, UnknownFieldsAreNamed) {
  try {
    run_config_from_json(R"({"model": {"blokcs": 3}})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    EXPECT_NE(std::string(e.what()).find("blokcs"), std::string::npos);
  }
  EXPECT_THROW(run_config_from_json("{not json"), Error);
  EXPECT_THROW(run_config_from_json(R"({"train": {"crop_mode": "diagonal"}})"), Error);
}

TEST(Config, PlanValidationNamesFields) {
  TrainPlan p;
  p.warmup_epochs = p.epochs;
  try {
    p.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("warmup_epochs"), std::string::npos);
  }
}
