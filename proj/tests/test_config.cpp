#include <gtest/gtest.h>

#include "support.hpp"
#include "togate/config.hpp"

using namespace togate;
using namespace testing_support;

namespace {

std::string error_of(const Json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const ExperimentConfig c = config_from_json(Json::object());
  EXPECT_EQ(config_to_json(c), config_to_json(ExperimentConfig{}));
  EXPECT_EQ(c.train.method, Method::ToGate);
  EXPECT_EQ(c.train.loss.lambda, 2.0);
}

TEST(Config, ShippedDefaultMatchesBuiltIn) {
  const ExperimentConfig c = load_config(std::filesystem::path(TOGATE_SOURCE_DIR) / "configs" / "default.json");
  EXPECT_EQ(config_to_json(c), config_to_json(ExperimentConfig{}));
}

TEST(Config, RoundTrip) {
  ExperimentConfig c;
  c.dataset.seed = 99;
  c.dataset.space = {5, 3};
  c.train.method = Method::DpoOnly;
  c.train.loss.lambda = std::numeric_limits<double>::infinity();
  c.train.exploration.winner_response = WinnerResponse::Policy;
  c.train.eval.mode = RolloutMode::Greedy;
  c.train.reference = RefSchedule::Single;
  const Json j = config_to_json(c);
  EXPECT_EQ(j["loss"]["lambda"], "inf");
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_EQ(error_of({{"trian", Json::object()}}), "trian: unknown key");
  EXPECT_EQ(error_of({{"train", {{"sft", {{"lr", 0.1}}}}}}), "train.sft.lr: unknown key");
  EXPECT_EQ(error_of({{"loss", {{"beta", "big"}}}}), "loss.beta: wrong type");
  EXPECT_NE(error_of({{"loss", {{"lambda", "huge"}}}}), "");
  EXPECT_NE(error_of({{"train", {{"method", "ppo"}}}}).find("valid: togate, stargate, dpo_only"), std::string::npos);
}

TEST(Config, InvalidValuesAreRejected) {
  EXPECT_NE(error_of({{"dataset", {{"num_values", 1}}}}).find("V >= 2"), std::string::npos);
  EXPECT_NE(error_of({{"train", {{"iterations", 0}}}}), "");
  EXPECT_NE(error_of({{"loss", {{"beta", 0.0}}}}), "");
  EXPECT_NE(error_of({{"loss", {{"lambda", -1.0}}}}), "");
  EXPECT_NE(error_of({{"exploration", {{"turns", 8}}}}), "");
  EXPECT_NE(error_of({{"eval", {{"mode", "beam"}}}}), "");
  EXPECT_NE(error_of(Json::array()), "");
}

TEST(Config, FileErrorsNameTheLine) {
  const auto dir = temp_dir("config");
  write_text(dir / "bad.json", "{\n  \"loss\": {\n    \"beta\": ,\n  }\n}\n");
  try {
    load_config(dir / "bad.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.json:3: invalid JSON"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
  write_text(dir / "unknown.json", R"({"dataset": {"colour": 1}})");
  try {
    load_config(dir / "unknown.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dataset.colour: unknown key"), std::string::npos);
  }
}

TEST(Config, EvalTurnsFollowExploration) {
  ExperimentConfig c;
  c.train.exploration.turns = 2;
  EXPECT_EQ(c.resolved_train().eval.turns, 2);
}
