#include <gtest/gtest.h>

#include "support.hpp"

using namespace togate;
using namespace testing_support;

namespace {

struct Bench {
  DatasetSplit split = generate_dataset(DatasetConfig{});
  Environment env{split.space, {}, {}};
};

TrainConfig quick(Method m, int iterations = 1) {
  TrainConfig c;
  c.method = m;
  c.iterations = iterations;
  c.evaluate = false;
  return c;
}

}  // namespace

TEST(Sgd, ScalarSteps) {
  EXPECT_EQ(sgd_step(1.5, 0.0, 0.1), 1.5);
  double x = 1.0;
  x = sgd_step(x, 2 * x, 0.1);
  EXPECT_DOUBLE_EQ(x, 0.8);
  for (int i = 0; i < 100; ++i) x = sgd_step(x, 2 * x, 0.1);
  EXPECT_LT(std::abs(x), 1e-9);
  EXPECT_THROW(sgd_step(1.0, std::nan(""), 0.1), NumericalError);
  EXPECT_THROW(sgd_step(1.0, 1.0, 0.0), std::invalid_argument);
}

TEST(Sgd, ParamStepAndNonFinite) {
  const AttributeSpace s{3, 2};
  const PolicyParams p(s);
  PolicyGradient g;
  g.question_logits[QuestionContext{0b11, 0}] = {1.0, -2.0, 0.0};
  const PolicyParams q = sgd_step(p, g, 0.5);
  EXPECT_EQ(q.question_row(QuestionContext{0b11, 0})[0], -0.5);
  EXPECT_EQ(q.question_row(QuestionContext{0b11, 0})[1], 1.0);
  g.response_logits[ResponseContext{1, kUnobserved}] = {std::numeric_limits<double>::infinity(), 0.0};
  try {
    sgd_step(p, g, 0.5, "iteration 2 DPO epoch 1");
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 2 DPO epoch 1"), std::string::npos);
  }
}

TEST(Sgd, EpochOrderIsPermutation) {
  for (std::size_t n : {0u, 1u, 7u, 160u}) {
    auto order = epoch_order(n, 11);
    EXPECT_EQ(order, epoch_order(n, 11));
    std::sort(order.begin(), order.end());
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(order[i], i);
  }
  EXPECT_NE(epoch_order(50, 1), epoch_order(50, 2));
}

TEST(Training, EmptyTrainSplitLeavesPolicyUnchanged) {
  Bench s;
  s.split.train.clear();
  for (Method m : {Method::ToGate, Method::StarGate, Method::DpoOnly}) {
    const RunArtifacts a = run_method(s.split, s.env, quick(m));
    ASSERT_EQ(a.checkpoints.size(), 2u);
    EXPECT_EQ(a.checkpoints[1], a.checkpoints[0]);
    EXPECT_FALSE(a.warnings.empty());
  }
}

TEST(Training, StarFirstCheckpointMatchesToGateSft) {
  Bench s;
  const RunArtifacts star = run_stargate(s.split, s.env, quick(Method::StarGate));
  const RunArtifacts to = run_togate(s.split, s.env, quick(Method::ToGate));
  ASSERT_TRUE(to.sft_checkpoint.has_value());
  EXPECT_EQ(star.checkpoints[1], *to.sft_checkpoint);
  EXPECT_NE(to.checkpoints[1], *to.sft_checkpoint);
}

TEST(Training, DpoOnlyStartsAtLogTwo) {
  Bench s;
  const RunArtifacts a = run_dpo_only(s.split, s.env, quick(Method::DpoOnly));
  ASSERT_TRUE(a.metrics[1].dpo.has_value());
  EXPECT_NEAR(a.metrics[1].dpo->loss.front(), std::log(2.0), 1e-12);
  EXPECT_EQ(a.manifest["method"], "dpo_only");
  EXPECT_FALSE(a.metrics[1].sft.has_value());
}

TEST(Training, RejectsBadConfig) {
  Bench s;
  TrainConfig c = quick(Method::ToGate, 0);
  EXPECT_THROW(run_method(s.split, s.env, c), ConfigError);
  c = quick(Method::ToGate);
  c.dpo.epochs = 0;
  EXPECT_THROW(run_method(s.split, s.env, c), ConfigError);
  EXPECT_THROW(method_from_string("ppo"), ConfigError);
  EXPECT_EQ(method_from_string("stargate"), Method::StarGate);
}

TEST(Training, Deterministic) {
  Bench s;
  TrainConfig c = quick(Method::ToGate, 2);
  const RunArtifacts a = run_method(s.split, s.env, c);
  c.workers = 3;
  const RunArtifacts b = run_method(s.split, s.env, c);
  EXPECT_EQ(a.checkpoints, b.checkpoints);
  EXPECT_EQ(metrics_records(a), metrics_records(b));
}

TEST(Training, DefaultRunIsMonotoneAndImproves) {
  Bench s;
  const RunArtifacts a = run_togate(s.split, s.env, TrainConfig{});
  ASSERT_EQ(a.metrics.size(), 4u);
  EXPECT_EQ(a.metrics[0].eval->clarification.normalized, 0.5);
  EXPECT_EQ(a.metrics[0].eval->win_rate.average, 50.0);
  for (std::size_t n = 1; n < a.metrics.size(); ++n) {
    ASSERT_TRUE(a.metrics[n].dpo.has_value());
    EXPECT_TRUE(a.metrics[n].dpo->monotone()) << n;
    EXPECT_GT(a.metrics[n].eval->clarification.normalized, a.metrics[n - 1].eval->clarification.normalized);
    EXPECT_GE(a.metrics[n].kl_to_ref, 0.0);
  }
  EXPECT_TRUE(a.metrics[1].sft.has_value());
  EXPECT_FALSE(a.metrics[2].sft.has_value());
  EXPECT_GT(a.metrics[3].eval->win_rate.average, 50.0);
}

TEST(Training, ExplodingStepRaisesNumericalError) {
  Bench s;
  TrainConfig c = quick(Method::ToGate);
  c.sft.learning_rate = 1.7e308;
  try {
    run_method(s.split, s.env, c);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 1 SFT epoch 1"), std::string::npos);
  }
}

TEST(Checkpoint, RoundTripAndTruncation) {
  Bench s;
  std::mt19937_64 g(9);
  const PolicyParams p = random_params(g, s.split.space, s.split.tasks);
  const auto dir = temp_dir("ckpt");
  save_checkpoint(p, 4, dir / "M_4.jsonl");
  int it = -1;
  EXPECT_EQ(load_checkpoint(dir / "M_4.jsonl", &it), p);
  EXPECT_EQ(it, 4);
  std::string text = read_text(dir / "M_4.jsonl");
  text.resize(text.rfind('\n', text.size() - 2) + 1);
  write_text(dir / "cut.jsonl", text);
  EXPECT_THROW(load_checkpoint(dir / "cut.jsonl"), ParseError);
  write_text(dir / "empty.jsonl", "");
  EXPECT_THROW(load_checkpoint(dir / "empty.jsonl"), ParseError);
}

TEST(Checkpoint, MetricsRecordShape) {
  Bench s;
  TrainConfig c = quick(Method::StarGate);
  c.evaluate = true;
  const auto recs = metrics_records(run_method(s.split, s.env, c));
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[1]["record"], "iteration_metrics");
  EXPECT_EQ(recs[1]["method"], "stargate");
  EXPECT_EQ(recs[1]["win_average"].get<double>(),
            (recs[1]["win_ab"].get<double>() + recs[1]["win_ba"].get<double>()) / 2);
  EXPECT_TRUE(recs[1]["dpo"].is_null());
}
