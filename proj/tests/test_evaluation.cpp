#include <gtest/gtest.h>

#include "support.hpp"
#include "togate/cli.hpp"

using namespace togate;
using namespace testing_support;

namespace {

const GoldResponse kGold2{{Token::say(1, 0), Token::say(3, 3), Token::end()}};
const GoldResponse kGold3{{Token::say(0, 1), Token::say(2, 2), Token::say(4, 0), Token::end()}};

Response flip(const GoldResponse& gold, std::vector<bool> wrong) {
  Response r = gold.tokens;
  for (std::size_t i = 0; i < wrong.size(); ++i)
    if (wrong[i]) r[i].value = (r[i].value + 1) % 4;
  return r;
}

}  // namespace

TEST(Judge, Examples) {
  EXPECT_EQ(deterministic_judge(kGold2, kGold2.tokens, flip(kGold2, {false, true}), 1.0).outcome, Outcome::FirstWins);
  EXPECT_EQ(deterministic_judge(kGold2, kGold2.tokens, kGold2.tokens, 1.0).outcome, Outcome::Tie);
  // two correct + one wrong scores 1, two correct + one omitted is impossible by shape,
  // so compare (3 correct) vs (2 correct, 1 wrong)
  const JudgeVerdict v = deterministic_judge(kGold3, flip(kGold3, {false, false, true}), kGold3.tokens, 1.0);
  EXPECT_EQ(v.outcome, Outcome::SecondWins);
  EXPECT_EQ(v.first_score, 1.0);
  EXPECT_EQ(v.second_score, 3.0);
}

TEST(Judge, MalformedResponsesLose) {
  const Response wrong_attr{Token::say(2, 0), Token::say(3, 3), Token::end()};
  const Response no_end{Token::say(1, 0), Token::say(3, 3)};
  EXPECT_EQ(judge_score(kGold2, wrong_attr, 1.0), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(deterministic_judge(kGold2, no_end, flip(kGold2, {true, true}), 1.0).outcome, Outcome::SecondWins);
  EXPECT_EQ(deterministic_judge(kGold2, no_end, wrong_attr, 1.0).outcome, Outcome::Tie);
}

TEST(Judge, OrderInvariance) {
  std::mt19937_64 g(1);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 500; ++i) {
    const Response a = flip(kGold3, {coin(g), coin(g), coin(g)});
    const Response b = flip(kGold3, {coin(g), coin(g), coin(g)});
    const Outcome ab = deterministic_judge(kGold3, a, b, 1.0).outcome;
    const Outcome ba = deterministic_judge(kGold3, b, a, 1.0).outcome;
    if (ab == Outcome::Tie)
      EXPECT_EQ(ba, Outcome::Tie);
    else
      EXPECT_NE(ab, ba);
  }
}

TEST(Judge, BiasedJudge) {
  const ScoringJudge base{1.0, 0.0};
  const ScoringJudge zero = biased_judge(base, 0.0);
  const Response worse = flip(kGold2, {true, false});
  EXPECT_EQ(zero(kGold2, worse, kGold2.tokens).outcome, base(kGold2, worse, kGold2.tokens).outcome);
  EXPECT_EQ(biased_judge(base, 0.5)(kGold2, kGold2.tokens, kGold2.tokens).outcome, Outcome::FirstWins);
  EXPECT_THROW(biased_judge(base, -1.0), std::invalid_argument);
}

TEST(WinRate, IdenticalListsGiveFifty) {
  const std::vector<Response> r(5, kGold2.tokens);
  const std::vector<GoldResponse> golds(5, kGold2);
  const WinRateReport w = dual_pass_win_rate(ScoringJudge{}, r, r, golds);
  EXPECT_EQ(w.ab, 50.0);
  EXPECT_EQ(w.ba, 50.0);
  EXPECT_EQ(w.average, 50.0);
  EXPECT_EQ(w.verdicts.size(), 5u);
}

TEST(WinRate, MisalignedListsFail) {
  const std::vector<Response> r(3, kGold2.tokens);
  EXPECT_THROW(dual_pass_win_rate(ScoringJudge{}, r, r, std::vector<GoldResponse>(2, kGold2)), std::invalid_argument);
  EXPECT_THROW(dual_pass_win_rate(ScoringJudge{}, {}, {}, {}), std::invalid_argument);
}

TEST(WinRate, SwapSymmetry) {
  std::mt19937_64 g(2);
  std::uniform_int_distribution<int> pick(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Response> a;
    std::vector<Response> b;
    std::vector<GoldResponse> golds;
    for (int i = 0; i < 7; ++i) {
      // distinct numbers of wrong slots, so the judge never ties
      const int wa = pick(g);
      const int wb = (wa + 1 + pick(g) % 2) % 3;
      a.push_back(flip(kGold2, {wa >= 1, wa >= 2}));
      b.push_back(flip(kGold2, {wb >= 1, wb >= 2}));
      golds.push_back(kGold2);
    }
    const ScoringJudge judge = biased_judge(ScoringJudge{}, 0.25 * (trial % 3));
    const WinRateReport x = dual_pass_win_rate(judge, a, b, golds);
    const WinRateReport y = dual_pass_win_rate(judge, b, a, golds);
    EXPECT_NEAR(y.ab, 100.0 - x.ba, 1e-12);
    EXPECT_NEAR(y.ba, 100.0 - x.ab, 1e-12);
    EXPECT_NEAR(y.average, 100.0 - x.average, 1e-12);
    EXPECT_EQ(x.average, (x.ab + x.ba) / 2);
  }
}

TEST(WinRate, TableArithmetic) {
  EXPECT_NEAR(WinRateReport::from_passes(82.00, 65.67).average, 73.835, 1e-12);
  EXPECT_EQ(cli::fixed2(WinRateReport::from_passes(82.00, 65.67).average), "73.83");
  EXPECT_EQ(cli::fixed2(WinRateReport::from_passes(73.66, 49.00).average), "61.33");
  EXPECT_NEAR(WinRateReport::from_passes(89.90, 76.33).average, 83.115, 1e-12);
  EXPECT_THROW(WinRateReport::from_passes(101.0, 3.0), std::invalid_argument);
}

TEST(WinRate, ReadBackChecksAverage) {
  const auto dir = temp_dir("report");
  Json good = cli::report_record(WinRateReport::from_passes(80.0, 60.0), 1, ClarificationScore{});
  Json bad = good;
  bad["average"] = 71.0;
  write_records(dir / "r.jsonl", {good, bad});
  const auto lines = read_records(dir / "r.jsonl");
  EXPECT_EQ(cli::report_from_line(lines[0]).average, 70.0);
  EXPECT_THROW(cli::report_from_line(lines[1]), ParseError);
}

TEST(Clarification, SelfComparisonIsHalf) {
  const DatasetSplit split = generate_dataset(DatasetConfig{});
  const Environment env{split.space, {}, {}};
  std::mt19937_64 g(3);
  const PolicyParams p = random_params(g, split.space, split.tasks);
  for (RolloutMode mode : {RolloutMode::Sample, RolloutMode::Greedy}) {
    EvalConfig c;
    c.mode = mode;
    EXPECT_EQ(clarification_metric(env.scorer, p, p, split, env, c).normalized, 0.5);
    EXPECT_EQ(evaluate_checkpoint(p, p, split, env, c).win_rate.average, 50.0);
  }
}

TEST(Clarification, PerfectAskerRawValue) {
  const DatasetSplit split = generate_dataset(DatasetConfig{});
  const Environment env{split.space, {}, {}};
  PolicyParams p(split.space);
  for (const Task& t : split.tasks) {
    p.question_row_mut(QuestionContext{t.relevant_mask(), 0})[static_cast<std::size_t>(t.relevant[0])] = 50.0;
    p.question_row_mut(QuestionContext{t.relevant_mask(), bit(t.relevant[0])})[static_cast<std::size_t>(t.relevant[1])] = 50.0;
  }
  EvalConfig c;
  c.mode = RolloutMode::Greedy;
  const ClarificationScore s = clarification_metric(env.scorer, p, PolicyParams(split.space), split, env, c);
  EXPECT_NEAR(s.raw, 2 * std::log(0.9), 1e-12);
  EXPECT_EQ(s.normalized, 1.0);
}

TEST(Clarification, EmptyTestSplitFails) {
  DatasetSplit split = generate_dataset(DatasetConfig{});
  split.test.clear();
  const Environment env{split.space, {}, {}};
  const PolicyParams p(split.space);
  EXPECT_THROW(clarification_metric(env.scorer, p, p, split, env, EvalConfig{}), std::invalid_argument);
}

TEST(WinRate, TableValueCuts) {
  EXPECT_EQ(table_value(50.0), "50.00");
  EXPECT_EQ(table_value(77.715), "77.71");
  EXPECT_EQ(table_value(0.1 + 0.2), "0.30");
  EXPECT_EQ(table_value(83.115, 3), "83.115");
  EXPECT_EQ(table_value(12.9, 0), "12");
  EXPECT_THROW(table_value(std::nan("")), std::invalid_argument);
}
