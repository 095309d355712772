#include <gtest/gtest.h>

#include "support.hpp"

using namespace togate;
using namespace testing_support;

namespace {

struct Game {
  DatasetSplit split = generate_dataset(DatasetConfig{});
  Environment env{split.space, {}, {}};
};

}  // namespace

TEST(Explore, SingleSample) {
  Game g;
  const PairId id = g.split.train.front();
  ExplorationConfig c;
  c.samples_per_pair = 1;
  RngStream rng(1);
  const ExploreResult r = explore_pair(PolicyParams(g.split.space), g.split.task(id.task_id),
                                       g.split.persona(id.persona_id), g.split.gold(id), g.env, c, rng);
  EXPECT_EQ(r.best, r.worst);
  EXPECT_EQ(r.scores.size(), 1u);
}

TEST(Explore, TiesGoToSampleZero) {
  Game g;
  const PairId id = g.split.train.front();
  ExplorationConfig c;
  c.turns = 1;
  RngStream rng(1);
  const ExploreResult r = explore_pair(PolicyParams(g.split.space), g.split.task(id.task_id),
                                       g.split.persona(id.persona_id), g.split.gold(id), g.env, c, rng);
  EXPECT_EQ(r.best_index, 0u);
  EXPECT_EQ(r.worst_index, 0u);
}

TEST(Explore, InformativeConversationRanksFirst) {
  Game g;
  const PairId id = g.split.train.front();
  const Task& t = g.split.task(id.task_id);
  const Persona& p = g.split.persona(id.persona_id);
  Conversation both;
  Conversation neither;
  for (int a : t.relevant) both.turns.push_back({Token::ask(a), Token::answer(a, p.values[static_cast<std::size_t>(a)])});
  for (int a = 0, n = 0; a < 6 && n < 2; ++a)
    if (!t.is_relevant(a)) {
      neither.turns.push_back({Token::ask(a), Token::answer(a, p.values[static_cast<std::size_t>(a)])});
      ++n;
    }
  const double sb = gold_loglik(g.env.scorer, 4, t, both, g.split.gold(id));
  const double sn = gold_loglik(g.env.scorer, 4, t, neither, g.split.gold(id));
  EXPECT_NEAR(sb, 2 * std::log(0.9), 1e-15);
  EXPECT_NEAR(sn, 2 * std::log(0.25), 1e-15);
  EXPECT_GT(sb, sn);
}

TEST(Extract, Questions) {
  Conversation c;
  c.turns = {{Token::ask(1), Token::answer(1, 0)}, {Token::ask(3), Token::answer(3, 2)}};
  c.final_response = Response{Token::end()};
  EXPECT_EQ(extract_questions(c), (std::vector<Token>{Token::ask(1), Token::ask(3)}));
  EXPECT_TRUE(extract_questions(Conversation{}).empty());
}

TEST(GenerateResponse, Examples) {
  PolicyParams p(AttributeSpace{6, 4});
  RngStream rng(1);
  EXPECT_EQ(generate_response(p, Task{0, {}}, Conversation{}, RolloutMode::Greedy, rng), (Response{Token::end()}));
  const Task t{0, {1, 3}};
  EXPECT_EQ(generate_response(p, t, Conversation{}, RolloutMode::Greedy, rng),
            (Response{Token::say(1, 0), Token::say(3, 0), Token::end()}));
  for (int a = 0; a < 6; ++a)
    for (int v = 0; v < 4; ++v) p.response_row_mut(ResponseContext{a, v})[static_cast<std::size_t>(v)] = 10.0;
  Conversation c;
  c.turns = {{Token::ask(1), Token::answer(1, 0)}, {Token::ask(3), Token::answer(3, 3)}};
  EXPECT_EQ(generate_response(p, t, c, RolloutMode::Greedy, rng),
            (Response{Token::say(1, 0), Token::say(3, 3), Token::end()}));
}

TEST(BuildDp, MarginFilterBoundary) {
  Game g;
  ExplorationConfig c;
  c.turns = 1;
  const PolicyParams p(g.split.space);
  EXPECT_TRUE(build_dp(p, g.split, g.env, c, 1e-9, 0).empty());
  EXPECT_EQ(build_dp(p, g.split, g.env, c, 0.0, 0).size(), g.split.train.size());
}

TEST(BuildDp, EmptyTrainSplit) {
  Game g;
  g.split.train.clear();
  EXPECT_TRUE(build_dp(PolicyParams(g.split.space), g.split, g.env, ExplorationConfig{}, 1e-9, 0).empty());
}

TEST(BuildDp, FrozenCountForUntrainedPolicy) {
  Game g;
  std::vector<ExploreLog> log;
  const auto dp = build_dp(PolicyParams(g.split.space), g.split, g.env, ExplorationConfig{}, 1e-9, 0, 1, &log);
  EXPECT_EQ(dp.size(), std::size_t{160});
  std::size_t kept = 0;
  for (const ExploreLog& l : log) {
    const double margin = l.scores[l.best_index] - l.scores[l.worst_index];
    EXPECT_EQ(l.kept, margin >= 1e-9);
    kept += l.kept;
  }
  EXPECT_EQ(kept, dp.size());
}

TEST(BuildDp, Invariants) {
  Game g;
  std::mt19937_64 rng(5);
  const PolicyParams p = random_params(rng, g.split.space, g.split.tasks);
  const ExplorationConfig c;
  const auto dp = build_dp(p, g.split, g.env, c, 1e-9, 3);
  for (std::size_t i = 0; i < dp.size(); ++i) {
    EXPECT_GE(dp[i].score_w, dp[i].score_l + 1e-9);
    EXPECT_LE(dp[i].q_w.size(), static_cast<std::size_t>(c.turns - 1));
    EXPECT_LE(dp[i].q_l.size(), static_cast<std::size_t>(c.turns - 1));
    const Task& t = g.split.task(dp[i].task_id);
    EXPECT_TRUE(is_response_shaped(dp[i].o_w, t, 4));
    EXPECT_TRUE(is_response_shaped(dp[i].o_l, t, 4));
    if (i > 0) {
      EXPECT_LT((PairId{dp[i - 1].task_id, dp[i - 1].persona_id}), (PairId{dp[i].task_id, dp[i].persona_id}));
    }
  }
}

TEST(BuildDp, IndependentOfWorkers) {
  Game g;
  std::mt19937_64 rng(6);
  const PolicyParams p = random_params(rng, g.split.space, g.split.tasks);
  const auto one = build_dp(p, g.split, g.env, ExplorationConfig{}, 1e-9, 1, 1);
  EXPECT_EQ(one, build_dp(p, g.split, g.env, ExplorationConfig{}, 1e-9, 1, 4));
  EXPECT_EQ(one, build_dp(p, g.split, g.env, ExplorationConfig{}, 1e-9, 1, 1));
}

TEST(BuildDp, PolicyWinnerResponse) {
  Game g;
  ExplorationConfig c;
  c.winner_response = WinnerResponse::Policy;
  const auto dp = build_dp(PolicyParams(g.split.space), g.split, g.env, c, 1e-9, 0);
  ASSERT_FALSE(dp.empty());
  std::size_t differs = 0;
  for (const auto& p : dp) differs += p.o_w != g.split.gold(PairId{p.task_id, p.persona_id}).tokens;
  EXPECT_GT(differs, 0u);
}

TEST(PairsFile, RoundTrip) {
  Game g;
  const auto dp = build_dp(PolicyParams(g.split.space), g.split, g.env, ExplorationConfig{}, 1e-9, 0);
  const auto dir = temp_dir("pairs");
  save_pairs(dp, dir / "dp.jsonl");
  EXPECT_EQ(load_pairs(dir / "dp.jsonl"), dp);
}
