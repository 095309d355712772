#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "togate/environment.hpp"
#include "togate/parallel.hpp"
#include "togate/policy.hpp"
#include "togate/rng.hpp"
#include "togate/types.hpp"

namespace togate {

/// What the winning response o_w is trained towards.
///  Gold:   the oracle's gold response (the only source of value information
///          a tabular summarizer can learn from).
///  Policy: a sample from the policy conditioned on the best conversation.
enum class WinnerResponse { Gold, Policy };

inline const char* to_string(WinnerResponse w) { return w == WinnerResponse::Gold ? "gold" : "policy"; }

struct ExplorationConfig {
  int samples_per_pair = 10;
  int turns = 3;  // K: K-1 clarification turns, then the response
  double temperature = 1.0;
  std::uint64_t seed = 7;
  WinnerResponse winner_response = WinnerResponse::Gold;

  void validate(int max_turns) const {
    if (samples_per_pair < 1) throw ConfigError("exploration: samples_per_pair must be >= 1");
    if (turns < 1 || turns > max_turns)
      throw ConfigError("exploration: turns must be in [1, " + std::to_string(max_turns) + "]");
    if (!(temperature > 0.0)) throw ConfigError("exploration: temperature must be > 0");
  }
};

struct ExploreResult {
  Conversation best;
  Conversation worst;
  std::size_t best_index = 0;
  std::size_t worst_index = 0;
  std::vector<double> scores;
};

/// Samples n conversations and keeps the highest- and lowest-scoring ones
/// under the frozen scorer. Ties go to the lowest sample index.
inline ExploreResult explore_pair(const PolicyParams& policy, const Task& task, const Persona& persona,
                                  const GoldResponse& gold, const Environment& env, const ExplorationConfig& config,
                                  RngStream& rng) {
  if (config.samples_per_pair < 1) throw std::invalid_argument("explore_pair: n must be >= 1");
  std::vector<Conversation> samples;
  ExploreResult r;
  samples.reserve(static_cast<std::size_t>(config.samples_per_pair));
  for (int c = 0; c < config.samples_per_pair; ++c) {
    samples.push_back(
        sample_conversation(policy, task, persona, env.roleplayer, config.turns, rng, config.temperature));
    r.scores.push_back(gold_loglik(env.scorer, env.space.num_values, task, samples.back(), gold));
  }
  for (std::size_t i = 1; i < r.scores.size(); ++i) {
    if (r.scores[i] > r.scores[r.best_index]) r.best_index = i;
    if (r.scores[i] < r.scores[r.worst_index]) r.worst_index = i;
  }
  r.best = samples[r.best_index];
  r.worst = samples[r.worst_index];
  return r;
}

/// Ask tokens of the clarification turns; the final response is excluded.
inline std::vector<Token> extract_questions(const Conversation& conversation) { return questions_of(conversation); }

inline Response generate_response(const PolicyParams& policy, const Task& task, const Conversation& conversation,
                                  RolloutMode mode, RngStream& rng) {
  return sample_response(policy, task, answers_of(conversation), mode, rng);
}

/// Audit line for one explored train pair.
struct ExploreLog {
  PairId pair;
  std::vector<double> scores;
  std::size_t best_index = 0;
  std::size_t worst_index = 0;
  bool kept = false;
};

/// Explores every train pair with `policy` and assembles the contrastive
/// dataset. `round` separates the random streams of successive rebuilds.
/// Pairs with score_w < score_l + margin_min are dropped; the result is in
/// (task_id, persona_id) order regardless of `workers`.
inline std::vector<PreferencePair> build_dp(const PolicyParams& policy, const DatasetSplit& split,
                                            const Environment& env, const ExplorationConfig& config,
                                            double margin_min, std::uint64_t round, int workers = 1,
                                            std::vector<ExploreLog>* log = nullptr) {
  if (!(margin_min >= 0.0)) throw std::invalid_argument("build_dp: margin_min must be >= 0");
  std::vector<PairId> ids = split.train;
  std::sort(ids.begin(), ids.end());
  std::vector<PreferencePair> slots(ids.size());
  std::vector<ExploreLog> logs(ids.size());
  parallel_for(ids.size(), workers, [&](std::size_t i) {
    const PairId id = ids[i];
    const Task& task = split.task(id.task_id);
    const Persona& persona = split.persona(id.persona_id);
    const GoldResponse& gold = split.gold(id);
    RngStream rng(derive_seed(config.seed, {kTagExplore, round, static_cast<std::uint64_t>(id.task_id),
                                            static_cast<std::uint64_t>(id.persona_id)}));
    ExploreResult r = explore_pair(policy, task, persona, gold, env, config, rng);
    PreferencePair& p = slots[i];
    p.task_id = id.task_id;
    p.persona_id = id.persona_id;
    p.q_w = extract_questions(r.best);
    p.q_l = extract_questions(r.worst);
    p.answers_w = answers_of(r.best);
    p.answers_l = answers_of(r.worst);
    p.o_w = config.winner_response == WinnerResponse::Gold ? gold.tokens
                                                            : generate_response(policy, task, r.best,
                                                                                RolloutMode::Sample, rng);
    p.o_l = generate_response(policy, task, r.worst, RolloutMode::Sample, rng);
    p.score_w = r.scores[r.best_index];
    p.score_l = r.scores[r.worst_index];
    logs[i] = {id, std::move(r.scores), r.best_index, r.worst_index, false};
  });
  std::vector<PreferencePair> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].score_w >= slots[i].score_l + margin_min) {
      logs[i].kept = true;
      out.push_back(std::move(slots[i]));
    }
  }
  if (log) *log = std::move(logs);
  return out;
}

}  // namespace togate
