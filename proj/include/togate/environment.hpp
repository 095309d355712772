#pragma once

#include <cmath>
#include <string>

#include "togate/rng.hpp"
#include "togate/types.hpp"

namespace togate {

/// Closed-form frozen base scorer. Each relevant attribute contributes the
/// probability of its gold value: p_correct_revealed when the dialogue
/// revealed that value, p_wrong_revealed when it revealed another value, and
/// 1/V when the attribute was never answered.
struct ScorerConfig {
  double p_correct_revealed = 0.9;
  double p_wrong_revealed = 0.05;

  void validate(int num_values) const {
    const double uniform = 1.0 / num_values;
    if (!(p_wrong_revealed > 0.0 && p_wrong_revealed < uniform && uniform < p_correct_revealed &&
          p_correct_revealed < 1.0))
      throw ConfigError("scorer: need 0 < p_wrong_revealed < 1/V < p_correct_revealed < 1");
  }

  bool operator==(const ScorerConfig&) const = default;
};

struct RoleplayerConfig {
  double noise = 0.0;  // probability of answering a uniformly drawn wrong value

  void validate() const {
    if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("roleplayer: noise must be in [0, 1)");
  }

  bool operator==(const RoleplayerConfig&) const = default;
};

/// The fixed side of the game.
struct Environment {
  AttributeSpace space;
  ScorerConfig scorer;
  RoleplayerConfig roleplayer;

  void validate() const {
    space.validate();
    scorer.validate(space.num_values);
    roleplayer.validate();
  }
};

inline GoldResponse oracle_gold(const Task& task, const Persona& persona) {
  GoldResponse g;
  g.tokens.reserve(task.relevant.size() + 1);
  for (int a : task.relevant) g.tokens.push_back(Token::say(a, persona.values.at(static_cast<std::size_t>(a))));
  g.tokens.push_back(Token::end());
  return g;
}

/// Always consumes exactly two uniform draws so that rollouts sharing a seed
/// stay aligned regardless of the noise level.
inline Token roleplayer_answer(const Persona& persona, const Token& question, const RoleplayerConfig& config,
                               int num_values, RngStream& rng) {
  if (question.kind != TokenKind::Ask) throw std::invalid_argument("roleplayer_answer: expected an Ask token");
  const int a = question.attribute;
  const int truth = persona.values.at(static_cast<std::size_t>(a));
  const double u_noise = rng.uniform();
  const double u_value = rng.uniform();
  if (u_noise >= config.noise) return Token::answer(a, truth);
  int wrong = static_cast<int>(u_value * (num_values - 1));
  if (wrong >= num_values - 1) wrong = num_values - 2;
  if (wrong >= truth) ++wrong;
  return Token::answer(a, wrong);
}

/// log p_base(gold | task, conversation). Later answers for an attribute
/// override earlier ones; irrelevant attributes are ignored.
inline double gold_loglik(const ScorerConfig& config, int num_values, const Task& task,
                          const Conversation& conversation, const GoldResponse& gold) {
  double total = 0.0;
  for (int a : task.relevant) {
    int gold_value = -1;
    for (const Token& t : gold.tokens)
      if (t.kind == TokenKind::Say && t.attribute == a) gold_value = t.value;
    int revealed = kUnobserved;
    for (const Turn& turn : conversation.turns)
      if (turn.answer.kind == TokenKind::Answer && turn.answer.attribute == a) revealed = turn.answer.value;
    double q = 1.0 / num_values;
    if (revealed != kUnobserved) q = (revealed == gold_value) ? config.p_correct_revealed : config.p_wrong_revealed;
    total += std::log(q);
  }
  return total;
}

}  // namespace togate
