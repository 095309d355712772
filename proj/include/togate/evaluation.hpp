#pragma once

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "togate/environment.hpp"
#include "togate/policy.hpp"
#include "togate/rng.hpp"
#include "togate/types.hpp"

namespace togate {

// ---------------------------------------------------------------------------
// Judges
// ---------------------------------------------------------------------------

enum class Outcome { FirstWins, SecondWins, Tie };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::FirstWins:
      return "first_wins";
    case Outcome::SecondWins:
      return "second_wins";
    case Outcome::Tie:
      return "tie";
  }
  return "tie";
}

struct JudgeVerdict {
  Outcome outcome = Outcome::Tie;
  double first_score = 0.0;
  double second_score = 0.0;
};

using Judge = std::function<JudgeVerdict(const GoldResponse& gold, const Response& first, const Response& second)>;

/// Matches minus wrong_penalty times contradictions. A response whose token
/// layout differs from the gold's (same Say attributes in the same order,
/// then End) is malformed and scores -inf.
inline double judge_score(const GoldResponse& gold, const Response& response, double wrong_penalty) {
  const Response& g = gold.tokens;
  if (response.size() != g.size()) return -std::numeric_limits<double>::infinity();
  double score = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Token& r = response[i];
    if (g[i].kind == TokenKind::End) {
      if (r.kind != TokenKind::End) return -std::numeric_limits<double>::infinity();
      continue;
    }
    if (r.kind != TokenKind::Say || r.attribute != g[i].attribute) return -std::numeric_limits<double>::infinity();
    score += r.value == g[i].value ? 1.0 : -wrong_penalty;
  }
  return score;
}

/// Deterministic scoring judge. first_bias is added to the first-presented
/// response's score; zero gives a position-free judge.
struct ScoringJudge {
  double wrong_penalty = 1.0;
  double first_bias = 0.0;

  JudgeVerdict operator()(const GoldResponse& gold, const Response& first, const Response& second) const {
    JudgeVerdict v;
    v.first_score = judge_score(gold, first, wrong_penalty) + first_bias;
    v.second_score = judge_score(gold, second, wrong_penalty);
    if (v.first_score > v.second_score)
      v.outcome = Outcome::FirstWins;
    else if (v.second_score > v.first_score)
      v.outcome = Outcome::SecondWins;
    else
      v.outcome = Outcome::Tie;
    return v;
  }
};

inline JudgeVerdict deterministic_judge(const GoldResponse& gold, const Response& first, const Response& second,
                                        double wrong_penalty) {
  return ScoringJudge{wrong_penalty, 0.0}(gold, first, second);
}

/// Test double modelling a judge that favours whatever is shown first.
inline ScoringJudge biased_judge(const ScoringJudge& base, double bias) {
  if (!(bias >= 0.0)) throw std::invalid_argument("biased_judge: bias must be >= 0");
  return ScoringJudge{base.wrong_penalty, base.first_bias + bias};
}

// ---------------------------------------------------------------------------
// Dual-pass win rate
// ---------------------------------------------------------------------------

struct PairVerdict {
  std::size_t index = 0;
  Outcome trained_first = Outcome::Tie;  // pass 1: trained shown first
  Outcome base_first = Outcome::Tie;     // pass 2: base shown first
};

/// Win percentages for the trained model: `ab` with the trained response shown
/// first, `ba` with it shown second. Ties credit half a win.
struct WinRateReport {
  double ab = 0.0;
  double ba = 0.0;
  double average = 0.0;
  std::vector<PairVerdict> verdicts;

  static WinRateReport from_passes(double ab, double ba) {
    if (!(ab >= 0.0 && ab <= 100.0 && ba >= 0.0 && ba <= 100.0))
      throw std::invalid_argument("win rates must lie in [0, 100]");
    return {ab, ba, (ab + ba) / 2.0, {}};
  }

  /// Re-derives the average; used when reading reports back.
  bool consistent() const { return average == (ab + ba) / 2.0; }
};

/// Two-decimal table cell. The shortest round-trip decimal form of x is cut
/// after `digits` places, so 73.835 prints as 73.83 and 61.33 stays 61.33.
inline std::string table_value(double x, int digits = 2) {
  if (!std::isfinite(x) || digits < 0) throw std::invalid_argument("table_value: bad input");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed);
  std::string s(buf, res.ptr);
  const auto dot = s.find('.');
  if (dot == std::string::npos) s += '.';
  const std::size_t frac = dot == std::string::npos ? 0 : s.size() - dot - 1;
  if (frac < static_cast<std::size_t>(digits))
    s.append(static_cast<std::size_t>(digits) - frac, '0');
  else
    s.resize(s.find('.') + 1 + static_cast<std::size_t>(digits));
  if (digits == 0) s.pop_back();
  return s;
}

inline WinRateReport dual_pass_win_rate(const Judge& judge, const std::vector<Response>& trained,
                                        const std::vector<Response>& base, const std::vector<GoldResponse>& golds) {
  if (trained.size() != base.size() || trained.size() != golds.size())
    throw std::invalid_argument("dual_pass_win_rate: trained, base and gold lists must have equal length");
  if (trained.empty()) throw std::invalid_argument("dual_pass_win_rate: empty response lists");
  std::size_t half_ab = 0;
  std::size_t half_ba = 0;
  std::vector<PairVerdict> verdicts;
  verdicts.reserve(trained.size());
  for (std::size_t i = 0; i < trained.size(); ++i) {
    const Outcome first = judge(golds[i], trained[i], base[i]).outcome;
    const Outcome second = judge(golds[i], base[i], trained[i]).outcome;
    half_ab += first == Outcome::FirstWins ? 2 : (first == Outcome::Tie ? 1 : 0);
    half_ba += second == Outcome::SecondWins ? 2 : (second == Outcome::Tie ? 1 : 0);
    verdicts.push_back({i, first, second});
  }
  const double n2 = 2.0 * static_cast<double>(trained.size());
  WinRateReport r = WinRateReport::from_passes(100.0 * static_cast<double>(half_ab) / n2,
                                               100.0 * static_cast<double>(half_ba) / n2);
  r.verdicts = std::move(verdicts);
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoint evaluation
// ---------------------------------------------------------------------------

struct EvalConfig {
  RolloutMode mode = RolloutMode::Sample;
  double temperature = 1.0;
  int turns = 3;
  std::uint64_t seed = 2024;
  double wrong_penalty = 1.0;
};

/// One checkpoint rollout and one base rollout per test pair, drawn from the
/// same seed so that identical policies produce identical conversations.
struct PairedRollouts {
  std::vector<PairId> pairs;
  std::vector<Conversation> trained;
  std::vector<Conversation> base;
};

inline PairedRollouts paired_rollouts(const PolicyParams& checkpoint, const PolicyParams& base,
                                      const DatasetSplit& split, const std::vector<PairId>& pairs,
                                      const Environment& env, const EvalConfig& config) {
  PairedRollouts r;
  r.pairs = pairs;
  for (const PairId& id : pairs) {
    const Task& task = split.task(id.task_id);
    const Persona& persona = split.persona(id.persona_id);
    const std::uint64_t s = derive_seed(config.seed, {kTagEval, static_cast<std::uint64_t>(id.task_id),
                                                      static_cast<std::uint64_t>(id.persona_id)});
    RngStream rt(s);
    RngStream rb(s);
    r.trained.push_back(
        sample_conversation(checkpoint, task, persona, env.roleplayer, config.turns, rt, config.temperature, config.mode));
    r.base.push_back(
        sample_conversation(base, task, persona, env.roleplayer, config.turns, rb, config.temperature, config.mode));
  }
  return r;
}

struct ClarificationScore {
  double raw = 0.0;         // mean gold log-likelihood of the checkpoint's dialogues
  double base_raw = 0.0;    // same for the base policy
  double normalized = 0.5;  // paired win fraction against the base, ties 0.5
};

inline ClarificationScore clarification_from_rollouts(const PairedRollouts& r, const DatasetSplit& split,
                                                      const ScorerConfig& scorer) {
  if (r.pairs.empty()) throw std::invalid_argument("clarification_metric: empty test split");
  ClarificationScore s{0.0, 0.0, 0.0};
  std::size_t half_credits = 0;
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    const Task& task = split.task(r.pairs[i].task_id);
    const GoldResponse& gold = split.gold(r.pairs[i]);
    const double gt = gold_loglik(scorer, split.space.num_values, task, r.trained[i], gold);
    const double gb = gold_loglik(scorer, split.space.num_values, task, r.base[i], gold);
    s.raw += gt;
    s.base_raw += gb;
    half_credits += gt > gb ? 2 : (gt == gb ? 1 : 0);
  }
  const double n = static_cast<double>(r.pairs.size());
  s.raw /= n;
  s.base_raw /= n;
  s.normalized = static_cast<double>(half_credits) / (2.0 * n);
  return s;
}

inline ClarificationScore clarification_metric(const ScorerConfig& scorer, const PolicyParams& checkpoint,
                                               const PolicyParams& base, const DatasetSplit& split,
                                               const Environment& env, const EvalConfig& config) {
  if (split.test.empty()) throw std::invalid_argument("clarification_metric: empty test split");
  Environment e = env;
  e.scorer = scorer;
  return clarification_from_rollouts(paired_rollouts(checkpoint, base, split, split.test, e, config), split, scorer);
}

struct CheckpointEval {
  ClarificationScore clarification;
  WinRateReport win_rate;
  PairedRollouts rollouts;
};

inline CheckpointEval evaluate_checkpoint(const PolicyParams& checkpoint, const PolicyParams& base,
                                          const DatasetSplit& split, const Environment& env,
                                          const EvalConfig& config, const Judge& judge) {
  if (split.test.empty()) throw std::invalid_argument("evaluate_checkpoint: empty test split");
  CheckpointEval out;
  out.rollouts = paired_rollouts(checkpoint, base, split, split.test, env, config);
  out.clarification = clarification_from_rollouts(out.rollouts, split, env.scorer);
  std::vector<Response> trained;
  std::vector<Response> based;
  std::vector<GoldResponse> golds;
  for (std::size_t i = 0; i < out.rollouts.pairs.size(); ++i) {
    trained.push_back(*out.rollouts.trained[i].final_response);
    based.push_back(*out.rollouts.base[i].final_response);
    golds.push_back(split.gold(out.rollouts.pairs[i]));
  }
  out.win_rate = dual_pass_win_rate(judge, trained, based, golds);
  return out;
}

inline CheckpointEval evaluate_checkpoint(const PolicyParams& checkpoint, const PolicyParams& base,
                                          const DatasetSplit& split, const Environment& env,
                                          const EvalConfig& config) {
  return evaluate_checkpoint(checkpoint, base, split, env, config, Judge(ScoringJudge{config.wrong_penalty, 0.0}));
}

}  // namespace togate
