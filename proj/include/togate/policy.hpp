#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "togate/environment.hpp"
#include "togate/rng.hpp"
#include "togate/types.hpp"

namespace togate {

// ---------------------------------------------------------------------------
// Contexts and parameters
// ---------------------------------------------------------------------------

/// Conditioning of a question: which attributes matter for the task and
/// which have already been asked.
struct QuestionContext {
  Mask relevant_mask = 0;
  Mask asked_mask = 0;

  auto operator<=>(const QuestionContext&) const = default;
};

/// Conditioning of one response slot: the attribute being stated and the
/// value the conversation reported for it (kUnobserved if never asked).
struct ResponseContext {
  int attribute = 0;
  int observed = kUnobserved;

  auto operator<=>(const ResponseContext&) const = default;
};

/// Tabular softmax policy. Missing rows read as all-zero logits, so a
/// default-constructed table is the uniform policy. The same type doubles as a
/// gradient table.
struct PolicyParams {
  AttributeSpace space{};
  std::map<QuestionContext, std::vector<double>> question_logits;
  std::map<ResponseContext, std::vector<double>> response_logits;

  PolicyParams() = default;
  explicit PolicyParams(const AttributeSpace& s) : space(s) {}

  std::vector<double> question_row(const QuestionContext& ctx) const {
    auto it = question_logits.find(ctx);
    if (it == question_logits.end()) return std::vector<double>(static_cast<std::size_t>(space.num_attributes), 0.0);
    return it->second;
  }

  std::vector<double> response_row(const ResponseContext& ctx) const {
    auto it = response_logits.find(ctx);
    if (it == response_logits.end()) return std::vector<double>(static_cast<std::size_t>(space.num_values), 0.0);
    return it->second;
  }

  std::vector<double>& question_row_mut(const QuestionContext& ctx) {
    auto [it, _] = question_logits.try_emplace(ctx, static_cast<std::size_t>(space.num_attributes), 0.0);
    return it->second;
  }

  std::vector<double>& response_row_mut(const ResponseContext& ctx) {
    auto [it, _] = response_logits.try_emplace(ctx, static_cast<std::size_t>(space.num_values), 0.0);
    return it->second;
  }

  bool empty() const { return question_logits.empty() && response_logits.empty(); }

  bool all_finite() const {
    auto finite = [](const auto& table) {
      for (const auto& [_, row] : table)
        for (double x : row)
          if (!std::isfinite(x)) return false;
      return true;
    };
    return finite(question_logits) && finite(response_logits);
  }

  bool operator==(const PolicyParams&) const = default;
};

using PolicyGradient = PolicyParams;

/// dst += scale * src, row by row; rows missing in dst are created.
inline void add_scaled(PolicyParams& dst, const PolicyParams& src, double scale) {
  for (const auto& [ctx, row] : src.question_logits) {
    auto& d = dst.question_row_mut(ctx);
    for (std::size_t i = 0; i < row.size(); ++i) d[i] += scale * row[i];
  }
  for (const auto& [ctx, row] : src.response_logits) {
    auto& d = dst.response_row_mut(ctx);
    for (std::size_t i = 0; i < row.size(); ++i) d[i] += scale * row[i];
  }
}

/// Deep copy, used to freeze the reference policy.
inline PolicyParams snapshot(const PolicyParams& params) { return params; }

// ---------------------------------------------------------------------------
// Softmax helpers
// ---------------------------------------------------------------------------

inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
  std::vector<double> p(logits.size());
  if (p.empty()) return p;
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : logits) mx = std::max(mx, x / temperature);
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] / temperature - mx);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (out.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double x : logits) z += std::exp(x - mx);
  const double lz = mx + std::log(z);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

/// Index of the largest entry, lowest index on ties.
inline int argmax(std::span<const double> xs) {
  int best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] > xs[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

// ---------------------------------------------------------------------------
// Token log-probabilities
// ---------------------------------------------------------------------------

inline double question_logprob(const PolicyParams& params, const QuestionContext& ctx, int attribute) {
  const auto row = params.question_row(ctx);
  return log_softmax(row).at(static_cast<std::size_t>(attribute));
}

inline double response_logprob(const PolicyParams& params, const ResponseContext& ctx, int value) {
  const auto row = params.response_row(ctx);
  return log_softmax(row).at(static_cast<std::size_t>(value));
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// A scored questioner output: a question sequence and/or a final response.
/// `answers` supplies the observations that condition the response slots;
/// it does not contribute probability mass itself.
struct Trajectory {
  std::vector<Token> questions;
  std::vector<Token> answers;
  std::optional<Response> response;
};

namespace detail {

/// Calls visit_q(ctx, attribute) for each question and visit_r(ctx, value)
/// for each response slot, in generation order.
template <typename VisitQ, typename VisitR>
void walk_trajectory(const AttributeSpace& space, const Task& task, const Trajectory& traj, VisitQ&& visit_q,
                     VisitR&& visit_r) {
  const Mask relevant = task.relevant_mask();
  Mask asked = 0;
  for (const Token& q : traj.questions) {
    if (q.kind != TokenKind::Ask || q.attribute < 0 || q.attribute >= space.num_attributes)
      throw std::invalid_argument("trajectory: question tokens must be Ask(a) with a in range");
    visit_q(QuestionContext{relevant, asked}, q.attribute);
    asked |= bit(q.attribute);
  }
  if (!traj.response) return;
  if (!is_response_shaped(*traj.response, task, space.num_values))
    throw std::invalid_argument("trajectory: response is not one Say per relevant attribute followed by End");
  const auto observed = observed_values(space.num_attributes, traj.answers);
  for (std::size_t i = 0; i + 1 < traj.response->size(); ++i) {
    const Token& say = (*traj.response)[i];
    visit_r(ResponseContext{say.attribute, observed[static_cast<std::size_t>(say.attribute)]}, say.value);
  }
}

}  // namespace detail

/// Sum of per-token log-probabilities; End is deterministic and contributes 0.
inline double trajectory_logprob(const PolicyParams& params, const Task& task, const Trajectory& traj) {
  double total = 0.0;
  detail::walk_trajectory(
      params.space, task, traj, [&](const QuestionContext& ctx, int a) { total += question_logprob(params, ctx, a); },
      [&](const ResponseContext& ctx, int v) { total += response_logprob(params, ctx, v); });
  return total;
}

/// Exact gradient of trajectory_logprob: one-hot(chosen) - softmax(logits)
/// accumulated per visited context. Unvisited contexts are absent.
inline PolicyGradient grad_trajectory_logprob(const PolicyParams& params, const Task& task, const Trajectory& traj) {
  PolicyGradient g(params.space);
  detail::walk_trajectory(
      params.space, task, traj,
      [&](const QuestionContext& ctx, int a) {
        const auto p = softmax(params.question_row(ctx));
        auto& row = g.question_row_mut(ctx);
        for (std::size_t i = 0; i < p.size(); ++i) row[i] -= p[i];
        row[static_cast<std::size_t>(a)] += 1.0;
      },
      [&](const ResponseContext& ctx, int v) {
        const auto p = softmax(params.response_row(ctx));
        auto& row = g.response_row_mut(ctx);
        for (std::size_t i = 0; i < p.size(); ++i) row[i] -= p[i];
        row[static_cast<std::size_t>(v)] += 1.0;
      });
  return g;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

enum class RolloutMode { Sample, Greedy };

/// Draws one index from softmax(logits / temperature) or takes the argmax.
/// Sampling consumes exactly one uniform draw.
inline int choose(std::span<const double> logits, RolloutMode mode, double temperature, RngStream& rng) {
  if (mode == RolloutMode::Greedy) return argmax(logits);
  const auto p = softmax(logits, temperature);
  return rng.categorical(p);
}

/// Emits Say(a, v) for each relevant attribute in ascending order, conditioned
/// on the latest observed answer for a, then End.
inline Response sample_response(const PolicyParams& params, const Task& task, const std::vector<Token>& answers,
                                RolloutMode mode, RngStream& rng, double temperature = 1.0) {
  const auto observed = observed_values(params.space.num_attributes, answers);
  Response out;
  out.reserve(task.relevant.size() + 1);
  for (int a : task.relevant) {
    const ResponseContext ctx{a, observed[static_cast<std::size_t>(a)]};
    out.push_back(Token::say(a, choose(params.response_row(ctx), mode, temperature, rng)));
  }
  out.push_back(Token::end());
  return out;
}

/// Plays K-1 clarification turns against the roleplayer, then produces the
/// final response. Temperature applies to question and response sampling.
inline Conversation sample_conversation(const PolicyParams& params, const Task& task, const Persona& persona,
                                        const RoleplayerConfig& roleplayer, int turns, RngStream& rng,
                                        double temperature = 1.0, RolloutMode mode = RolloutMode::Sample) {
  if (turns < 1) throw std::invalid_argument("sample_conversation: K must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_conversation: temperature must be > 0");
  Conversation c;
  c.task_id = task.id;
  c.persona_id = persona.id;
  const Mask relevant = task.relevant_mask();
  Mask asked = 0;
  for (int k = 0; k + 1 < turns; ++k) {
    const QuestionContext ctx{relevant, asked};
    const int a = choose(params.question_row(ctx), mode, temperature, rng);
    const Token q = Token::ask(a);
    c.turns.push_back({q, roleplayer_answer(persona, q, roleplayer, params.space.num_values, rng)});
    asked |= bit(a);
  }
  c.final_response = sample_response(params, task, answers_of(c), mode, rng, temperature);
  return c;
}

// ---------------------------------------------------------------------------
// KL diagnostic
// ---------------------------------------------------------------------------

inline double categorical_kl(std::span<const double> logits_p, std::span<const double> logits_q) {
  const auto lp = log_softmax(logits_p);
  const auto lq = log_softmax(logits_q);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
  return std::max(kl, 0.0);
}

/// KL[params || ref] over complete questioner outputs for one task with
/// turns-1 questions: the expected per-context categorical KL under the
/// visitation distribution of `params`, found by enumerating every question
/// sequence. Observations of asked attributes are taken as uniform over V
/// (a faithful roleplayer facing a uniform persona prior).
inline double kl_to_reference(const PolicyParams& params, const PolicyParams& ref, const Task& task, int turns) {
  if (!(params.space == ref.space)) throw std::invalid_argument("kl_to_reference: attribute spaces differ");
  const AttributeSpace& space = params.space;
  const Mask relevant = task.relevant_mask();
  const double uniform_obs = 1.0 / space.num_values;

  auto response_kl = [&](Mask asked) {
    double kl = 0.0;
    for (int a : task.relevant) {
      if (asked & bit(a)) {
        for (int v = 0; v < space.num_values; ++v) {
          const ResponseContext ctx{a, v};
          kl += uniform_obs * categorical_kl(params.response_row(ctx), ref.response_row(ctx));
        }
      } else {
        const ResponseContext ctx{a, kUnobserved};
        kl += categorical_kl(params.response_row(ctx), ref.response_row(ctx));
      }
    }
    return kl;
  };

  std::function<double(Mask, int)> recurse = [&](Mask asked, int remaining) -> double {
    if (remaining == 0) return response_kl(asked);
    const QuestionContext ctx{relevant, asked};
    const auto row = params.question_row(ctx);
    double total = categorical_kl(row, ref.question_row(ctx));
    const auto p = softmax(row);
    for (int a = 0; a < space.num_attributes; ++a) {
      if (p[static_cast<std::size_t>(a)] == 0.0) continue;
      total += p[static_cast<std::size_t>(a)] * recurse(asked | bit(a), remaining - 1);
    }
    return total;
  };
  return recurse(0, std::max(turns - 1, 0));
}

}  // namespace togate
