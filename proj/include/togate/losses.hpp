#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "togate/policy.hpp"
#include "togate/types.hpp"

namespace togate {

struct LossConfig {
  double beta = 0.1;    // preference strength
  double lambda = 2.0;  // response-loss weight; +inf keeps only the response loss

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("loss: beta must be > 0");
    if (!(lambda >= 0.0)) throw ConfigError("loss: lambda must be >= 0");
  }
};

struct LossAndGrad {
  double loss = 0.0;
  PolicyGradient grad;
};

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// -log(sigmoid(x)), stable for large |x|.
inline double neg_log_sigmoid(double x) { return softplus(-x); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Bradley-Terry probability that the item with reward r_w beats r_l.
inline double bt_probability(double r_w, double r_l) {
  const double m = std::max(r_w, r_l);
  const double ew = std::exp(r_w - m);
  const double el = std::exp(r_l - m);
  return ew / (ew + el);
}

// ---------------------------------------------------------------------------
// Supervised fine-tuning
// ---------------------------------------------------------------------------

struct SftExample {
  Task task;
  Trajectory trajectory;  // questions, answers and response of the positive conversation
};

/// Mean negative log-likelihood of the examples and its gradient.
inline LossAndGrad sft_loss_and_grad(const PolicyParams& policy, std::span<const SftExample> batch) {
  if (batch.empty()) throw std::invalid_argument("sft_loss_and_grad: empty batch");
  LossAndGrad out{0.0, PolicyGradient(policy.space)};
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const SftExample& ex : batch) {
    out.loss -= w * trajectory_logprob(policy, ex.task, ex.trajectory);
    add_scaled(out.grad, grad_trajectory_logprob(policy, ex.task, ex.trajectory), -w);
  }
  return out;
}

inline SftExample sft_example(const Task& task, const PreferencePair& p) {
  return {task, Trajectory{p.q_w, p.answers_w, p.o_w}};
}

// ---------------------------------------------------------------------------
// DPO
// ---------------------------------------------------------------------------

/// beta * [log pi(w)/ref(w) - log pi(l)/ref(l)]
inline double dpo_margin(const PolicyParams& policy, const PolicyParams& ref, const Task& task,
                         const Trajectory& seq_w, const Trajectory& seq_l, double beta) {
  const double dw = trajectory_logprob(policy, task, seq_w) - trajectory_logprob(ref, task, seq_w);
  const double dl = trajectory_logprob(policy, task, seq_l) - trajectory_logprob(ref, task, seq_l);
  return beta * (dw - dl);
}

inline double dpo_term(const PolicyParams& policy, const PolicyParams& ref, const Task& task, const Trajectory& seq_w,
                       const Trajectory& seq_l, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("dpo_term: beta must be > 0");
  return neg_log_sigmoid(dpo_margin(policy, ref, task, seq_w, seq_l, beta));
}

struct DpoTermResult {
  double loss = 0.0;
  double margin = 0.0;
  PolicyGradient grad;
};

/// d/dtheta softplus(-x) = -sigmoid(-x) * beta * (grad log pi(w) - grad log pi(l))
inline DpoTermResult dpo_term_and_grad(const PolicyParams& policy, const PolicyParams& ref, const Task& task,
                                       const Trajectory& seq_w, const Trajectory& seq_l, double beta) {
  DpoTermResult r{0.0, dpo_margin(policy, ref, task, seq_w, seq_l, beta), PolicyGradient(policy.space)};
  r.loss = neg_log_sigmoid(r.margin);
  const double coef = -beta * sigmoid(-r.margin);
  add_scaled(r.grad, grad_trajectory_logprob(policy, task, seq_w), coef);
  add_scaled(r.grad, grad_trajectory_logprob(policy, task, seq_l), -coef);
  return r;
}

inline Trajectory clarification_sequence(const std::vector<Token>& questions) {
  return Trajectory{questions, {}, std::nullopt};
}

inline Trajectory response_sequence(const std::vector<Token>& answers, const Response& response) {
  return Trajectory{{}, answers, response};
}

inline const Task& find_task(const std::vector<Task>& tasks, int id) {
  if (id >= 0 && id < static_cast<int>(tasks.size()) && tasks[static_cast<std::size_t>(id)].id == id)
    return tasks[static_cast<std::size_t>(id)];
  for (const Task& t : tasks)
    if (t.id == id) return t;
  throw std::out_of_range("unknown task id " + std::to_string(id));
}

enum class PreferenceStage { Clarification, Response };

struct StageLoss {
  double loss = 0.0;
  double mean_margin = 0.0;
  PolicyGradient grad;
};

/// Mean DPO term over D_p for one stage, with its analytic gradient.
inline StageLoss stage_loss(const PolicyParams& policy, const PolicyParams& ref, const std::vector<Task>& tasks,
                            std::span<const PreferencePair> dp, double beta, PreferenceStage stage) {
  if (dp.empty()) throw std::invalid_argument("preference loss: empty D_p");
  StageLoss out{0.0, 0.0, PolicyGradient(policy.space)};
  const double w = 1.0 / static_cast<double>(dp.size());
  for (const PreferencePair& p : dp) {
    const Task& task = find_task(tasks, p.task_id);
    const bool clar = stage == PreferenceStage::Clarification;
    const Trajectory sw = clar ? clarification_sequence(p.q_w) : response_sequence(p.answers_w, p.o_w);
    const Trajectory sl = clar ? clarification_sequence(p.q_l) : response_sequence(p.answers_l, p.o_l);
    DpoTermResult t = dpo_term_and_grad(policy, ref, task, sw, sl, beta);
    out.loss += w * t.loss;
    out.mean_margin += w * t.margin;
    add_scaled(out.grad, t.grad, w);
  }
  return out;
}

/// L_c: DPO over the question sequences (q_w, q_l).
inline LossAndGrad clarification_loss(const PolicyParams& policy, const PolicyParams& ref,
                                      const std::vector<Task>& tasks, std::span<const PreferencePair> dp,
                                      double beta) {
  StageLoss s = stage_loss(policy, ref, tasks, dp, beta, PreferenceStage::Clarification);
  return {s.loss, std::move(s.grad)};
}

/// L_o: DPO over the final responses (o_w, o_l).
inline LossAndGrad response_loss(const PolicyParams& policy, const PolicyParams& ref, const std::vector<Task>& tasks,
                                 std::span<const PreferencePair> dp, double beta) {
  StageLoss s = stage_loss(policy, ref, tasks, dp, beta, PreferenceStage::Response);
  return {s.loss, std::move(s.grad)};
}

// ---------------------------------------------------------------------------
// Combination
// ---------------------------------------------------------------------------

struct LossWeights {
  double clarification = 1.0;
  double response = 0.0;
};

/// (1/(1+lambda), lambda/(1+lambda)). The response weight is formed as
/// 1 - w_c so the pair sums to exactly 1.
inline LossWeights combined_weights(double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("combined_weights: lambda must be >= 0");
  if (std::isinf(lambda)) return {0.0, 1.0};
  const double wc = 1.0 / (1.0 + lambda);
  return {wc, 1.0 - wc};
}

inline double combined_loss(double l_c, double l_o, double lambda) {
  const LossWeights w = combined_weights(lambda);
  double total = 0.0;
  if (w.clarification != 0.0) total += w.clarification * l_c;
  if (w.response != 0.0) total += w.response * l_o;
  return total;
}

inline PolicyGradient combine_gradients(const PolicyGradient& g_c, const PolicyGradient& g_o, double lambda) {
  const LossWeights w = combined_weights(lambda);
  PolicyGradient out(g_c.space);
  if (w.clarification != 0.0) add_scaled(out, g_c, w.clarification);
  if (w.response != 0.0) add_scaled(out, g_o, w.response);
  return out;
}

struct ObjectiveValue {
  double l_c = 0.0;
  double l_o = 0.0;
  double total = 0.0;
  double margin_c = 0.0;
  double margin_o = 0.0;
  PolicyGradient grad;
};

/// L = L_c/(1+lambda) + lambda*L_o/(1+lambda) over D_p. A stage with zero
/// weight is skipped entirely.
inline ObjectiveValue preference_objective(const PolicyParams& policy, const PolicyParams& ref,
                                           const std::vector<Task>& tasks, std::span<const PreferencePair> dp,
                                           const LossConfig& config) {
  const LossWeights w = combined_weights(config.lambda);
  ObjectiveValue v;
  v.grad = PolicyGradient(policy.space);
  if (w.clarification != 0.0) {
    StageLoss c = stage_loss(policy, ref, tasks, dp, config.beta, PreferenceStage::Clarification);
    v.l_c = c.loss;
    v.margin_c = c.mean_margin;
    add_scaled(v.grad, c.grad, w.clarification);
  }
  if (w.response != 0.0) {
    StageLoss o = stage_loss(policy, ref, tasks, dp, config.beta, PreferenceStage::Response);
    v.l_o = o.loss;
    v.margin_o = o.mean_margin;
    add_scaled(v.grad, o.grad, w.response);
  }
  v.total = combined_loss(v.l_c, v.l_o, config.lambda);
  return v;
}

// ---------------------------------------------------------------------------
// Implicit reward and partition function
// ---------------------------------------------------------------------------

/// Pair-relevant part of the implicit reward, beta * log pi/ref. The
/// beta * log Z(t) term is omitted because it cancels in every comparison.
inline double implicit_reward(const PolicyParams& policy, const PolicyParams& ref, const Task& task,
                              const Trajectory& seq, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("implicit_reward: beta must be > 0");
  return beta * (trajectory_logprob(policy, task, seq) - trajectory_logprob(ref, task, seq));
}

inline constexpr std::size_t kMaxOracleSequences = 4096;

inline std::size_t sequence_count(int num_attributes, int length) {
  std::size_t n = 1;
  for (int i = 0; i < length; ++i) {
    n *= static_cast<std::size_t>(num_attributes);
    if (n > kMaxOracleSequences * 64) break;
  }
  return n;
}

/// Every question sequence of the given length, in lexicographic order.
inline std::vector<std::vector<Token>> enumerate_question_sequences(int num_attributes, int length) {
  std::vector<std::vector<Token>> out{{}};
  for (int k = 0; k < length; ++k) {
    std::vector<std::vector<Token>> next;
    next.reserve(out.size() * static_cast<std::size_t>(num_attributes));
    for (const auto& prefix : out) {
      for (int a = 0; a < num_attributes; ++a) {
        auto s = prefix;
        s.push_back(Token::ask(a));
        next.push_back(std::move(s));
      }
    }
    out = std::move(next);
  }
  return out;
}

using RewardFn = std::function<double(const std::vector<Token>& questions)>;

/// Brute-force Z(t) = sum_q ref(q|t) exp(r(q)/beta) over all question
/// sequences of `length`. Test oracle only; refuses large instances.
inline double partition_oracle(const PolicyParams& ref, const Task& task, int length, const RewardFn& reward,
                               double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("partition_oracle: beta must be > 0");
  const std::size_t count = sequence_count(ref.space.num_attributes, length);
  if (count > kMaxOracleSequences)
    throw std::length_error("partition_oracle: " + std::to_string(ref.space.num_attributes) + "^" +
                            std::to_string(length) + " = " + std::to_string(count) +
                            " sequences exceeds the enumeration limit of " + std::to_string(kMaxOracleSequences));
  double z = 0.0;
  for (const auto& q : enumerate_question_sequences(ref.space.num_attributes, length)) {
    const Trajectory t = clarification_sequence(q);
    z += std::exp(trajectory_logprob(ref, task, t) + reward(q) / beta);
  }
  return z;
}

}  // namespace togate
