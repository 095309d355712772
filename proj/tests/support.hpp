#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "togate/togate.hpp"

namespace testing_support {

using namespace togate;

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("togate_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline Task random_task(std::mt19937_64& g, int id, int num_attributes, int relevant) {
  std::vector<int> all(static_cast<std::size_t>(num_attributes));
  for (int a = 0; a < num_attributes; ++a) all[static_cast<std::size_t>(a)] = a;
  std::shuffle(all.begin(), all.end(), g);
  Task t{id, {all.begin(), all.begin() + relevant}};
  std::sort(t.relevant.begin(), t.relevant.end());
  return t;
}

inline Persona random_persona(std::mt19937_64& g, int id, const AttributeSpace& s) {
  std::uniform_int_distribution<int> v(0, s.num_values - 1);
  Persona p{id, {}};
  for (int a = 0; a < s.num_attributes; ++a) p.values.push_back(v(g));
  return p;
}

/// Random logits on a random subset of the reachable contexts.
inline PolicyParams random_params(std::mt19937_64& g, const AttributeSpace& s, const std::vector<Task>& tasks,
                                  double scale = 1.5) {
  std::normal_distribution<double> n(0.0, scale);
  std::bernoulli_distribution keep(0.7);
  PolicyParams p(s);
  const Mask full = static_cast<Mask>((1u << s.num_attributes) - 1);
  for (const Task& t : tasks)
    for (Mask asked = 0; asked <= full; ++asked)
      if (keep(g))
        for (double& x : p.question_row_mut(QuestionContext{t.relevant_mask(), asked})) x = n(g);
  for (int a = 0; a < s.num_attributes; ++a)
    for (int o = kUnobserved; o < s.num_values; ++o)
      if (keep(g))
        for (double& x : p.response_row_mut(ResponseContext{a, o})) x = n(g);
  return p;
}

inline std::vector<Token> random_questions(std::mt19937_64& g, int num_attributes, int max_len) {
  std::uniform_int_distribution<int> len(0, max_len);
  std::uniform_int_distribution<int> a(0, num_attributes - 1);
  std::vector<Token> q;
  for (int k = len(g); k > 0; --k) q.push_back(Token::ask(a(g)));
  return q;
}

inline std::vector<Token> random_answers(std::mt19937_64& g, const std::vector<Token>& questions, int num_values) {
  std::uniform_int_distribution<int> v(0, num_values - 1);
  std::vector<Token> out;
  for (const Token& q : questions) out.push_back(Token::answer(q.attribute, v(g)));
  return out;
}

inline Response random_response(std::mt19937_64& g, const Task& t, int num_values) {
  std::uniform_int_distribution<int> v(0, num_values - 1);
  Response r;
  for (int a : t.relevant) r.push_back(Token::say(a, v(g)));
  r.push_back(Token::end());
  return r;
}

inline PreferencePair random_pair(std::mt19937_64& g, const Task& t, const AttributeSpace& s, int max_len) {
  PreferencePair p;
  p.task_id = t.id;
  p.q_w = random_questions(g, s.num_attributes, max_len);
  p.q_l = random_questions(g, s.num_attributes, max_len);
  p.answers_w = random_answers(g, p.q_w, s.num_values);
  p.answers_l = random_answers(g, p.q_l, s.num_values);
  p.o_w = random_response(g, t, s.num_values);
  p.o_l = random_response(g, t, s.num_values);
  p.score_w = 0.0;
  p.score_l = 0.0;
  return p;
}

struct GradCheck {
  double relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Central differences of f at every coordinate present in `params` or in
/// `analytic`, compared in the Euclidean norm.
inline GradCheck finite_difference_check(PolicyParams params, const PolicyGradient& analytic,
                                         const std::function<double(const PolicyParams&)>& f, double h = 1e-5) {
  for (const auto& [ctx, _] : analytic.question_logits) params.question_row_mut(ctx);
  for (const auto& [ctx, _] : analytic.response_logits) params.response_row_mut(ctx);
  double diff2 = 0.0;
  double norm2 = 0.0;
  GradCheck out;
  auto visit = [&](std::vector<double>& row, const std::vector<double>& grad_row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      const double x = row[i];
      row[i] = x + h;
      const double fp = f(params);
      row[i] = x - h;
      const double fm = f(params);
      row[i] = x;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = grad_row.empty() ? 0.0 : grad_row[i];
      diff2 += (a - numeric) * (a - numeric);
      norm2 += std::max(a * a, numeric * numeric);
      ++out.coordinates;
    }
  };
  for (auto& [ctx, row] : params.question_logits) visit(row, analytic.question_row(ctx));
  for (auto& [ctx, row] : params.response_logits) visit(row, analytic.response_row(ctx));
  out.relative_error = norm2 == 0.0 ? std::sqrt(diff2) : std::sqrt(diff2 / norm2);
  return out;
}

/// The policy pi*(q) = ref(q) exp(r(q)/beta) / Z over question sequences of
/// length 1 or 2, built exactly: the second question's context (relevant,
/// {a1}) identifies the first question, so any sequence distribution of
/// that length factors into the tabular rows.
inline PolicyParams tilted_policy(const PolicyParams& ref, const Task& task, int length, const RewardFn& reward,
                                  double beta) {
  if (length < 1 || length > 2) throw std::invalid_argument("tilted_policy: length must be 1 or 2");
  const int A = ref.space.num_attributes;
  const Mask rel = task.relevant_mask();
  PolicyParams out = ref;
  auto& first = out.question_row_mut(QuestionContext{rel, 0});
  for (int a1 = 0; a1 < A; ++a1) {
    const double l1 = question_logprob(ref, QuestionContext{rel, 0}, a1);
    if (length == 1) {
      first[static_cast<std::size_t>(a1)] = l1 + reward({Token::ask(a1)}) / beta;
      continue;
    }
    const QuestionContext second_ctx{rel, bit(a1)};
    std::vector<double> second(static_cast<std::size_t>(A));
    double mass = 0.0;
    for (int a2 = 0; a2 < A; ++a2) {
      second[static_cast<std::size_t>(a2)] =
          question_logprob(ref, second_ctx, a2) + reward({Token::ask(a1), Token::ask(a2)}) / beta;
      mass += std::exp(second[static_cast<std::size_t>(a2)]);
    }
    first[static_cast<std::size_t>(a1)] = l1 + std::log(mass);
    out.question_row_mut(second_ctx) = second;
  }
  return out;
}

}  // namespace testing_support
