#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace togate {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Invalid configuration or precondition violation (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed dataset / checkpoint / record file.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Non-finite loss or gradient during training (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Attribute space
// ---------------------------------------------------------------------------

using Mask = std::uint32_t;

inline constexpr int kMaxAttributes = 16;

struct AttributeSpace {
  int num_attributes = 6;
  int num_values = 4;

  void validate() const {
    if (num_attributes < 1) throw ConfigError("num_attributes must be >= 1");
    if (num_attributes > kMaxAttributes)
      throw ConfigError("num_attributes must be <= 16 (asked sets are bitmasks)");
    if (num_values < 2) throw ConfigError("num_values must be >= 2 (V >= 2)");
  }

  bool operator==(const AttributeSpace&) const = default;
};

inline Mask bit(int attribute) { return Mask{1} << attribute; }

inline Mask mask_of(const std::vector<int>& attributes) {
  Mask m = 0;
  for (int a : attributes) m |= bit(a);
  return m;
}

struct Persona {
  int id = 0;
  std::vector<int> values;

  bool operator==(const Persona&) const = default;
};

struct Task {
  int id = 0;
  std::vector<int> relevant;  // ascending, distinct

  Mask relevant_mask() const { return mask_of(relevant); }
  bool is_relevant(int a) const { return std::binary_search(relevant.begin(), relevant.end(), a); }

  bool operator==(const Task&) const = default;
};

inline void validate_persona(const Persona& p, const AttributeSpace& space) {
  if (static_cast<int>(p.values.size()) != space.num_attributes)
    throw ConfigError("persona " + std::to_string(p.id) + ": wrong number of values");
  for (int v : p.values)
    if (v < 0 || v >= space.num_values)
      throw ConfigError("persona " + std::to_string(p.id) + ": value out of range");
}

inline void validate_task(const Task& t, const AttributeSpace& space) {
  for (std::size_t i = 0; i < t.relevant.size(); ++i) {
    const int a = t.relevant[i];
    if (a < 0 || a >= space.num_attributes)
      throw ConfigError("task " + std::to_string(t.id) + ": attribute out of range");
    if (i > 0 && t.relevant[i - 1] >= a)
      throw ConfigError("task " + std::to_string(t.id) + ": relevant set must be strictly ascending");
  }
}

// ---------------------------------------------------------------------------
// Tokens and conversations
// ---------------------------------------------------------------------------

enum class TokenKind : std::uint8_t { Ask, Answer, Say, End };

struct Token {
  TokenKind kind = TokenKind::End;
  int attribute = -1;
  int value = -1;

  static Token ask(int a) { return {TokenKind::Ask, a, -1}; }
  static Token answer(int a, int v) { return {TokenKind::Answer, a, v}; }
  static Token say(int a, int v) { return {TokenKind::Say, a, v}; }
  static Token end() { return {TokenKind::End, -1, -1}; }

  auto operator<=>(const Token&) const = default;
};

using Response = std::vector<Token>;

struct Turn {
  Token question;  // Ask
  Token answer;    // Answer for the same attribute

  bool operator==(const Turn&) const = default;
};

struct Conversation {
  int task_id = 0;
  int persona_id = 0;
  std::vector<Turn> turns;
  std::optional<Response> final_response;

  bool operator==(const Conversation&) const = default;
};

struct GoldResponse {
  Response tokens;

  bool operator==(const GoldResponse&) const = default;
};

/// True if `tokens` is one Say per relevant attribute in ascending order
/// followed by End, with every value in range.
inline bool is_response_shaped(const Response& tokens, const Task& task, int num_values) {
  if (tokens.size() != task.relevant.size() + 1) return false;
  for (std::size_t i = 0; i < task.relevant.size(); ++i) {
    const Token& t = tokens[i];
    if (t.kind != TokenKind::Say || t.attribute != task.relevant[i]) return false;
    if (t.value < 0 || t.value >= num_values) return false;
  }
  return tokens.back().kind == TokenKind::End;
}

inline std::vector<Token> questions_of(const Conversation& c) {
  std::vector<Token> out;
  out.reserve(c.turns.size());
  for (const Turn& t : c.turns) out.push_back(t.question);
  return out;
}

inline std::vector<Token> answers_of(const Conversation& c) {
  std::vector<Token> out;
  out.reserve(c.turns.size());
  for (const Turn& t : c.turns) out.push_back(t.answer);
  return out;
}

inline constexpr int kUnobserved = -1;

/// Latest answered value per attribute, kUnobserved where never answered.
inline std::vector<int> observed_values(int num_attributes, const std::vector<Token>& answers) {
  std::vector<int> obs(static_cast<std::size_t>(num_attributes), kUnobserved);
  for (const Token& t : answers) {
    if (t.kind == TokenKind::Answer && t.attribute >= 0 && t.attribute < num_attributes)
      obs[static_cast<std::size_t>(t.attribute)] = t.value;
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct PairId {
  int task_id = 0;
  int persona_id = 0;

  auto operator<=>(const PairId&) const = default;
};

/// One record of the contrastive dataset. The answers of the winning and
/// losing conversations are kept so response log-probabilities can be scored
/// in the contexts the responses were produced in.
struct PreferencePair {
  int task_id = 0;
  int persona_id = 0;
  std::vector<Token> q_w;
  std::vector<Token> q_l;
  std::vector<Token> answers_w;
  std::vector<Token> answers_l;
  Response o_w;
  Response o_l;
  double score_w = 0.0;
  double score_l = 0.0;

  bool operator==(const PreferencePair&) const = default;
};

struct DatasetSplit {
  AttributeSpace space;
  std::vector<Persona> personas;
  std::vector<Task> tasks;
  std::vector<PairId> train;
  std::vector<PairId> test;
  std::map<PairId, GoldResponse> golds;

  const Task& task(int id) const {
    if (id >= 0 && id < static_cast<int>(tasks.size()) && tasks[static_cast<std::size_t>(id)].id == id)
      return tasks[static_cast<std::size_t>(id)];
    for (const Task& t : tasks)
      if (t.id == id) return t;
    throw std::out_of_range("unknown task id " + std::to_string(id));
  }

  const Persona& persona(int id) const {
    if (id >= 0 && id < static_cast<int>(personas.size()) && personas[static_cast<std::size_t>(id)].id == id)
      return personas[static_cast<std::size_t>(id)];
    for (const Persona& p : personas)
      if (p.id == id) return p;
    throw std::out_of_range("unknown persona id " + std::to_string(id));
  }

  const GoldResponse& gold(const PairId& id) const {
    auto it = golds.find(id);
    if (it == golds.end())
      throw std::out_of_range("no gold for pair (" + std::to_string(id.task_id) + ", " +
                              std::to_string(id.persona_id) + ")");
    return it->second;
  }

  bool operator==(const DatasetSplit&) const = default;
};

}  // namespace togate
