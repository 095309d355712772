#pragma once

// Line-delimited record files. Every line is one JSON object whose first key
// is "version"; the second key, "record", names the record type.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "togate/types.hpp"

namespace togate {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

inline Json record(const char* type) {
  Json j;
  j["version"] = kFormatVersion;
  j["record"] = type;
  return j;
}

// Tokens are written as "ask:A", "ans:A:V", "say:A:V" and "end".
inline std::string token_to_string(const Token& t) {
  switch (t.kind) {
    case TokenKind::Ask:
      return "ask:" + std::to_string(t.attribute);
    case TokenKind::Answer:
      return "ans:" + std::to_string(t.attribute) + ":" + std::to_string(t.value);
    case TokenKind::Say:
      return "say:" + std::to_string(t.attribute) + ":" + std::to_string(t.value);
    case TokenKind::End:
      return "end";
  }
  return "end";
}

inline Token token_from_string(const std::string& s) {
  if (s == "end") return Token::end();
  auto parse_int = [&](const std::string& part) {
    std::size_t used = 0;
    const int v = std::stoi(part, &used);
    if (used != part.size()) throw std::invalid_argument("bad token '" + s + "'");
    return v;
  };
  const auto c1 = s.find(':');
  if (c1 == std::string::npos) throw std::invalid_argument("bad token '" + s + "'");
  const std::string head = s.substr(0, c1);
  const std::string rest = s.substr(c1 + 1);
  if (head == "ask") return Token::ask(parse_int(rest));
  const auto c2 = rest.find(':');
  if (c2 == std::string::npos) throw std::invalid_argument("bad token '" + s + "'");
  const int a = parse_int(rest.substr(0, c2));
  const int v = parse_int(rest.substr(c2 + 1));
  if (head == "ans") return Token::answer(a, v);
  if (head == "say") return Token::say(a, v);
  throw std::invalid_argument("bad token '" + s + "'");
}

inline Json tokens_to_json(const std::vector<Token>& tokens) {
  Json arr = Json::array();
  for (const Token& t : tokens) arr.push_back(token_to_string(t));
  return arr;
}

inline std::vector<Token> tokens_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a token array");
  std::vector<Token> out;
  out.reserve(j.size());
  for (const Json& e : j) out.push_back(token_from_string(e.get<std::string>()));
  return out;
}

/// A parsed line with its 1-based line number.
struct Line {
  std::size_t number = 0;
  Json value;
};

/// Reads and parses every non-empty line. A file whose last line is not
/// newline-terminated is treated as truncated.
inline std::vector<Line> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<Line> lines;
  std::size_t pos = 0;
  std::size_t number = 0;
  while (pos < text.size()) {
    ++number;
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) throw ParseError(number, "truncated record (no trailing newline)");
    const std::string raw = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (raw.empty()) continue;
    Json j;
    try {
      j = Json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(number, std::string("malformed record: ") + e.what());
    }
    if (!j.is_object() || !j.contains("version") || !j.contains("record"))
      throw ParseError(number, "record lacks version/record fields");
    if (j["version"] != kFormatVersion)
      throw ParseError(number, "unsupported version " + j["version"].dump());
    lines.push_back({number, std::move(j)});
  }
  return lines;
}

inline void write_records(const std::filesystem::path& path, const std::vector<Json>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Json& r : records) out << r.dump() << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Typed field access that reports the offending line.
template <typename T>
T field(const Line& line, const char* key) {
  if (!line.value.contains(key)) throw ParseError(line.number, std::string("missing field '") + key + "'");
  try {
    return line.value.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line.number, std::string("bad field '") + key + "': " + e.what());
  }
}

inline std::vector<Token> token_field(const Line& line, const char* key) {
  if (!line.value.contains(key)) throw ParseError(line.number, std::string("missing field '") + key + "'");
  try {
    return tokens_from_json(line.value.at(key));
  } catch (const std::exception& e) {
    throw ParseError(line.number, std::string("bad field '") + key + "': " + e.what());
  }
}

inline std::string record_type(const Line& line) { return field<std::string>(line, "record"); }

// ---------------------------------------------------------------------------
// Preference pairs (D_p audit dumps)
// ---------------------------------------------------------------------------

inline Json pair_to_json(const PreferencePair& p) {
  Json j = record("preference_pair");
  j["task_id"] = p.task_id;
  j["persona_id"] = p.persona_id;
  j["q_w"] = tokens_to_json(p.q_w);
  j["q_l"] = tokens_to_json(p.q_l);
  j["answers_w"] = tokens_to_json(p.answers_w);
  j["answers_l"] = tokens_to_json(p.answers_l);
  j["o_w"] = tokens_to_json(p.o_w);
  j["o_l"] = tokens_to_json(p.o_l);
  j["score_w"] = p.score_w;
  j["score_l"] = p.score_l;
  return j;
}

inline PreferencePair pair_from_line(const Line& line) {
  PreferencePair p;
  p.task_id = field<int>(line, "task_id");
  p.persona_id = field<int>(line, "persona_id");
  p.q_w = token_field(line, "q_w");
  p.q_l = token_field(line, "q_l");
  p.answers_w = token_field(line, "answers_w");
  p.answers_l = token_field(line, "answers_l");
  p.o_w = token_field(line, "o_w");
  p.o_l = token_field(line, "o_l");
  p.score_w = field<double>(line, "score_w");
  p.score_l = field<double>(line, "score_l");
  if (p.score_w < p.score_l) throw ParseError(line.number, "score_w < score_l");
  return p;
}

inline void save_pairs(const std::vector<PreferencePair>& pairs, const std::filesystem::path& path) {
  std::vector<Json> recs;
  Json header = record("preference_pairs");
  header["count"] = pairs.size();
  recs.push_back(header);
  for (const PreferencePair& p : pairs) recs.push_back(pair_to_json(p));
  write_records(path, recs);
}

inline std::vector<PreferencePair> load_pairs(const std::filesystem::path& path) {
  const auto lines = read_records(path);
  if (lines.empty() || record_type(lines.front()) != "preference_pairs")
    throw ParseError(lines.empty() ? 1 : lines.front().number, "expected preference_pairs header");
  const auto count = field<std::size_t>(lines.front(), "count");
  std::vector<PreferencePair> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (record_type(lines[i]) != "preference_pair") throw ParseError(lines[i].number, "unexpected record type");
    out.push_back(pair_from_line(lines[i]));
  }
  if (out.size() != count)
    throw ParseError(lines.back().number + 1,
                     "expected " + std::to_string(count) + " pairs, found " + std::to_string(out.size()));
  return out;
}

}  // namespace togate
