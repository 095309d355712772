#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <regex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "togate/evaluation.hpp"
#include "togate/io.hpp"
#include "togate/parallel.hpp"
#include "togate/types.hpp"

namespace togate {

class TransportError : public std::runtime_error {
 public:
  TransportError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  /// Last HTTP status, or -1 when no response arrived.
  int status() const { return status_; }

 private:
  int status_;
};

struct PromptTemplates {
  std::string questioner;
  std::string roleplayer;
  std::string oracle;
  std::string judge;
};

struct RemoteConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "TOGATE_API_KEY";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double temperature = 0.0;
  std::chrono::milliseconds initial_backoff{500};
  int max_in_flight = 4;
  PromptTemplates templates;
  std::function<void(const std::string&)> log;  // receives redacted request/response lines
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };

  void validate() const {
    if (!(timeout_seconds > 0.0)) throw ConfigError("remote: timeout_seconds must be > 0");
    if (max_retries < 0) throw ConfigError("remote: max_retries must be >= 0");
    if (max_in_flight < 1) throw ConfigError("remote: max_in_flight must be >= 1");
    if (base_url.empty()) throw ConfigError("remote: base_url is empty");
  }
};

inline PromptTemplates load_templates(const std::filesystem::path& dir) {
  return {read_text(dir / "questioner.txt"), read_text(dir / "roleplayer.txt"), read_text(dir / "oracle.txt"),
          read_text(dir / "judge.txt")};
}

/// Replaces every {{name}} with bindings[name]. Unused bindings are allowed.
inline std::string render_template(const std::string& text, const std::map<std::string, std::string>& bindings) {
  static const std::regex placeholder(R"(\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\})");
  std::string out;
  auto begin = std::sregex_iterator(text.begin(), text.end(), placeholder);
  std::size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const std::string name = (*it)[1].str();
    auto b = bindings.find(name);
    if (b == bindings.end()) throw ConfigError("template placeholder '" + name + "' is not bound");
    out.append(text, last, static_cast<std::size_t>(it->position()) - last);
    out += b->second;
    last = static_cast<std::size_t>(it->position() + it->length());
  }
  out.append(text, last, std::string::npos);
  return out;
}

struct ChatMessage {
  std::string role;
  std::string content;
};

inline std::string redact(std::string text, const std::string& secret) {
  if (secret.empty()) return text;
  for (std::size_t p = text.find(secret); p != std::string::npos; p = text.find(secret, p))
    text.replace(p, secret.size(), "***");
  return text;
}

inline std::string api_key(const RemoteConfig& config) {
  const char* key = std::getenv(config.api_key_env.c_str());
  if (!key || !*key) throw ConfigError("remote: environment variable " + config.api_key_env + " is not set");
  return key;
}

/// One chat-completions call. Connection failures, 429 and 5xx are retried
/// with doubling backoff; other statuses fail at once.
inline std::string chat(const RemoteConfig& config, const std::vector<ChatMessage>& messages) {
  config.validate();
  const std::string key = api_key(config);
  Json body;
  body["model"] = config.model;
  body["temperature"] = config.temperature;
  body["messages"] = Json::array();
  for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  const std::string payload = body.dump();

  httplib::Client client(config.base_url);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config.timeout_seconds));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  const httplib::Headers headers{{"Authorization", "Bearer " + key}};

  auto log = [&](const std::string& line) {
    if (config.log) config.log(redact(line, key));
  };
  int last_status = -1;
  std::string last_error;
  auto backoff = config.initial_backoff;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      config.sleep(backoff);
      backoff *= 2;
    }
    log("request attempt=" + std::to_string(attempt + 1) + " url=" + config.base_url + config.path +
        " auth=Bearer *** body=" + payload);
    auto res = client.Post(config.path, headers, payload, "application/json");
    if (!res) {
      last_status = -1;
      last_error = httplib::to_string(res.error());
      log("transport failure: " + last_error);
      continue;
    }
    last_status = res->status;
    log("response status=" + std::to_string(res->status) + " body=" + res->body);
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw TransportError(res->status, "chat: HTTP " + std::to_string(res->status));
    try {
      return Json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(res->status, std::string("chat: malformed completion: ") + e.what());
    }
  }
  throw TransportError(last_status, "chat: retries exhausted after " + std::to_string(config.max_retries + 1) +
                                        " attempts (" + last_error + ")");
}

/// Issues the conversations with at most max_in_flight concurrent requests;
/// result i always answers request i.
inline std::vector<std::string> chat_many(const RemoteConfig& config,
                                          const std::vector<std::vector<ChatMessage>>& requests) {
  config.validate();
  api_key(config);
  std::vector<std::string> out(requests.size());
  parallel_for(requests.size(), config.max_in_flight, [&](std::size_t i) { out[i] = chat(config, requests[i]); });
  return out;
}

// ---------------------------------------------------------------------------
// Remote agents
// ---------------------------------------------------------------------------

/// Text rendering of game objects for the prompt templates.
inline std::string describe_persona(const Persona& p) {
  std::string s;
  for (std::size_t a = 0; a < p.values.size(); ++a)
    s += "attribute " + std::to_string(a) + " = " + std::to_string(p.values[a]) + "\n";
  return s;
}

inline std::string describe_task(const Task& t) {
  std::string s = "Task " + std::to_string(t.id) + " depends on attributes";
  for (int a : t.relevant) s += " " + std::to_string(a);
  return s;
}

inline std::string describe_tokens(const std::vector<Token>& tokens) {
  std::string s;
  for (const Token& t : tokens) s += (s.empty() ? "" : " ") + token_to_string(t);
  return s;
}

struct RemoteAgents {
  RemoteConfig config;

  std::string ask(const Task& task, const std::string& history) const {
    return chat(config, {{"user", render_template(config.templates.questioner,
                                                  {{"task", describe_task(task)}, {"history", history}})}});
  }

  std::string answer(const Persona& persona, const std::string& question) const {
    return chat(config, {{"user", render_template(config.templates.roleplayer,
                                                  {{"persona", describe_persona(persona)}, {"question", question}})}});
  }

  std::string gold(const Task& task, const Persona& persona) const {
    return chat(config, {{"user", render_template(config.templates.oracle,
                                                  {{"persona", describe_persona(persona)}, {"task", describe_task(task)}})}});
  }

  /// Expects the completion to start with "first", "second" or "tie".
  JudgeVerdict judge(const GoldResponse& gold, const Response& first, const Response& second) const {
    const std::string text = chat(config, {{"user", render_template(config.templates.judge,
                                                                    {{"gold", describe_tokens(gold.tokens)},
                                                                     {"first", describe_tokens(first)},
                                                                     {"second", describe_tokens(second)}})}});
    JudgeVerdict v;
    if (text.rfind("first", 0) == 0)
      v.outcome = Outcome::FirstWins;
    else if (text.rfind("second", 0) == 0)
      v.outcome = Outcome::SecondWins;
    else
      v.outcome = Outcome::Tie;
    return v;
  }

  Judge as_judge() const {
    return [this](const GoldResponse& g, const Response& a, const Response& b) { return judge(g, a, b); };
  }
};

}  // namespace togate
