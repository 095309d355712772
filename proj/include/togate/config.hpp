#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <string>

#include "togate/dataset.hpp"
#include "togate/environment.hpp"
#include "togate/io.hpp"
#include "togate/training.hpp"

namespace togate {

/// Everything one experiment needs. Every field has a default, so `{}` is a
/// valid config describing the default desk-scale game.
struct ExperimentConfig {
  DatasetConfig dataset;
  ScorerConfig scorer;
  RoleplayerConfig roleplayer;
  TrainConfig train;

  Environment environment() const { return Environment{dataset.space, scorer, roleplayer}; }

  /// eval.turns follows the exploration horizon.
  TrainConfig resolved_train() const {
    TrainConfig t = train;
    t.eval.turns = t.exploration.turns;
    return t;
  }

  void validate() const {
    environment().validate();
    if (dataset.num_personas < 0 || dataset.num_tasks < 0) throw ConfigError("dataset: counts must be >= 0");
    if (dataset.relevant_per_task < 0 || dataset.relevant_per_task > dataset.space.num_attributes)
      throw ConfigError("dataset: relevant_per_task must be in [0, num_attributes]");
    if (!(dataset.train_fraction >= 0.0 && dataset.train_fraction <= 1.0))
      throw ConfigError("dataset: train_fraction must be in [0, 1]");
    resolved_train().validate(dataset.space.num_attributes + 1);
  }
};

namespace detail {

/// Reads fields out of one JSON object and remembers which keys were used,
/// so leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  /// Accepts a number or the strings "inf"/"infinity".
  void get_extended(const char* key, double& out) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_string()) {
      const auto s = it->get<std::string>();
      if (s != "inf" && s != "infinity") throw ConfigError(where(key) + ": expected a number or \"inf\"");
      out = std::numeric_limits<double>::infinity();
      return;
    }
    get(key, out);
  }

  std::optional<ObjectReader> child(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return ObjectReader(*it, where(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown key");
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline void read_phase(ObjectReader& r, PhaseConfig& p) {
  r.get("learning_rate", p.learning_rate);
  r.get("epochs", p.epochs);
  r.get("batch_size", p.batch_size);
  r.finish();
}

inline Json extended(double x) { return std::isinf(x) ? Json("inf") : Json(x); }

}  // namespace detail

inline ExperimentConfig config_from_json(const Json& j) {
  using detail::ObjectReader;
  ExperimentConfig c;
  ObjectReader root(j, "");
  if (auto r = root.child("dataset")) {
    r->get("seed", c.dataset.seed);
    r->get("num_attributes", c.dataset.space.num_attributes);
    r->get("num_values", c.dataset.space.num_values);
    r->get("num_personas", c.dataset.num_personas);
    r->get("num_tasks", c.dataset.num_tasks);
    r->get("relevant_per_task", c.dataset.relevant_per_task);
    r->get("train_fraction", c.dataset.train_fraction);
    r->finish();
  }
  if (auto r = root.child("scorer")) {
    r->get("p_correct_revealed", c.scorer.p_correct_revealed);
    r->get("p_wrong_revealed", c.scorer.p_wrong_revealed);
    r->finish();
  }
  if (auto r = root.child("roleplayer")) {
    r->get("noise", c.roleplayer.noise);
    r->finish();
  }
  TrainConfig& t = c.train;
  if (auto r = root.child("exploration")) {
    r->get("samples_per_pair", t.exploration.samples_per_pair);
    r->get("turns", t.exploration.turns);
    r->get("temperature", t.exploration.temperature);
    std::string w = to_string(t.exploration.winner_response);
    r->get("winner_response", w);
    if (w == "gold")
      t.exploration.winner_response = WinnerResponse::Gold;
    else if (w == "policy")
      t.exploration.winner_response = WinnerResponse::Policy;
    else
      throw ConfigError("exploration.winner_response: expected \"gold\" or \"policy\"");
    r->finish();
  }
  if (auto r = root.child("loss")) {
    r->get("beta", t.loss.beta);
    r->get_extended("lambda", t.loss.lambda);
    r->finish();
  }
  if (auto r = root.child("train")) {
    std::string method = to_string(t.method);
    r->get("method", method);
    t.method = method_from_string(method);
    r->get("iterations", t.iterations);
    r->get("seed", t.seed);
    if (auto p = r->child("sft")) detail::read_phase(*p, t.sft);
    if (auto p = r->child("dpo")) detail::read_phase(*p, t.dpo);
    r->get("margin_min", t.margin_min);
    r->get("sft_every_iteration", t.sft_every_iteration);
    std::string ref = to_string(t.reference);
    r->get("reference", ref);
    t.reference = ref_schedule_from_string(ref);
    r->get("static_dpo_data", t.static_dpo_data);
    r->get("workers", t.workers);
    r->finish();
  }
  if (auto r = root.child("eval")) {
    std::string mode = t.eval.mode == RolloutMode::Sample ? "sample" : "greedy";
    r->get("mode", mode);
    if (mode == "sample")
      t.eval.mode = RolloutMode::Sample;
    else if (mode == "greedy")
      t.eval.mode = RolloutMode::Greedy;
    else
      throw ConfigError("eval.mode: expected \"sample\" or \"greedy\"");
    r->get("temperature", t.eval.temperature);
    r->get("seed", t.eval.seed);
    r->get("wrong_penalty", t.eval.wrong_penalty);
    r->finish();
  }
  root.finish();
  c.validate();
  return c;
}

inline Json config_to_json(const ExperimentConfig& c) {
  const TrainConfig t = c.resolved_train();
  Json j;
  j["dataset"] = {{"seed", c.dataset.seed},
                  {"num_attributes", c.dataset.space.num_attributes},
                  {"num_values", c.dataset.space.num_values},
                  {"num_personas", c.dataset.num_personas},
                  {"num_tasks", c.dataset.num_tasks},
                  {"relevant_per_task", c.dataset.relevant_per_task},
                  {"train_fraction", c.dataset.train_fraction}};
  j["scorer"] = {{"p_correct_revealed", c.scorer.p_correct_revealed},
                 {"p_wrong_revealed", c.scorer.p_wrong_revealed}};
  j["roleplayer"] = {{"noise", c.roleplayer.noise}};
  j["exploration"] = {{"samples_per_pair", t.exploration.samples_per_pair},
                      {"turns", t.exploration.turns},
                      {"temperature", t.exploration.temperature},
                      {"winner_response", to_string(t.exploration.winner_response)}};
  j["loss"] = {{"beta", t.loss.beta}, {"lambda", detail::extended(t.loss.lambda)}};
  auto phase = [](const PhaseConfig& p) {
    return Json{{"learning_rate", p.learning_rate}, {"epochs", p.epochs}, {"batch_size", p.batch_size}};
  };
  j["train"] = {{"method", to_string(t.method)},
                {"iterations", t.iterations},
                {"seed", t.seed},
                {"sft", phase(t.sft)},
                {"dpo", phase(t.dpo)},
                {"margin_min", t.margin_min},
                {"sft_every_iteration", t.sft_every_iteration},
                {"reference", to_string(t.reference)},
                {"static_dpo_data", t.static_dpo_data},
                {"workers", t.workers}};
  j["eval"] = {{"mode", t.eval.mode == RolloutMode::Sample ? "sample" : "greedy"},
               {"temperature", t.eval.temperature},
               {"seed", t.eval.seed},
               {"wrong_penalty", t.eval.wrong_penalty}};
  return j;
}

/// Parses a config file. Syntax errors are reported with their line number.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
    throw ConfigError(path.string() + ":" + std::to_string(line) + ": invalid JSON");
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace togate
