#pragma once

#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>

#include "togate/environment.hpp"
#include "togate/io.hpp"
#include "togate/rng.hpp"
#include "togate/types.hpp"

namespace togate {

struct DatasetConfig {
  std::uint64_t seed = 42;
  AttributeSpace space{};
  int num_personas = 20;
  int num_tasks = 10;
  int relevant_per_task = 2;
  double train_fraction = 0.8;
};

/// Number of train personas for a given fraction (round half up).
inline int train_persona_count(int num_personas, double train_fraction) {
  return static_cast<int>(std::floor(num_personas * train_fraction + 0.5));
}

/// Builds the synthetic dataset. Personas are split by id: the first
/// round(P * train_fraction) personas are train, the rest test. Every persona
/// meets every task, so pair lists are the full cross products, sorted by
/// (task_id, persona_id).
inline DatasetSplit generate_dataset(std::uint64_t seed, const AttributeSpace& space, int num_personas,
                                     int num_tasks, int relevant_per_task, double train_fraction) {
  space.validate();
  if (num_personas < 0 || num_tasks < 0 || relevant_per_task < 0)
    throw ConfigError("dataset counts must be non-negative");
  if (relevant_per_task > space.num_attributes)
    throw ConfigError("relevant_per_task (" + std::to_string(relevant_per_task) + ") exceeds num_attributes (" +
                      std::to_string(space.num_attributes) + ")");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0, 1)");
  const int num_train = train_persona_count(num_personas, train_fraction);
  if (num_personas > 0 && num_tasks > 0 && (num_train == 0 || num_train == num_personas))
    throw ConfigError("train_fraction " + std::to_string(train_fraction) + " leaves an empty train or test side");

  RngStream rng(derive_seed(seed, {kTagDataset}));
  DatasetSplit split;
  split.space = space;
  for (int j = 0; j < num_personas; ++j) {
    Persona p{j, std::vector<int>(static_cast<std::size_t>(space.num_attributes))};
    for (int& v : p.values) v = rng.uniform_int(space.num_values);
    split.personas.push_back(std::move(p));
  }
  for (int i = 0; i < num_tasks; ++i) {
    std::vector<int> pool(static_cast<std::size_t>(space.num_attributes));
    std::iota(pool.begin(), pool.end(), 0);
    for (int k = 0; k < relevant_per_task; ++k) {
      const int pick = k + rng.uniform_int(space.num_attributes - k);
      std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick)]);
    }
    Task t{i, std::vector<int>(pool.begin(), pool.begin() + relevant_per_task)};
    std::sort(t.relevant.begin(), t.relevant.end());
    split.tasks.push_back(std::move(t));
  }
  for (const Task& t : split.tasks) {
    for (const Persona& p : split.personas) {
      const PairId id{t.id, p.id};
      (p.id < num_train ? split.train : split.test).push_back(id);
      split.golds.emplace(id, oracle_gold(t, p));
    }
  }
  return split;
}

inline DatasetSplit generate_dataset(const DatasetConfig& c) {
  return generate_dataset(c.seed, c.space, c.num_personas, c.num_tasks, c.relevant_per_task, c.train_fraction);
}

// ---------------------------------------------------------------------------
// Split files
//
//   {"version":1,"record":"split","num_attributes":A,"num_values":V,
//    "num_personas":P,"num_tasks":T,"num_train":n,"num_test":m,"num_golds":g}
//   {"version":1,"record":"persona","id":j,"values":[...]}
//   {"version":1,"record":"task","id":i,"relevant":[...]}
//   {"version":1,"record":"pair","split":"train"|"test","task_id":i,"persona_id":j}
//   {"version":1,"record":"gold","task_id":i,"persona_id":j,"tokens":["say:1:0","end"]}
// ---------------------------------------------------------------------------

inline std::vector<Json> split_records(const DatasetSplit& s) {
  std::vector<Json> recs;
  Json h = record("split");
  h["num_attributes"] = s.space.num_attributes;
  h["num_values"] = s.space.num_values;
  h["num_personas"] = s.personas.size();
  h["num_tasks"] = s.tasks.size();
  h["num_train"] = s.train.size();
  h["num_test"] = s.test.size();
  h["num_golds"] = s.golds.size();
  recs.push_back(h);
  for (const Persona& p : s.personas) {
    Json j = record("persona");
    j["id"] = p.id;
    j["values"] = p.values;
    recs.push_back(j);
  }
  for (const Task& t : s.tasks) {
    Json j = record("task");
    j["id"] = t.id;
    j["relevant"] = t.relevant;
    recs.push_back(j);
  }
  auto add_pairs = [&](const std::vector<PairId>& ids, const char* side) {
    for (const PairId& id : ids) {
      Json j = record("pair");
      j["split"] = side;
      j["task_id"] = id.task_id;
      j["persona_id"] = id.persona_id;
      recs.push_back(j);
    }
  };
  add_pairs(s.train, "train");
  add_pairs(s.test, "test");
  for (const auto& [id, gold] : s.golds) {
    Json j = record("gold");
    j["task_id"] = id.task_id;
    j["persona_id"] = id.persona_id;
    j["tokens"] = tokens_to_json(gold.tokens);
    recs.push_back(j);
  }
  return recs;
}

inline void save_split(const DatasetSplit& split, const std::filesystem::path& path) {
  write_records(path, split_records(split));
}

/// Parses a split file. Any malformed, out-of-range, or missing record raises
/// ParseError; nothing partial is returned.
inline DatasetSplit load_split(const std::filesystem::path& path) {
  const auto lines = read_records(path);
  if (lines.empty()) throw ParseError(1, "empty split file");
  const Line& head = lines.front();
  if (record_type(head) != "split") throw ParseError(head.number, "expected split header");

  DatasetSplit s;
  s.space.num_attributes = field<int>(head, "num_attributes");
  s.space.num_values = field<int>(head, "num_values");
  try {
    s.space.validate();
  } catch (const ConfigError& e) {
    throw ParseError(head.number, e.what());
  }
  const auto want_personas = field<std::size_t>(head, "num_personas");
  const auto want_tasks = field<std::size_t>(head, "num_tasks");
  const auto want_train = field<std::size_t>(head, "num_train");
  const auto want_test = field<std::size_t>(head, "num_test");
  const auto want_golds = field<std::size_t>(head, "num_golds");

  for (std::size_t i = 1; i < lines.size(); ++i) {
    const Line& line = lines[i];
    const std::string type = record_type(line);
    try {
      if (type == "persona") {
        Persona p{field<int>(line, "id"), field<std::vector<int>>(line, "values")};
        validate_persona(p, s.space);
        s.personas.push_back(std::move(p));
      } else if (type == "task") {
        Task t{field<int>(line, "id"), field<std::vector<int>>(line, "relevant")};
        validate_task(t, s.space);
        s.tasks.push_back(std::move(t));
      } else if (type == "pair") {
        const auto side = field<std::string>(line, "split");
        const PairId id{field<int>(line, "task_id"), field<int>(line, "persona_id")};
        if (side == "train")
          s.train.push_back(id);
        else if (side == "test")
          s.test.push_back(id);
        else
          throw ParseError(line.number, "unknown split side '" + side + "'");
      } else if (type == "gold") {
        const PairId id{field<int>(line, "task_id"), field<int>(line, "persona_id")};
        GoldResponse g{token_field(line, "tokens")};
        if (!s.golds.emplace(id, std::move(g)).second) throw ParseError(line.number, "duplicate gold record");
      } else {
        throw ParseError(line.number, "unexpected record type '" + type + "'");
      }
    } catch (const ConfigError& e) {
      throw ParseError(line.number, e.what());
    }
  }
  const std::size_t end_line = lines.back().number + 1;
  auto check = [&](std::size_t got, std::size_t want, const char* what) {
    if (got != want)
      throw ParseError(end_line, std::string("expected ") + std::to_string(want) + " " + what + " records, found " +
                                     std::to_string(got));
  };
  check(s.personas.size(), want_personas, "persona");
  check(s.tasks.size(), want_tasks, "task");
  check(s.train.size(), want_train, "train pair");
  check(s.test.size(), want_test, "test pair");
  check(s.golds.size(), want_golds, "gold");
  for (const auto* side : {&s.train, &s.test}) {
    for (const PairId& id : *side) {
      if (!s.golds.contains(id))
        throw ParseError(end_line, "pair (" + std::to_string(id.task_id) + ", " + std::to_string(id.persona_id) +
                                       ") has no gold record");
    }
  }
  for (const auto& [id, gold] : s.golds) {
    try {
      if (!is_response_shaped(gold.tokens, s.task(id.task_id), s.space.num_values))
        throw ParseError(end_line, "gold for (" + std::to_string(id.task_id) + ", " + std::to_string(id.persona_id) +
                                       ") is not response-shaped");
    } catch (const std::out_of_range& e) {
      throw ParseError(end_line, e.what());
    }
  }
  return s;
}

}  // namespace togate
