#pragma once

#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "togate/config.hpp"
#include "togate/dataset.hpp"
#include "togate/evaluation.hpp"
#include "togate/io.hpp"
#include "togate/training.hpp"

namespace togate::cli {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kNumerical = 3 };

/// FNV-1a over the bytes; stable across platforms, used for content hashes.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << x;
  return s.str();
}

/// Maps exceptions to the documented exit codes and prints a diagnostic.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const ParseError& e) {
    err << "parse error (line " << e.line() << "): " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

inline void write_json_file(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json read_json_file(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("missing file " + path.string());
  try {
    return Json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline fs::path split_path(const fs::path& data) { return fs::is_directory(data) ? data / "split.jsonl" : data; }

inline fs::path checkpoint_path(const fs::path& run_dir, int n) {
  return run_dir / "checkpoints" / ("M_" + std::to_string(n) + ".jsonl");
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

inline int cmd_gen_data(const fs::path& config_path, const fs::path& out_dir, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    const ExperimentConfig c = load_config(config_path);
    const DatasetSplit split = generate_dataset(c.dataset);
    const fs::path file = out_dir / "split.jsonl";
    save_split(split, file);
    Json m = record("data_manifest");
    m["artifact_version"] = kVersion;
    m["config"] = config_to_json(c);
    m["personas"] = split.personas.size();
    m["tasks"] = split.tasks.size();
    m["train_pairs"] = split.train.size();
    m["test_pairs"] = split.test.size();
    m["split_hash"] = hex64(fnv1a(read_text(file)));
    write_json_file(out_dir / "manifest.json", m);
    out << "wrote " << file.string() << " (" << split.train.size() << " train / " << split.test.size()
        << " test pairs)\n";
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
  fs::path config;
  fs::path data;                     // split file or gen-data directory
  std::optional<fs::path> run_dir;   // exact output directory
  fs::path out = "runs";             // parent for an auto-named run directory
  std::optional<std::string> method;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool dump_dp = false;
};

inline std::string timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return s.str();
}

inline void write_run(const fs::path& dir, const RunArtifacts& a, const ExperimentConfig& c,
                      const std::string& split_hash, bool dump_dp) {
  for (std::size_t n = 0; n < a.checkpoints.size(); ++n)
    save_checkpoint(a.checkpoints[n], static_cast<int>(n), checkpoint_path(dir, static_cast<int>(n)));
  if (a.sft_checkpoint) save_checkpoint(*a.sft_checkpoint, 1, dir / "checkpoints" / "sft_1.jsonl");
  write_records(dir / "metrics.jsonl", metrics_records(a));
  if (dump_dp)
    for (const auto& [it, pairs] : a.preference_data)
      save_pairs(pairs, dir / "dp" / ("iteration_" + std::to_string(it) + ".jsonl"));
  Json m = record("run_manifest");
  m["artifact_version"] = kVersion;
  m["config"] = config_to_json(c);
  m["split_hash"] = split_hash;
  m["training"] = a.manifest;
  write_json_file(dir / "manifest.json", m);
}

inline int cmd_train(const TrainOptions& o, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    ExperimentConfig c = load_config(o.config);
    if (o.method) c.train.method = method_from_string(*o.method);
    if (o.seed) c.train.seed = *o.seed;
    if (o.workers) c.train.workers = *o.workers;
    c.validate();
    const fs::path file = split_path(o.data);
    if (!fs::exists(file)) throw ConfigError("dataset not found: " + file.string() + " (run gen-data first)");
    const DatasetSplit split = load_split(file);
    if (split.space != c.dataset.space) throw ConfigError("dataset attribute space differs from the config's");
    const std::string split_hash = hex64(fnv1a(read_text(file)));
    const Json resolved = config_to_json(c);
    const fs::path dir =
        o.run_dir ? *o.run_dir
                  : o.out / (timestamp() + "-" + to_string(c.train.method) + "-" +
                             hex64(fnv1a(resolved.dump() + split_hash)).substr(0, 8));
    const RunArtifacts a = run_method(split, c.environment(), c.resolved_train());
    write_run(dir, a, c, split_hash, o.dump_dp);
    for (const auto& w : a.warnings) err << "warning: " << w << "\n";
    const auto& last = a.metrics.back();
    out << "run " << dir.string() << "\n";
    if (last.eval)
      out << "M_" << last.iteration << ": win " << std::fixed << std::setprecision(2) << last.eval->win_rate.average
          << ", clarification " << std::setprecision(3) << last.eval->clarification.normalized << "\n";
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct RunDir {
  ExperimentConfig config;
  Json manifest;
  int iterations = 0;
};

inline RunDir open_run(const fs::path& dir) {
  RunDir r;
  r.manifest = read_json_file(dir / "manifest.json");
  if (!r.manifest.contains("config")) throw ConfigError(dir.string() + ": manifest has no config");
  r.config = config_from_json(r.manifest["config"]);
  r.iterations = r.config.train.iterations;
  return r;
}

/// "all", "latest" or a checkpoint index.
inline std::vector<int> select_checkpoints(const fs::path& dir, const std::string& selector) {
  std::vector<int> out;
  if (selector == "all" || selector == "latest") {
    for (int n = 0; fs::exists(checkpoint_path(dir, n)); ++n) out.push_back(n);
    if (out.empty()) throw ConfigError("no checkpoints in " + dir.string());
    if (selector == "latest") out = {out.back()};
    return out;
  }
  int n = 0;
  try {
    std::size_t used = 0;
    n = std::stoi(selector, &used);
    if (used != selector.size()) throw std::invalid_argument(selector);
  } catch (const std::exception&) {
    throw ConfigError("checkpoint selector must be all, latest or an index, got '" + selector + "'");
  }
  if (!fs::exists(checkpoint_path(dir, n))) throw ConfigError("missing checkpoint M_" + std::to_string(n));
  return {n};
}

inline Json report_record(const WinRateReport& r, int iteration, const ClarificationScore& c) {
  Json j = record("win_rate_report");
  j["iteration"] = iteration;
  j["ab"] = r.ab;
  j["ba"] = r.ba;
  j["average"] = r.average;
  j["clarification_raw"] = c.raw;
  j["clarification_normalized"] = c.normalized;
  return j;
}

/// Reads a report back and checks the Average column.
inline WinRateReport report_from_line(const Line& l) {
  WinRateReport r = WinRateReport::from_passes(field<double>(l, "ab"), field<double>(l, "ba"));
  if (field<double>(l, "average") != r.average) throw ParseError(l.number, "average is not (ab + ba) / 2");
  return r;
}

inline int cmd_eval(const fs::path& run_dir, const fs::path& data, const std::string& selector,
                    std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    const RunDir run = open_run(run_dir);
    const std::vector<int> picks = select_checkpoints(run_dir, selector);
    const DatasetSplit split = load_split(split_path(data));
    if (!fs::exists(checkpoint_path(run_dir, 0))) throw ConfigError("missing checkpoint M_0");
    const PolicyParams base = load_checkpoint(checkpoint_path(run_dir, 0));
    const TrainConfig t = run.config.resolved_train();
    const Environment env = run.config.environment();
    std::ostringstream csv;
    csv << "iteration,clarification_raw,clarification_normalized,win_ab,win_ba,win_average\n";
    csv << std::setprecision(17);
    for (int n : picks) {
      const PolicyParams p = load_checkpoint(checkpoint_path(run_dir, n));
      const CheckpointEval e = evaluate_checkpoint(p, base, split, env, t.eval);
      std::vector<Json> records{report_record(e.win_rate, n, e.clarification)};
      for (const PairVerdict& v : e.win_rate.verdicts) {
        Json j = record("verdict");
        j["task_id"] = e.rollouts.pairs[v.index].task_id;
        j["persona_id"] = e.rollouts.pairs[v.index].persona_id;
        j["trained_first"] = to_string(v.trained_first);
        j["base_first"] = to_string(v.base_first);
        j["trained_response"] = tokens_to_json(*e.rollouts.trained[v.index].final_response);
        j["base_response"] = tokens_to_json(*e.rollouts.base[v.index].final_response);
        records.push_back(std::move(j));
      }
      const fs::path file = run_dir / "eval" / ("M_" + std::to_string(n) + ".jsonl");
      write_records(file, records);
      report_from_line(read_records(file).front());
      csv << n << "," << e.clarification.raw << "," << e.clarification.normalized << "," << e.win_rate.ab << ","
          << e.win_rate.ba << "," << e.win_rate.average << "\n";
      out << "M_" << n << ": A-B " << std::fixed << std::setprecision(2) << e.win_rate.ab << "  B-A "
          << e.win_rate.ba << "  Average " << e.win_rate.average << "  clarification " << std::setprecision(3)
          << e.clarification.normalized << "\n";
      out << std::defaultfloat;
    }
    write_text(run_dir / "eval" / "summary.csv", csv.str());
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// compare / report
// ---------------------------------------------------------------------------

struct MetricsRow {
  std::string method;
  int iteration = 0;
  std::optional<double> clarification_raw;
  std::optional<double> clarification_normalized;
  std::optional<WinRateReport> win;
};

inline std::vector<MetricsRow> read_metrics(const fs::path& run_dir) {
  const fs::path file = run_dir / "metrics.jsonl";
  if (!fs::exists(file)) throw ConfigError("missing " + file.string());
  std::vector<MetricsRow> rows;
  for (const Line& l : read_records(file)) {
    if (record_type(l) != "iteration_metrics") continue;
    MetricsRow r;
    r.method = field<std::string>(l, "method");
    r.iteration = field<int>(l, "iteration");
    if (!l.value.at("win_ab").is_null()) {
      r.clarification_raw = field<double>(l, "clarification_raw");
      r.clarification_normalized = field<double>(l, "clarification_normalized");
      r.win = WinRateReport::from_passes(field<double>(l, "win_ab"), field<double>(l, "win_ba"));
      if (field<double>(l, "win_average") != r.win->average)
        throw ParseError(l.number, "win_average is not (win_ab + win_ba) / 2");
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ParseError(0, file.string() + ": no metrics records");
  return rows;
}

inline std::string fixed2(double x) { return table_value(x, 2); }

/// One row per method, final-checkpoint win rates averaged
/// over the runs of that method.
inline int cmd_compare(const std::vector<fs::path>& run_dirs, const std::optional<fs::path>& csv_out,
                       std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    if (run_dirs.empty()) throw ConfigError("compare: no run directories given");
    struct Acc {
      double ab = 0, ba = 0;
      int runs = 0;
    };
    std::vector<std::string> order;
    std::map<std::string, Acc> acc;
    for (const fs::path& d : run_dirs) {
      const auto rows = read_metrics(d);
      const MetricsRow& last = rows.back();
      if (!last.win) throw ConfigError(d.string() + ": final checkpoint has no win rate");
      if (!acc.count(last.method)) order.push_back(last.method);
      Acc& a = acc[last.method];
      a.ab += last.win->ab;
      a.ba += last.win->ba;
      ++a.runs;
    }
    std::ostringstream csv;
    csv << "method,runs,A-B,B-A,Average\n";
    out << std::left << std::setw(10) << "method" << std::right << std::setw(6) << "runs" << std::setw(9) << "A-B"
        << std::setw(9) << "B-A" << std::setw(9) << "Average" << "\n";
    for (const auto& m : order) {
      const Acc& a = acc[m];
      const WinRateReport r = WinRateReport::from_passes(a.ab / a.runs, a.ba / a.runs);
      csv << m << "," << a.runs << "," << fixed2(r.ab) << "," << fixed2(r.ba) << "," << fixed2(r.average) << "\n";
      out << std::left << std::setw(10) << m << std::right << std::setw(6) << a.runs << std::setw(9) << fixed2(r.ab)
          << std::setw(9) << fixed2(r.ba) << std::setw(9) << fixed2(r.average) << "\n";
    }
    if (csv_out) write_text(*csv_out, csv.str());
    return kOk;
  });
}

/// Per-iteration curves: one row per (method, iteration) in run order.
inline int cmd_report(const std::vector<fs::path>& run_dirs, const std::optional<fs::path>& csv_out,
                      std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    if (run_dirs.empty()) throw ConfigError("report: no run directories given");
    std::ostringstream csv;
    csv << std::setprecision(17);
    csv << "method,iteration,clarification_raw,clarification_normalized,win_ab,win_ba,win_average\n";
    for (const fs::path& d : run_dirs) {
      for (const MetricsRow& r : read_metrics(d)) {
        csv << r.method << "," << r.iteration << ",";
        if (r.win)
          csv << *r.clarification_raw << "," << *r.clarification_normalized << "," << r.win->ab << "," << r.win->ba
              << "," << r.win->average << "\n";
        else
          csv << ",,,,\n";
      }
    }
    if (csv_out)
      write_text(*csv_out, csv.str());
    else
      out << csv.str();
    return kOk;
  });
}

}  // namespace togate::cli
