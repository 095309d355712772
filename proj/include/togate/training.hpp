#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "togate/environment.hpp"
#include "togate/evaluation.hpp"
#include "togate/io.hpp"
#include "togate/losses.hpp"
#include "togate/policy.hpp"
#include "togate/rng.hpp"
#include "togate/trajectory.hpp"
#include "togate/types.hpp"

namespace togate {

enum class Method { ToGate, StarGate, DpoOnly };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::ToGate:
      return "togate";
    case Method::StarGate:
      return "stargate";
    case Method::DpoOnly:
      return "dpo_only";
  }
  return "togate";
}

inline Method method_from_string(const std::string& s) {
  if (s == "togate") return Method::ToGate;
  if (s == "stargate") return Method::StarGate;
  if (s == "dpo_only") return Method::DpoOnly;
  throw ConfigError("unknown method '" + s + "' (valid: togate, stargate, dpo_only)");
}

struct PhaseConfig {
  double learning_rate = 0.5;
  int epochs = 1;
  int batch_size = 4;

  void validate(const char* name) const {
    const std::string n(name);
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError(n + ": learning_rate must be > 0");
    if (epochs < 1) throw ConfigError(n + ": epochs must be >= 1");
    if (batch_size < 1) throw ConfigError(n + ": batch_size must be >= 1");
  }
};

/// Refresh: pi_ref follows the latest checkpoint at the start of every DPO
/// phase. Single: pi_ref is fixed once after the first SFT phase.
enum class RefSchedule { Refresh, Single };

inline const char* to_string(RefSchedule r) { return r == RefSchedule::Refresh ? "refresh" : "single"; }

inline RefSchedule ref_schedule_from_string(const std::string& s) {
  if (s == "refresh") return RefSchedule::Refresh;
  if (s == "single") return RefSchedule::Single;
  throw ConfigError("unknown reference schedule '" + s + "' (valid: refresh, single)");
}

struct TrainConfig {
  Method method = Method::ToGate;
  int iterations = 3;
  PhaseConfig sft{0.5, 2, 4};
  PhaseConfig dpo{10.0, 4, 4};
  LossConfig loss;
  ExplorationConfig exploration;  // exploration.seed is replaced by `seed`
  EvalConfig eval;
  std::uint64_t seed = 7;
  double margin_min = 1e-9;
  bool sft_every_iteration = false;
  RefSchedule reference = RefSchedule::Refresh;
  bool static_dpo_data = true;  // dpo_only: D_p built once from pi_0
  bool evaluate = true;
  int workers = 1;

  void validate(int max_turns) const {
    if (iterations < 1) throw ConfigError("train: iterations must be >= 1");
    sft.validate("train.sft");
    dpo.validate("train.dpo");
    loss.validate();
    exploration.validate(max_turns);
    if (!(margin_min >= 0.0)) throw ConfigError("train: margin_min must be >= 0");
    if (workers < 1) throw ConfigError("train: workers must be >= 1");
    if (eval.turns < 1 || eval.turns > max_turns) throw ConfigError("eval: turns out of range");
    if (!(eval.temperature > 0.0)) throw ConfigError("eval: temperature must be > 0");
  }
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

inline void check_finite(const PolicyGradient& g, const std::string& where) {
  for (const auto& [ctx, row] : g.question_logits)
    for (double x : row)
      if (!std::isfinite(x))
        throw NumericalError(where + ": non-finite gradient in question row (relevant=" +
                             std::to_string(ctx.relevant_mask) + ", asked=" + std::to_string(ctx.asked_mask) + ")");
  for (const auto& [ctx, row] : g.response_logits)
    for (double x : row)
      if (!std::isfinite(x))
        throw NumericalError(where + ": non-finite gradient in response row (attribute=" +
                             std::to_string(ctx.attribute) + ", observed=" + std::to_string(ctx.observed) + ")");
}

/// params - lr * gradient.
inline PolicyParams sgd_step(const PolicyParams& params, const PolicyGradient& gradient, double learning_rate,
                             const std::string& where = "sgd_step") {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("sgd_step: learning_rate must be > 0");
  check_finite(gradient, where);
  PolicyParams out = params;
  add_scaled(out, gradient, -learning_rate);
  return out;
}

/// Scalar form used for optimizer sanity checks.
inline double sgd_step(double x, double gradient, double learning_rate) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("sgd_step: learning_rate must be > 0");
  if (!std::isfinite(gradient)) throw NumericalError("sgd_step: non-finite gradient");
  return x - learning_rate * gradient;
}

/// Deterministic permutation of [0, n) for one epoch.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  RngStream rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

// ---------------------------------------------------------------------------
// Phases
// ---------------------------------------------------------------------------

enum class PhaseKind : std::uint64_t { Sft = 1, Dpo = 2 };

/// Full-data loss before training (index 0) and after each epoch.
struct PhaseLog {
  std::vector<double> loss;
  std::vector<double> l_c;
  std::vector<double> l_o;
  std::vector<double> margin_c;
  std::vector<double> margin_o;
  std::size_t examples = 0;
  std::size_t steps = 0;

  bool monotone(double tolerance = 1e-9) const {
    for (std::size_t i = 1; i < loss.size(); ++i)
      if (loss[i] > loss[i - 1] + tolerance) return false;
    return true;
  }
};

inline std::vector<SftExample> sft_examples(const DatasetSplit& split, const std::vector<PreferencePair>& d) {
  std::vector<SftExample> out;
  out.reserve(d.size());
  for (const PreferencePair& p : d) out.push_back(sft_example(split.task(p.task_id), p));
  return out;
}

inline PhaseLog run_sft_phase(PolicyParams& policy, const std::vector<SftExample>& data, const PhaseConfig& config,
                              std::uint64_t seed, int iteration) {
  PhaseLog log;
  log.examples = data.size();
  if (data.empty()) return log;
  log.loss.push_back(sft_loss_and_grad(policy, data).loss);
  for (int e = 0; e < config.epochs; ++e) {
    const auto order = epoch_order(
        data.size(), derive_seed(seed, {kTagShuffle, static_cast<std::uint64_t>(iteration),
                                        static_cast<std::uint64_t>(PhaseKind::Sft), static_cast<std::uint64_t>(e)}));
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      std::vector<SftExample> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + static_cast<std::size_t>(config.batch_size)); ++k)
        batch.push_back(data[order[k]]);
      const LossAndGrad lg = sft_loss_and_grad(policy, batch);
      if (!std::isfinite(lg.loss))
        throw NumericalError("iteration " + std::to_string(iteration) + " SFT epoch " + std::to_string(e + 1) +
                             ": non-finite loss");
      policy = sgd_step(policy, lg.grad, config.learning_rate,
                        "iteration " + std::to_string(iteration) + " SFT epoch " + std::to_string(e + 1));
      ++log.steps;
    }
    log.loss.push_back(sft_loss_and_grad(policy, data).loss);
  }
  return log;
}

inline void log_objective(PhaseLog& log, const ObjectiveValue& v) {
  log.loss.push_back(v.total);
  log.l_c.push_back(v.l_c);
  log.l_o.push_back(v.l_o);
  log.margin_c.push_back(v.margin_c);
  log.margin_o.push_back(v.margin_o);
}

inline PhaseLog run_dpo_phase(PolicyParams& policy, const PolicyParams& ref, const std::vector<Task>& tasks,
                              const std::vector<PreferencePair>& dp, const PhaseConfig& config,
                              const LossConfig& loss, std::uint64_t seed, int iteration) {
  PhaseLog log;
  log.examples = dp.size();
  if (dp.empty()) return log;
  log_objective(log, preference_objective(policy, ref, tasks, dp, loss));
  for (int e = 0; e < config.epochs; ++e) {
    const auto order = epoch_order(
        dp.size(), derive_seed(seed, {kTagShuffle, static_cast<std::uint64_t>(iteration),
                                      static_cast<std::uint64_t>(PhaseKind::Dpo), static_cast<std::uint64_t>(e)}));
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      std::vector<PreferencePair> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + static_cast<std::size_t>(config.batch_size)); ++k)
        batch.push_back(dp[order[k]]);
      const ObjectiveValue v = preference_objective(policy, ref, tasks, batch, loss);
      const std::string where = "iteration " + std::to_string(iteration) + " DPO epoch " + std::to_string(e + 1);
      if (!std::isfinite(v.total)) throw NumericalError(where + ": non-finite loss");
      policy = sgd_step(policy, v.grad, config.learning_rate, where);
      ++log.steps;
    }
    log_objective(log, preference_objective(policy, ref, tasks, dp, loss));
  }
  return log;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct IterationMetrics {
  int iteration = 0;
  std::optional<PhaseLog> sft;
  std::optional<PhaseLog> dpo;
  std::size_t explored = 0;  // train pairs explored for the DPO phase
  std::size_t dp_size = 0;   // pairs kept after the margin filter
  double kl_to_ref = 0.0;    // mean over tasks, after the DPO phase
  std::optional<CheckpointEval> eval;
};

struct RunArtifacts {
  Method method = Method::ToGate;
  std::vector<PolicyParams> checkpoints;     // index n holds M_n
  std::optional<PolicyParams> sft_checkpoint;  // togate: the iteration-1 SFT policy
  std::vector<IterationMetrics> metrics;     // index n holds M_n's record
  std::map<int, std::vector<PreferencePair>> preference_data;  // D_p used by each DPO phase
  std::vector<std::string> warnings;
  Json manifest;
};

namespace detail {

inline double mean_kl(const PolicyParams& policy, const PolicyParams& ref, const DatasetSplit& split, int turns) {
  if (split.tasks.empty()) return 0.0;
  double total = 0.0;
  for (const Task& t : split.tasks) total += kl_to_reference(policy, ref, t, turns);
  return total / static_cast<double>(split.tasks.size());
}

inline std::uint64_t round_of(int iteration, PhaseKind phase) {
  return 2 * static_cast<std::uint64_t>(iteration) + (phase == PhaseKind::Sft ? 0 : 1);
}

class Runner {
 public:
  Runner(const DatasetSplit& split, const Environment& env, const TrainConfig& config)
      : split_(split), env_(env), config_(config) {
    env_.validate();
    config_.validate(env_.space.num_attributes + 1);
    if (env_.space != split_.space) throw ConfigError("environment attribute space differs from the dataset's");
    config_.exploration.seed = config_.seed;
    out_.method = config_.method;
    out_.checkpoints.push_back(PolicyParams(split_.space));
    out_.metrics.push_back(IterationMetrics{});
    evaluate(0);
  }

  /// Explores with `sampler` and returns the margin-filtered D_p.
  std::vector<PreferencePair> explore(const PolicyParams& sampler, std::uint64_t round, double margin_min) {
    return build_dp(sampler, split_, env_, config_.exploration, margin_min, round, config_.workers);
  }

  void sft(PolicyParams& policy, int iteration, IterationMetrics& m) {
    const auto d = explore(policy, round_of(iteration, PhaseKind::Sft), 0.0);
    if (d.empty()) {
      warn(iteration, "no train pairs; skipping SFT");
      return;
    }
    m.sft = run_sft_phase(policy, sft_examples(split_, d), config_.sft, config_.seed, iteration);
  }

  void dpo(PolicyParams& policy, const PolicyParams& ref, const std::vector<PreferencePair>& dp, int iteration,
           IterationMetrics& m) {
    m.dp_size = dp.size();
    out_.preference_data[iteration] = dp;
    if (dp.empty()) {
      warn(iteration, "empty D_p after filtering; skipping DPO");
      return;
    }
    m.dpo = run_dpo_phase(policy, ref, split_.tasks, dp, config_.dpo, config_.loss, config_.seed, iteration);
    m.kl_to_ref = mean_kl(policy, ref, split_, config_.exploration.turns);
  }

  void finish_iteration(const PolicyParams& policy, IterationMetrics m) {
    m.iteration = static_cast<int>(out_.checkpoints.size());
    out_.checkpoints.push_back(policy);
    out_.metrics.push_back(std::move(m));
    evaluate(out_.metrics.size() - 1);
  }

  void warn(int iteration, const std::string& what) {
    out_.warnings.push_back("iteration " + std::to_string(iteration) + ": " + what);
  }

  const TrainConfig& config() const { return config_; }
  std::size_t train_pairs() const { return split_.train.size(); }
  RunArtifacts& artifacts() { return out_; }

 private:
  void evaluate(std::size_t n) {
    if (!config_.evaluate || split_.test.empty()) return;
    out_.metrics[n].eval = evaluate_checkpoint(out_.checkpoints[n], out_.checkpoints[0], split_, env_, config_.eval);
  }

  const DatasetSplit& split_;
  Environment env_;
  TrainConfig config_;
  RunArtifacts out_;
};

}  // namespace detail

inline Json build_manifest(const RunArtifacts& a, const TrainConfig& c) {
  Json m = record("manifest");
  m["method"] = to_string(c.method);
  m["iterations"] = c.iterations;
  m["seed"] = c.seed;
  m["learning_rates"] = {
      {"sft", c.sft.learning_rate}, {"dpo", c.dpo.learning_rate}, {"llm_sft", 2.0e-5}, {"llm_dpo", 1.0e-6}};
  m["reference_schedule"] = to_string(c.reference);
  m["sft_every_iteration"] = c.sft_every_iteration;
  m["winner_response"] = to_string(c.exploration.winner_response);
  m["checkpoints"] = a.checkpoints.size();
  m["warnings"] = a.warnings;
  return m;
}

inline RunArtifacts run_togate(const DatasetSplit& split, const Environment& env, const TrainConfig& config) {
  detail::Runner run(split, env, config);
  const TrainConfig& c = run.config();
  PolicyParams policy = run.artifacts().checkpoints[0];
  PolicyParams ref = policy;
  bool ref_fixed = false;
  for (int it = 1; it <= c.iterations; ++it) {
    IterationMetrics m;
    if (it == 1 || c.sft_every_iteration) {
      run.sft(policy, it, m);
      if (it == 1) run.artifacts().sft_checkpoint = policy;
      if (!ref_fixed || c.reference == RefSchedule::Refresh) ref = snapshot(policy);
      ref_fixed = true;
    } else if (c.reference == RefSchedule::Refresh) {
      ref = snapshot(policy);
    }
    const auto dp = run.explore(policy, detail::round_of(it, PhaseKind::Dpo), c.margin_min);
    m.explored = run.train_pairs();
    run.dpo(policy, ref, dp, it, m);
    run.finish_iteration(policy, std::move(m));
  }
  RunArtifacts out = std::move(run.artifacts());
  out.manifest = build_manifest(out, c);
  return out;
}

inline RunArtifacts run_stargate(const DatasetSplit& split, const Environment& env, const TrainConfig& config) {
  detail::Runner run(split, env, config);
  const TrainConfig& c = run.config();
  PolicyParams policy = run.artifacts().checkpoints[0];
  for (int it = 1; it <= c.iterations; ++it) {
    IterationMetrics m;
    run.sft(policy, it, m);
    run.finish_iteration(policy, std::move(m));
  }
  RunArtifacts out = std::move(run.artifacts());
  out.manifest = build_manifest(out, c);
  return out;
}

inline RunArtifacts run_dpo_only(const DatasetSplit& split, const Environment& env, const TrainConfig& config) {
  detail::Runner run(split, env, config);
  const TrainConfig& c = run.config();
  PolicyParams policy = run.artifacts().checkpoints[0];
  const PolicyParams ref = policy;
  std::vector<PreferencePair> fixed;
  if (c.static_dpo_data) fixed = run.explore(policy, kTagStaticExplore, c.margin_min);
  for (int it = 1; it <= c.iterations; ++it) {
    IterationMetrics m;
    m.explored = run.train_pairs();
    if (c.static_dpo_data) {
      run.dpo(policy, ref, fixed, it, m);
    } else {
      run.dpo(policy, ref, run.explore(policy, detail::round_of(it, PhaseKind::Dpo), c.margin_min), it, m);
    }
    run.finish_iteration(policy, std::move(m));
  }
  RunArtifacts out = std::move(run.artifacts());
  out.manifest = build_manifest(out, c);
  return out;
}

inline RunArtifacts run_method(const DatasetSplit& split, const Environment& env, const TrainConfig& config) {
  switch (config.method) {
    case Method::ToGate:
      return run_togate(split, env, config);
    case Method::StarGate:
      return run_stargate(split, env, config);
    case Method::DpoOnly:
      return run_dpo_only(split, env, config);
  }
  return run_togate(split, env, config);
}

// ---------------------------------------------------------------------------
// Checkpoint and metrics files
// ---------------------------------------------------------------------------

inline std::vector<Json> checkpoint_records(const PolicyParams& p, int iteration) {
  std::vector<Json> out;
  Json h = record("checkpoint");
  h["iteration"] = iteration;
  h["num_attributes"] = p.space.num_attributes;
  h["num_values"] = p.space.num_values;
  h["question_rows"] = p.question_logits.size();
  h["response_rows"] = p.response_logits.size();
  out.push_back(std::move(h));
  for (const auto& [ctx, row] : p.question_logits) {
    Json r = record("question_row");
    r["relevant"] = ctx.relevant_mask;
    r["asked"] = ctx.asked_mask;
    r["logits"] = row;
    out.push_back(std::move(r));
  }
  for (const auto& [ctx, row] : p.response_logits) {
    Json r = record("response_row");
    r["attribute"] = ctx.attribute;
    r["observed"] = ctx.observed;
    r["logits"] = row;
    out.push_back(std::move(r));
  }
  return out;
}

inline void save_checkpoint(const PolicyParams& p, int iteration, const std::filesystem::path& path) {
  write_records(path, checkpoint_records(p, iteration));
}

inline PolicyParams load_checkpoint(const std::filesystem::path& path, int* iteration = nullptr) {
  const auto lines = read_records(path);
  if (lines.empty() || record_type(lines[0]) != "checkpoint") throw ParseError(1, "expected a checkpoint header");
  const Line& h = lines[0];
  AttributeSpace space{field<int>(h, "num_attributes"), field<int>(h, "num_values")};
  try {
    space.validate();
  } catch (const ConfigError& e) {
    throw ParseError(h.number, e.what());
  }
  const auto nq = field<std::size_t>(h, "question_rows");
  const auto nr = field<std::size_t>(h, "response_rows");
  if (iteration) *iteration = field<int>(h, "iteration");
  PolicyParams p(space);
  std::size_t seen_q = 0;
  std::size_t seen_r = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const Line& l = lines[i];
    const std::string type = record_type(l);
    const auto logits = field<std::vector<double>>(l, "logits");
    if (type == "question_row") {
      if (logits.size() != static_cast<std::size_t>(space.num_attributes))
        throw ParseError(l.number, "question row has the wrong width");
      p.question_logits[QuestionContext{field<Mask>(l, "relevant"), field<Mask>(l, "asked")}] = logits;
      ++seen_q;
    } else if (type == "response_row") {
      if (logits.size() != static_cast<std::size_t>(space.num_values))
        throw ParseError(l.number, "response row has the wrong width");
      p.response_logits[ResponseContext{field<int>(l, "attribute"), field<int>(l, "observed")}] = logits;
      ++seen_r;
    } else {
      throw ParseError(l.number, "unexpected record '" + type + "' in checkpoint");
    }
  }
  if (seen_q != nq || seen_r != nr)
    throw ParseError(lines.back().number, "checkpoint row count mismatch (file truncated?)");
  return p;
}

inline Json phase_json(const PhaseLog& log) {
  Json j;
  j["examples"] = log.examples;
  j["steps"] = log.steps;
  j["loss"] = log.loss;
  if (!log.l_c.empty()) {
    j["l_c"] = log.l_c;
    j["l_o"] = log.l_o;
    j["margin_c"] = log.margin_c;
    j["margin_o"] = log.margin_o;
    j["monotone"] = log.monotone();
  }
  return j;
}

inline Json metrics_record(const IterationMetrics& m, Method method) {
  Json r = record("iteration_metrics");
  r["method"] = to_string(method);
  r["iteration"] = m.iteration;
  r["explored"] = m.explored;
  r["dp_size"] = m.dp_size;
  r["kl_to_ref"] = m.kl_to_ref;
  r["sft"] = m.sft ? phase_json(*m.sft) : Json(nullptr);
  r["dpo"] = m.dpo ? phase_json(*m.dpo) : Json(nullptr);
  if (m.eval) {
    r["clarification_raw"] = m.eval->clarification.raw;
    r["clarification_normalized"] = m.eval->clarification.normalized;
    r["win_ab"] = m.eval->win_rate.ab;
    r["win_ba"] = m.eval->win_rate.ba;
    r["win_average"] = m.eval->win_rate.average;
  } else {
    r["clarification_raw"] = nullptr;
    r["clarification_normalized"] = nullptr;
    r["win_ab"] = nullptr;
    r["win_ba"] = nullptr;
    r["win_average"] = nullptr;
  }
  return r;
}

inline std::vector<Json> metrics_records(const RunArtifacts& a) {
  std::vector<Json> out;
  for (const IterationMetrics& m : a.metrics) out.push_back(metrics_record(m, a.method));
  return out;
}

}  // namespace togate
