#include <CLI11.hpp>

#include <iostream>

#include "togate/cli.hpp"

namespace cli = togate::cli;

int main(int argc, char** argv) {
  CLI::App app{"Preference-elicitation training on the hidden-attribute dialogue game"};
  app.set_version_flag("--version", cli::kVersion);
  app.require_subcommand(1);

  std::string config = "configs/default.json";
  std::string out_dir = "data";
  auto* gen = app.add_subcommand("gen-data", "Generate the persona/task split");
  gen->add_option("-c,--config", config, "Experiment config (JSON)")->capture_default_str();
  gen->add_option("-o,--out", out_dir, "Output directory")->capture_default_str();

  cli::TrainOptions train;
  std::string train_config = "configs/default.json";
  std::string data = "data";
  std::string runs = "runs";
  std::string run_dir;
  std::string method;
  std::uint64_t seed = 0;
  int workers = 0;
  auto* tr = app.add_subcommand("train", "Train one method and write checkpoints, metrics and a manifest");
  tr->add_option("-c,--config", train_config, "Experiment config (JSON)")->capture_default_str();
  tr->add_option("-d,--data", data, "Split file or gen-data directory")->capture_default_str();
  tr->add_option("-o,--out", runs, "Parent directory for the auto-named run directory")->capture_default_str();
  tr->add_option("--run-dir", run_dir, "Exact run directory (overrides --out)");
  tr->add_option("-m,--method", method, "togate, stargate or dpo_only (overrides the config)");
  auto* seed_opt = tr->add_option("-s,--seed", seed, "Training seed (overrides the config)");
  auto* workers_opt = tr->add_option("-j,--workers", workers, "Exploration threads (default: hardware threads)");
  tr->add_flag("--dump-dp", train.dump_dp, "Write each iteration's preference dataset");

  std::string eval_run;
  std::string eval_data = "data";
  std::string selector = "all";
  auto* ev = app.add_subcommand("eval", "Evaluate checkpoints against M_0");
  ev->add_option("run", eval_run, "Run directory")->required();
  ev->add_option("-d,--data", eval_data, "Split file or gen-data directory")->capture_default_str();
  ev->add_option("-k,--checkpoint", selector, "all, latest or an iteration index")->capture_default_str();

  std::vector<std::string> compare_runs;
  std::string compare_csv;
  auto* cmp = app.add_subcommand("compare", "Table of final win rates per method (A-B, B-A, Average)");
  cmp->add_option("runs", compare_runs, "Run directories")->required();
  cmp->add_option("--csv", compare_csv, "Also write the table as CSV");

  std::vector<std::string> report_runs;
  std::string report_csv;
  auto* rep = app.add_subcommand("report", "Per-iteration clarification and win-rate curves as CSV");
  rep->add_option("runs", report_runs, "Run directories")->required();
  rep->add_option("--csv", report_csv, "Write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kUsage;
  }

  if (*gen) return cli::cmd_gen_data(config, out_dir);
  if (*tr) {
    train.config = train_config;
    train.data = data;
    train.out = runs;
    if (!run_dir.empty()) train.run_dir = run_dir;
    if (!method.empty()) train.method = method;
    if (*seed_opt) train.seed = seed;
    train.workers = *workers_opt ? workers : togate::default_workers();
    return cli::cmd_train(train);
  }
  if (*ev) return cli::cmd_eval(eval_run, eval_data, selector);
  auto paths = [](const std::vector<std::string>& v) { return std::vector<std::filesystem::path>(v.begin(), v.end()); };
  auto optional_path = [](const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<std::filesystem::path>(s);
  };
  if (*cmp) return cli::cmd_compare(paths(compare_runs), optional_path(compare_csv));
  if (*rep) return cli::cmd_report(paths(report_runs), optional_path(report_csv));
  return cli::kUsage;
}
