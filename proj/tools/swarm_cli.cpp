// SPDX-License-Identifier: Apache-2.0
//
// swarm: command-line front end for suite generation, pretraining, prompt
// distillation, evaluation and reporting.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "swarm/workbench/experiments.hpp"
#include "swarm/workbench/pretrain.hpp"

using namespace swarm;
using namespace swarm::workbench;
namespace fs = std::filesystem;

namespace {

json load_json(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::format, path + ": " + e.what());
  }
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

void log_line(const std::string& s) {
  std::fprintf(stderr, "%s\n", s.c_str());
  std::fflush(stderr);
}

template <class T>
void take(const CLI::Option* opt, const T& flag, T& target) {
  if (opt->count() > 0) target = flag;
}

template <class T>
void take_json(const json& cfg, const char* key, T& target) {
  if (!cfg.contains(key)) return;
  try {
    target = cfg.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("config field ") + key + ": " + e.what());
  }
}

ScorerModel load_model(const std::string& ckpt, const std::string& adapters) {
  auto model = load_checkpoint(read_file(ckpt));
  if (!adapters.empty()) load_adapters(model, read_file(adapters));
  return model;
}

TaskFiles resolve_task(const std::string& suite_dir, const std::string& task) {
  if (!suite_dir.empty()) return task_files(load_suite(suite_dir), task);
  if (fs::is_directory(task)) return task_files(fs::path(task));
  fail(ErrorKind::argument, "task \"" + task + "\" is not a directory; pass --suite to look it up by name");
}

// ---------------------------------------------------------------------------

struct GenSuiteArgs {
  std::uint64_t seed = 7;
  std::string out;
  std::string config;
  SuiteSizes sizes;
};

void gen_suite(GenSuiteArgs a, const CLI::App& cmd) {
  const auto cfg = load_json(a.config);
  take_json(cfg, "seed", a.seed);
  take_json(cfg, "pretrain_train", a.sizes.pretrain_train);
  take_json(cfg, "pretrain_eval", a.sizes.pretrain_eval);
  take_json(cfg, "held_out_train", a.sizes.held_out_train);
  take_json(cfg, "held_out_eval", a.sizes.held_out_eval);
  if (cmd.count("--seed") > 0) a.seed = cmd.get_option("--seed")->as<std::uint64_t>();
  if (a.out.empty()) take_json(cfg, "out", a.out);
  if (a.out.empty()) fail(ErrorKind::argument, "gen-suite: --out is required");
  const auto suite = generate_suite(default_manifest(a.seed, a.sizes), a.out);
  print_json({{"suite", a.out}, {"master_seed", a.seed}, {"tasks", suite.manifest.tasks.size()}});
}

struct PretrainArgs {
  std::string suite;
  std::string config;
  std::string out;
  std::int64_t steps = 0;
};

void pretrain_cmd(PretrainArgs a, const CLI::App& cmd) {
  const auto cfg = load_json(a.config);
  PretrainConfig pc;
  pretrain_config_from_json(cfg, pc);
  if (a.suite.empty()) take_json(cfg, "suite", a.suite);
  if (a.out.empty()) take_json(cfg, "out", a.out);
  take(cmd.get_option("--steps"), a.steps, pc.steps);
  if (a.suite.empty() || a.out.empty()) fail(ErrorKind::argument, "pretrain: --suite and --out are required");
  const auto suite = load_suite(a.suite);
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = pretrain(suite, pc, [](std::size_t attempt, std::int64_t step, double loss) {
    if (step % 500 == 0) {
      log_line("attempt " + std::to_string(attempt) + " step " + std::to_string(step) + " loss " +
               format_number(loss));
    }
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file(a.out, save_checkpoint(result.model));
  json rec = pretrain_record_to_json(result);
  rec["config"] = pretrain_config_to_json(pc);
  write_file(a.out + ".json", rec.dump(2) + "\n");
  rec["wall_seconds"] = secs;
  print_json(rec);
}

struct AdaptArgs {
  std::string base;
  std::string suite;
  std::string task;
  std::string mode = "swarm";
  std::string source = "train";
  std::size_t prompts_subset = 0;
  std::size_t examples_subset = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool full_finetune = false;
  bool no_select = false;
  std::string config;
  double lr = 0.0;
  std::int64_t steps = 0;
};

void adapt_cmd(AdaptArgs a, const CLI::App& cmd) {
  const auto cfg = load_json(a.config);
  RunSpec spec;
  spec.train = desk_train_config();
  if (cfg.contains("train")) train_config_from_json(cfg["train"], spec.train);
  take_json(cfg, "base", a.base);
  take_json(cfg, "suite", a.suite);
  take_json(cfg, "task", a.task);
  take_json(cfg, "out", a.out);
  take_json(cfg, "prompts_subset", spec.prompts_subset);
  take_json(cfg, "examples_subset", spec.examples_subset);
  std::string source = "train";
  take_json(cfg, "source", source);
  // Flags override the file.
  auto opt = [&](const char* name) { return cmd.get_option(name); };
  if (opt("--base")->count()) a.base = opt("--base")->as<std::string>();
  if (opt("--suite")->count()) a.suite = opt("--suite")->as<std::string>();
  if (opt("--task")->count()) a.task = opt("--task")->as<std::string>();
  if (opt("--out")->count()) a.out = opt("--out")->as<std::string>();
  if (opt("--mode")->count()) spec.train.mode = mode_from_string(a.mode);
  if (opt("--source")->count()) source = a.source;
  take(opt("--prompts-subset"), a.prompts_subset, spec.prompts_subset);
  take(opt("--examples-subset"), a.examples_subset, spec.examples_subset);
  take(opt("--seed"), a.seed, spec.train.seed);
  take(opt("--lr"), a.lr, spec.train.peak_lr);
  take(opt("--steps"), a.steps, spec.train.max_steps);
  if (a.full_finetune) spec.train.full_finetune = true;
  if (a.no_select) spec.train.select = false;
  spec.source = source_from_string(source);
  if (a.base.empty() || a.task.empty() || a.out.empty()) {
    fail(ErrorKind::argument, "adapt: --base, --task and --out are required");
  }
  if (spec.train.mode == DistillMode::swarm && spec.prompts_subset == 1) {
    fail(ErrorKind::argument, "swarm mode needs at least 2 prompts; use --mode self with --prompts-subset 1");
  }

  const auto task = resolve_task(a.suite, a.task);
  spec.task = task.name;
  const auto base = load_checkpoint(read_file(a.base));
  AdaptHooks hooks;
  hooks.on_step = [&](std::int64_t step, double loss, double) {
    if (step % 10 == 0) log_line("step " + std::to_string(step) + " loss " + format_number(loss));
  };
  const auto outcome = run_adaptation(task, base, spec, hooks);
  write_run(a.out, outcome);
  print_json(run_record_to_json(outcome.record));
}

struct EvalArgs {
  std::string ckpt;
  std::string adapters;
  std::string suite;
  std::string task;
  std::string out;
  std::string predictions_out;
  std::size_t prompts_subset = 0;
};

void eval_cmd(const EvalArgs& a) {
  const auto model = load_model(a.ckpt, a.adapters);
  const auto task = resolve_task(a.suite, a.task);
  const auto pool = subset_pool(task.pool, a.prompts_subset);
  const auto scores = score_pool(model, pool, task.eval);
  const auto report = evaluate_scores(pool, task.eval, scores);
  const auto j = eval_report_to_json(report);
  if (!a.out.empty()) write_file(a.out, j.dump(2) + "\n");
  if (!a.predictions_out.empty()) {
    PredictionDump dump;
    dump.predictions = prompt_predictions(scores);
    for (std::size_t i = 0; i < dump.predictions.size(); ++i) dump.example_ids.push_back(std::to_string(i));
    write_file(a.predictions_out, prediction_dump_to_jsonl(dump));
  }
  print_json(j);
}

void kappa_cmd(const std::string& path, std::size_t labels) {
  const auto dump = prediction_dump_from_jsonl(read_file(path));
  if (labels == 0) {
    int top = 0;
    for (const auto& row : dump.predictions)
      for (int y : row) top = std::max(top, y);
    labels = static_cast<std::size_t>(top) + 1;
  }
  const auto r = fleiss_kappa(build_matrix(dump.predictions, labels));
  auto j = agreement_to_json(r);
  j["majority_fraction"] = majority_fraction(dump.predictions, labels);
  j["collapsed_predictions"] = is_collapsed(majority_fraction(dump.predictions, labels));
  print_json(j);
}

EvalReport read_report(const std::string& path) {
  const fs::path p = fs::is_directory(path) ? fs::path(path) / "report.json" : fs::path(path);
  try {
    return eval_report_from_json(json::parse(read_file(p)));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::format, p.string() + ": " + e.what());
  }
}

void report_cmd(const std::vector<std::string>& runs, const std::string& out) {
  std::vector<EvalReport> reports;
  for (const auto& r : runs) reports.push_back(read_report(r));
  json j;
  j["runs"] = runs;
  j["comparison"] = json::array();
  for (const auto& row : compare(reports)) {
    j["comparison"].push_back({{"metric", row.metric},
                               {"run", runs[row.candidate]},
                               {"baseline", row.baseline},
                               {"candidate", row.candidate_value},
                               {"delta", row.delta}});
  }
  j["summary"] = json::array();
  for (const auto& s : summarize(reports)) {
    j["summary"].push_back({{"metric", s.metric}, {"mean", s.mean}, {"std", s.stddev}, {"runs", s.runs}});
  }
  if (!out.empty()) {
    write_file(fs::path(out) / "report.json", j.dump(2) + "\n");
    write_file(fs::path(out) / "comparison.csv", comparison_to_csv(compare(reports)));
  }
  print_json(j);
}

struct PipelineArgs {
  std::string out;
  std::string config;
  std::uint64_t seed = 7;
  bool skip_grid = false;
  std::string grid_task = "heldout-membership";
};

void pipeline_cmd(PipelineArgs a, const CLI::App& cmd) {
  const auto cfg = load_json(a.config);
  PipelineOptions opt;
  if (cfg.contains("pretrain")) pretrain_config_from_json(cfg["pretrain"], opt.pretrain);
  experiment_config_from_json(cfg, opt.experiments);
  take_json(cfg, "seed", opt.seed);
  take_json(cfg, "grid_task", opt.grid_task);
  if (cmd.count("--seed") > 0) opt.seed = a.seed;
  if (cmd.count("--grid-task") > 0) opt.grid_task = a.grid_task;
  opt.grid = !a.skip_grid;
  if (a.out.empty()) fail(ErrorKind::argument, "pipeline: --out is required");
  const auto res = run_pipeline(a.out, opt, log_line);
  std::cout << method_effect_csv(res.effects) << collapse_csv(res.collapse);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-swarm distillation workbench"};
  app.require_subcommand(1);

  GenSuiteArgs gs;
  auto* gen = app.add_subcommand("gen-suite", "Generate the synthetic task suite");
  gen->add_option("--seed", gs.seed, "Master seed");
  gen->add_option("--out", gs.out, "Output directory");
  gen->add_option("--config", gs.config, "JSON file with seed, out and split sizes");

  PretrainArgs pa;
  auto* pre = app.add_subcommand("pretrain", "Multitask prompted pretraining of the base scorer");
  pre->add_option("--suite", pa.suite, "Suite directory");
  pre->add_option("--config", pa.config, "JSON pretraining config");
  pre->add_option("--out", pa.out, "Checkpoint path");
  pre->add_option("--steps", pa.steps, "Optimizer steps")->check(CLI::PositiveNumber);

  AdaptArgs aa;
  auto* ad = app.add_subcommand("adapt", "Prompt-consistency adaptation on unlabeled inputs");
  ad->add_option("--base", aa.base, "Base checkpoint");
  ad->add_option("--suite", aa.suite, "Suite directory; --task is then a task name");
  ad->add_option("--task", aa.task, "Task directory, or task name with --suite");
  ad->add_option("--mode", aa.mode, "swarm or self")->check(CLI::IsMember({"swarm", "self"}));
  ad->add_option("--source", aa.source, "Unlabeled inputs from train or test")->check(CLI::IsMember({"train", "test"}));
  ad->add_option("--prompts-subset", aa.prompts_subset, "Use the first P prompts (0 = all)");
  ad->add_option("--examples-subset", aa.examples_subset, "Use the first E inputs (0 = all)");
  ad->add_option("--seed", aa.seed, "Adaptation seed");
  ad->add_option("--lr", aa.lr, "Peak learning rate")->check(CLI::PositiveNumber);
  ad->add_option("--steps", aa.steps, "Optimizer steps")->check(CLI::PositiveNumber);
  ad->add_option("--out", aa.out, "Run directory");
  ad->add_flag("--full-finetune", aa.full_finetune, "Train every base weight instead of adapters");
  ad->add_flag("--no-select", aa.no_select, "Keep the final checkpoint instead of the selected one");
  ad->add_option("--config", aa.config, "JSON run config; flags override it");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a task's eval split");
  ev->add_option("--ckpt", ea.ckpt, "Base checkpoint")->required();
  ev->add_option("--adapters", ea.adapters, "Adapter file from an adapt run");
  ev->add_option("--suite", ea.suite, "Suite directory; --task is then a task name");
  ev->add_option("--task", ea.task, "Task directory, or task name with --suite")->required();
  ev->add_option("--prompts-subset", ea.prompts_subset, "Use the first P prompts (0 = all)");
  ev->add_option("--out", ea.out, "Report path");
  ev->add_option("--predictions-out", ea.predictions_out, "Write per-prompt predictions as JSONL");

  std::string predictions;
  std::size_t labels = 0;
  auto* ka = app.add_subcommand("kappa", "Fleiss' kappa of a prediction dump");
  ka->add_option("--predictions", predictions, "JSONL with example_id and predictions")->required();
  ka->add_option("--labels", labels, "Number of labels (default: max label + 1)");

  std::vector<std::string> runs;
  std::string report_out;
  auto* rp = app.add_subcommand("report", "Compare reports against the first and summarize them");
  rp->add_option("--runs", runs, "Run directories or report files")->required()->expected(1, -1);
  rp->add_option("--out", report_out, "Directory for report.json and comparison.csv");

  PipelineArgs pl;
  auto* pp = app.add_subcommand("pipeline", "Suite, pretraining and every experiment in one go");
  pp->add_option("--out", pl.out, "Output directory");
  pp->add_option("--config", pl.config, "JSON with seed, pretrain, train, collapse, unlabeled and seeds");
  pp->add_option("--seed", pl.seed, "Master seed");
  pp->add_option("--grid-task", pl.grid_task, "Task for the prompt/example grid");
  pp->add_flag("--skip-grid", pl.skip_grid, "Skip the prompt/example grid");

  try {
    app.parse(argc, argv);
    if (*gen) gen_suite(gs, *gen);
    if (*pre) pretrain_cmd(pa, *pre);
    if (*ad) adapt_cmd(aa, *ad);
    if (*ev) eval_cmd(ea);
    if (*ka) kappa_cmd(predictions, labels);
    if (*rp) report_cmd(runs, report_out);
    if (*pp) pipeline_cmd(pl, *pp);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "argument"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
