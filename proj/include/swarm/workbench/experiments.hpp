// SPDX-License-Identifier: Apache-2.0
//
// Adaptation runs on suite tasks and the experiments built from them: the
// method-effect comparison (base, swarm, self), the full fine-tuning collapse
// ablation, and the prompt-count / example-count grid.
#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "swarm/distill.hpp"
#include "swarm/evalsuite.hpp"
#include "swarm/io.hpp"
#include "swarm/lora.hpp"
#include "swarm/workbench/pretrain.hpp"
#include "swarm/workbench/suite.hpp"

namespace swarm::workbench {

// ---------------------------------------------------------------------------
// TrainConfig JSON
// ---------------------------------------------------------------------------

inline json train_config_to_json(const TrainConfig& c) {
  json j;
  j["peak_lr"] = c.peak_lr;
  j["warmup_steps"] = c.warmup_steps;
  j["decay_power"] = c.decay_power;
  j["max_steps"] = c.max_steps;
  j["grad_accum"] = c.grad_accum;
  j["mode"] = to_string(c.mode);
  j["lora"] = {{"bottleneck", c.lora.bottleneck},
               {"alpha", c.lora.alpha},
               {"dropout", c.lora.dropout},
               {"init_std", c.lora.init_std}};
  j["full_finetune"] = c.full_finetune;
  j["checkpoint_every"] = c.checkpoint_every;
  j["seed"] = c.seed;
  j["pair_policy"] = to_string(c.pair_policy);
  j["k_pairs"] = c.k_pairs;
  j["normalized_student"] = c.normalized_student;
  j["select"] = c.select;
  j["kappa_examples"] = c.kappa_examples;
  j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
  return j;
}

inline DistillMode mode_from_string(const std::string& s) {
  if (s == "swarm") return DistillMode::swarm;
  if (s == "self") return DistillMode::self;
  fail(ErrorKind::argument, "unknown mode \"" + s + "\" (expected swarm or self)");
}

/// Fields missing from `j` keep the values already in `c`.
inline void train_config_from_json(const json& j, TrainConfig& c) {
  try {
    c.peak_lr = j.value("peak_lr", c.peak_lr);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.decay_power = j.value("decay_power", c.decay_power);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.grad_accum = j.value("grad_accum", c.grad_accum);
    if (j.contains("mode")) c.mode = mode_from_string(j["mode"].get<std::string>());
    if (j.contains("lora")) {
      const auto& l = j["lora"];
      c.lora.bottleneck = l.value("bottleneck", c.lora.bottleneck);
      c.lora.alpha = l.value("alpha", c.lora.alpha);
      c.lora.dropout = l.value("dropout", c.lora.dropout);
      c.lora.init_std = l.value("init_std", c.lora.init_std);
    }
    c.full_finetune = j.value("full_finetune", c.full_finetune);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.seed = j.value("seed", c.seed);
    if (j.contains("pair_policy")) {
      const auto p = j["pair_policy"].get<std::string>();
      if (p == "shuffle") {
        c.pair_policy = PairPolicy::shuffle;
      } else if (p == "k_pairs") {
        c.pair_policy = PairPolicy::k_pairs;
      } else {
        fail(ErrorKind::argument, "unknown pair policy \"" + p + "\"");
      }
    }
    c.k_pairs = j.value("k_pairs", c.k_pairs);
    c.normalized_student = j.value("normalized_student", c.normalized_student);
    c.select = j.value("select", c.select);
    c.kappa_examples = j.value("kappa_examples", c.kappa_examples);
    if (j.contains("adam")) {
      c.adam.beta1 = j["adam"].value("beta1", c.adam.beta1);
      c.adam.beta2 = j["adam"].value("beta2", c.adam.beta2);
      c.adam.eps = j["adam"].value("eps", c.adam.eps);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("train config: ") + e.what());
  }
}

/// Adaptation settings used by the experiments on the default suite.
inline TrainConfig desk_train_config() {
  TrainConfig c;
  c.peak_lr = 1e-3;
  c.decay_power = 0.0;  // constant after warmup
  c.max_steps = 60;
  c.warmup_steps = 6;
  c.grad_accum = 8;
  c.checkpoint_every = 6;
  return c;
}

// ---------------------------------------------------------------------------
// Single adaptation run on a suite task
// ---------------------------------------------------------------------------

enum class DataSource { train, test };

inline std::string to_string(DataSource s) { return s == DataSource::train ? "train" : "test"; }

inline DataSource source_from_string(const std::string& s) {
  if (s == "train") return DataSource::train;
  if (s == "test") return DataSource::test;
  fail(ErrorKind::argument, "unknown source \"" + s + "\" (expected train or test)");
}

struct RunSpec {
  std::string task;
  DataSource source = DataSource::train;
  std::size_t prompts_subset = 0;   // first P prompts of the pool; 0 keeps all
  std::size_t examples_subset = 0;  // first E unlabeled inputs; 0 keeps all
  TrainConfig train;
};

/// Everything reported about one adaptation run.
struct RunRecord {
  RunSpec spec;
  std::size_t num_prompts = 0;
  std::size_t num_examples = 0;
  double base_kappa = 0.0;  // kappa of the unadapted model on the adaptation inputs
  std::int64_t selected_step = 0;
  double selected_kappa = 0.0;
  double selected_majority = 0.0;
  bool selected_collapsed = false;
  double final_kappa = 0.0;
  double final_majority = 0.0;
  bool final_collapsed = false;
  bool final_suffix_decreasing = false;  // kappa fell from the second-to-last checkpoint
  std::vector<CheckpointRecord> checkpoints;  // weights dropped
  std::vector<std::pair<std::int64_t, double>> loss_curve;
  EvalReport report;  // selected model on the task's eval split
  double wall_seconds = 0.0;
};

inline PromptPool subset_pool(const PromptPool& pool, std::size_t prompts) {
  if (prompts == 0) return pool;
  if (prompts > pool.templates.size()) {
    fail(ErrorKind::argument, "prompts subset " + std::to_string(prompts) + " exceeds pool size " +
                                  std::to_string(pool.templates.size()));
  }
  PromptPool out = pool;
  out.templates.resize(prompts);
  return out;
}

inline std::vector<Example> strip_labels(std::vector<Example> data) {
  for (auto& ex : data) ex.label.reset();
  return data;
}

struct RunOutcome {
  RunRecord record;
  ScorerModel model;
};

/// Pool and splits of one task, read from a suite or from a task directory.
struct TaskFiles {
  std::string name;
  PromptPool pool;
  std::vector<Example> train;
  std::vector<Example> eval;
};

inline TaskFiles task_files(const Suite& suite, const std::string& name) {
  return {name, suite.pool(name), suite.train(name), suite.eval(name)};
}

/// Reads pool.json, train.jsonl and eval.jsonl from `dir`.
inline TaskFiles task_files(const std::filesystem::path& dir) {
  TaskFiles t;
  t.pool = load_pool(dir / "pool.json");
  t.name = t.pool.task_name;
  t.train = load_dataset(dir / "train.jsonl");
  t.eval = load_dataset(dir / "eval.jsonl");
  return t;
}

inline RunOutcome run_adaptation(const TaskFiles& task, const ScorerModel& base, const RunSpec& spec,
                                 const AdaptHooks& hooks = {}) {
  if (spec.train.mode == DistillMode::swarm && spec.prompts_subset == 1) {
    fail(ErrorKind::argument, "swarm mode needs at least 2 prompts; use --mode self with one prompt");
  }
  const auto pool = subset_pool(task.pool, spec.prompts_subset);
  const auto& eval = task.eval;
  auto inputs = strip_labels(spec.source == DataSource::train ? task.train : eval);
  if (spec.examples_subset > 0) {
    if (spec.examples_subset > inputs.size()) {
      fail(ErrorKind::argument, "examples subset " + std::to_string(spec.examples_subset) + " exceeds " +
                                    std::to_string(inputs.size()) + " available inputs");
    }
    inputs.resize(spec.examples_subset);
  }

  auto run = adapt(base, pool, inputs, spec.train, hooks);
  RunOutcome out;
  RunRecord& r = out.record;
  r.spec = spec;
  if (r.spec.task.empty()) r.spec.task = task.name;
  r.num_prompts = pool.templates.size();
  r.num_examples = inputs.size();
  r.base_kappa = run.checkpoints.front().kappa;
  const auto& sel = run.selected();
  r.selected_step = sel.step;
  r.selected_kappa = sel.kappa;
  r.selected_majority = sel.majority_fraction;
  r.selected_collapsed = is_collapsed(sel.majority_fraction);
  const auto& fin = run.final_checkpoint();
  r.final_kappa = fin.kappa;
  r.final_majority = fin.majority_fraction;
  r.final_collapsed = is_collapsed(fin.majority_fraction);
  const auto n = run.trajectory.size();
  r.final_suffix_decreasing = n >= 2 && run.trajectory[n - 1].kappa < run.trajectory[n - 2].kappa;
  for (auto c : run.checkpoints) {
    c.weights.clear();
    r.checkpoints.push_back(std::move(c));
  }
  r.loss_curve = run.loss_curve;
  r.report = evaluate(run.model, pool, eval);
  r.wall_seconds = run.wall_seconds;
  out.model = std::move(run.model);
  return out;
}

inline json run_record_to_json(const RunRecord& r) {
  json j;
  j["task"] = r.spec.task;
  j["source"] = to_string(r.spec.source);
  j["prompts_subset"] = r.spec.prompts_subset;
  j["examples_subset"] = r.spec.examples_subset;
  j["train_config"] = train_config_to_json(r.spec.train);
  j["num_prompts"] = r.num_prompts;
  j["num_examples"] = r.num_examples;
  j["base_kappa"] = r.base_kappa;
  j["selected_step"] = r.selected_step;
  j["selected_kappa"] = r.selected_kappa;
  j["selected_majority"] = r.selected_majority;
  j["selected_collapsed"] = r.selected_collapsed;
  j["final_kappa"] = r.final_kappa;
  j["final_majority"] = r.final_majority;
  j["final_collapsed"] = r.final_collapsed;
  j["final_suffix_decreasing"] = r.final_suffix_decreasing;
  j["eval"] = eval_report_to_json(r.report);
  return j;
}

inline std::string kappa_csv(const RunRecord& r) {
  std::string out = "step,kappa,kappa_collapsed,majority_fraction,collapsed\n";
  for (const auto& c : r.checkpoints) {
    out += std::to_string(c.step) + "," + format_number(c.kappa) + "," + (c.kappa_collapsed ? "1" : "0") +
           "," + format_number(c.majority_fraction) + "," + (is_collapsed(c.majority_fraction) ? "1" : "0") +
           "\n";
  }
  return out;
}

inline std::string loss_csv(const std::vector<std::pair<std::int64_t, double>>& curve) {
  std::string out = "step,loss\n";
  for (const auto& [step, loss] : curve) out += std::to_string(step) + "," + format_number(loss) + "\n";
  return out;
}

/// Writes run.json, report.json, kappa.csv, loss.csv and timing.json into
/// `dir`, plus the adapter (or full model) checkpoint. timing.json is the
/// only file whose content depends on the machine.
inline void write_run(const std::filesystem::path& dir, const RunOutcome& outcome) {
  const auto& r = outcome.record;
  write_file(dir / "run.json", run_record_to_json(r).dump(2) + "\n");
  write_file(dir / "report.json", eval_report_to_json(r.report).dump(2) + "\n");
  write_file(dir / "kappa.csv", kappa_csv(r));
  write_file(dir / "loss.csv", loss_csv(r.loss_curve));
  write_file(dir / "timing.json", json{{"wall_seconds", r.wall_seconds}}.dump(2) + "\n");
  if (outcome.model.has_adapters()) {
    write_file(dir / "adapters.bin", save_adapters(outcome.model));
  } else {
    write_file(dir / "model.ckpt", save_checkpoint(outcome.model));
  }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

inline TrainConfig with_kappa_examples(TrainConfig c, std::size_t n) {
  c.kappa_examples = n;
  return c;
}

struct ExperimentConfig {
  TrainConfig train = with_kappa_examples(desk_train_config(), 64);
  TrainConfig collapse = with_kappa_examples(desk_train_config(), 128);  // schedule of the collapse ablation
  std::size_t unlabeled = 256;  // training-split inputs used for adaptation
  std::size_t seeds = 3;
};

inline json experiment_config_to_json(const ExperimentConfig& c) {
  return {{"train", train_config_to_json(c.train)},
          {"collapse", train_config_to_json(c.collapse)},
          {"unlabeled", c.unlabeled},
          {"seeds", c.seeds}};
}

inline void experiment_config_from_json(const json& j, ExperimentConfig& c) {
  if (j.contains("train")) train_config_from_json(j["train"], c.train);
  if (j.contains("collapse")) train_config_from_json(j["collapse"], c.collapse);
  try {
    c.unlabeled = j.value("unlabeled", c.unlabeled);
    c.seeds = j.value("seeds", c.seeds);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("experiment config: ") + e.what());
  }
}

/// Adaptation seed `i`, shared by every task and mode so runs pair up.
inline std::uint64_t adaptation_seed(std::uint64_t master, std::size_t i) {
  return derive_seed(master, "adapt/" + std::to_string(i));
}

using ExperimentProgress = std::function<void(const std::string& message)>;

struct TaskEffect {
  std::string task;
  EvalReport base;
  std::vector<RunRecord> swarm;
  std::vector<RunRecord> self;
};

inline double mean_of(const std::vector<RunRecord>& runs, const std::function<double(const RunRecord&)>& f) {
  if (runs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : runs) s += f(r);
  return s / static_cast<double>(runs.size());
}

inline double mean_ensemble(const std::vector<RunRecord>& runs) {
  return mean_of(runs, [](const RunRecord& r) { return r.report.ensemble_accuracy; });
}
inline double mean_selected_kappa(const std::vector<RunRecord>& runs) {
  return mean_of(runs, [](const RunRecord& r) { return r.selected_kappa; });
}

/// Base, swarm and self on every held-out task, over `config.seeds` seeds.
inline std::vector<TaskEffect> run_method_effect(const Suite& suite, const ScorerModel& base,
                                                 const ExperimentConfig& config,
                                                 const std::filesystem::path& out_dir = {},
                                                 const ExperimentProgress& progress = {}) {
  std::vector<TaskEffect> effects;
  for (const TaskEntry* t : suite.manifest.with_role(TaskRole::held_out)) {
    TaskEffect e;
    e.task = t->spec.name;
    const auto files = task_files(suite, e.task);
    e.base = evaluate(base, files.pool, files.eval);
    if (!out_dir.empty()) {
      write_file(out_dir / e.task / "base_report.json", eval_report_to_json(e.base).dump(2) + "\n");
    }
    for (auto mode : {DistillMode::swarm, DistillMode::self}) {
      for (std::size_t s = 0; s < config.seeds; ++s) {
        RunSpec spec;
        spec.task = e.task;
        spec.examples_subset = config.unlabeled;
        spec.train = config.train;
        spec.train.mode = mode;
        spec.train.seed = adaptation_seed(suite.manifest.master_seed, s);
        auto outcome = run_adaptation(files, base, spec);
        if (progress) {
          progress(e.task + " " + to_string(mode) + " seed " + std::to_string(s) + ": ensemble " +
                   format_number(outcome.record.report.ensemble_accuracy) + " (base " +
                   format_number(e.base.ensemble_accuracy) + ")");
        }
        if (!out_dir.empty()) write_run(out_dir / e.task / (to_string(mode) + "-" + std::to_string(s)), outcome);
        (mode == DistillMode::swarm ? e.swarm : e.self).push_back(std::move(outcome.record));
      }
    }
    effects.push_back(std::move(e));
  }
  return effects;
}

inline std::string method_effect_csv(const std::vector<TaskEffect>& effects) {
  std::string out =
      "task,base_ensemble,base_median,swarm_ensemble,swarm_median,self_ensemble,self_median,"
      "base_kappa,swarm_selected_kappa,self_selected_kappa\n";
  auto median_mean = [](const std::vector<RunRecord>& runs) {
    return mean_of(runs, [](const RunRecord& r) { return r.report.median_accuracy; });
  };
  for (const auto& e : effects) {
    const double base_kappa = e.swarm.empty() ? 0.0 : e.swarm.front().base_kappa;
    out += e.task + "," + format_number(e.base.ensemble_accuracy) + "," + format_number(e.base.median_accuracy) +
           "," + format_number(mean_ensemble(e.swarm)) + "," + format_number(median_mean(e.swarm)) + "," +
           format_number(mean_ensemble(e.self)) + "," + format_number(median_mean(e.self)) + "," +
           format_number(base_kappa) + "," + format_number(mean_selected_kappa(e.swarm)) + "," +
           format_number(mean_selected_kappa(e.self)) + "\n";
  }
  return out;
}

struct CollapsePair {
  std::string task;
  std::uint64_t seed = 0;
  RunRecord full_finetune;  // selection disabled
  RunRecord lora_selected;  // adapters with selection
};

/// Full fine-tuning without selection against adapters with selection, same
/// seeds and schedule, on every held-out task.
inline std::vector<CollapsePair> run_collapse_ablation(const Suite& suite, const ScorerModel& base,
                                                       const ExperimentConfig& config,
                                                       const std::filesystem::path& out_dir = {},
                                                       const ExperimentProgress& progress = {}) {
  std::vector<CollapsePair> pairs;
  for (const TaskEntry* t : suite.manifest.with_role(TaskRole::held_out)) {
    const auto files = task_files(suite, t->spec.name);
    for (std::size_t s = 0; s < config.seeds; ++s) {
      CollapsePair p;
      p.task = t->spec.name;
      p.seed = adaptation_seed(suite.manifest.master_seed, s);
      RunSpec spec;
      spec.task = p.task;
      spec.examples_subset = config.unlabeled;
      spec.train = config.collapse;
      spec.train.mode = DistillMode::swarm;
      spec.train.seed = p.seed;

      spec.train.full_finetune = true;
      spec.train.select = false;
      auto full = run_adaptation(files, base, spec);
      spec.train.full_finetune = false;
      spec.train.select = true;
      auto lora = run_adaptation(files, base, spec);
      if (progress) {
        progress(p.task + " seed " + std::to_string(s) + ": full fine-tune final majority " +
                 format_number(full.record.final_majority) + ", adapters selected majority " +
                 format_number(lora.record.selected_majority));
      }
      if (!out_dir.empty()) {
        const auto dir = out_dir / p.task / std::to_string(s);
        write_run(dir / "full-finetune", full);
        write_run(dir / "lora-selected", lora);
      }
      p.full_finetune = std::move(full.record);
      p.lora_selected = std::move(lora.record);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

inline std::string collapse_csv(const std::vector<CollapsePair>& pairs) {
  std::string out =
      "task,seed,full_final_majority,full_final_collapsed,full_final_kappa,full_suffix_decreasing,"
      "lora_selected_step,lora_selected_majority,lora_selected_collapsed\n";
  for (const auto& p : pairs) {
    const auto& f = p.full_finetune;
    const auto& l = p.lora_selected;
    out += p.task + "," + std::to_string(p.seed) + "," + format_number(f.final_majority) + "," +
           (f.final_collapsed ? "1" : "0") + "," + format_number(f.final_kappa) + "," +
           (f.final_suffix_decreasing ? "1" : "0") + "," + std::to_string(l.selected_step) + "," +
           format_number(l.selected_majority) + "," + (l.selected_collapsed ? "1" : "0") + "\n";
  }
  return out;
}

struct GridRow {
  std::string task;
  std::string axis;  // "prompts" or "examples"
  std::size_t prompts = 0;
  std::size_t examples = 0;
  std::string mode;
  std::uint64_t seed = 0;
  EvalReport report;
  double selected_kappa = 0.0;
};

/// Prompt-count runs at {1 (self), 2, 4, K} on all unlabeled inputs, and
/// example-count runs at {10, 30, 100, all} with all K prompts.
inline std::vector<GridRow> run_ablation_grid(const Suite& suite, const ScorerModel& base,
                                              const std::string& task, const ExperimentConfig& config,
                                              const ExperimentProgress& progress = {}) {
  const auto files = task_files(suite, task);
  const std::size_t k = files.pool.templates.size();
  const std::size_t all = config.unlabeled == 0 ? files.train.size() : config.unlabeled;
  std::vector<GridRow> rows;
  auto run_one = [&](const std::string& axis, std::size_t prompts, std::size_t examples, std::size_t s) {
    RunSpec spec;
    spec.task = task;
    spec.prompts_subset = prompts;
    spec.examples_subset = examples;
    spec.train = config.train;
    spec.train.mode = prompts == 1 ? DistillMode::self : DistillMode::swarm;
    spec.train.seed = adaptation_seed(suite.manifest.master_seed, s);
    auto outcome = run_adaptation(files, base, spec);
    GridRow row{task, axis, prompts, examples, to_string(spec.train.mode), spec.train.seed,
                outcome.record.report, outcome.record.selected_kappa};
    if (progress) {
      progress(task + " " + axis + " P=" + std::to_string(prompts) + " E=" + std::to_string(examples) +
               ": ensemble " + format_number(row.report.ensemble_accuracy));
    }
    rows.push_back(std::move(row));
  };
  std::vector<std::size_t> prompt_sizes{1, 2, 4, k};
  prompt_sizes.erase(std::unique(prompt_sizes.begin(), prompt_sizes.end()), prompt_sizes.end());
  std::vector<std::size_t> example_sizes;
  for (std::size_t e : {std::size_t{10}, std::size_t{30}, std::size_t{100}}) {
    if (e < all) example_sizes.push_back(e);
  }
  example_sizes.push_back(all);
  for (std::size_t s = 0; s < config.seeds; ++s) {
    for (std::size_t p : prompt_sizes) run_one("prompts", p, all, s);
    for (std::size_t e : example_sizes) run_one("examples", k, e, s);
  }
  return rows;
}

inline std::string grid_csv(const std::vector<GridRow>& rows) {
  std::string out = "task,axis,prompts,examples,mode,seed,ensemble_accuracy,median_accuracy,kappa_on_eval,selected_kappa\n";
  for (const auto& r : rows) {
    out += r.task + "," + r.axis + "," + std::to_string(r.prompts) + "," + std::to_string(r.examples) + "," +
           r.mode + "," + std::to_string(r.seed) + "," + format_number(r.report.ensemble_accuracy) + "," +
           format_number(r.report.median_accuracy) + "," + format_number(r.report.kappa_on_eval) + "," +
           format_number(r.selected_kappa) + "\n";
  }
  return out;
}

struct PipelineResult {
  std::vector<TaskEffect> effects;
  std::vector<CollapsePair> collapse;
  std::vector<GridRow> grid;
  double pretrain_seconds = 0.0;
  double total_seconds = 0.0;
};

struct PipelineOptions {
  std::uint64_t seed = 7;
  PretrainConfig pretrain;
  ExperimentConfig experiments;
  bool grid = true;
  std::string grid_task = "heldout-membership";
};

/// Suite, base checkpoint, method effect, collapse ablation and grid, all
/// written under `out`. timing.json is the only machine-dependent file.
inline PipelineResult run_pipeline(const std::filesystem::path& out, const PipelineOptions& opt,
                                   const ExperimentProgress& progress = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  PipelineResult res;
  const auto suite = generate_suite(default_manifest(opt.seed), out / "suite");
  const auto pre = pretrain(suite, opt.pretrain, [&](std::size_t attempt, std::int64_t step, double loss) {
    if (step % 1000 == 0) {
      say("pretrain attempt " + std::to_string(attempt) + " step " + std::to_string(step) + " loss " +
          format_number(loss));
    }
  });
  write_file(out / "base.ckpt", save_checkpoint(pre.model));
  write_file(out / "base.ckpt.json", pretrain_record_to_json(pre).dump(2) + "\n");
  res.pretrain_seconds = elapsed();
  say("pretrain done in " + format_number(res.pretrain_seconds) + " s");

  res.effects = run_method_effect(suite, pre.model, opt.experiments, out / "method_effect", progress);
  write_file(out / "method_effect.csv", method_effect_csv(res.effects));
  res.collapse = run_collapse_ablation(suite, pre.model, opt.experiments, out / "collapse", progress);
  write_file(out / "collapse.csv", collapse_csv(res.collapse));
  if (opt.grid) {
    res.grid = run_ablation_grid(suite, pre.model, opt.grid_task, opt.experiments, progress);
    write_file(out / "ablation_grid.csv", grid_csv(res.grid));
  }
  write_file(out / "config.json", json{{"seed", opt.seed},
                                       {"pretrain", pretrain_config_to_json(opt.pretrain)},
                                       {"experiments", experiment_config_to_json(opt.experiments)}}
                                          .dump(2) +
                                      "\n");
  res.total_seconds = elapsed();
  write_file(out / "timing.json",
             json{{"pretrain_seconds", res.pretrain_seconds}, {"total_seconds", res.total_seconds}}.dump(2) + "\n");
  return res;
}

}  // namespace swarm::workbench
