// SPDX-License-Identifier: Apache-2.0
//
// The synthetic suite: pretraining tasks, held-out tasks, their prompt pools,
// and the files written to disk.
//
// Seeds. Every random stream is derived from the master seed with
//   derive_seed(master, label) = splitmix64(master ^ fnv1a64(label))
// using the labels "task/<name>", "pretrain/init/<attempt>",
// "pretrain/order/<attempt>". Resolved task seeds are written into
// manifest.json.
//
// Layout:
//   DIR/manifest.json
//   DIR/tasks/<name>/pool.json
//   DIR/tasks/<name>/train.jsonl
//   DIR/tasks/<name>/eval.jsonl
#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "swarm/autodiff.hpp"
#include "swarm/checkpoint.hpp"
#include "swarm/io.hpp"
#include "swarm/workbench/tasks.hpp"

namespace swarm::workbench {

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  return swarm::detail::splitmix64(master ^ checkpoint_hash(label));
}

enum class TaskRole { pretraining, held_out };

inline std::string to_string(TaskRole r) { return r == TaskRole::pretraining ? "pretraining" : "held-out"; }

struct TaskEntry {
  TaskSpec spec;
  TaskRole role = TaskRole::pretraining;
  PromptPool pool;
};

struct SuiteManifest {
  std::uint64_t master_seed = 0;
  std::vector<TaskEntry> tasks;

  std::vector<const TaskEntry*> with_role(TaskRole role) const {
    std::vector<const TaskEntry*> out;
    for (const auto& t : tasks) {
      if (t.role == role) out.push_back(&t);
    }
    return out;
  }

  const TaskEntry& find(const std::string& name) const {
    for (const auto& t : tasks) {
      if (t.spec.name == name) return t;
    }
    fail(ErrorKind::argument, "suite has no task named \"" + name + "\"");
  }

  void validate() const {
    std::set<std::string> names;
    bool any_pretraining = false;
    for (const auto& t : tasks) {
      if (!names.insert(t.spec.name).second) {
        fail(ErrorKind::validation, "suite: task name \"" + t.spec.name + "\" used twice");
      }
      any_pretraining |= t.role == TaskRole::pretraining;
      require_valid(t.pool);
      if (t.pool.num_prompts() < 4) {
        fail(ErrorKind::validation, "suite: task " + t.spec.name + " has fewer than 4 prompts");
      }
      std::set<std::vector<std::string>> verbalizer_sets;
      for (const auto& p : t.pool.templates) verbalizer_sets.insert(p.choices());
      if (verbalizer_sets.size() < 2) {
        fail(ErrorKind::validation, "suite: task " + t.spec.name + " needs two distinct verbalizer sets");
      }
      if (t.pool.num_labels() != t.spec.num_labels) {
        fail(ErrorKind::validation, "suite: task " + t.spec.name + " pool and spec disagree on J");
      }
    }
    if (!any_pretraining) fail(ErrorKind::validation, "suite: no pretraining tasks");
  }
};

namespace detail {

struct PromptSpec {
  const char* input;
  std::vector<std::string> choices;
};

inline PromptPool make_pool(const std::string& task, std::vector<std::string> labels,
                            const std::vector<PromptSpec>& prompts) {
  PromptPool pool;
  pool.task_name = task;
  pool.label_set.labels = std::move(labels);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    pool.templates.emplace_back(task + "/p" + std::to_string(i), prompts[i].input, prompts[i].choices);
  }
  return pool;
}

const std::vector<std::string> kYesNo{"Yes", "No"};
const std::vector<std::string> kTrueFalse{"True", "False"};
const std::vector<std::string> kNoYes{"No", "Yes"};
const std::vector<std::string> kFalseTrue{"False", "True"};
const std::vector<std::string> kPosNeg{"Positive", "Negative"};
const std::vector<std::string> kGoodBad{"Good", "Bad"};
const std::vector<std::string> kOddEven{"Odd", "Even"};
const std::vector<std::string> kPresentAbsent{"Present", "Absent"};

inline std::vector<PromptSpec> sentiment_prompts(bool held_out) {
  if (!held_out) {
    return {{"{text} | positive?", kYesNo},
            {"Is this positive: {text}", kYesNo},
            {"{text} | mood:", kPosNeg},
            {"Review: {text} | good?", kYesNo},
            {"{text} | tone is happy.", kTrueFalse},
            {"Sentiment of: {text}", kPosNeg},
            {"{text} | it is good.", kTrueFalse},
            {"Rate {text}", kGoodBad}};
  }
  return {{"{text} | upbeat?", kYesNo},
          {"Does this feel positive? {text}", kYesNo},
          {"{text} | the writer is happy.", kTrueFalse},
          {"Feeling in: {text}", kGoodBad},
          {"{text} | sounds positive.", kTrueFalse},
          {"Mood of: {text}", kPosNeg},
          {"Was it good? {text}", kYesNo},
          {"{text} | positive review?", kYesNo}};
}

inline std::vector<PromptSpec> parity_prompts(bool held_out) {
  if (!held_out) {
    return {{"{text} | odd number of x?", kYesNo},
            {"Count x in: {text} | odd?", kYesNo},
            {"{text} | x count parity:", kOddEven},
            {"Parity of x: {text}", kOddEven},
            {"{text} | x appears odd times.", kTrueFalse},
            {"Is the x count odd? {text}", kYesNo},
            {"{text} | odd x?", kTrueFalse},
            {"x parity {text}", kOddEven}};
  }
  return {{"{text} | is the number of x odd?", kYesNo},
          {"How many x, odd? {text}", kYesNo},
          {"{text} | parity:", kOddEven},
          {"Check x in {text}", kOddEven},
          {"{text} | x odd or even:", kOddEven},
          {"Symbol parity odd: {text}", kTrueFalse},
          {"x count odd? {text}", kYesNo},
          {"{text} | odd many x.", kTrueFalse}};
}

inline std::vector<PromptSpec> membership_prompts(bool held_out) {
  if (!held_out) {
    return {{"{text} | any animal?", kYesNo},
            {"Is there an animal in: {text}", kYesNo},
            {"{text} | animal:", kPresentAbsent},
            {"Animal check {text}", kPresentAbsent},
            {"{text} | mentions an animal.", kTrueFalse},
            {"Find animal: {text}", kYesNo},
            {"{text} | has animal?", kTrueFalse},
            {"Animal in {text}", kPresentAbsent}};
  }
  return {{"Does it name an animal? {text}", kYesNo},
          {"{text} | animal present:", kPresentAbsent},
          {"Spot the animal: {text}", kPresentAbsent},
          {"{text} | an animal is named.", kTrueFalse},
          {"Zoo check {text}", kPresentAbsent},
          {"{text} | animal?", kYesNo},
          {"Any animal here: {text}", kTrueFalse},
          {"{text} | is an animal in it?", kYesNo}};
}

inline std::vector<PromptSpec> family_prompts(GeneratorKind kind, bool held_out) {
  switch (kind) {
    case GeneratorKind::keyword_sentiment: return sentiment_prompts(held_out);
    case GeneratorKind::parity_over_symbols: return parity_prompts(held_out);
    case GeneratorKind::pattern_membership: return membership_prompts(held_out);
  }
  return {};
}

inline std::vector<std::string> family_labels(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::keyword_sentiment: return {"positive", "negative"};
    case GeneratorKind::parity_over_symbols: return {"odd", "even"};
    case GeneratorKind::pattern_membership: return {"present", "absent"};
  }
  return {};
}

}  // namespace detail

struct SuiteSizes {
  std::size_t pretrain_train = 2000;
  std::size_t pretrain_eval = 200;
  std::size_t held_out_train = 2000;
  std::size_t held_out_eval = 300;
};

/// The default suite: two pretraining tasks per generator family on two text
/// domains, and one held-out task per family on a vocabulary mixed from both
/// domains, asked through prompts that never occur in pretraining.
inline SuiteManifest default_manifest(std::uint64_t master_seed, const SuiteSizes& sizes = {}) {
  const std::vector<std::string> films{"the", "film", "plot", "cast", "was", "and"};
  const std::vector<std::string> meals{"our", "meal", "soup", "chef", "tasted", "so"};
  const std::vector<std::string> mixed{"the", "meal", "film", "chef", "was", "so"};

  struct Row {
    std::string name;
    GeneratorKind kind;
    const std::vector<std::string>* filler;
    TaskRole role;
  };
  const std::vector<Row> rows{
      {"sentiment-films", GeneratorKind::keyword_sentiment, &films, TaskRole::pretraining},
      {"sentiment-meals", GeneratorKind::keyword_sentiment, &meals, TaskRole::pretraining},
      {"parity-films", GeneratorKind::parity_over_symbols, &films, TaskRole::pretraining},
      {"parity-meals", GeneratorKind::parity_over_symbols, &meals, TaskRole::pretraining},
      {"membership-films", GeneratorKind::pattern_membership, &films, TaskRole::pretraining},
      {"membership-meals", GeneratorKind::pattern_membership, &meals, TaskRole::pretraining},
      {"heldout-sentiment", GeneratorKind::keyword_sentiment, &mixed, TaskRole::held_out},
      {"heldout-parity", GeneratorKind::parity_over_symbols, &mixed, TaskRole::held_out},
      {"heldout-membership", GeneratorKind::pattern_membership, &mixed, TaskRole::held_out},
  };

  SuiteManifest m;
  m.master_seed = master_seed;
  for (const auto& row : rows) {
    TaskEntry e;
    e.role = row.role;
    e.spec.name = row.name;
    e.spec.kind = row.kind;
    e.spec.filler = *row.filler;
    const bool held_out = row.role == TaskRole::held_out;
    e.spec.train_size = held_out ? sizes.held_out_train : sizes.pretrain_train;
    e.spec.eval_size = held_out ? sizes.held_out_eval : sizes.pretrain_eval;
    e.spec.seed = derive_seed(master_seed, "task/" + row.name);
    e.pool = detail::make_pool(row.name, detail::family_labels(row.kind),
                               detail::family_prompts(row.kind, held_out));
    m.tasks.push_back(std::move(e));
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline json task_spec_to_json(const TaskSpec& s) {
  json j;
  j["name"] = s.name;
  j["generator"] = to_string(s.kind);
  j["vocabulary"] = s.filler;
  j["J"] = s.num_labels;
  j["fields"] = json::array({s.field});
  j["train_size"] = s.train_size;
  j["eval_size"] = s.eval_size;
  j["label_noise"] = s.label_noise;
  j["shift"] = {{"uppercase_first", s.shift.uppercase_first},
                {"terminator", s.shift.terminator},
                {"extra_filler_rate", s.shift.extra_filler_rate}};
  j["seed"] = s.seed;
  return j;
}

inline TaskSpec task_spec_from_json(const json& j) {
  TaskSpec s;
  s.name = j.at("name").get<std::string>();
  s.kind = generator_from_string(j.at("generator").get<std::string>());
  s.filler = j.at("vocabulary").get<std::vector<std::string>>();
  s.num_labels = j.at("J").get<std::size_t>();
  const auto fields = j.at("fields").get<std::vector<std::string>>();
  if (fields.size() != 1) fail(ErrorKind::format, "task " + s.name + ": exactly one field expected");
  s.field = fields.front();
  s.train_size = j.at("train_size").get<std::size_t>();
  s.eval_size = j.at("eval_size").get<std::size_t>();
  s.label_noise = j.at("label_noise").get<double>();
  const auto& sh = j.at("shift");
  s.shift.uppercase_first = sh.at("uppercase_first").get<bool>();
  s.shift.terminator = sh.at("terminator").get<std::string>();
  s.shift.extra_filler_rate = sh.at("extra_filler_rate").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

inline json manifest_to_json(const SuiteManifest& m) {
  json j;
  j["master_seed"] = m.master_seed;
  j["seed_scheme"] = "splitmix64(master_seed ^ fnv1a64(label))";
  j["tasks"] = json::array();
  for (const auto& t : m.tasks) {
    json tj;
    tj["role"] = to_string(t.role);
    tj["spec"] = task_spec_to_json(t.spec);
    tj["pool"] = "tasks/" + t.spec.name + "/pool.json";
    tj["train"] = "tasks/" + t.spec.name + "/train.jsonl";
    tj["eval"] = "tasks/" + t.spec.name + "/eval.jsonl";
    j["tasks"].push_back(std::move(tj));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

struct Suite {
  std::filesystem::path dir;
  SuiteManifest manifest;

  std::filesystem::path task_dir(const std::string& name) const { return dir / "tasks" / name; }

  std::vector<Example> train(const std::string& name) const {
    manifest.find(name);
    return load_dataset(task_dir(name) / "train.jsonl");
  }
  std::vector<Example> eval(const std::string& name) const {
    manifest.find(name);
    return load_dataset(task_dir(name) / "eval.jsonl");
  }
  const PromptPool& pool(const std::string& name) const { return manifest.find(name).pool; }
};

inline Suite generate_suite(const SuiteManifest& manifest, const std::filesystem::path& dir,
                            const Lexicon& lex = {}) {
  manifest.validate();
  for (const auto& t : manifest.tasks) {
    TaskData data;
    data.spec = t.spec;
    generate_splits(data, lex);
    const auto td = dir / "tasks" / t.spec.name;
    save_pool(td / "pool.json", t.pool);
    save_dataset(td / "train.jsonl", data.train);
    save_dataset(td / "eval.jsonl", data.eval);
  }
  write_file(dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
  return {dir, manifest};
}

inline Suite load_suite(const std::filesystem::path& dir) {
  json j;
  try {
    j = json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::format, (dir / "manifest.json").string() + ": " + e.what());
  }
  Suite suite;
  suite.dir = dir;
  try {
    suite.manifest.master_seed = j.at("master_seed").get<std::uint64_t>();
    for (const auto& tj : j.at("tasks")) {
      TaskEntry e;
      const auto role = tj.at("role").get<std::string>();
      if (role != "pretraining" && role != "held-out") fail(ErrorKind::format, "unknown task role " + role);
      e.role = role == "pretraining" ? TaskRole::pretraining : TaskRole::held_out;
      e.spec = task_spec_from_json(tj.at("spec"));
      e.pool = load_pool(dir / tj.at("pool").get<std::string>());
      suite.manifest.tasks.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, "suite manifest: " + std::string(e.what()));
  }
  suite.manifest.validate();
  return suite;
}

}  // namespace swarm::workbench
