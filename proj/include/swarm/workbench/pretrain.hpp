// SPDX-License-Identifier: Apache-2.0
//
// Multitask prompted pretraining of the base scorer: maximum likelihood of the
// gold verbalizer under a randomly drawn prompt, across all pretraining tasks.
#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "swarm/distill.hpp"
#include "swarm/evalsuite.hpp"
#include "swarm/optim.hpp"
#include "swarm/scorer.hpp"
#include "swarm/workbench/suite.hpp"

namespace swarm::workbench {

struct PretrainConfig {
  ModelConfig model;
  std::int64_t steps = 8000;
  std::size_t batch = 8;
  double peak_lr = 3e-3;
  std::int64_t warmup_steps = 100;
  double decay_power = 1.0;
  AdamConfig adam;
  std::size_t max_rerolls = 3;
  double gate_margin = 0.05;       // held-out ensemble accuracy must exceed 1/J by this much
  std::size_t gate_examples = 200;  // held-out eval examples used by the gate

  void validate() const {
    model.validate();
    if (steps < 1) fail(ErrorKind::argument, "pretrain config: steps must be >= 1");
    if (batch < 1) fail(ErrorKind::argument, "pretrain config: batch must be >= 1");
    if (!(peak_lr > 0.0)) fail(ErrorKind::argument, "pretrain config: learning rate must be positive");
    if (warmup_steps < 0 || warmup_steps > steps) {
      fail(ErrorKind::argument, "pretrain config: warmup_steps must lie in [0, steps]");
    }
  }
};

struct GateTask {
  std::string task;
  double ensemble_accuracy = 0.0;
  double chance = 0.0;
};

struct PretrainAttempt {
  std::size_t attempt = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t order_seed = 0;
  double final_loss = 0.0;
  std::vector<GateTask> gate;
  bool passed = false;
};

struct PretrainResult {
  ScorerModel model;
  std::vector<PretrainAttempt> attempts;
  std::vector<std::pair<std::int64_t, double>> loss_curve;  // of the accepted attempt
};

struct PretrainTask {
  const PromptPool* pool = nullptr;
  std::vector<Example> train;
};

using PretrainProgress = std::function<void(std::size_t attempt, std::int64_t step, double loss)>;

/// -log p(gold verbalizer | rendered input), recorded on `t`.
inline Var gold_nll(Tape& t, const ScorerModel& model, const PromptTemplate& tmpl, const Example& ex) {
  if (!ex.label) fail(ErrorKind::argument, "pretrain: unlabeled example");
  const auto input = render_input(tmpl, ex);
  const auto targets = render_targets(tmpl, ex);
  const auto enc = encode(t, model, model.tokenizer().encode(input));
  return scale(target_log_prob(t, model, enc,
                               model.tokenizer().encode(targets.at(static_cast<std::size_t>(*ex.label)))),
               -1.0);
}

/// One training attempt from the given seeds.
inline ScorerModel pretrain_once(const std::vector<PretrainTask>& tasks, const PretrainConfig& config,
                                 std::uint64_t init_seed, std::uint64_t order_seed,
                                 std::vector<std::pair<std::int64_t, double>>* curve = nullptr,
                                 const std::function<void(std::int64_t, double)>& progress = {}) {
  config.validate();
  if (tasks.empty()) fail(ErrorKind::argument, "pretrain: no pretraining tasks");
  for (const auto& t : tasks) {
    if (t.train.empty()) fail(ErrorKind::argument, "pretrain: task " + t.pool->task_name + " has no examples");
  }
  ScorerModel model = ScorerModel::init(config.model, init_seed);
  model.set_base_trainable(true);
  auto params = model.trainable_parameters();
  Adam adam(params, config.adam);
  model.zero_grad();
  std::mt19937_64 rng(order_seed);
  std::uniform_int_distribution<std::size_t> pick_task(0, tasks.size() - 1);
  Tape tape;
  const double inv = 1.0 / static_cast<double>(config.batch);
  for (std::int64_t step = 1; step <= config.steps; ++step) {
    double loss = 0.0;
    for (std::size_t b = 0; b < config.batch; ++b) {
      const auto& task = tasks[pick_task(rng)];
      std::uniform_int_distribution<std::size_t> pick_ex(0, task.train.size() - 1);
      std::uniform_int_distribution<std::size_t> pick_prompt(0, task.pool->templates.size() - 1);
      const auto& ex = task.train[pick_ex(rng)];
      const auto& tmpl = task.pool->templates[pick_prompt(rng)];
      try {
        Var nll = gold_nll(tape, model, tmpl, ex);
        loss += nll.scalar() * inv;
        tape.backward(scale(nll, inv));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::non_finite) throw;
        fail(ErrorKind::non_finite, "pretraining diverged at step " + std::to_string(step) + " on task " +
                                        task.pool->task_name + ": " + e.what());
      }
    }
    if (!std::isfinite(loss)) {
      fail(ErrorKind::non_finite, "pretraining diverged at step " + std::to_string(step));
    }
    const double lr =
        warmup_decay_lr(step, config.peak_lr, config.warmup_steps, config.steps, config.decay_power);
    if (lr > 0.0) adam.step(lr);
    model.zero_grad();
    if (curve != nullptr) curve->emplace_back(step, loss);
    if (progress) progress(step, loss);
  }
  model.set_base_trainable(false);
  return model;
}

/// Trains on every pretraining task of `suite`, rerolling the seeds until the
/// zero-shot ensemble on some held-out task beats chance by the gate margin.
inline PretrainResult pretrain(const Suite& suite, const PretrainConfig& config,
                               const PretrainProgress& progress = {}) {
  std::vector<PretrainTask> tasks;
  for (const TaskEntry* t : suite.manifest.with_role(TaskRole::pretraining)) {
    tasks.push_back({&t->pool, suite.train(t->spec.name)});
  }
  struct HeldOut {
    const TaskEntry* entry;
    std::vector<Example> eval;
  };
  std::vector<HeldOut> held_out;
  for (const TaskEntry* t : suite.manifest.with_role(TaskRole::held_out)) {
    auto eval = suite.eval(t->spec.name);
    if (eval.size() > config.gate_examples) eval.resize(config.gate_examples);
    held_out.push_back({t, std::move(eval)});
  }

  PretrainResult result;
  for (std::size_t attempt = 0; attempt <= config.max_rerolls; ++attempt) {
    PretrainAttempt rec;
    rec.attempt = attempt;
    rec.init_seed = derive_seed(suite.manifest.master_seed, "pretrain/init/" + std::to_string(attempt));
    rec.order_seed = derive_seed(suite.manifest.master_seed, "pretrain/order/" + std::to_string(attempt));
    std::vector<std::pair<std::int64_t, double>> curve;
    auto model = pretrain_once(tasks, config, rec.init_seed, rec.order_seed, &curve,
                               [&](std::int64_t step, double loss) {
                                 if (progress) progress(attempt, step, loss);
                               });
    rec.final_loss = curve.empty() ? 0.0 : curve.back().second;
    rec.passed = held_out.empty();
    for (const auto& h : held_out) {
      const auto report = evaluate(model, h.entry->pool, h.eval);
      const double chance = 1.0 / static_cast<double>(h.entry->pool.num_labels());
      rec.gate.push_back({h.entry->spec.name, report.ensemble_accuracy, chance});
      if (report.ensemble_accuracy > chance + config.gate_margin) rec.passed = true;
    }
    result.attempts.push_back(rec);
    if (rec.passed) {
      result.model = std::move(model);
      result.loss_curve = std::move(curve);
      return result;
    }
  }
  std::string detail;
  for (const auto& a : result.attempts) {
    for (const auto& g : a.gate) {
      detail += " attempt " + std::to_string(a.attempt) + " " + g.task + "=" + std::to_string(g.ensemble_accuracy);
    }
  }
  fail(ErrorKind::state, "pretrain: no attempt beat chance on a held-out task;" + detail);
}

inline json pretrain_config_to_json(const PretrainConfig& c) {
  json j;
  j["model"] = {{"layers", c.model.layers}, {"d_model", c.model.d_model}, {"d_ff", c.model.d_ff},
                {"heads", c.model.heads},   {"max_len", c.model.max_len}};
  j["steps"] = c.steps;
  j["batch"] = c.batch;
  j["peak_lr"] = c.peak_lr;
  j["warmup_steps"] = c.warmup_steps;
  j["decay_power"] = c.decay_power;
  j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
  j["max_rerolls"] = c.max_rerolls;
  j["gate_margin"] = c.gate_margin;
  j["gate_examples"] = c.gate_examples;
  return j;
}

/// Fields missing from `j` keep the values already in `c`.
inline void pretrain_config_from_json(const json& j, PretrainConfig& c) {
  try {
    if (j.contains("model")) {
      const auto& m = j["model"];
      c.model.layers = m.value("layers", c.model.layers);
      c.model.d_model = m.value("d_model", c.model.d_model);
      c.model.d_ff = m.value("d_ff", c.model.d_ff);
      c.model.heads = m.value("heads", c.model.heads);
      c.model.max_len = m.value("max_len", c.model.max_len);
    }
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.peak_lr = j.value("peak_lr", c.peak_lr);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.decay_power = j.value("decay_power", c.decay_power);
    if (j.contains("adam")) {
      c.adam.beta1 = j["adam"].value("beta1", c.adam.beta1);
      c.adam.beta2 = j["adam"].value("beta2", c.adam.beta2);
      c.adam.eps = j["adam"].value("eps", c.adam.eps);
    }
    c.max_rerolls = j.value("max_rerolls", c.max_rerolls);
    c.gate_margin = j.value("gate_margin", c.gate_margin);
    c.gate_examples = j.value("gate_examples", c.gate_examples);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("pretrain config: ") + e.what());
  }
}

inline json pretrain_record_to_json(const PretrainResult& r) {
  json j;
  j["attempts"] = json::array();
  for (const auto& a : r.attempts) {
    json aj;
    aj["attempt"] = a.attempt;
    aj["init_seed"] = a.init_seed;
    aj["order_seed"] = a.order_seed;
    aj["final_loss"] = a.final_loss;
    aj["passed"] = a.passed;
    aj["gate"] = json::array();
    for (const auto& g : a.gate) {
      aj["gate"].push_back({{"task", g.task}, {"ensemble_accuracy", g.ensemble_accuracy}, {"chance", g.chance}});
    }
    j["attempts"].push_back(std::move(aj));
  }
  return j;
}

}  // namespace swarm::workbench
