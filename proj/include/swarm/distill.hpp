// SPDX-License-Identifier: Apache-2.0
//
// Prompt-consistency training. Every prompt's label distribution acts as a
// detached teacher for another prompt on the same unlabeled example; the
// student term is the raw log-probability of each verbalized target.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "swarm/agreement.hpp"
#include "swarm/evalsuite.hpp"
#include "swarm/lora.hpp"
#include "swarm/optim.hpp"
#include "swarm/scorer.hpp"

namespace swarm {

enum class DistillMode { swarm, self };
enum class PairPolicy { shuffle, k_pairs };

inline std::string to_string(DistillMode m) { return m == DistillMode::swarm ? "swarm" : "self"; }
inline std::string to_string(PairPolicy p) { return p == PairPolicy::shuffle ? "shuffle" : "k_pairs"; }

struct TrainConfig {
  double peak_lr = 3e-3;
  std::int64_t warmup_steps = 100;
  double decay_power = 1.0;
  std::int64_t max_steps = 1500;
  std::size_t grad_accum = 16;
  DistillMode mode = DistillMode::swarm;
  LoraSettings lora;
  bool full_finetune = false;
  std::int64_t checkpoint_every = 50;
  std::uint64_t seed = 0;
  PairPolicy pair_policy = PairPolicy::shuffle;
  std::size_t k_pairs = 0;  // pairs per example under PairPolicy::k_pairs; 0 means K
  bool normalized_student = false;
  bool select = true;  // false: keep the final checkpoint
  std::size_t kappa_examples = 0;  // leading inputs scored at each checkpoint; 0 means all
  AdamConfig adam;

  void validate(std::size_t num_prompts) const {
    if (max_steps < 0) fail(ErrorKind::argument, "train config: max_steps must be >= 0");
    if (warmup_steps < 0 || warmup_steps > max_steps) {
      fail(ErrorKind::argument, "train config: warmup_steps must lie in [0, max_steps]");
    }
    if (grad_accum < 1) fail(ErrorKind::argument, "train config: grad_accum must be >= 1");
    if (checkpoint_every < 1) fail(ErrorKind::argument, "train config: checkpoint_every must be >= 1");
    if (!(peak_lr > 0.0)) fail(ErrorKind::argument, "train config: learning rate must be positive");
    if (mode == DistillMode::swarm && num_prompts < 2) {
      fail(ErrorKind::argument, "swarm mode needs at least 2 prompts, got " + std::to_string(num_prompts));
    }
    if (num_prompts < 1) fail(ErrorKind::argument, "train config: empty prompt pool");
  }
};

/// Linear warm-up to the peak, then polynomial decay to zero at max_steps.
inline double warmup_decay_lr(std::int64_t step, double peak, std::int64_t warmup,
                              std::int64_t max_steps, double power) {
  if (step < 0 || step > max_steps) {
    fail(ErrorKind::argument, "lr schedule: step " + std::to_string(step) + " outside schedule");
  }
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  const std::int64_t decay_span = max_steps - warmup;
  if (decay_span == 0) return peak;
  const double remaining = 1.0 - static_cast<double>(step - warmup) / static_cast<double>(decay_span);
  return peak * std::pow(remaining, power);
}

inline double lr_at(std::int64_t step, const TrainConfig& config) {
  return warmup_decay_lr(step, config.peak_lr, config.warmup_steps, config.max_steps, config.decay_power);
}

struct PseudoTarget {
  LabelDistribution distribution;
  std::size_t source_prompt = 0;
};

/// Detached teacher distribution: computed without gradients or dropout.
inline PseudoTarget pseudo_target(const ScorerModel& model, const PromptPool& pool,
                                  std::size_t prompt, const Example& example) {
  return {label_distribution(model, pool.templates.at(prompt), example), prompt};
}

/// -sum_y teacher(y) * log p(verbalizer_y | input) under the student prompt.
inline Var pair_loss(Tape& t, const ScorerModel& model, const PseudoTarget& teacher,
                     const PromptTemplate& student, const Example& example,
                     bool normalized_student = false) {
  auto scores = label_log_scores(t, model, student, example);
  Var row = scores.size() == 1 ? scores.front() : concat_cols(scores);
  if (normalized_student) row = row_log_softmax(row);
  return soft_cross_entropy(teacher.distribution.probs, row);
}

inline double pair_loss(const ScorerModel& model, const PromptPool& pool, std::size_t teacher,
                        std::size_t student, const Example& example, bool normalized_student = false) {
  Tape t;
  t.set_grad_enabled(false);
  const auto target = pseudo_target(model, pool, teacher, example);
  return pair_loss(t, model, target, pool.templates.at(student), example, normalized_student).scalar();
}

/// (teacher, student) pairs for one example.
using Pairing = std::vector<std::pair<std::size_t, std::size_t>>;

inline Pairing draw_pairing(std::size_t num_prompts, const TrainConfig& config, std::mt19937_64& rng) {
  Pairing pairs;
  if (config.mode == DistillMode::self) {
    for (std::size_t j = 0; j < num_prompts; ++j) pairs.emplace_back(j, j);
    return pairs;
  }
  if (config.pair_policy == PairPolicy::shuffle) {
    std::vector<std::size_t> sigma(num_prompts);
    std::iota(sigma.begin(), sigma.end(), std::size_t{0});
    std::shuffle(sigma.begin(), sigma.end(), rng);
    for (std::size_t j = 0; j < num_prompts; ++j) pairs.emplace_back(sigma[j], j);
    return pairs;
  }
  const std::size_t k = config.k_pairs == 0 ? num_prompts : config.k_pairs;
  std::uniform_int_distribution<std::size_t> pick_prompt(0, num_prompts - 1);
  for (std::size_t n = 0; n < k; ++n) {
    const std::size_t i = pick_prompt(rng);
    const std::size_t j = pick_prompt(rng);
    pairs.emplace_back(i, j);
  }
  return pairs;
}

struct StepResult {
  double loss = 0.0;  // mean pair loss over the pairing
  Pairing pairing;
};

/// Teacher distributions for all prompts, one pairing, and the gradient of the
/// mean pair loss (times `grad_scale`) accumulated into the trainable parameters.
inline StepResult example_step(Tape& tape, ScorerModel& model, const PromptPool& pool,
                               const Example& example, std::mt19937_64& rng,
                               const TrainConfig& config, double grad_scale = 1.0) {
  const std::size_t k = pool.templates.size();
  std::vector<PseudoTarget> teachers;
  teachers.reserve(k);
  for (std::size_t i = 0; i < k; ++i) teachers.push_back(pseudo_target(model, pool, i, example));

  StepResult result;
  result.pairing = draw_pairing(k, config, rng);
  std::vector<Var> losses;
  for (const auto& [teacher, student] : result.pairing) {
    losses.push_back(pair_loss(tape, model, teachers[teacher], pool.templates[student], example,
                               config.normalized_student));
  }
  Var total = losses.size() == 1 ? losses.front() : sum(concat_cols(losses));
  const double inv = 1.0 / static_cast<double>(losses.size());
  result.loss = total.scalar() * inv;
  if (total.requires_grad()) {
    tape.backward(scale(total, inv * grad_scale));
  } else {
    tape.clear();
  }
  return result;
}

struct CheckpointRecord {
  std::int64_t step = 0;
  double kappa = 0.0;
  bool kappa_collapsed = false;
  double majority_fraction = 0.0;
  std::vector<Matrix> weights;  // trainable parameters, in trainable_parameters() order
};

struct AdaptationRun {
  TrainConfig config;
  std::vector<CheckpointRecord> checkpoints;
  KappaTrajectory trajectory;
  std::vector<std::pair<std::int64_t, double>> loss_curve;
  std::int64_t selected_step = 0;
  double wall_seconds = 0.0;
  ScorerModel model;  // restored to the selected checkpoint, adapters still attached

  const CheckpointRecord& selected() const {
    for (const auto& c : checkpoints) {
      if (c.step == selected_step) return c;
    }
    fail(ErrorKind::state, "selected step is not a recorded checkpoint");
  }
  const CheckpointRecord& final_checkpoint() const { return checkpoints.back(); }
};

struct AdaptHooks {
  /// Called after each checkpoint is recorded, with the live model.
  std::function<void(std::int64_t step, const ScorerModel&)> on_checkpoint;
  std::function<void(std::int64_t step, double loss, double lr)> on_step;
};

inline AgreementReport pool_agreement(const ScorerModel& model, const PromptPool& pool,
                                      std::span<const Example> data, double* majority = nullptr) {
  const auto preds = prompt_predictions(score_pool(model, pool, data));
  if (majority != nullptr) *majority = majority_fraction(preds, pool.num_labels());
  return fleiss_kappa(build_matrix(preds, pool.num_labels()));
}

/// Adapts a copy of `base` on the unlabeled `data`. Kappa for checkpoint
/// selection is measured on `data` itself.
inline AdaptationRun adapt(const ScorerModel& base, const PromptPool& pool,
                           std::span<const Example> data, const TrainConfig& config,
                           const AdaptHooks& hooks = {}) {
  const auto started = std::chrono::steady_clock::now();
  require_valid(pool);
  config.validate(pool.templates.size());
  if (data.empty()) fail(ErrorKind::argument, "adapt: no unlabeled examples");

  AdaptationRun run;
  run.config = config;
  run.model = base;
  ScorerModel& model = run.model;
  if (config.full_finetune) {
    detach_all(model);
    model.set_base_trainable(true);
  } else {
    attach(model, config.lora, detail::splitmix64(config.seed ^ 0x10a0ULL));
  }
  auto params = model.trainable_parameters();
  Adam adam(params, config.adam);
  model.zero_grad();

  std::mt19937_64 rng(config.seed);
  const std::uint64_t dropout_seed = detail::splitmix64(config.seed ^ 0xd40bULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  auto next_example = [&]() -> const Example& {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    return data[order[cursor++]];
  };

  const auto probe = config.kappa_examples == 0 ? data : data.first(std::min(config.kappa_examples, data.size()));
  auto record = [&](std::int64_t step) {
    CheckpointRecord rec;
    rec.step = step;
    // A single prompt has no agreement to measure; kappa stays 0 and the
    // selection rule then keeps the final checkpoint.
    if (pool.templates.size() >= 2) {
      const auto agreement = pool_agreement(model, pool, probe, &rec.majority_fraction);
      rec.kappa = agreement.kappa;
      rec.kappa_collapsed = agreement.collapsed;
    } else {
      rec.majority_fraction =
          majority_fraction(prompt_predictions(score_pool(model, pool, probe)), pool.num_labels());
    }
    for (const Parameter* p : params) rec.weights.push_back(p->value);
    run.trajectory.push_back({step, rec.kappa});
    run.checkpoints.push_back(std::move(rec));
    if (hooks.on_checkpoint) hooks.on_checkpoint(step, model);
  };

  record(0);
  Tape tape;
  tape.set_training(true);
  const double grad_scale = 1.0 / static_cast<double>(config.grad_accum);
  for (std::int64_t step = 1; step <= config.max_steps; ++step) {
    tape.set_dropout_stream(dropout_seed, static_cast<std::uint64_t>(step));
    double loss = 0.0;
    for (std::size_t a = 0; a < config.grad_accum; ++a) {
      loss += example_step(tape, model, pool, next_example(), rng, config, grad_scale).loss;
    }
    loss *= grad_scale;
    const double lr = lr_at(step, config);
    if (lr > 0.0) adam.step(lr);
    model.zero_grad();
    run.loss_curve.emplace_back(step, loss);
    if (hooks.on_step) hooks.on_step(step, loss, lr);
    if (step % config.checkpoint_every == 0 || step == config.max_steps) record(step);
  }

  run.selected_step = config.select ? select_checkpoint(run.trajectory) : run.trajectory.back().step;
  const auto& chosen = run.selected();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = chosen.weights[i];
  run.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

}  // namespace swarm
