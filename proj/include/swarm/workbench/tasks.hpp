// SPDX-License-Identifier: Apache-2.0
//
// Synthetic prompted classification tasks.
//
// Every task draws its texts from the same kind of material: filler words of a
// domain, polarity words, animal words and stand-alone "x" symbols. Each
// generator labels the same text differently, so a model has to read the
// instruction to know which rule applies.
#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "swarm/error.hpp"
#include "swarm/template_engine.hpp"

namespace swarm::workbench {

enum class GeneratorKind { keyword_sentiment, parity_over_symbols, pattern_membership };

inline std::string to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::keyword_sentiment: return "keyword-sentiment";
    case GeneratorKind::parity_over_symbols: return "parity-over-symbols";
    case GeneratorKind::pattern_membership: return "pattern-membership";
  }
  return "unknown";
}

inline GeneratorKind generator_from_string(const std::string& s) {
  if (s == "keyword-sentiment") return GeneratorKind::keyword_sentiment;
  if (s == "parity-over-symbols") return GeneratorKind::parity_over_symbols;
  if (s == "pattern-membership") return GeneratorKind::pattern_membership;
  fail(ErrorKind::argument, "unknown generator kind \"" + s + "\"");
}

struct Lexicon {
  std::vector<std::string> positive{"good", "great", "nice", "fun", "happy", "fine"};
  std::vector<std::string> negative{"bad", "awful", "poor", "sad", "dull", "ugly"};
  std::vector<std::string> animals{"cat", "dog", "cow", "owl", "pig"};
  std::string symbol = "x";
};

/// Perturbation applied to generated text for distribution-shifted pools.
struct ShiftDescriptor {
  bool uppercase_first = false;  // capitalise the first word
  std::string terminator;        // appended punctuation, e.g. "!"
  double extra_filler_rate = 0.0;

  bool any() const { return uppercase_first || !terminator.empty() || extra_filler_rate > 0.0; }
};

struct TaskSpec {
  std::string name;
  GeneratorKind kind = GeneratorKind::keyword_sentiment;
  std::vector<std::string> filler;  // domain vocabulary
  std::size_t num_labels = 2;
  std::string field = "text";
  std::size_t train_size = 2000;
  std::size_t eval_size = 500;
  double label_noise = 0.0;
  ShiftDescriptor shift;
  std::uint64_t seed = 0;
};

struct TaskData {
  TaskSpec spec;
  PromptPool pool;
  std::vector<Example> train;
  std::vector<Example> eval;
};

namespace detail {

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return d(rng);
}

struct Draft {
  std::vector<std::string> words;
  int positive = 0;
  int negative = 0;
  int animals = 0;
  int symbols = 0;
};

/// One text with a random mix of every kind of feature.
inline Draft draft_text(const TaskSpec& spec, const Lexicon& lex, std::mt19937_64& rng) {
  Draft d;
  const int fillers = uniform_int(rng, 1, 2);
  for (int i = 0; i < fillers; ++i) d.words.push_back(pick(spec.filler, rng));
  if (uniform_int(rng, 0, 1) == 0) {
    d.words.push_back(pick(lex.positive, rng));
    ++d.positive;
  } else {
    d.words.push_back(pick(lex.negative, rng));
    ++d.negative;
  }
  d.animals = uniform_int(rng, 0, 1);
  for (int i = 0; i < d.animals; ++i) d.words.push_back(pick(lex.animals, rng));
  d.symbols = uniform_int(rng, 1, 2);
  for (int i = 0; i < d.symbols; ++i) d.words.push_back(lex.symbol);
  if (spec.shift.extra_filler_rate > 0.0) {
    std::bernoulli_distribution extra(spec.shift.extra_filler_rate);
    if (extra(rng)) d.words.push_back(pick(spec.filler, rng));
  }
  std::shuffle(d.words.begin(), d.words.end(), rng);
  return d;
}

inline int gold_label(GeneratorKind kind, const Draft& d) {
  switch (kind) {
    case GeneratorKind::keyword_sentiment: return d.positive > d.negative ? 0 : 1;
    case GeneratorKind::pattern_membership: return d.animals > 0 ? 0 : 1;
    case GeneratorKind::parity_over_symbols: return d.symbols % 2 == 1 ? 0 : 1;
  }
  return 0;
}

inline std::string render_text(const Draft& d, const ShiftDescriptor& shift) {
  std::string text;
  for (std::size_t i = 0; i < d.words.size(); ++i) {
    std::string w = d.words[i];
    if (i == 0 && shift.uppercase_first && !w.empty()) {
      w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    }
    if (i > 0) text.push_back(' ');
    text += w;
  }
  return text + shift.terminator;
}

}  // namespace detail

/// Label-balanced examples. Label noise flips the gold label (J = 2) or moves
/// it to a uniformly drawn other label.
inline std::vector<Example> generate_examples(const TaskSpec& spec, const Lexicon& lex,
                                              std::size_t count, std::mt19937_64& rng,
                                              std::set<std::string>* seen = nullptr) {
  if (spec.filler.empty()) fail(ErrorKind::argument, "task " + spec.name + ": empty filler vocabulary");
  if (spec.num_labels != 2) fail(ErrorKind::argument, "task " + spec.name + ": generators are binary");
  std::vector<Example> out;
  out.reserve(count);
  std::bernoulli_distribution noise(spec.label_noise);
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > count * 1000 + 10000) {
      fail(ErrorKind::argument, "task " + spec.name + ": cannot generate enough distinct examples");
    }
    const int wanted = static_cast<int>(out.size() % spec.num_labels);
    const auto draft = detail::draft_text(spec, lex, rng);
    int label = detail::gold_label(spec.kind, draft);
    if (label != wanted) continue;
    auto text = detail::render_text(draft, spec.shift);
    if (seen != nullptr && !seen->insert(text).second) continue;
    if (spec.label_noise > 0.0 && noise(rng)) {
      label = (label + detail::uniform_int(rng, 1, static_cast<int>(spec.num_labels) - 1)) %
              static_cast<int>(spec.num_labels);
    }
    Example ex;
    ex.fields[spec.field] = std::move(text);
    ex.label = label;
    out.push_back(std::move(ex));
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

/// Disjoint train and eval splits.
inline void generate_splits(TaskData& task, const Lexicon& lex) {
  std::mt19937_64 rng(task.spec.seed);
  std::set<std::string> seen;
  task.train = generate_examples(task.spec, lex, task.spec.train_size, rng, &seen);
  task.eval = generate_examples(task.spec, lex, task.spec.eval_size, rng, &seen);
}

}  // namespace swarm::workbench
