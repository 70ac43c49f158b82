// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "swarm/scorer.hpp"
#include "swarm/template_engine.hpp"

namespace swarm::testing {

inline ModelConfig micro_config() {
  ModelConfig c;
  c.layers = 2;
  c.d_model = 8;
  c.d_ff = 12;
  c.heads = 2;
  c.max_len = 48;
  return c;
}

inline PromptPool micro_pool(std::size_t prompts = 3) {
  const std::vector<std::pair<std::string, std::vector<std::string>>> all{
      {"{text} | ok?", {"Yes", "No"}},
      {"Is it fine: {text}", {"True", "False"}},
      {"Rate {text}", {"Good", "Bad"}},
      {"{text} ->", {"Y", "N"}},
      {"Check {text} now", {"Up", "Down"}},
  };
  PromptPool pool;
  pool.task_name = "micro";
  pool.label_set.labels = {"pos", "neg"};
  for (std::size_t i = 0; i < prompts; ++i) {
    pool.templates.emplace_back("micro/p" + std::to_string(i), all[i].first, all[i].second);
  }
  return pool;
}

inline Example text_example(const std::string& text, std::optional<int> label = std::nullopt) {
  Example ex;
  ex.fields["text"] = text;
  ex.label = label;
  return ex;
}

/// Central difference of f with respect to one entry.
inline double central_difference(double& entry, const std::function<double()>& f, double h = 1e-5) {
  const double saved = entry;
  entry = saved + h;
  const double up = f();
  entry = saved - h;
  const double down = f();
  entry = saved;
  return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  const double denom = std::max(std::abs(a) + std::abs(b), 1e-8);
  return std::abs(a - b) / denom;
}

}  // namespace swarm::testing
