// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "swarm/agreement.hpp"
#include "swarm/scorer.hpp"
#include "swarm/template_engine.hpp"

namespace swarm {

/// Label distributions of every prompt on every example: [example][prompt].
using PoolScores = std::vector<std::vector<LabelDistribution>>;

inline PoolScores score_pool(const ScorerModel& model, const PromptPool& pool,
                             std::span<const Example> examples) {
  PoolScores scores(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    scores[i].reserve(pool.templates.size());
    for (const auto& tmpl : pool.templates) {
      scores[i].push_back(label_distribution(model, tmpl, examples[i]));
    }
  }
  return scores;
}

/// Argmax of the mean of the per-prompt distributions; ties to the lowest label.
inline int ensemble_from(std::span<const LabelDistribution> dists) {
  if (dists.empty()) fail(ErrorKind::argument, "ensemble: no prompts");
  std::vector<double> mean(dists.front().probs.size(), 0.0);
  for (const auto& d : dists) {
    if (d.probs.size() != mean.size()) fail(ErrorKind::shape, "ensemble: label count mismatch");
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += d.probs[j];
  }
  for (double& v : mean) v /= static_cast<double>(dists.size());
  return argmax(mean);
}

inline int ensemble_predict(const ScorerModel& model, const PromptPool& pool, const Example& example) {
  std::vector<LabelDistribution> dists;
  for (const auto& tmpl : pool.templates) dists.push_back(label_distribution(model, tmpl, example));
  return ensemble_from(dists);
}

/// prediction[i][k] = argmax label of prompt k on example i.
inline std::vector<std::vector<int>> prompt_predictions(const PoolScores& scores) {
  std::vector<std::vector<int>> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (const auto& d : scores[i]) out[i].push_back(argmax(d.probs));
  }
  return out;
}

/// Largest share of all N x K predictions held by a single label.
inline double majority_fraction(const std::vector<std::vector<int>>& predictions,
                                std::size_t num_labels) {
  std::vector<std::size_t> counts(num_labels, 0);
  std::size_t total = 0;
  for (const auto& row : predictions) {
    for (int p : row) {
      ++counts[static_cast<std::size_t>(p)];
      ++total;
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(total);
}

inline constexpr double kCollapseFraction = 0.95;

inline bool is_collapsed(double majority) { return majority >= kCollapseFraction; }

/// Median with the even-count convention of averaging the two middle values.
inline double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorKind::argument, "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct EvalReport {
  std::string task;
  std::size_t num_prompts = 0;
  std::size_t n = 0;
  std::vector<double> per_prompt_accuracy;
  double ensemble_accuracy = 0.0;
  double median_accuracy = 0.0;
  double kappa_on_eval = 0.0;
  bool kappa_collapsed = false;
  double majority_fraction = 0.0;
};

inline EvalReport evaluate_scores(const PromptPool& pool, std::span<const Example> dataset,
                                  const PoolScores& scores) {
  EvalReport report;
  report.task = pool.task_name;
  report.num_prompts = pool.templates.size();
  report.n = dataset.size();
  if (dataset.empty()) fail(ErrorKind::argument, "evaluate: empty dataset");
  const std::size_t k = pool.templates.size();
  std::vector<std::size_t> correct(k, 0);
  std::size_t ens_correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!dataset[i].label) fail(ErrorKind::argument, "evaluate: example " + std::to_string(i) + " is unlabeled");
    const int gold = *dataset[i].label;
    for (std::size_t p = 0; p < k; ++p) {
      if (argmax(scores[i][p].probs) == gold) ++correct[p];
    }
    if (ensemble_from(scores[i]) == gold) ++ens_correct;
  }
  const double n = static_cast<double>(dataset.size());
  for (std::size_t p = 0; p < k; ++p) report.per_prompt_accuracy.push_back(static_cast<double>(correct[p]) / n);
  report.ensemble_accuracy = static_cast<double>(ens_correct) / n;
  report.median_accuracy = median(report.per_prompt_accuracy);
  const auto preds = prompt_predictions(scores);
  report.majority_fraction = majority_fraction(preds, pool.num_labels());
  if (k >= 2) {
    const auto agreement = fleiss_kappa(build_matrix(preds, pool.num_labels()));
    report.kappa_on_eval = agreement.kappa;
    report.kappa_collapsed = agreement.collapsed;
  }
  return report;
}

inline EvalReport evaluate(const ScorerModel& model, const PromptPool& pool,
                           std::span<const Example> dataset) {
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!dataset[i].label) fail(ErrorKind::argument, "evaluate: example " + std::to_string(i) + " is unlabeled");
  }
  return evaluate_scores(pool, dataset, score_pool(model, pool, dataset));
}

// ---------------------------------------------------------------------------
// Comparison across reports
// ---------------------------------------------------------------------------

inline std::vector<std::pair<std::string, double>> report_metrics(const EvalReport& r) {
  return {{"ensemble_accuracy", r.ensemble_accuracy},
          {"median_accuracy", r.median_accuracy},
          {"kappa", r.kappa_on_eval}};
}

struct ComparisonRow {
  std::string metric;
  std::size_t candidate = 0;  // index into the compared reports
  double baseline = 0.0;
  double candidate_value = 0.0;
  double delta = 0.0;
};

/// Absolute deltas of every later report against the first one.
inline std::vector<ComparisonRow> compare(std::span<const EvalReport> reports) {
  if (reports.empty()) fail(ErrorKind::argument, "compare: no reports");
  const auto& base = reports.front();
  std::vector<ComparisonRow> rows;
  for (std::size_t c = 1; c < reports.size(); ++c) {
    const auto& r = reports[c];
    if (r.task != base.task || r.num_prompts != base.num_prompts || r.n != base.n) {
      fail(ErrorKind::argument, "compare: report " + std::to_string(c) +
                                    " was computed on a different task, pool or dataset");
    }
    const auto bm = report_metrics(base);
    const auto cm = report_metrics(r);
    for (std::size_t m = 0; m < bm.size(); ++m) {
      rows.push_back({bm[m].first, c, bm[m].second, cm[m].second, cm[m].second - bm[m].second});
    }
  }
  return rows;
}

struct MetricSummary {
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single run
  std::size_t runs = 0;
};

inline std::vector<MetricSummary> summarize(std::span<const EvalReport> reports) {
  if (reports.empty()) fail(ErrorKind::argument, "summarize: no reports");
  std::vector<MetricSummary> out;
  const auto names = report_metrics(reports.front());
  for (std::size_t m = 0; m < names.size(); ++m) {
    MetricSummary s;
    s.metric = names[m].first;
    s.runs = reports.size();
    for (const auto& r : reports) s.mean += report_metrics(r)[m].second;
    s.mean /= static_cast<double>(reports.size());
    if (reports.size() > 1) {
      double ss = 0.0;
      for (const auto& r : reports) {
        const double d = report_metrics(r)[m].second - s.mean;
        ss += d * d;
      }
      s.stddev = std::sqrt(ss / static_cast<double>(reports.size() - 1));
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace swarm
