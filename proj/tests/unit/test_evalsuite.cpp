// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "swarm/evalsuite.hpp"

using namespace swarm;
using namespace swarm::testing;

namespace {

LabelDistribution dist(std::vector<double> probs) {
  LabelDistribution d;
  for (double p : probs) d.raw_log_scores.push_back(std::log(p));
  d.probs = std::move(probs);
  return d;
}

EvalReport report(const std::string& task, double ens, double med, double kappa) {
  EvalReport r;
  r.task = task;
  r.num_prompts = 3;
  r.n = 10;
  r.ensemble_accuracy = ens;
  r.median_accuracy = med;
  r.kappa_on_eval = kappa;
  return r;
}

}  // namespace

TEST(Ensemble, ArgmaxOfMeanNotMajorityVote) {
  // Two weak votes for label 0 lose to one confident vote for label 1.
  const std::vector<LabelDistribution> d{dist({0.55, 0.45}), dist({0.55, 0.45}), dist({0.01, 0.99})};
  EXPECT_EQ(ensemble_from(d), 1);
  const std::vector<LabelDistribution> tie{dist({0.3, 0.7}), dist({0.7, 0.3})};
  EXPECT_EQ(ensemble_from(tie), 0);
  EXPECT_THROW(ensemble_from(std::vector<LabelDistribution>{}), Error);
  const std::vector<LabelDistribution> ragged{dist({0.5, 0.5}), dist({0.2, 0.3, 0.5})};
  EXPECT_THROW(ensemble_from(ragged), Error);
}

TEST(Median, OddAndEvenCounts) {
  EXPECT_DOUBLE_EQ(median({0.3, 0.9, 0.1}), 0.3);
  EXPECT_DOUBLE_EQ(median({0.4, 0.1, 0.9, 0.2}), 0.3);
  EXPECT_DOUBLE_EQ(median({0.7}), 0.7);
  EXPECT_THROW(median({}), Error);
}

TEST(MajorityFraction, CountsAllPredictions) {
  EXPECT_DOUBLE_EQ(majority_fraction({{0, 1, 1}, {1, 1, 1}}, 2), 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(majority_fraction({{2, 2}, {2, 2}}, 3), 1.0);
  EXPECT_TRUE(is_collapsed(0.95));
  EXPECT_FALSE(is_collapsed(0.9499));
}

TEST(Evaluate, MatchesPerExampleBruteForce) {
  const auto model = ScorerModel::init(micro_config(), 61);
  const auto pool = micro_pool(4);
  std::vector<Example> data;
  const std::vector<std::string> texts{"good", "bad film", "a dog", "so dull", "x x", "fine meal"};
  for (std::size_t i = 0; i < texts.size(); ++i) data.push_back(text_example(texts[i], static_cast<int>(i % 2)));

  const auto r = evaluate(model, pool, data);
  std::vector<double> acc(4, 0.0);
  double ens = 0.0;
  std::vector<std::vector<int>> preds;
  for (const auto& ex : data) {
    std::vector<double> mean(2, 0.0);
    std::vector<int> row;
    for (std::size_t p = 0; p < 4; ++p) {
      const auto d = label_distribution(model, pool.templates[p], ex);
      const int y = predict(model, pool.templates[p], ex);
      row.push_back(y);
      if (y == *ex.label) acc[p] += 1.0 / 6.0;
      for (std::size_t j = 0; j < 2; ++j) mean[j] += d.probs[j];
    }
    preds.push_back(row);
    if ((mean[1] > mean[0] ? 1 : 0) == *ex.label) ens += 1.0 / 6.0;
  }
  ASSERT_EQ(r.per_prompt_accuracy.size(), 4u);
  for (std::size_t p = 0; p < 4; ++p) EXPECT_NEAR(r.per_prompt_accuracy[p], acc[p], 1e-12);
  EXPECT_NEAR(r.ensemble_accuracy, ens, 1e-12);
  EXPECT_NEAR(r.median_accuracy, median(acc), 1e-12);
  EXPECT_EQ(r.n, 6u);
  EXPECT_EQ(r.task, "micro");
  EXPECT_DOUBLE_EQ(r.majority_fraction, majority_fraction(preds, 2));
  const auto agreement = fleiss_kappa(build_matrix(preds, 2));
  EXPECT_DOUBLE_EQ(r.kappa_on_eval, agreement.kappa);
  EXPECT_EQ(r.kappa_collapsed, agreement.collapsed);
}

TEST(Evaluate, SinglePromptAndUnlabeledData) {
  const auto model = ScorerModel::init(micro_config(), 62);
  const std::vector<Example> labeled{text_example("good", 0), text_example("bad", 1)};
  const auto r = evaluate(model, micro_pool(1), labeled);
  EXPECT_EQ(r.kappa_on_eval, 0.0);
  EXPECT_DOUBLE_EQ(r.median_accuracy, r.per_prompt_accuracy[0]);
  EXPECT_DOUBLE_EQ(r.ensemble_accuracy, r.per_prompt_accuracy[0]);
  const std::vector<Example> bare{text_example("good", 0), text_example("bad")};
  EXPECT_THROW(evaluate(model, micro_pool(2), bare), Error);
  EXPECT_THROW(evaluate(model, micro_pool(2), std::vector<Example>{}), Error);
}

TEST(Compare, DeltasAgainstFirstReport) {
  const std::vector<EvalReport> reports{report("t", 0.60, 0.55, 0.2), report("t", 0.70, 0.50, 0.4)};
  const auto rows = compare(reports);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].metric, "ensemble_accuracy");
  EXPECT_NEAR(rows[0].delta, 0.10, 1e-12);
  EXPECT_NEAR(rows[1].delta, -0.05, 1e-12);
  EXPECT_NEAR(rows[2].delta, 0.20, 1e-12);
  EXPECT_EQ(rows[2].candidate, 1u);

  const std::vector<EvalReport> mismatched{report("t", 0.6, 0.5, 0.1), report("u", 0.6, 0.5, 0.1)};
  EXPECT_THROW(compare(mismatched), Error);
  auto other_n = report("t", 0.6, 0.5, 0.1);
  other_n.n = 11;
  const std::vector<EvalReport> sizes{report("t", 0.6, 0.5, 0.1), other_n};
  EXPECT_THROW(compare(sizes), Error);
}

TEST(Summarize, MeanAndSampleStandardDeviation) {
  const std::vector<EvalReport> runs{report("t", 0.6, 0.5, 0.1), report("t", 0.7, 0.5, 0.3),
                                     report("t", 0.8, 0.5, 0.2)};
  const auto s = summarize(runs);
  EXPECT_NEAR(s[0].mean, 0.7, 1e-12);
  EXPECT_NEAR(s[0].stddev, 0.1, 1e-12);
  EXPECT_NEAR(s[1].stddev, 0.0, 1e-12);
  EXPECT_EQ(s[2].runs, 3u);
  const std::vector<EvalReport> one{report("t", 0.6, 0.5, 0.1)};
  EXPECT_EQ(summarize(one)[0].stddev, 0.0);
}
