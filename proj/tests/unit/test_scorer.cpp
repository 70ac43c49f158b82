// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "swarm/scorer.hpp"

using namespace swarm;
using namespace swarm::testing;

TEST(Tokenizer, RoundTripAndUnknown) {
  Tokenizer tok;
  const std::string s = "Hello, {x} | 42 ~";
  EXPECT_EQ(tok.decode(tok.encode(s)), s);
  const auto ids = tok.encode("a\tb");
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(ids[1], Tokenizer::kUnk);
  EXPECT_EQ(tok.symbol(Tokenizer::kBos), "<bos>");
  EXPECT_EQ(Tokenizer::vocab_size(), 99u);
}

TEST(ModelConfig, Validation) {
  ModelConfig c = micro_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), Error);
  c = micro_config();
  c.d_ff = 4;
  EXPECT_THROW(c.validate(), Error);
  c = micro_config();
  c.layers = 0;
  EXPECT_THROW(ScorerModel::init(c, 1), Error);
}

TEST(ScorerModel, InitIsSeedDeterministic) {
  const auto a = ScorerModel::init(micro_config(), 5);
  const auto b = ScorerModel::init(micro_config(), 5);
  const auto c = ScorerModel::init(micro_config(), 6);
  EXPECT_EQ(a.token_embedding().value, b.token_embedding().value);
  EXPECT_FALSE(a.token_embedding().value == c.token_embedding().value);
  EXPECT_EQ(sequence_log_prob(a, "input", "Yes"), sequence_log_prob(b, "input", "Yes"));
}

TEST(Score, UniformOutputLayerGivesLengthTimesLogInverseVocab) {
  auto model = ScorerModel::init(micro_config(), 3);
  for (double& v : model.output_weight().value.data()) v = 0.0;
  for (double& v : model.output_bias().value.data()) v = 0.0;
  const double per_token = std::log(1.0 / static_cast<double>(Tokenizer::vocab_size()));
  for (const std::string target : {"Y", "No", "Positive"}) {
    EXPECT_NEAR(sequence_log_prob(model, "any input at all", target),
                static_cast<double>(target.size()) * per_token, 1e-12)
        << target;
  }
}

TEST(Score, LogProbIsNegativeAndRowsNormalize) {
  const auto model = ScorerModel::init(micro_config(), 4);
  Tape t;
  t.set_grad_enabled(false);
  const auto enc = encode(t, model, model.tokenizer().encode("some input"));
  const auto target = model.tokenizer().encode("Good");
  const Var lp = decoder_log_probs(t, model, enc, target);
  ASSERT_EQ(lp.rows(), target.size());
  ASSERT_EQ(lp.cols(), Tokenizer::vocab_size());
  for (std::size_t r = 0; r < lp.rows(); ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < lp.cols(); ++c) z += std::exp(lp.value()(r, c));
    EXPECT_NEAR(z, 1.0, 1e-12);
  }
  EXPECT_LT(target_log_prob(t, model, enc, target).scalar(), 0.0);
}

TEST(Score, DecoderIsCausalInTheTarget) {
  const auto model = ScorerModel::init(micro_config(), 7);
  Tape t;
  t.set_grad_enabled(false);
  const auto& tok = model.tokenizer();
  const auto enc = encode(t, model, tok.encode("an input"));
  const Var a = decoder_log_probs(t, model, enc, tok.encode("abcd"));
  const Var b = decoder_log_probs(t, model, enc, tok.encode("abzq"));
  // Row i conditions on target[0..i), so rows 0..2 only see "ab".
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) EXPECT_DOUBLE_EQ(a.value()(r, c), b.value()(r, c));
  }
  bool differs = false;
  for (std::size_t c = 0; c < a.cols(); ++c) differs = differs || a.value()(3, c) != b.value()(3, c);
  EXPECT_TRUE(differs);
}

TEST(Score, EveryInputPositionMatters) {
  const auto model = ScorerModel::init(micro_config(), 8);
  const double base = sequence_log_prob(model, "abcdef", "Yes");
  EXPECT_NE(base, sequence_log_prob(model, "Xbcdef", "Yes"));
  EXPECT_NE(base, sequence_log_prob(model, "abcdeX", "Yes"));
}

TEST(Score, LengthLimits) {
  const auto model = ScorerModel::init(micro_config(), 9);
  EXPECT_THROW(sequence_log_prob(model, "", "Yes"), Error);
  EXPECT_THROW(sequence_log_prob(model, "x", ""), Error);
  EXPECT_THROW(sequence_log_prob(model, std::string(49, 'a'), "Yes"), Error);
  EXPECT_THROW(sequence_log_prob(model, "x", std::string(49, 'a')), Error);
  EXPECT_NO_THROW(sequence_log_prob(model, std::string(48, 'a'), std::string(48, 'b')));
}

TEST(LabelDistribution, MatchesBruteForceSoftmax) {
  const auto model = ScorerModel::init(micro_config(), 10);
  const auto pool = micro_pool(5);
  const auto ex = text_example("the meal was fine");
  for (const auto& tmpl : pool.templates) {
    const auto dist = label_distribution(model, tmpl, ex);
    const auto input = render_input(tmpl, ex);
    std::vector<double> raw;
    for (const auto& target : render_targets(tmpl, ex)) raw.push_back(sequence_log_prob(model, input, target));
    double z = 0.0;
    for (double r : raw) z += std::exp(r);
    ASSERT_EQ(dist.probs.size(), raw.size());
    double total = 0.0;
    for (std::size_t j = 0; j < raw.size(); ++j) {
      EXPECT_NEAR(dist.raw_log_scores[j], raw[j], 1e-12);
      EXPECT_NEAR(dist.probs[j], std::exp(raw[j]) / z, 1e-12);
      total += dist.probs[j];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(LabelDistribution, PermutingChoicesPermutesProbabilities) {
  const auto model = ScorerModel::init(micro_config(), 11);
  const auto ex = text_example("a dog was here");
  const PromptTemplate fwd("f", "{text} ?", {"Yes", "No"});
  const PromptTemplate rev("r", "{text} ?", {"No", "Yes"});
  const auto a = label_distribution(model, fwd, ex);
  const auto b = label_distribution(model, rev, ex);
  EXPECT_NEAR(a.probs[0], b.probs[1], 1e-12);
  EXPECT_EQ(predict(model, fwd, ex), 1 - predict(model, rev, ex));
}

TEST(LabelDistribution, NormalizeIsStableForLargeMagnitudes) {
  const std::vector<double> raw{-1000.0, -1001.0};
  const auto p = normalize_log_scores(raw);
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5}), 0);
}

TEST(Gradients, WholeModelMatchesCentralDifferences) {
  auto model = ScorerModel::init(micro_config(), 12);
  const PromptTemplate tmpl("g", "Rate {text}", {"Good", "Bad"});
  const auto ex = text_example("so dull");
  auto objective = [&](Tape& t) {
    auto scores = label_log_scores(t, model, tmpl, ex);
    return add(scale(scores[0], 0.7), scale(scores[1], -0.3));
  };
  model.zero_grad();
  {
    Tape t;
    t.backward(objective(t));
  }
  auto f = [&] {
    Tape t;
    t.set_grad_enabled(false);
    return objective(t).scalar();
  };
  std::mt19937_64 rng(1);
  double worst = 0.0;
  std::size_t checked = 0;
  model.for_each_parameter([&](Parameter& p) {
    std::uniform_int_distribution<std::size_t> pick(0, p.value.size() - 1);
    for (int s = 0; s < 3; ++s) {
      const std::size_t i = pick(rng);
      const double fd = central_difference(p.value[i], f);
      if (std::abs(fd) + std::abs(p.grad[i]) < 1e-9) continue;
      worst = std::max(worst, relative_error(fd, p.grad[i]));
      ++checked;
    }
  });
  EXPECT_GT(checked, 50u);
  EXPECT_LT(worst, 1e-5);
}
