// SPDX-License-Identifier: Apache-2.0
//
// Micro encoder-decoder transformer that scores a target string given an input
// string, and the label distribution obtained by normalising those scores over
// the verbalizers of a prompt.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "swarm/adapter.hpp"
#include "swarm/autodiff.hpp"
#include "swarm/template_engine.hpp"

namespace swarm {

/// Character-level vocabulary: four specials followed by printable ASCII.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kFirstChar = 4;
  static constexpr int kCharLo = 32;
  static constexpr int kCharHi = 126;

  static constexpr std::size_t vocab_size() { return kFirstChar + (kCharHi - kCharLo + 1); }

  std::vector<int> encode(std::string_view text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) {
      if (c >= kCharLo && c <= kCharHi) {
        ids.push_back(kFirstChar + (c - kCharLo));
      } else {
        ids.push_back(kUnk);
      }
    }
    return ids;
  }

  std::string decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
      if (id >= kFirstChar && id < static_cast<int>(vocab_size())) {
        out.push_back(static_cast<char>(kCharLo + id - kFirstChar));
      } else if (id == kUnk) {
        out.push_back('?');
      }
    }
    return out;
  }

  std::string symbol(int id) const {
    switch (id) {
      case kPad: return "<pad>";
      case kBos: return "<bos>";
      case kEos: return "<eos>";
      case kUnk: return "<unk>";
      default: return decode(std::span<const int>(&id, 1));
    }
  }
};

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t d_model = 32;
  std::size_t d_ff = 64;
  std::size_t heads = 2;
  std::size_t max_len = 128;
  std::size_t vocab = Tokenizer::vocab_size();

  void validate() const {
    if (layers == 0 || d_model == 0 || d_ff == 0 || heads == 0 || max_len == 0 || vocab == 0) {
      fail(ErrorKind::argument, "model config: all dimensions must be positive");
    }
    if (d_model % heads != 0) fail(ErrorKind::argument, "model config: d_model must divide by heads");
    if (d_ff < d_model) fail(ErrorKind::argument, "model config: d_ff must be >= d_model");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerNormWeights {
  Parameter gain;
  Parameter bias;
};

struct AttentionWeights {
  Parameter wq, wk, wv, wo;
};

/// relu(x W1 + b1) W2 + b2 with W1: d x m and W2: m x d. Both matrices can
/// carry a low-rank adapter.
struct FeedForward {
  Parameter w1, b1, w2, b2;
  std::optional<LoraAdapter> adapter1;
  std::optional<LoraAdapter> adapter2;
};

struct EncoderLayer {
  LayerNormWeights ln_attn;
  AttentionWeights attn;
  LayerNormWeights ln_ff;
  FeedForward ff;
};

struct DecoderLayer {
  LayerNormWeights ln_self;
  AttentionWeights self_attn;
  LayerNormWeights ln_cross;
  AttentionWeights cross_attn;
  LayerNormWeights ln_ff;
  FeedForward ff;
};

class ScorerModel {
 public:
  ScorerModel() = default;

  static ScorerModel init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ScorerModel m;
    m.config_ = config;
    std::mt19937_64 rng(seed);
    const std::size_t d = config.d_model, f = config.d_ff, L = config.max_len, V = config.vocab;
    const double residual_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.layers));

    auto normal = [&](const std::string& name, std::size_t rows, std::size_t cols, double stddev) {
      std::normal_distribution<double> dist(0.0, stddev);
      Matrix w(rows, cols);
      for (double& v : w.data()) v = dist(rng);
      return Parameter(name, std::move(w));
    };
    auto zeros = [](const std::string& name, std::size_t rows, std::size_t cols) {
      return Parameter(name, Matrix(rows, cols));
    };
    auto ones = [](const std::string& name, std::size_t cols) {
      return Parameter(name, Matrix(1, cols, 1.0));
    };
    auto layer_norm = [&](const std::string& name) {
      return LayerNormWeights{ones(name + ".g", d), zeros(name + ".b", 1, d)};
    };
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
    auto attention = [&](const std::string& name) {
      return AttentionWeights{normal(name + ".wq", d, d, proj_std), normal(name + ".wk", d, d, proj_std),
                              normal(name + ".wv", d, d, proj_std),
                              normal(name + ".wo", d, d, proj_std * residual_scale)};
    };
    auto feed_forward = [&](const std::string& name) {
      FeedForward ff;
      ff.w1 = normal(name + ".w1", d, f, proj_std);
      ff.b1 = zeros(name + ".b1", 1, f);
      ff.w2 = normal(name + ".w2", f, d, residual_scale / std::sqrt(static_cast<double>(f)));
      ff.b2 = zeros(name + ".b2", 1, d);
      return ff;
    };

    m.token_emb_ = normal("tok_emb", V, d, 0.3);
    m.enc_pos_ = normal("enc_pos", L, d, 0.1);
    m.dec_pos_ = normal("dec_pos", L, d, 0.1);
    for (std::size_t i = 0; i < config.layers; ++i) {
      const std::string p = "enc." + std::to_string(i);
      m.encoder_.push_back(EncoderLayer{layer_norm(p + ".ln_attn"), attention(p + ".attn"),
                                        layer_norm(p + ".ln_ff"), feed_forward(p + ".ff")});
    }
    m.enc_final_ = layer_norm("enc.final");
    for (std::size_t i = 0; i < config.layers; ++i) {
      const std::string p = "dec." + std::to_string(i);
      m.decoder_.push_back(DecoderLayer{layer_norm(p + ".ln_self"), attention(p + ".self_attn"),
                                        layer_norm(p + ".ln_cross"), attention(p + ".cross_attn"),
                                        layer_norm(p + ".ln_ff"), feed_forward(p + ".ff")});
    }
    m.dec_final_ = layer_norm("dec.final");
    m.out_w_ = normal("out.w", d, V, proj_std);
    m.out_b_ = zeros("out.b", 1, V);
    return m;
  }

  const ModelConfig& config() const { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }

  const Parameter& token_embedding() const { return token_emb_; }
  const Parameter& encoder_positions() const { return enc_pos_; }
  const Parameter& decoder_positions() const { return dec_pos_; }
  const std::vector<EncoderLayer>& encoder() const { return encoder_; }
  const std::vector<DecoderLayer>& decoder() const { return decoder_; }
  const LayerNormWeights& encoder_final() const { return enc_final_; }
  const LayerNormWeights& decoder_final() const { return dec_final_; }
  const Parameter& output_weight() const { return out_w_; }
  const Parameter& output_bias() const { return out_b_; }
  Parameter& output_weight() { return out_w_; }
  Parameter& output_bias() { return out_b_; }

  /// Visits base parameters (never adapter weights) in a stable order.
  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    visit_base(*this, fn);
  }
  template <typename Fn>
  void for_each_parameter(Fn&& fn) const {
    visit_base(*this, fn);
  }

  /// Visits every feed-forward block: encoder layers first, then decoder.
  template <typename Fn>
  void for_each_feed_forward(Fn&& fn) {
    for (auto& layer : encoder_) fn(layer.ff);
    for (auto& layer : decoder_) fn(layer.ff);
  }
  template <typename Fn>
  void for_each_feed_forward(Fn&& fn) const {
    for (const auto& layer : encoder_) fn(layer.ff);
    for (const auto& layer : decoder_) fn(layer.ff);
  }

  bool has_adapters() const {
    bool any = false;
    for_each_feed_forward([&](const FeedForward& ff) { any = any || ff.adapter1 || ff.adapter2; });
    return any;
  }

  /// Every trainable parameter, adapters included.
  std::vector<Parameter*> trainable_parameters() {
    std::vector<Parameter*> out;
    for_each_parameter([&](Parameter& p) {
      if (p.trainable) out.push_back(&p);
    });
    for_each_feed_forward([&](FeedForward& ff) {
      for (auto* ad : {&ff.adapter1, &ff.adapter2}) {
        if (*ad) {
          if ((*ad)->lora_b.trainable) out.push_back(&(*ad)->lora_b);
          if ((*ad)->lora_a.trainable) out.push_back(&(*ad)->lora_a);
        }
      }
    });
    return out;
  }

  void set_base_trainable(bool trainable) {
    for_each_parameter([&](Parameter& p) { p.trainable = trainable; });
  }

  void zero_grad() {
    for_each_parameter([](Parameter& p) { p.zero_grad(); });
    for_each_feed_forward([](FeedForward& ff) {
      if (ff.adapter1) {
        ff.adapter1->lora_a.zero_grad();
        ff.adapter1->lora_b.zero_grad();
      }
      if (ff.adapter2) {
        ff.adapter2->lora_a.zero_grad();
        ff.adapter2->lora_b.zero_grad();
      }
    });
  }

 private:
  template <typename Self, typename Fn>
  static void visit_base(Self& self, Fn& fn) {
    auto ln = [&](auto& w) {
      fn(w.gain);
      fn(w.bias);
    };
    auto attn = [&](auto& w) {
      fn(w.wq);
      fn(w.wk);
      fn(w.wv);
      fn(w.wo);
    };
    auto ff = [&](auto& w) {
      fn(w.w1);
      fn(w.b1);
      fn(w.w2);
      fn(w.b2);
    };
    fn(self.token_emb_);
    fn(self.enc_pos_);
    fn(self.dec_pos_);
    for (auto& layer : self.encoder_) {
      ln(layer.ln_attn);
      attn(layer.attn);
      ln(layer.ln_ff);
      ff(layer.ff);
    }
    ln(self.enc_final_);
    for (auto& layer : self.decoder_) {
      ln(layer.ln_self);
      attn(layer.self_attn);
      ln(layer.ln_cross);
      attn(layer.cross_attn);
      ln(layer.ln_ff);
      ff(layer.ff);
    }
    ln(self.dec_final_);
    fn(self.out_w_);
    fn(self.out_b_);
  }

  ModelConfig config_;
  Tokenizer tokenizer_;
  Parameter token_emb_, enc_pos_, dec_pos_;
  std::vector<EncoderLayer> encoder_;
  LayerNormWeights enc_final_;
  std::vector<DecoderLayer> decoder_;
  LayerNormWeights dec_final_;
  Parameter out_w_, out_b_;
};

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

namespace detail {

inline Var apply_layer_norm(Tape& t, Var x, const LayerNormWeights& w) {
  return layer_norm(x, t.param(w.gain), t.param(w.bias));
}

inline std::vector<int> iota_ids(std::size_t n) {
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  return ids;
}

/// Multi-head attention given already projected keys and values.
inline Var attend(Tape& t, Var q, Var k, Var v, const AttentionWeights& w, std::size_t heads,
                  bool causal) {
  const std::size_t d = q.cols();
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = heads == 1 ? k : slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = heads == 1 ? v : slice_cols(v, h * dh, (h + 1) * dh);
    Var scores = scale(matmul_nt(qh, kh), inv_sqrt);
    Var probs = row_softmax(scores, causal);
    outs.push_back(matmul(probs, vh));
  }
  Var merged = heads == 1 ? outs.front() : concat_cols(outs);
  return matmul(merged, t.param(w.wo));
}

inline Var feed_forward(Tape& t, Var x, const FeedForward& ff) {
  Var h = add_row(adapted_matmul(x, ff.w1, ff.adapter1), t.param(ff.b1));
  h = relu(h);
  return add_row(adapted_matmul(h, ff.w2, ff.adapter2), t.param(ff.b2));
}

}  // namespace detail

/// Encoder output plus the cross-attention keys/values of every decoder layer,
/// so several targets can be scored against one encoding.
struct EncodedInput {
  Var states;
  std::vector<Var> cross_keys;
  std::vector<Var> cross_values;
};

inline EncodedInput encode(Tape& t, const ScorerModel& model, std::span<const int> ids) {
  const auto& cfg = model.config();
  if (ids.empty()) fail(ErrorKind::argument, "encode: empty input");
  if (ids.size() > cfg.max_len) {
    fail(ErrorKind::argument, "encode: input of " + std::to_string(ids.size()) +
                                  " tokens exceeds max length " + std::to_string(cfg.max_len));
  }
  const auto positions = detail::iota_ids(ids.size());
  Var x = add(embedding_lookup(t.param(model.token_embedding()), ids),
              embedding_lookup(t.param(model.encoder_positions()), positions));
  for (const auto& layer : model.encoder()) {
    Var h = detail::apply_layer_norm(t, x, layer.ln_attn);
    Var q = matmul(h, t.param(layer.attn.wq));
    Var k = matmul(h, t.param(layer.attn.wk));
    Var v = matmul(h, t.param(layer.attn.wv));
    x = add(x, detail::attend(t, q, k, v, layer.attn, cfg.heads, false));
    h = detail::apply_layer_norm(t, x, layer.ln_ff);
    x = add(x, detail::feed_forward(t, h, layer.ff));
  }
  EncodedInput enc;
  enc.states = detail::apply_layer_norm(t, x, model.encoder_final());
  for (const auto& layer : model.decoder()) {
    enc.cross_keys.push_back(matmul(enc.states, t.param(layer.cross_attn.wk)));
    enc.cross_values.push_back(matmul(enc.states, t.param(layer.cross_attn.wv)));
  }
  return enc;
}

/// Teacher-forced decoder log-probabilities: row i holds log p(. | bos, target[0..i)).
inline Var decoder_log_probs(Tape& t, const ScorerModel& model, const EncodedInput& enc,
                             std::span<const int> target) {
  const auto& cfg = model.config();
  if (target.empty()) fail(ErrorKind::argument, "score: empty target");
  if (target.size() > cfg.max_len) {
    fail(ErrorKind::argument, "score: target of " + std::to_string(target.size()) +
                                  " tokens exceeds max length " + std::to_string(cfg.max_len));
  }
  std::vector<int> inputs;
  inputs.reserve(target.size());
  inputs.push_back(Tokenizer::kBos);
  inputs.insert(inputs.end(), target.begin(), target.end() - 1);
  const auto positions = detail::iota_ids(inputs.size());
  Var y = add(embedding_lookup(t.param(model.token_embedding()), inputs),
              embedding_lookup(t.param(model.decoder_positions()), positions));
  for (std::size_t i = 0; i < model.decoder().size(); ++i) {
    const auto& layer = model.decoder()[i];
    Var h = detail::apply_layer_norm(t, y, layer.ln_self);
    Var q = matmul(h, t.param(layer.self_attn.wq));
    Var k = matmul(h, t.param(layer.self_attn.wk));
    Var v = matmul(h, t.param(layer.self_attn.wv));
    y = add(y, detail::attend(t, q, k, v, layer.self_attn, cfg.heads, true));
    h = detail::apply_layer_norm(t, y, layer.ln_cross);
    Var cq = matmul(h, t.param(layer.cross_attn.wq));
    y = add(y, detail::attend(t, cq, enc.cross_keys[i], enc.cross_values[i], layer.cross_attn,
                              cfg.heads, false));
    h = detail::apply_layer_norm(t, y, layer.ln_ff);
    y = add(y, detail::feed_forward(t, h, layer.ff));
  }
  Var h = detail::apply_layer_norm(t, y, model.decoder_final());
  Var logits = add_row(matmul(h, t.param(model.output_weight())), t.param(model.output_bias()));
  return row_log_softmax(logits);
}

/// Summed log-probability of the target tokens (1 x 1).
inline Var target_log_prob(Tape& t, const ScorerModel& model, const EncodedInput& enc,
                           std::span<const int> target) {
  return sum(pick(decoder_log_probs(t, model, enc, target), target));
}

/// log p(target | input) under teacher forcing, without gradients.
inline double sequence_log_prob(const ScorerModel& model, std::string_view input,
                                std::string_view target) {
  Tape t;
  t.set_grad_enabled(false);
  const auto in_ids = model.tokenizer().encode(input);
  const auto tgt_ids = model.tokenizer().encode(target);
  const auto enc = encode(t, model, in_ids);
  return target_log_prob(t, model, enc, tgt_ids).scalar();
}

struct LabelDistribution {
  std::vector<double> probs;
  std::vector<double> raw_log_scores;
};

/// exp(raw) / sum(exp(raw)), max-subtracted.
inline std::vector<double> normalize_log_scores(std::span<const double> raw) {
  if (raw.empty()) fail(ErrorKind::argument, "normalize: no scores");
  double mx = raw[0];
  for (double v : raw) mx = std::max(mx, v);
  std::vector<double> probs(raw.size());
  double z = 0.0;
  for (std::size_t j = 0; j < raw.size(); ++j) {
    probs[j] = std::exp(raw[j] - mx);
    z += probs[j];
  }
  for (double& p : probs) p /= z;
  return probs;
}

/// Argmax with ties to the lowest index.
inline int argmax(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::argument, "argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t j = 1; j < values.size(); ++j) {
    if (values[j] > values[best]) best = j;
  }
  return static_cast<int>(best);
}

/// Raw target log-probabilities for every verbalizer of `tmpl`, recorded on `t`
/// so the caller may differentiate through them.
inline std::vector<Var> label_log_scores(Tape& t, const ScorerModel& model,
                                         const PromptTemplate& tmpl, const Example& example) {
  const auto input = render_input(tmpl, example);
  const auto targets = render_targets(tmpl, example);
  if (targets.empty()) fail(ErrorKind::validation, "template \"" + tmpl.name() + "\" has no choices");
  const auto enc = encode(t, model, model.tokenizer().encode(input));
  std::vector<Var> scores;
  scores.reserve(targets.size());
  for (const auto& target : targets) {
    scores.push_back(target_log_prob(t, model, enc, model.tokenizer().encode(target)));
  }
  return scores;
}

inline LabelDistribution label_distribution(const ScorerModel& model, const PromptTemplate& tmpl,
                                            const Example& example) {
  Tape t;
  t.set_grad_enabled(false);
  const auto scores = label_log_scores(t, model, tmpl, example);
  LabelDistribution dist;
  for (const auto& s : scores) dist.raw_log_scores.push_back(s.scalar());
  dist.probs = normalize_log_scores(dist.raw_log_scores);
  return dist;
}

inline int predict(const ScorerModel& model, const PromptTemplate& tmpl, const Example& example) {
  return argmax(label_distribution(model, tmpl, example).probs);
}

}  // namespace swarm
