// SPDX-License-Identifier: Apache-2.0
//
// Low-rank adapters on the feed-forward matrices of every encoder and decoder
// layer. Attaching freezes all base weights; only the adapter pairs train.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "swarm/checkpoint.hpp"
#include "swarm/scorer.hpp"

namespace swarm {

struct LoraSettings {
  std::size_t bottleneck = 1;
  double alpha = 4.0;
  double dropout = 0.3;
  double init_std = 0.02;
};

/// One adapted host matrix. Pointers refer into the model they were taken from.
struct AdapterSite {
  std::string name;
  Parameter* host = nullptr;
  std::optional<LoraAdapter>* slot = nullptr;
};

using AdapterSet = std::vector<AdapterSite>;

/// Extra trainable parameters of rank-b adapters on both feed-forward
/// matrices of l layers in each of the two stacks.
constexpr std::uint64_t param_count(std::uint64_t b, std::uint64_t d, std::uint64_t m,
                                    std::uint64_t l) {
  return b * (m + d) * 2 * l * 2;
}

inline AdapterSet adapter_sites(ScorerModel& model) {
  AdapterSet sites;
  model.for_each_feed_forward([&](FeedForward& ff) {
    sites.push_back({ff.w1.name, &ff.w1, &ff.adapter1});
    sites.push_back({ff.w2.name, &ff.w2, &ff.adapter2});
  });
  return sites;
}

inline AdapterSet attach(ScorerModel& model, const LoraSettings& settings, std::uint64_t seed) {
  const auto& cfg = model.config();
  if (settings.bottleneck < 1) fail(ErrorKind::argument, "attach: bottleneck must be >= 1");
  if (settings.bottleneck >= std::min(cfg.d_model, cfg.d_ff)) {
    fail(ErrorKind::argument, "attach: bottleneck must be smaller than min(d, m)");
  }
  if (!(settings.dropout >= 0.0 && settings.dropout < 1.0)) {
    fail(ErrorKind::argument, "attach: dropout must lie in [0,1)");
  }
  if (model.has_adapters()) fail(ErrorKind::state, "attach: adapters are already attached");

  model.set_base_trainable(false);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, settings.init_std);
  auto sites = adapter_sites(model);
  for (auto& site : sites) {
    const std::size_t rows = site.host->value.rows(), cols = site.host->value.cols();
    LoraAdapter ad;
    ad.lora_b = Parameter(site.name + ".lora_b", Matrix(rows, settings.bottleneck));
    Matrix a(settings.bottleneck, cols);
    for (double& v : a.data()) v = dist(rng);
    ad.lora_a = Parameter(site.name + ".lora_a", std::move(a));
    ad.alpha = settings.alpha;
    ad.bottleneck = settings.bottleneck;
    ad.dropout = settings.dropout;
    *site.slot = std::move(ad);
  }
  return sites;
}

/// W + alpha * B * A.
inline Matrix effective_weight(const Parameter& host, const LoraAdapter& adapter) {
  Matrix delta = dense::matmul(adapter.lora_b.value, adapter.lora_a.value);
  delta.require_same_shape(host.value, "effective_weight");
  Matrix w = host.value;
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += adapter.alpha * delta[i];
  return w;
}

inline void merge(AdapterSite& site) {
  if (site.slot == nullptr || !*site.slot) {
    fail(ErrorKind::state, "merge: no adapter attached at " + site.name);
  }
  site.host->value = effective_weight(*site.host, **site.slot);
  site.slot->reset();
}

/// Folds every adapter into its host weight; base weights become trainable again.
inline void merge_all(ScorerModel& model) {
  if (!model.has_adapters()) fail(ErrorKind::state, "merge: model has no adapters attached");
  for (auto& site : adapter_sites(model)) {
    if (*site.slot) merge(site);
  }
  model.set_base_trainable(true);
}

/// Drops adapters without touching base weights.
inline void detach_all(ScorerModel& model) {
  for (auto& site : adapter_sites(model)) site.slot->reset();
  model.set_base_trainable(true);
}

inline std::uint64_t trainable_count(ScorerModel& model) {
  std::uint64_t n = 0;
  for (const Parameter* p : model.trainable_parameters()) n += p->value.size();
  return n;
}

// ---------------------------------------------------------------------------
// Adapter-only checkpoints
// ---------------------------------------------------------------------------

inline std::string save_adapters(const ScorerModel& model) {
  const LoraAdapter* first = nullptr;
  std::uint32_t count = 0;
  model.for_each_feed_forward([&](const FeedForward& ff) {
    for (const auto* ad : {&ff.adapter1, &ff.adapter2}) {
      if (*ad) {
        if (first == nullptr) first = &**ad;
        count += 2;
      }
    }
  });
  if (first == nullptr) fail(ErrorKind::state, "save_adapters: model has no adapters attached");

  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(CheckpointKind::adapter));
  detail::write_config(w, model.config());
  w.u64(checkpoint_hash(serialize_base(model)));
  w.f64(first->alpha);
  w.u32(static_cast<std::uint32_t>(first->bottleneck));
  w.f64(first->dropout);
  w.u32(count);
  model.for_each_feed_forward([&](const FeedForward& ff) {
    for (const auto* ad : {&ff.adapter1, &ff.adapter2}) {
      if (*ad) {
        w.matrix((*ad)->lora_b.name, (*ad)->lora_b.value);
        w.matrix((*ad)->lora_a.name, (*ad)->lora_a.value);
      }
    }
  });
  return w.take();
}

/// Attaches adapters read from `bytes`; the base model must hash to the
/// recorded base checkpoint.
inline void load_adapters(ScorerModel& model, std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (detail::read_header(r) != CheckpointKind::adapter) {
    fail(ErrorKind::format, "adapter checkpoint: found a model checkpoint");
  }
  const auto config = detail::read_config(r);
  if (!(config == model.config())) fail(ErrorKind::format, "adapter checkpoint: config mismatch");
  const auto base_hash = r.u64();
  if (base_hash != checkpoint_hash(serialize_base(model))) {
    fail(ErrorKind::format, "adapter checkpoint: base model hash mismatch");
  }
  LoraSettings settings;
  settings.alpha = r.f64();
  settings.bottleneck = r.u32();
  settings.dropout = r.f64();
  auto arrays = detail::read_arrays(r);
  attach(model, settings, 0);
  std::size_t used = 0;
  for (auto& site : adapter_sites(model)) {
    for (Parameter* p : {&(*site.slot)->lora_b, &(*site.slot)->lora_a}) {
      const auto it = arrays.find(p->name);
      if (it == arrays.end()) fail(ErrorKind::format, "adapter checkpoint: missing " + p->name);
      if (!it->second.same_shape(p->value)) {
        fail(ErrorKind::format, "adapter checkpoint: shape mismatch for " + p->name);
      }
      p->value = it->second;
      ++used;
    }
  }
  if (used != arrays.size()) fail(ErrorKind::format, "adapter checkpoint: unexpected extra arrays");
}

}  // namespace swarm
