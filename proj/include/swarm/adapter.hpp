// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>

#include "swarm/autodiff.hpp"

namespace swarm {

/// Low-rank update attached to one frozen host weight W (rows x cols). The
/// effective weight is W + alpha * B * A with B: rows x b and A: b x cols.
struct LoraAdapter {
  Parameter lora_b;  // rows x b, zero at attach time
  Parameter lora_a;  // b x cols
  double alpha = 1.0;
  std::size_t bottleneck = 1;
  double dropout = 0.0;
};

/// x * W, plus alpha * dropout(x * B) * A when an adapter is present.
inline Var adapted_matmul(Var x, const Parameter& weight, const std::optional<LoraAdapter>& adapter) {
  Tape& t = *x.tape();
  Var out = matmul(x, t.param(weight));
  if (!adapter) return out;
  Var mid = matmul(x, t.param(adapter->lora_b));
  mid = dropout(mid, adapter->dropout);
  Var delta = matmul(mid, t.param(adapter->lora_a));
  return add(out, scale(delta, adapter->alpha));
}

}  // namespace swarm
