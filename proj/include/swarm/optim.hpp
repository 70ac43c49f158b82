// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "swarm/autodiff.hpp"

namespace swarm {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
};

/// Adam with bias correction. Moments are allocated per parameter up front;
/// gradients are read but never cleared here.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config = {})
      : params_(std::move(params)), config_(config) {
    for (const Parameter* p : params_) {
      first_.emplace_back(p->value.rows(), p->value.cols());
      second_.emplace_back(p->value.rows(), p->value.cols());
    }
  }

  void step(double lr) {
    if (!(lr > 0.0)) fail(ErrorKind::argument, "adam: learning rate must be positive");
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter& p = *params_[k];
      Matrix& m = first_[k];
      Matrix& v = second_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p.value[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
      }
    }
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  long steps_taken() const { return t_; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  long t_ = 0;
};

}  // namespace swarm
