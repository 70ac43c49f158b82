// SPDX-License-Identifier: Apache-2.0
//
// Fleiss' kappa over prompt predictions, and the checkpoint-selection rule
// that picks the start of the final strictly decreasing run of kappa.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "swarm/error.hpp"

namespace swarm {

/// counts(i, j): number of prompts predicting label j on example i.
class PredictionMatrix {
 public:
  PredictionMatrix(std::size_t examples, std::size_t labels, std::size_t raters)
      : n_(examples), j_(labels), k_(raters), counts_(examples * labels, 0) {}

  std::size_t examples() const { return n_; }
  std::size_t labels() const { return j_; }
  std::size_t raters() const { return k_; }

  int& operator()(std::size_t i, std::size_t j) { return counts_[i * j_ + j]; }
  int operator()(std::size_t i, std::size_t j) const { return counts_[i * j_ + j]; }
  std::span<const int> row(std::size_t i) const { return {counts_.data() + i * j_, j_}; }

 private:
  std::size_t n_, j_, k_;
  std::vector<int> counts_;
};

/// predictions[i][k] is the label prompt k assigns to example i.
inline PredictionMatrix build_matrix(const std::vector<std::vector<int>>& predictions,
                                     std::size_t num_labels) {
  if (num_labels == 0) fail(ErrorKind::argument, "build_matrix: no labels");
  const std::size_t raters = predictions.empty() ? 0 : predictions.front().size();
  PredictionMatrix m(predictions.size(), num_labels, raters);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != raters) {
      fail(ErrorKind::argument, "build_matrix: ragged prediction rows (row " + std::to_string(i) + ")");
    }
    for (int label : predictions[i]) {
      if (label < 0 || static_cast<std::size_t>(label) >= num_labels) {
        fail(ErrorKind::argument, "build_matrix: label " + std::to_string(label) + " out of range");
      }
      ++m(i, static_cast<std::size_t>(label));
    }
  }
  return m;
}

inline std::vector<double> per_example_agreement(const PredictionMatrix& m) {
  const std::size_t k = m.raters();
  if (k < 2) fail(ErrorKind::argument, "agreement needs at least two prompts");
  const double pairs = static_cast<double>(k) * static_cast<double>(k - 1);
  std::vector<double> p(m.examples());
  for (std::size_t i = 0; i < m.examples(); ++i) {
    std::int64_t agreeing = 0;
    for (int c : m.row(i)) agreeing += static_cast<std::int64_t>(c) * (c - 1);
    p[i] = static_cast<double>(agreeing) / pairs;
  }
  return p;
}

struct AgreementReport {
  std::vector<double> p_i;
  double p_bar = 0.0;
  double p_e = 0.0;
  std::vector<double> q;
  double kappa = 0.0;
  bool collapsed = false;
};

/// When chance agreement is 1 (every prediction is the same label) kappa is
/// reported as 0 and `collapsed` is set.
inline AgreementReport fleiss_kappa(const PredictionMatrix& m) {
  if (m.examples() == 0) fail(ErrorKind::argument, "fleiss_kappa: no examples");
  AgreementReport r;
  r.p_i = per_example_agreement(m);
  for (double p : r.p_i) r.p_bar += p;
  r.p_bar /= static_cast<double>(m.examples());

  const double total = static_cast<double>(m.examples()) * static_cast<double>(m.raters());
  r.q.assign(m.labels(), 0.0);
  std::vector<std::int64_t> column(m.labels(), 0);
  for (std::size_t i = 0; i < m.examples(); ++i)
    for (std::size_t j = 0; j < m.labels(); ++j) column[j] += m(i, j);
  for (std::size_t j = 0; j < m.labels(); ++j) {
    r.q[j] = static_cast<double>(column[j]) / total;
    r.p_e += r.q[j] * r.q[j];
  }
  const bool single_label =
      std::count_if(column.begin(), column.end(), [](std::int64_t c) { return c > 0; }) == 1;
  if (single_label) {
    r.collapsed = true;
    r.kappa = 0.0;
  } else {
    // Same ratio over a common integer denominator, so exact cases stay exact.
    using wide = __int128;
    const wide n = static_cast<wide>(m.examples());
    const wide k = static_cast<wide>(m.raters());
    wide agreeing = 0;
    for (std::size_t i = 0; i < m.examples(); ++i)
      for (int c : m.row(i)) agreeing += static_cast<wide>(c) * (c - 1);
    wide squares = 0;
    for (std::int64_t c : column) squares += static_cast<wide>(c) * c;
    const wide d1 = n * k * (k - 1);
    const wide d2 = n * k * n * k;
    r.kappa = static_cast<double>(static_cast<long double>(agreeing * d2 - squares * d1) /
                                  static_cast<long double>(d1 * (d2 - squares)));
  }
  return r;
}

struct KappaPoint {
  std::int64_t step = 0;
  double kappa = 0.0;
};

using KappaTrajectory = std::vector<KappaPoint>;

/// Index of the start of the final strictly decreasing suffix.
inline std::size_t select_checkpoint_index(const KappaTrajectory& trajectory) {
  if (trajectory.empty()) fail(ErrorKind::argument, "select_checkpoint: empty trajectory");
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    if (trajectory[i].step <= trajectory[i - 1].step) {
      fail(ErrorKind::argument, "select_checkpoint: steps must be strictly increasing");
    }
  }
  std::size_t t = trajectory.size() - 1;
  while (t > 0 && trajectory[t].kappa < trajectory[t - 1].kappa) --t;
  return t;
}

inline std::int64_t select_checkpoint(const KappaTrajectory& trajectory) {
  return trajectory[select_checkpoint_index(trajectory)].step;
}

}  // namespace swarm
