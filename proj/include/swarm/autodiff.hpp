// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over dense matrices.
//
// A Tape records every primitive applied to Vars. Tape::backward walks the
// records in exact reverse order, accumulates gradients into trainable
// Parameters and then clears the tape.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "swarm/error.hpp"
#include "swarm/matrix.hpp"

namespace swarm {

struct Parameter {
  std::string name;
  Matrix value;
  // Gradients are accumulated through const references during backward.
  mutable Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string param_name, Matrix initial, bool is_trainable = true)
      : name(std::move(param_name)),
        value(std::move(initial)),
        grad(value.rows(), value.cols()),
        trainable(is_trainable) {}

  void zero_grad() const { grad.fill(0.0); }
};

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  bool requires_grad() const;
  std::uint32_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Convenience accessor for 1x1 results.
  double scalar() const { return value()[0]; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Called with the node's forward value and its accumulated gradient.
using BackwardFn = std::function<void(Tape&, const Matrix& out, const Matrix& grad_out)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// When disabled no node requires gradients and no backward closures are kept.
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  /// Dropout is active only in training mode.
  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  /// Keys the dropout stream; the op counter restarts at zero.
  void set_dropout_stream(std::uint64_t seed, std::uint64_t step) {
    dropout_seed_ = seed;
    dropout_step_ = step;
    dropout_op_ = 0;
  }
  std::uint64_t dropout_seed() const { return dropout_seed_; }
  std::uint64_t dropout_step() const { return dropout_step_; }
  std::uint64_t next_dropout_op() { return dropout_op_++; }

  Var constant(Matrix value) {
    Node node;
    node.value = std::move(value);
    check_finite(node.value, "constant");
    return push(std::move(node));
  }

  /// The referenced matrix must outlive every use of the returned Var.
  Var constant_ref(const Matrix& value) {
    Node node;
    node.ref = &value;
    return push(std::move(node));
  }

  Var param(const Parameter& p) {
    Node node;
    node.ref = &p.value;
    node.param = &p;
    node.requires_grad = grad_enabled_ && p.trainable;
    return push(std::move(node));
  }

  Var record(Matrix value, bool requires_grad, BackwardFn fn, const char* op) {
    check_finite(value, op);
    Node node;
    node.value = std::move(value);
    node.requires_grad = grad_enabled_ && requires_grad;
    if (node.requires_grad) node.backward = std::move(fn);
    return push(std::move(node));
  }

  const Matrix& value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.ref != nullptr ? *n.ref : n.value;
  }

  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  /// Zero-initialised on first use. Only valid while no node is being recorded.
  Matrix& grad_slot(std::uint32_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      const Matrix& v = value(id);
      n.grad = Matrix(v.rows(), v.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  void backward(Var loss) {
    if (loss.tape_ != this || loss.id_ >= nodes_.size()) {
      fail(ErrorKind::state, "backward: variable does not belong to this tape");
    }
    if (!nodes_[loss.id_].requires_grad) {
      fail(ErrorKind::state, "backward on a detached node");
    }
    if (value(loss.id_).size() != 1) {
      fail(ErrorKind::shape, "backward: loss must be a scalar, got " + value(loss.id_).shape());
    }
    grad_slot(loss.id_).fill(1.0);
    for (std::int64_t id = loss.id_; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.has_grad) continue;
      if (n.param != nullptr) {
        n.param->grad += n.grad;
      } else if (n.backward) {
        // The closure may take grad slots of earlier nodes; nodes_ does not grow here.
        n.backward(*this, value(static_cast<std::uint32_t>(id)), n.grad);
      }
    }
    clear();
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    const Parameter* param = nullptr;
  };

  Var push(Node&& node) {
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  static void check_finite(const Matrix& m, const char* op) {
    if (!m.all_finite()) fail(ErrorKind::non_finite, std::string(op) + ": non-finite result");
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool training_ = false;
  std::uint64_t dropout_seed_ = 0;
  std::uint64_t dropout_step_ = 0;
  std::uint64_t dropout_op_ = 0;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    fail(ErrorKind::state, std::string(op) + ": operands recorded on different tapes");
  }
  return *a.tape();
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform [0,1) value of a counter-based stream.
inline double counter_uniform(std::uint64_t seed, std::uint64_t step, std::uint64_t op,
                              std::uint64_t index) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ step);
  h = splitmix64(h ^ op);
  h = splitmix64(h ^ index);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    fail(ErrorKind::shape, "matmul: shape mismatch " + av.shape() + " * " + bv.shape());
  }
  Matrix c(av.rows(), bv.cols());
  dense::gemm_acc(av, bv, c);
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(c), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, const Matrix&, const Matrix& g) {
                    if (tp.requires_grad(ia)) dense::gemm_nt_acc(g, tp.value(ib), tp.grad_slot(ia));
                    if (tp.requires_grad(ib)) dense::gemm_tn_acc(tp.value(ia), g, tp.grad_slot(ib));
                  },
                  "matmul");
}

/// a * b^T without materialising the transpose.
inline Var matmul_nt(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "matmul_nt");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) {
    fail(ErrorKind::shape, "matmul_nt: shape mismatch " + av.shape() + " * T(" + bv.shape() + ")");
  }
  Matrix c(av.rows(), bv.rows());
  dense::gemm_nt_acc(av, bv, c);
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(c), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, const Matrix&, const Matrix& g) {
                    // c = a b^T: da = g b, db = g^T a
                    if (tp.requires_grad(ia)) dense::gemm_acc(g, tp.value(ib), tp.grad_slot(ia));
                    if (tp.requires_grad(ib)) dense::gemm_tn_acc(g, tp.value(ia), tp.grad_slot(ib));
                  },
                  "matmul_nt");
}

inline Var transpose(Var a) {
  Tape& t = *a.tape();
  const auto ia = a.id();
  return t.record(dense::transpose(a.value()), a.requires_grad(),
                  [ia](Tape& tp, const Matrix&, const Matrix& g) {
                    tp.grad_slot(ia) += dense::transpose(g);
                  },
                  "transpose");
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "add");
  a.value().require_same_shape(b.value(), "add");
  Matrix c = a.value();
  c += b.value();
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(c), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, const Matrix&, const Matrix& g) {
                    if (tp.requires_grad(ia)) tp.grad_slot(ia) += g;
                    if (tp.requires_grad(ib)) tp.grad_slot(ib) += g;
                  },
                  "add");
}

/// Adds a 1 x c row vector to every row of a.
inline Var add_row(Var a, Var bias) {
  Tape& t = detail::same_tape(a, bias, "add_row");
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != a.value().cols()) {
    fail(ErrorKind::shape, "add_row: bias " + bv.shape() + " does not fit " + a.value().shape());
  }
  Matrix c = a.value();
  for (std::size_t r = 0; r < c.rows(); ++r) {
    auto row = c.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bv[j];
  }
  const auto ia = a.id(), ib = bias.id();
  return t.record(std::move(c), a.requires_grad() || bias.requires_grad(),
                  [ia, ib](Tape& tp, const Matrix&, const Matrix& g) {
                    if (tp.requires_grad(ia)) tp.grad_slot(ia) += g;
                    if (tp.requires_grad(ib)) {
                      Matrix& gb = tp.grad_slot(ib);
                      for (std::size_t r = 0; r < g.rows(); ++r) {
                        const auto row = g.row(r);
                        for (std::size_t j = 0; j < row.size(); ++j) gb[j] += row[j];
                      }
                    }
                  },
                  "add_row");
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape();
  Matrix c = a.value();
  for (double& v : c.data()) v *= s;
  const auto ia = a.id();
  return t.record(std::move(c), a.requires_grad(),
                  [ia, s](Tape& tp, const Matrix&, const Matrix& g) {
                    Matrix& ga = tp.grad_slot(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
                  },
                  "scale");
}

/// Elementwise product.
inline Var hadamard(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "hadamard");
  a.value().require_same_shape(b.value(), "hadamard");
  Matrix c = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(c), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, const Matrix&, const Matrix& g) {
                    if (tp.requires_grad(ia)) {
                      Matrix& ga = tp.grad_slot(ia);
                      const Matrix& bv2 = tp.value(ib);
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
                    }
                    if (tp.requires_grad(ib)) {
                      Matrix& gb = tp.grad_slot(ib);
                      const Matrix& av2 = tp.value(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
                    }
                  },
                  "hadamard");
}

inline Var sum(Var a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const auto ia = a.id();
  return t.record(Matrix(1, 1, s), a.requires_grad(),
                  [ia](Tape& tp, const Matrix&, const Matrix& g) {
                    Matrix& ga = tp.grad_slot(ia);
                    for (double& v : ga.data()) v += g[0];
                  },
                  "sum");
}

inline Var relu(Var a) {
  Tape& t = *a.tape();
  Matrix c = a.value();
  for (double& v : c.data()) v = v > 0.0 ? v : 0.0;
  const auto ia = a.id();
  return t.record(std::move(c), a.requires_grad(),
                  [ia](Tape& tp, const Matrix& out, const Matrix& g) {
                    Matrix& ga = tp.grad_slot(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      if (out[i] > 0.0) ga[i] += g[i];
                    }
                  },
                  "relu");
}

/// Softmax along each row, max-subtracted. With `causal`, entry (r, c) for
/// c > r is masked to probability zero.
inline Var row_softmax(Var a, bool causal = false) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  Matrix y(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const std::size_t limit = causal ? std::min(av.cols(), r + 1) : av.cols();
    const auto in = av.row(r);
    auto out = y.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < limit; ++c) mx = std::max(mx, in[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < limit; ++c) {
      out[c] = std::exp(in[c] - mx);
      z += out[c];
    }
    for (std::size_t c = 0; c < limit; ++c) out[c] /= z;
  }
  const auto ia = a.id();
  return t.record(std::move(y), a.requires_grad(),
                  [ia](Tape& tp, const Matrix& out, const Matrix& g) {
                    Matrix& ga = tp.grad_slot(ia);
                    for (std::size_t r = 0; r < out.rows(); ++r) {
                      const auto yr = out.row(r);
                      const auto gr = g.row(r);
                      double dot = 0.0;
                      for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
                      auto gar = ga.row(r);
                      for (std::size_t c = 0; c < yr.size(); ++c) gar[c] += yr[c] * (gr[c] - dot);
                    }
                  },
                  "row_softmax");
}

inline Var row_log_softmax(Var a) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  Matrix y(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const auto in = av.row(r);
    auto out = y.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : in) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : in) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < in.size(); ++c) out[c] = in[c] - lse;
  }
  const auto ia = a.id();
  return t.record(std::move(y), a.requires_grad(),
                  [ia](Tape& tp, const Matrix& out, const Matrix& g) {
                    Matrix& ga = tp.grad_slot(ia);
                    for (std::size_t r = 0; r < out.rows(); ++r) {
                      const auto yr = out.row(r);
                      const auto gr = g.row(r);
                      double gsum = 0.0;
                      for (double v : gr) gsum += v;
                      auto gar = ga.row(r);
                      for (std::size_t c = 0; c < yr.size(); ++c) gar[c] += gr[c] - std::exp(yr[c]) * gsum;
                    }
                  },
                  "row_log_softmax");
}

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row normalisation followed by the affine gain/bias (both 1 x cols).
inline Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps) {
  Tape& t = detail::same_tape(x, gain, "layer_norm");
  const Matrix& xv = x.value();
  const Matrix& gv = gain.value();
  const Matrix& bv = bias.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  if (gv.rows() != 1 || gv.cols() != c || !gv.same_shape(bv)) {
    fail(ErrorKind::shape, "layer_norm: affine terms " + gv.shape() + "/" + bv.shape() +
                               " do not fit " + xv.shape());
  }
  Matrix y(n, c);
  Matrix xhat(n, c);
  std::vector<double> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto in = xv.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat(r, j) = (in[j] - mean) * inv_std[r];
      y(r, j) = xhat(r, j) * gv[j] + bv[j];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  const bool rg = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  return t.record(
      std::move(y), rg,
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& tp, const Matrix&, const Matrix& g) {
        const std::size_t rows = g.rows(), cols = g.cols();
        const Matrix& gv2 = tp.value(ig);
        if (tp.requires_grad(ig) || tp.requires_grad(ib)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < cols; ++j) {
              if (tp.requires_grad(ig)) tp.grad_slot(ig)[j] += g(r, j) * xhat(r, j);
              if (tp.requires_grad(ib)) tp.grad_slot(ib)[j] += g(r, j);
            }
          }
        }
        if (tp.requires_grad(ix)) {
          Matrix& gx = tp.grad_slot(ix);
          const double inv_c = 1.0 / static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
              const double d = g(r, j) * gv2[j];
              mean_d += d;
              mean_dx += d * xhat(r, j);
            }
            mean_d *= inv_c;
            mean_dx *= inv_c;
            for (std::size_t j = 0; j < cols; ++j) {
              const double d = g(r, j) * gv2[j];
              gx(r, j) += inv_std[r] * (d - mean_d - xhat(r, j) * mean_dx);
            }
          }
        }
      },
      "layer_norm");
}

/// Inverted dropout keyed by (seed, step, op-id); identity outside training.
inline Var dropout(Var a, double p) {
  if (!(p >= 0.0 && p < 1.0)) {
    fail(ErrorKind::argument, "dropout: probability must lie in [0,1), got " + std::to_string(p));
  }
  Tape& t = *a.tape();
  if (!t.training() || p == 0.0) return a;
  const std::uint64_t op = t.next_dropout_op();
  const Matrix& av = a.value();
  Matrix mask(av.rows(), av.cols());
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double u = detail::counter_uniform(t.dropout_seed(), t.dropout_step(), op, i);
    mask[i] = u >= p ? keep_scale : 0.0;
  }
  Matrix c = av;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= mask[i];
  const auto ia = a.id();
  return t.record(std::move(c), a.requires_grad(),
                  [ia, mask = std::move(mask)](Tape& tp, const Matrix&, const Matrix& g) {
                    Matrix& ga = tp.grad_slot(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
                  },
                  "dropout");
}

/// Gathers table rows: result row i is table[ids[i]].
inline Var embedding_lookup(Var table, std::span<const int> ids) {
  Tape& t = *table.tape();
  const Matrix& tv = table.value();
  Matrix out(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      fail(ErrorKind::argument, "embedding_lookup: id " + std::to_string(ids[i]) +
                                    " outside table of " + std::to_string(tv.rows()) + " rows");
    }
    const auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  const auto it = table.id();
  return t.record(std::move(out), table.requires_grad(),
                  [it, ids = std::vector<int>(ids.begin(), ids.end())](Tape& tp, const Matrix&,
                                                                       const Matrix& g) {
                    Matrix& gt = tp.grad_slot(it);
                    for (std::size_t i = 0; i < ids.size(); ++i) {
                      auto dst = gt.row(static_cast<std::size_t>(ids[i]));
                      const auto src = g.row(i);
                      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                    }
                  },
                  "embedding_lookup");
}

/// Picks a[i, index[i]] for every row: result is rows x 1.
inline Var pick(Var a, std::span<const int> index) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  if (index.size() != av.rows()) {
    fail(ErrorKind::shape, "pick: " + std::to_string(index.size()) + " indices for " + av.shape());
  }
  Matrix out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= av.cols()) {
      fail(ErrorKind::argument, "pick: column " + std::to_string(index[r]) + " out of range");
    }
    out[r] = av(r, static_cast<std::size_t>(index[r]));
  }
  const auto ia = a.id();
  return t.record(std::move(out), a.requires_grad(),
                  [ia, index = std::vector<int>(index.begin(), index.end())](
                      Tape& tp, const Matrix&, const Matrix& g) {
                    Matrix& ga = tp.grad_slot(ia);
                    for (std::size_t r = 0; r < index.size(); ++r) {
                      ga(r, static_cast<std::size_t>(index[r])) += g[r];
                    }
                  },
                  "pick");
}

inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  if (begin > end || end > av.cols()) {
    fail(ErrorKind::shape, "slice_cols: range [" + std::to_string(begin) + "," +
                               std::to_string(end) + ") outside " + av.shape());
  }
  const std::size_t w = end - begin;
  Matrix out(av.rows(), w);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t j = 0; j < w; ++j) out(r, j) = av(r, begin + j);
  }
  const auto ia = a.id();
  return t.record(std::move(out), a.requires_grad(),
                  [ia, begin](Tape& tp, const Matrix&, const Matrix& g) {
                    Matrix& ga = tp.grad_slot(ia);
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                      for (std::size_t j = 0; j < g.cols(); ++j) ga(r, begin + j) += g(r, j);
                    }
                  },
                  "slice_cols");
}

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::argument, "concat_cols: no operands");
  Tape& t = *parts.front().tape();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.tape() != &t) fail(ErrorKind::state, "concat_cols: operands on different tapes");
    if (p.rows() != rows) fail(ErrorKind::shape, "concat_cols: row count mismatch");
    cols += p.cols();
    rg = rg || p.requires_grad();
  }
  Matrix out(rows, cols);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(r, off + j) = pv(r, j);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += pv.cols();
  }
  return t.record(std::move(out), rg,
                  [ids = std::move(ids), offsets = std::move(offsets)](Tape& tp, const Matrix&,
                                                                       const Matrix& g) {
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (!tp.requires_grad(ids[k])) continue;
                      Matrix& gp = tp.grad_slot(ids[k]);
                      for (std::size_t r = 0; r < gp.rows(); ++r)
                        for (std::size_t j = 0; j < gp.cols(); ++j) gp(r, j) += g(r, offsets[k] + j);
                    }
                  },
                  "concat_cols");
}

/// Same value, no gradient to anything upstream.
inline Var stop_gradient(Var a) {
  return a.tape()->record(a.value(), false, {}, "stop_gradient");
}

/// -sum_j target[j] * log_probs[j]; the target is a constant. Zero-weight terms
/// are skipped so a hugely negative log-prob with zero target contributes nothing.
inline Var soft_cross_entropy(std::span<const double> target, Var log_probs) {
  const Matrix& lp = log_probs.value();
  if (lp.size() != target.size()) {
    fail(ErrorKind::shape, "soft_cross_entropy: target length " + std::to_string(target.size()) +
                               " vs log_probs " + lp.shape());
  }
  double total = 0.0;
  for (double v : target) {
    if (v < 0.0) fail(ErrorKind::argument, "soft_cross_entropy: negative target mass");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    fail(ErrorKind::argument, "soft_cross_entropy: target sums to " + std::to_string(total));
  }
  double loss = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    if (target[j] != 0.0) loss -= target[j] * lp[j];
  }
  const auto il = log_probs.id();
  return log_probs.tape()->record(
      Matrix(1, 1, loss), log_probs.requires_grad(),
      [il, target = std::vector<double>(target.begin(), target.end())](Tape& tp, const Matrix&,
                                                                       const Matrix& g) {
        Matrix& gl = tp.grad_slot(il);
        for (std::size_t j = 0; j < target.size(); ++j) gl[j] -= g[0] * target[j];
      },
      "soft_cross_entropy");
}

}  // namespace swarm
