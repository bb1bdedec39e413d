#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gsid/num/tape.hpp"

// Differentiable primitives. Matrices are rank-2 row-major tensors; vectors
// are rank-1. Every op checks shapes and records its own backward rule.

namespace gsid::num {

namespace detail {

inline void require(bool ok, const char* op, const Tensor& a, const Tensor& b) {
  if (!ok) throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

inline void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + a.shape_string());
}

inline void add_into(Tensor& dst, const Tensor& src, double scale = 1.0) {
  for (std::size_t i = 0; i < src.size(); ++i) dst.values[i] += scale * src.values[i];
}

inline int check_index(int i, int bound, const char* op) {
  if (i < 0 || i >= bound) {
    throw ShapeError(std::string(op) + ": index " + std::to_string(i) + " out of range " + std::to_string(bound));
  }
  return i;
}

}  // namespace detail

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  detail::require(x.shape == y.shape, "add", x, y);
  Tensor out = x;
  detail::add_into(out, y);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.needs_grad(a.id)) detail::add_into(tp.grad_buffer(a.id), g);
    if (tp.needs_grad(b.id)) detail::add_into(tp.grad_buffer(b.id), g);
  }, "add");
}

inline Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  detail::require(x.shape == y.shape, "sub", x, y);
  Tensor out = x;
  detail::add_into(out, y, -1.0);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.needs_grad(a.id)) detail::add_into(tp.grad_buffer(a.id), g);
    if (tp.needs_grad(b.id)) detail::add_into(tp.grad_buffer(b.id), g, -1.0);
  }, "sub");
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  detail::require(x.shape == y.shape, "mul", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= y.values[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& x = tp.value_of(a.id);
    const Tensor& y = tp.value_of(b.id);
    if (tp.needs_grad(a.id)) {
      Tensor& ga = tp.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += g.values[i] * y.values[i];
    }
    if (tp.needs_grad(b.id)) {
      Tensor& gb = tp.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb.values[i] += g.values[i] * x.values[i];
    }
  }, "mul");
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (double& v : out.values) v *= s;
  return t.record(std::move(out), {a}, [a, s](Tape& tp, int self) {
    detail::add_into(tp.grad_buffer(a.id), tp.grad_of(self), s);
  }, "scale");
}

/// a (m x k) * b (k x n).
inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  detail::require_matrix("matmul", x);
  detail::require_matrix("matmul", y);
  detail::require(x.shape[1] == y.shape[0], "matmul", x, y);
  Tensor out = Tensor::matrix(x.shape[0], y.shape[1]);
  as_matrix(out).noalias() = as_matrix(x) * as_matrix(y);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, int self) {
    auto g = as_matrix(tp.grad_of(self));
    if (tp.needs_grad(a.id)) as_matrix(tp.grad_buffer(a.id)).noalias() += g * as_matrix(tp.value_of(b.id)).transpose();
    if (tp.needs_grad(b.id)) as_matrix(tp.grad_buffer(b.id)).noalias() += as_matrix(tp.value_of(a.id)).transpose() * g;
  }, "matmul");
}

/// x (m x in) * W^T (W is out x in), plus an optional bias row (out).
inline Var linear(Var x, Var w, const Var* bias = nullptr) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  detail::require_matrix("linear", xv);
  detail::require_matrix("linear", wv);
  detail::require(xv.shape[1] == wv.shape[1], "linear", xv, wv);
  Tensor out = Tensor::matrix(xv.shape[0], wv.shape[0]);
  as_matrix(out).noalias() = as_matrix(xv) * as_matrix(wv).transpose();
  if (bias) {
    const Tensor& bv = t.value(*bias);
    detail::require(bv.rank() == 1 && bv.shape[0] == wv.shape[0], "linear bias", wv, bv);
    auto m = as_matrix(out);
    for (int r = 0; r < m.rows(); ++r) m.row(r) += as_matrix(bv).transpose();
  }
  const Var b = bias ? *bias : Var{};
  auto fn = [x, w, b](Tape& tp, int self) {
    auto g = as_matrix(tp.grad_of(self));
    if (tp.needs_grad(x.id)) as_matrix(tp.grad_buffer(x.id)).noalias() += g * as_matrix(tp.value_of(w.id));
    if (tp.needs_grad(w.id)) as_matrix(tp.grad_buffer(w.id)).noalias() += g.transpose() * as_matrix(tp.value_of(x.id));
    if (b.tape && tp.needs_grad(b.id)) as_matrix(tp.grad_buffer(b.id)) += g.colwise().sum().transpose();
  };
  return bias ? t.record(std::move(out), {x, w, *bias}, fn, "linear") : t.record(std::move(out), {x, w}, fn, "linear");
}

/// Column-wise concatenation [a | b].
inline Var concat(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  detail::require_matrix("concat", x);
  detail::require_matrix("concat", y);
  detail::require(x.shape[0] == y.shape[0], "concat", x, y);
  const int p = x.shape[1], q = y.shape[1];
  Tensor out = Tensor::matrix(x.shape[0], p + q);
  as_matrix(out).leftCols(p) = as_matrix(x);
  as_matrix(out).rightCols(q) = as_matrix(y);
  return t.record(std::move(out), {a, b}, [a, b, p, q](Tape& tp, int self) {
    auto g = as_matrix(tp.grad_of(self));
    if (tp.needs_grad(a.id)) as_matrix(tp.grad_buffer(a.id)) += g.leftCols(p);
    if (tp.needs_grad(b.id)) as_matrix(tp.grad_buffer(b.id)) += g.rightCols(q);
  }, "concat");
}

inline Var leaky_relu(Var a, double slope = 0.2) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (double& v : out.values) v = v > 0 ? v : slope * v;
  return t.record(std::move(out), {a}, [a, slope](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& x = tp.value_of(a.id);
    Tensor& ga = tp.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += x.values[i] > 0 ? g.values[i] : slope * g.values[i];
  }, "leaky_relu");
}

inline Var relu(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (double& v : out.values) v = std::max(v, 0.0);
  return t.record(std::move(out), {a}, [a](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& x = tp.value_of(a.id);
    Tensor& ga = tp.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x.values[i] > 0) ga.values[i] += g.values[i];
    }
  }, "relu");
}

/// Inverted dropout; identity when not training.
inline Var dropout(Var a, double p, std::uint64_t seed, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw ValidationError("dropout probability must lie in [0,1)");
  if (!training || p == 0.0) return a;
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  std::vector<double> keep(out.size());
  Rng rng(seed);
  std::bernoulli_distribution coin(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < out.size(); ++i) {
    keep[i] = coin(rng) ? s : 0.0;
    out.values[i] *= keep[i];
  }
  return t.record(std::move(out), {a}, [a, keep = std::move(keep)](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& ga = tp.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += keep[i] * g.values[i];
  }, "dropout");
}

/// out[i] = x[idx[i]] (rows).
inline Var gather_rows(Var a, std::vector<int> idx) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const int cols = x.cols();
  std::vector<int> shape = x.shape;
  shape[0] = static_cast<int>(idx.size());
  Tensor out(shape, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int r = detail::check_index(idx[i], x.rows(), "gather_rows");
    std::copy_n(x.values.begin() + static_cast<std::ptrdiff_t>(r) * cols, cols,
                out.values.begin() + static_cast<std::ptrdiff_t>(i) * cols);
  }
  return t.record(std::move(out), {a}, [a, cols, idx = std::move(idx)](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& ga = tp.grad_buffer(a.id);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (int c = 0; c < cols; ++c) ga.values[static_cast<std::size_t>(idx[i]) * cols + c] += g.values[i * cols + c];
    }
  }, "gather_rows");
}

/// out[i] = z[rows[i], blocks[i]*width : (blocks[i]+1)*width].
inline Var gather_blocks(Var a, std::vector<int> rows, std::vector<int> blocks, int width) {
  Tape& t = *a.tape;
  const Tensor& z = t.value(a);
  detail::require_matrix("gather_blocks", z);
  if (rows.size() != blocks.size()) throw ShapeError("gather_blocks: row and block lists differ in length");
  if (width <= 0 || z.shape[1] % width != 0) throw ShapeError("gather_blocks: width does not divide " + z.shape_string());
  const int nblocks = z.shape[1] / width;
  const int cols = z.shape[1];
  Tensor out = Tensor::matrix(static_cast<int>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t off = static_cast<std::size_t>(detail::check_index(rows[i], z.shape[0], "gather_blocks")) * cols +
                            static_cast<std::size_t>(detail::check_index(blocks[i], nblocks, "gather_blocks")) * width;
    std::copy_n(z.values.begin() + static_cast<std::ptrdiff_t>(off), width,
                out.values.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  return t.record(std::move(out), {a},
                  [a, cols, width, rows = std::move(rows), blocks = std::move(blocks)](Tape& tp, int self) {
                    const Tensor& g = tp.grad_of(self);
                    Tensor& ga = tp.grad_buffer(a.id);
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                      const std::size_t off = static_cast<std::size_t>(rows[i]) * cols +
                                              static_cast<std::size_t>(blocks[i]) * width;
                      for (int c = 0; c < width; ++c) ga.values[off + c] += g.values[i * width + c];
                    }
                  },
                  "gather_blocks");
}

/// out[idx[i]] += x[i] (rows), with `out_rows` output rows.
inline Var scatter_add_rows(Var a, std::vector<int> idx, int out_rows) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  if (static_cast<int>(idx.size()) != x.rows()) throw ShapeError("scatter_add_rows: index count differs from rows");
  const int cols = x.cols();
  std::vector<int> shape = x.shape;
  shape[0] = out_rows;
  Tensor out(shape, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t r = detail::check_index(idx[i], out_rows, "scatter_add_rows");
    for (int c = 0; c < cols; ++c) out.values[r * cols + c] += x.values[i * cols + c];
  }
  return t.record(std::move(out), {a}, [a, cols, idx = std::move(idx)](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& ga = tp.grad_buffer(a.id);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (int c = 0; c < cols; ++c) ga.values[i * cols + c] += g.values[static_cast<std::size_t>(idx[i]) * cols + c];
    }
  }, "scatter_add_rows");
}

/// y[i, :] = x[i, :] * s[i].
inline Var row_scale(Var a, Var s) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const Tensor& sv = t.value(s);
  detail::require_matrix("row_scale", x);
  detail::require(sv.rank() == 1 && sv.shape[0] == x.shape[0], "row_scale", x, sv);
  Tensor out = x;
  as_matrix(out).array().colwise() *= as_matrix(sv).col(0).array();
  return t.record(std::move(out), {a, s}, [a, s](Tape& tp, int self) {
    auto g = as_matrix(tp.grad_of(self));
    if (tp.needs_grad(a.id)) {
      as_matrix(tp.grad_buffer(a.id)).array() += g.array().colwise() * as_matrix(tp.value_of(s.id)).col(0).array();
    }
    if (tp.needs_grad(s.id)) {
      as_matrix(tp.grad_buffer(s.id)).col(0) += (g.array() * as_matrix(tp.value_of(a.id)).array()).rowwise().sum().matrix();
    }
  }, "row_scale");
}

/// out[i] = <x[i, :], y[i, :]>.
inline Var rowwise_dot(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  detail::require_matrix("rowwise_dot", x);
  detail::require(x.shape == y.shape, "rowwise_dot", x, y);
  Tensor out = Tensor::vector(x.shape[0]);
  as_matrix(out).col(0) = (as_matrix(x).array() * as_matrix(y).array()).rowwise().sum().matrix();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, int self) {
    auto g = as_matrix(tp.grad_of(self)).col(0).array();
    if (tp.needs_grad(a.id)) as_matrix(tp.grad_buffer(a.id)).array() += as_matrix(tp.value_of(b.id)).array().colwise() * g;
    if (tp.needs_grad(b.id)) as_matrix(tp.grad_buffer(b.id)).array() += as_matrix(tp.value_of(a.id)).array().colwise() * g;
  }, "rowwise_dot");
}

/// Softmax within groups; max-subtracted. Every group present sums to 1.
inline std::vector<double> segment_softmax(std::span<const double> scores, std::span<const int> segments) {
  if (scores.size() != segments.size()) throw ShapeError("segment_softmax: scores and segments differ in length");
  std::vector<double> out(scores.size());
  if (scores.empty()) return out;
  const int nseg = *std::max_element(segments.begin(), segments.end()) + 1;
  std::vector<double> mx(nseg, -std::numeric_limits<double>::infinity());
  std::vector<double> z(nseg, 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (segments[i] < 0) throw ShapeError("segment_softmax: negative group id");
    mx[segments[i]] = std::max(mx[segments[i]], scores[i]);
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx[segments[i]]);
    z[segments[i]] += out[i];
  }
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] /= z[segments[i]];
  return out;
}

inline Var segment_softmax(Var a, std::vector<int> segments) {
  Tape& t = *a.tape;
  const Tensor& s = t.value(a);
  if (s.rank() != 1) throw ShapeError("segment_softmax: expected a vector, got " + s.shape_string());
  Tensor out({s.shape[0]}, segment_softmax(s.values, segments));
  return t.record(std::move(out), {a}, [a, segments = std::move(segments)](Tape& tp, int self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& y = tp.value_of(self);
    if (segments.empty()) return;
    const int nseg = *std::max_element(segments.begin(), segments.end()) + 1;
    std::vector<double> dot(nseg, 0.0);
    for (std::size_t i = 0; i < segments.size(); ++i) dot[segments[i]] += y.values[i] * g.values[i];
    Tensor& ga = tp.grad_buffer(a.id);
    for (std::size_t i = 0; i < segments.size(); ++i) ga.values[i] += y.values[i] * (g.values[i] - dot[segments[i]]);
  }, "segment_softmax");
}

inline Var sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  double s = 0.0;
  for (double v : x.values) s += v;
  return t.record(Tensor::scalar(s), {a}, [a](Tape& tp, int self) {
    const double g = tp.grad_of(self).values[0];
    for (double& v : tp.grad_buffer(a.id).values) v += g;
  }, "sum");
}

inline Var mean(Var a) {
  const std::size_t n = a.tape->value(a).size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

inline Var reshape(Var a, std::vector<int> shape) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  if (Tensor::count(shape) != out.size()) throw ShapeError("reshape: " + out.shape_string() + " cannot hold new shape");
  out.shape = std::move(shape);
  return t.record(std::move(out), {a}, [a](Tape& tp, int self) {
    detail::add_into(tp.grad_buffer(a.id), tp.grad_of(self));
  }, "reshape");
}

struct CrossEntropyResult {
  Var loss;
  std::vector<double> per_param;     // unweighted mean over each parameter's masked entries
  std::vector<int> per_param_count;  // masked entries per parameter
  bool empty_mask = false;           // no entry was masked in; loss defined as 0
};

/// Weighted two-class cross-entropy averaged over masked entries. `logits`
/// is F x (2C); entry (i, c) uses columns 2c and 2c+1. `labels` and `mask`
/// are F x C row-major.
inline CrossEntropyResult masked_cross_entropy(Var logits, std::span<const std::uint8_t> labels,
                                               std::span<const std::uint8_t> mask, std::span<const double> weights) {
  Tape& t = *logits.tape;
  const Tensor& z = t.value(logits);
  detail::require_matrix("masked_cross_entropy", z);
  const int f = z.shape[0];
  const int c = static_cast<int>(weights.size());
  if (z.shape[1] != 2 * c || labels.size() != static_cast<std::size_t>(f) * c || mask.size() != labels.size()) {
    throw ShapeError("masked_cross_entropy: logits " + z.shape_string() + " do not match " + std::to_string(c) +
                     " parameters and " + std::to_string(labels.size() / std::max(c, 1)) + " label rows");
  }
  CrossEntropyResult r;
  r.per_param.assign(c, 0.0);
  r.per_param_count.assign(c, 0);
  int total = 0;
  double loss = 0.0;
  Tensor dz = Tensor::matrix(f, 2 * c);
  for (int i = 0; i < f; ++i) {
    for (int k = 0; k < c; ++k) {
      const std::size_t e = static_cast<std::size_t>(i) * c + k;
      if (!mask[e]) continue;
      const double l0 = z(i, 2 * k), l1 = z(i, 2 * k + 1);
      const double m = std::max(l0, l1);
      const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
      const double ce = lse - (labels[e] ? l1 : l0);
      r.per_param[k] += ce;
      ++r.per_param_count[k];
      ++total;
      loss += weights[k] * ce;
      const double p1 = std::exp(l1 - lse);
      dz(i, 2 * k) = weights[k] * ((1.0 - p1) - (labels[e] ? 0.0 : 1.0));
      dz(i, 2 * k + 1) = weights[k] * (p1 - (labels[e] ? 1.0 : 0.0));
    }
  }
  for (int k = 0; k < c; ++k) {
    if (r.per_param_count[k]) r.per_param[k] /= r.per_param_count[k];
  }
  r.empty_mask = total == 0;
  if (total) {
    loss /= total;
    for (double& v : dz.values) v /= total;
  }
  r.loss = t.record(Tensor::scalar(loss), {logits}, [logits, dz = std::move(dz)](Tape& tp, int self) {
    detail::add_into(tp.grad_buffer(logits.id), dz, tp.grad_of(self).values[0]);
  }, "masked_cross_entropy");
  return r;
}

/// Probability of class 1 from a logit pair.
inline double positive_probability(double l0, double l1) { return 1.0 / (1.0 + std::exp(l0 - l1)); }

}  // namespace gsid::num
