#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sempt/errors.hpp"
#include "sempt/kernels.hpp"

// Tape-based reverse-mode autodiff over dense row-major tensors. float is the
// training/inference precision; the same code instantiates with double for
// gradient verification. Tensors are immutable once created; only grad
// buffers mutate. A tape is single-threaded, but independent tapes may live
// on different threads.

namespace sempt {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
class Tape;

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  int32_t id() const { return id_; }

  const Shape& shape() const;
  int64_t size() const { return numel(shape()); }
  std::span<const T> values() const;
  std::span<const T> grad() const;
  bool requires_grad() const;

  T scalar() const {
    if (size() != 1) throw ContractError("scalar() on tensor of shape " + shape_str(shape()));
    return values()[0];
  }

 private:
  friend class Tape<T>;
  Tensor(Tape<T>* tape, int32_t id) : tape_(tape), id_(id) {}
  Tape<T>* tape_ = nullptr;
  int32_t id_ = -1;
};

template <typename T>
class Tape {
 public:
  // pull propagates the node's grad into its parents' grads.
  using PullFn = std::function<void(Tape<T>&, int32_t self)>;

  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // lazily sized
    bool requires_grad = false;
    PullFn pull;  // empty for leaves/constants
  };

  Tensor<T> leaf(Shape shape, std::vector<T> values, bool requires_grad) {
    check_payload(shape, values);
    nodes_.push_back(Node{std::move(shape), std::move(values), {}, requires_grad, {}});
    return Tensor<T>(this, static_cast<int32_t>(nodes_.size() - 1));
  }

  Tensor<T> constant(Shape shape, std::vector<T> values) {
    return leaf(std::move(shape), std::move(values), false);
  }

  Tensor<T> constant(Shape shape, std::span<const T> values) {
    return leaf(std::move(shape), std::vector<T>(values.begin(), values.end()), false);
  }

  Tensor<T> scalar_const(T v) { return constant(Shape{1}, std::vector<T>{v}); }

  Tensor<T> emplace(Shape shape, std::vector<T> values, PullFn pull) {
    check_payload(shape, values);
    nodes_.push_back(Node{std::move(shape), std::move(values), {}, false, std::move(pull)});
    return Tensor<T>(this, static_cast<int32_t>(nodes_.size() - 1));
  }

  Node& node(int32_t id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }
  int64_t node_count() const { return static_cast<int64_t>(nodes_.size()); }

  // Grad accumulation target, allocated on first touch.
  std::span<T> grad_span(int32_t id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

  std::span<const T> value_span(int32_t id) const { return node(id).value; }

  // Reverse sweep. Repeated calls without zero_grad() accumulate into leaf
  // grads; interior grads are rebuilt per call.
  void backward(Tensor<T> loss) {
    if (loss.tape() != this) throw ContractError("backward: loss lives on another tape");
    if (loss.size() != 1)
      throw ContractError("backward requires a scalar loss, got shape " +
                          shape_str(loss.shape()));
    for (auto& n : nodes_) {
      if (n.pull && !n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), T(0));
    }
    grad_span(loss.id())[0] += T(1);
    for (int32_t id = loss.id(); id >= 0; --id) {
      Node& n = node(id);
      if (!n.pull || n.grad.empty()) continue;
      n.pull(*this, id);
    }
  }

  void zero_grad() {
    for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), T(0));
  }

 private:
  static void check_payload(const Shape& shape, const std::vector<T>& values) {
    if (numel(shape) != static_cast<int64_t>(values.size()))
      throw ShapeError("tensor payload of " + std::to_string(values.size()) +
                       " values does not match shape " + shape_str(shape));
  }
  std::vector<Node> nodes_;
};

template <typename T>
const Shape& Tensor<T>::shape() const {
  return tape_->node(id_).shape;
}
template <typename T>
std::span<const T> Tensor<T>::values() const {
  return tape_->node(id_).value;
}
template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return tape_->node(id_).grad;
}
template <typename T>
bool Tensor<T>::requires_grad() const {
  return tape_->node(id_).requires_grad;
}

namespace detail {

template <typename T>
Tape<T>& same_tape(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.tape() != b.tape()) throw ContractError("operands live on different tapes");
  return *a.tape();
}

inline void require_rank(const Shape& s, size_t rank, const char* op) {
  if (s.size() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_str(s));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations

template <typename T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  detail::require_rank(a.shape(), 2, "matmul");
  detail::require_rank(b.shape(), 2, "matmul");
  const int64_t m = a.shape()[0], k = a.shape()[1];
  if (b.shape()[0] != k)
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const int64_t n = b.shape()[1];
  std::vector<T> out(static_cast<size_t>(m * n));
  kernels::matmul_nn(a.values().data(), b.values().data(), out.data(), m, k, n, false);
  const int32_t aid = a.id(), bid = b.id();
  return tape.emplace(
      Shape{m, n}, std::move(out), [aid, bid, m, k, n](Tape<T>& t, int32_t self) {
        const T* g = t.node(self).grad.data();
        kernels::matmul_nt(g, t.value_span(bid).data(), t.grad_span(aid).data(), m, n, k, true);
        kernels::matmul_tn(t.value_span(aid).data(), g, t.grad_span(bid).data(), k, m, n, true);
      });
}

// out(r) = m(r x c) * v(c)
template <typename T>
Tensor<T> matvec(Tensor<T> m, Tensor<T> v) {
  Tape<T>& tape = detail::same_tape(m, v);
  detail::require_rank(m.shape(), 2, "matvec");
  detail::require_rank(v.shape(), 1, "matvec");
  const int64_t r = m.shape()[0], c = m.shape()[1];
  if (v.shape()[0] != c)
    throw ShapeError("matvec: " + shape_str(m.shape()) + " vs " + shape_str(v.shape()));
  std::vector<T> out(static_cast<size_t>(r));
  kernels::matmul_nn(m.values().data(), v.values().data(), out.data(), r, c, 1, false);
  const int32_t mid = m.id(), vid = v.id();
  return tape.emplace(Shape{r}, std::move(out), [mid, vid, r, c](Tape<T>& t, int32_t self) {
    const auto g = t.node(self).grad;
    const auto mv = t.value_span(mid);
    const auto vv = t.value_span(vid);
    auto gm = t.grad_span(mid);
    auto gv = t.grad_span(vid);
    for (int64_t i = 0; i < r; ++i) {
      const T gi = g[static_cast<size_t>(i)];
      for (int64_t j = 0; j < c; ++j) {
        gm[static_cast<size_t>(i * c + j)] += gi * vv[static_cast<size_t>(j)];
        gv[static_cast<size_t>(j)] += gi * mv[static_cast<size_t>(i * c + j)];
      }
    }
  });
}

// out(c) = v(r) * m(r x c)
template <typename T>
Tensor<T> vecmat(Tensor<T> v, Tensor<T> m) {
  Tape<T>& tape = detail::same_tape(v, m);
  detail::require_rank(v.shape(), 1, "vecmat");
  detail::require_rank(m.shape(), 2, "vecmat");
  const int64_t r = m.shape()[0], c = m.shape()[1];
  if (v.shape()[0] != r)
    throw ShapeError("vecmat: " + shape_str(v.shape()) + " vs " + shape_str(m.shape()));
  std::vector<T> out(static_cast<size_t>(c));
  kernels::matmul_nn(v.values().data(), m.values().data(), out.data(), 1, r, c, false);
  const int32_t vid = v.id(), mid = m.id();
  return tape.emplace(Shape{c}, std::move(out), [vid, mid, r, c](Tape<T>& t, int32_t self) {
    const auto g = t.node(self).grad;
    const auto mv = t.value_span(mid);
    const auto vv = t.value_span(vid);
    auto gm = t.grad_span(mid);
    auto gv = t.grad_span(vid);
    for (int64_t i = 0; i < r; ++i) {
      const T vi = vv[static_cast<size_t>(i)];
      T acc = T(0);
      for (int64_t j = 0; j < c; ++j) {
        const T gj = g[static_cast<size_t>(j)];
        gm[static_cast<size_t>(i * c + j)] += vi * gj;
        acc += gj * mv[static_cast<size_t>(i * c + j)];
      }
      gv[static_cast<size_t>(i)] += acc;
    }
  });
}

// Same-shape elementwise add, or (r x c) + (c) broadcast over rows.
template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool same = sa == sb;
  const bool row_bcast = sa.size() == 2 && sb.size() == 1 && sa[1] == sb[0];
  if (!same && !row_bcast)
    throw ShapeError("add: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  std::vector<T> out(a.values().begin(), a.values().end());
  if (same) {
    const auto bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  } else {
    const auto bv = b.values();
    const int64_t rows = sa[0], cols = sa[1];
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j)
        out[static_cast<size_t>(i * cols + j)] += bv[static_cast<size_t>(j)];
  }
  const int32_t aid = a.id(), bid = b.id();
  if (same) {
    return tape.emplace(sa, std::move(out), [aid, bid](Tape<T>& t, int32_t self) {
      const auto g = t.node(self).grad;
      auto ga = t.grad_span(aid);
      auto gb = t.grad_span(bid);
      for (size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
    });
  }
  const int64_t rows = sa[0], cols = sa[1];
  return tape.emplace(sa, std::move(out), [aid, bid, rows, cols](Tape<T>& t, int32_t self) {
    const auto g = t.node(self).grad;
    auto ga = t.grad_span(aid);
    auto gb = t.grad_span(bid);
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j) {
        const size_t idx = static_cast<size_t>(i * cols + j);
        ga[idx] += g[idx];
        gb[static_cast<size_t>(j)] += g[idx];
      }
  });
}

template <typename T>
Tensor<T> scale(Tensor<T> a, T factor) {
  Tape<T>& tape = *a.tape();
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  const int32_t aid = a.id();
  return tape.emplace(a.shape(), std::move(out), [aid, factor](Tape<T>& t, int32_t self) {
    const auto g = t.node(self).grad;
    kernels::add_scaled(t.grad_span(aid).data(), g.data(), factor, static_cast<int64_t>(g.size()));
  });
}

template <typename T>
Tensor<T> sub(Tensor<T> a, Tensor<T> b) {
  return add(a, scale(b, T(-1)));
}

// Multiply a tensor by a scalar tensor (the scalar participates in autodiff).
template <typename T>
Tensor<T> scale_by(Tensor<T> a, Tensor<T> s) {
  Tape<T>& tape = detail::same_tape(a, s);
  if (s.size() != 1) throw ShapeError("scale_by: scale must be a scalar tensor");
  const T sv = s.values()[0];
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= sv;
  const int32_t aid = a.id(), sid = s.id();
  return tape.emplace(a.shape(), std::move(out), [aid, sid, sv](Tape<T>& t, int32_t self) {
    const auto g = t.node(self).grad;
    const auto av = t.value_span(aid);
    auto ga = t.grad_span(aid);
    auto gs = t.grad_span(sid);
    T acc = T(0);
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += sv * g[i];
      acc += g[i] * av[i];
    }
    gs[0] += acc;
  });
}

// Concatenate two vectors along the (only) axis.
template <typename T>
Tensor<T> concat_last(Tensor<T> a, Tensor<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  detail::require_rank(a.shape(), 1, "concat_last");
  detail::require_rank(b.shape(), 1, "concat_last");
  const int64_t p = a.shape()[0], q = b.shape()[0];
  std::vector<T> out;
  out.reserve(static_cast<size_t>(p + q));
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  const int32_t aid = a.id(), bid = b.id();
  return tape.emplace(Shape{p + q}, std::move(out), [aid, bid, p, q](Tape<T>& t, int32_t self) {
    const auto g = t.node(self).grad;
    auto ga = t.grad_span(aid);
    auto gb = t.grad_span(bid);
    for (int64_t i = 0; i < p; ++i) ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
    for (int64_t i = 0; i < q; ++i) gb[static_cast<size_t>(i)] += g[static_cast<size_t>(p + i)];
  });
}

// Stack two matrices vertically: (p x c) over (q x c).
template <typename T>
Tensor<T> concat_rows(Tensor<T> a, Tensor<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  detail::require_rank(a.shape(), 2, "concat_rows");
  detail::require_rank(b.shape(), 2, "concat_rows");
  if (a.shape()[1] != b.shape()[1])
    throw ShapeError("concat_rows: column mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const int64_t p = a.shape()[0], q = b.shape()[0], c = a.shape()[1];
  std::vector<T> out;
  out.reserve(static_cast<size_t>((p + q) * c));
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  const int32_t aid = a.id(), bid = b.id();
  return tape.emplace(Shape{p + q, c}, std::move(out),
                      [aid, bid, p, q, c](Tape<T>& t, int32_t self) {
                        const auto g = t.node(self).grad;
                        auto ga = t.grad_span(aid);
                        auto gb = t.grad_span(bid);
                        for (int64_t i = 0; i < p * c; ++i)
                          ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
                        for (int64_t i = 0; i < q * c; ++i)
                          gb[static_cast<size_t>(i)] += g[static_cast<size_t>(p * c + i)];
                      });
}

template <typename T>
Tensor<T> tanh_act(Tensor<T> a) {
  Tape<T>& tape = *a.tape();
  std::vector<T> out(a.size());
  kernels::tanh_map(a.values().data(), out.data(), a.size());
  const int32_t aid = a.id();
  return tape.emplace(a.shape(), std::move(out), [aid](Tape<T>& t, int32_t self) {
    const auto g = t.node(self).grad;
    const auto y = t.value_span(self);
    auto ga = t.grad_span(aid);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
  });
}

// Temperature-scaled softmax along the last axis, max-subtracted for
// stability. Requires temperature > 0.
template <typename T>
Tensor<T> softmax_last(Tensor<T> a, T temperature) {
  if (!(temperature > T(0)))
    throw ParamError("softmax temperature must be positive, got " +
                     std::to_string(static_cast<double>(temperature)));
  Tape<T>& tape = *a.tape();
  const Shape& s = a.shape();
  if (s.empty()) throw ShapeError("softmax_last: rank-0 input");
  const int64_t cols = s.back();
  const int64_t rows = numel(s) / cols;
  std::vector<T> out(a.size());
  const T inv_temp = T(1) / temperature;
  kernels::softmax_rows(a.values().data(), out.data(), rows, cols, inv_temp);
  const int32_t aid = a.id();
  return tape.emplace(s, std::move(out), [aid, rows, cols, inv_temp](Tape<T>& t, int32_t self) {
    const auto g = t.node(self).grad;
    const auto y = t.value_span(self);
    auto ga = t.grad_span(aid);
    for (int64_t i = 0; i < rows; ++i) {
      const size_t base = static_cast<size_t>(i * cols);
      T dot = T(0);
      for (int64_t j = 0; j < cols; ++j) dot += g[base + j] * y[base + j];
      for (int64_t j = 0; j < cols; ++j)
        ga[base + j] += inv_temp * y[base + j] * (g[base + j] - dot);
    }
  });
}

template <typename T>
Tensor<T> log_op(Tensor<T> a) {
  Tape<T>& tape = *a.tape();
  std::vector<T> out(a.size());
  const auto av = a.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(av[i]);
  const int32_t aid = a.id();
  return tape.emplace(a.shape(), std::move(out), [aid](Tape<T>& t, int32_t self) {
    const auto g = t.node(self).grad;
    const auto x = t.value_span(aid);
    auto ga = t.grad_span(aid);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  });
}

// L2 normalization along the last axis. Zero-norm rows are rejected.
template <typename T>
Tensor<T> l2_normalize_last(Tensor<T> a) {
  Tape<T>& tape = *a.tape();
  const Shape& s = a.shape();
  if (s.empty()) throw ShapeError("l2_normalize_last: rank-0 input");
  const int64_t cols = s.back();
  const int64_t rows = numel(s) / cols;
  std::vector<T> out(a.size());
  std::vector<T> norms(static_cast<size_t>(rows));
  kernels::l2_normalize_rows(a.values().data(), out.data(), norms.data(), rows, cols);
  for (int64_t i = 0; i < rows; ++i)
    if (norms[static_cast<size_t>(i)] == T(0))
      throw DegenerateInputError("l2_normalize: zero-norm row " + std::to_string(i));
  const int32_t aid = a.id();
  return tape.emplace(s, std::move(out),
                      [aid, rows, cols, norms](Tape<T>& t, int32_t self) {
                        const auto g = t.node(self).grad;
                        const auto y = t.value_span(self);
                        auto ga = t.grad_span(aid);
                        for (int64_t i = 0; i < rows; ++i) {
                          const size_t base = static_cast<size_t>(i * cols);
                          T dot = T(0);
                          for (int64_t j = 0; j < cols; ++j) dot += g[base + j] * y[base + j];
                          const T inv = T(1) / norms[static_cast<size_t>(i)];
                          for (int64_t j = 0; j < cols; ++j)
                            ga[base + j] += (g[base + j] - y[base + j] * dot) * inv;
                        }
                      });
}

// Cosine similarity of two vectors; scalar output in [-1, 1].
template <typename T>
Tensor<T> cosine_sim(Tensor<T> a, Tensor<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  detail::require_rank(a.shape(), 1, "cosine_sim");
  detail::require_rank(b.shape(), 1, "cosine_sim");
  if (a.shape()[0] != b.shape()[0])
    throw ShapeError("cosine_sim: length mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const auto av = a.values();
  const auto bv = b.values();
  T dot = T(0), na2 = T(0), nb2 = T(0);
  for (size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    na2 += av[i] * av[i];
    nb2 += bv[i] * bv[i];
  }
  const T na = std::sqrt(na2), nb = std::sqrt(nb2);
  if (na == T(0) || nb == T(0))
    throw DegenerateInputError("cosine_sim: zero-norm input vector");
  const T y = dot / (na * nb);
  const int32_t aid = a.id(), bid = b.id();
  return tape.emplace(Shape{1}, std::vector<T>{y},
                      [aid, bid, na, nb, y](Tape<T>& t, int32_t self) {
                        const T g = t.node(self).grad[0];
                        const auto av2 = t.value_span(aid);
                        const auto bv2 = t.value_span(bid);
                        auto ga = t.grad_span(aid);
                        auto gb = t.grad_span(bid);
                        const T inv_ab = T(1) / (na * nb);
                        const T inv_a2 = T(1) / (na * na);
                        const T inv_b2 = T(1) / (nb * nb);
                        for (size_t i = 0; i < av2.size(); ++i) {
                          ga[i] += g * (bv2[i] * inv_ab - y * av2[i] * inv_a2);
                          gb[i] += g * (av2[i] * inv_ab - y * bv2[i] * inv_b2);
                        }
                      });
}

// Select rows of a matrix; duplicate indices accumulate in backward.
template <typename T>
Tensor<T> gather_rows(Tensor<T> m, std::vector<int64_t> indices) {
  Tape<T>& tape = *m.tape();
  detail::require_rank(m.shape(), 2, "gather_rows");
  const int64_t rows = m.shape()[0], cols = m.shape()[1];
  for (int64_t idx : indices)
    if (idx < 0 || idx >= rows)
      throw ParamError("gather_rows: index " + std::to_string(idx) + " out of range [0, " +
                       std::to_string(rows) + ")");
  std::vector<T> out(indices.size() * static_cast<size_t>(cols));
  const auto mv = m.values();
  for (size_t i = 0; i < indices.size(); ++i)
    for (int64_t j = 0; j < cols; ++j)
      out[i * static_cast<size_t>(cols) + static_cast<size_t>(j)] =
          mv[static_cast<size_t>(indices[i] * cols + j)];
  const int32_t mid = m.id();
  return tape.emplace(Shape{static_cast<int64_t>(indices.size()), cols}, std::move(out),
                      [mid, cols, indices](Tape<T>& t, int32_t self) {
                        const auto g = t.node(self).grad;
                        auto gm = t.grad_span(mid);
                        for (size_t i = 0; i < indices.size(); ++i)
                          for (int64_t j = 0; j < cols; ++j)
                            gm[static_cast<size_t>(indices[i] * cols + j)] +=
                                g[i * static_cast<size_t>(cols) + static_cast<size_t>(j)];
                      });
}

template <typename T>
Tensor<T> stack_scalars(const std::vector<Tensor<T>>& scalars) {
  if (scalars.empty()) throw ShapeError("stack_scalars: empty input");
  Tape<T>& tape = *scalars.front().tape();
  std::vector<T> out;
  std::vector<int32_t> ids;
  out.reserve(scalars.size());
  ids.reserve(scalars.size());
  for (const auto& s : scalars) {
    if (s.tape() != &tape) throw ContractError("stack_scalars: mixed tapes");
    if (s.size() != 1) throw ShapeError("stack_scalars: non-scalar element");
    out.push_back(s.values()[0]);
    ids.push_back(s.id());
  }
  return tape.emplace(Shape{static_cast<int64_t>(out.size())}, std::move(out),
                      [ids](Tape<T>& t, int32_t self) {
                        const auto g = t.node(self).grad;
                        for (size_t i = 0; i < ids.size(); ++i) t.grad_span(ids[i])[0] += g[i];
                      });
}

template <typename T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty input");
  Tape<T>& tape = *rows.front().tape();
  const int64_t cols = rows.front().size();
  std::vector<T> out;
  std::vector<int32_t> ids;
  out.reserve(rows.size() * static_cast<size_t>(cols));
  for (const auto& r : rows) {
    if (r.tape() != &tape) throw ContractError("stack_rows: mixed tapes");
    detail::require_rank(r.shape(), 1, "stack_rows");
    if (r.size() != cols) throw ShapeError("stack_rows: ragged rows");
    out.insert(out.end(), r.values().begin(), r.values().end());
    ids.push_back(r.id());
  }
  return tape.emplace(Shape{static_cast<int64_t>(rows.size()), cols}, std::move(out),
                      [ids, cols](Tape<T>& t, int32_t self) {
                        const auto g = t.node(self).grad;
                        for (size_t i = 0; i < ids.size(); ++i) {
                          auto gr = t.grad_span(ids[i]);
                          for (int64_t j = 0; j < cols; ++j)
                            gr[static_cast<size_t>(j)] +=
                                g[i * static_cast<size_t>(cols) + static_cast<size_t>(j)];
                        }
                      });
}

// out(d) = sum_i w(i) * m(i, :). Gradient reaches both the weights and the
// row matrix.
template <typename T>
Tensor<T> weighted_sum_rows(Tensor<T> m, Tensor<T> w) {
  Tape<T>& tape = detail::same_tape(m, w);
  detail::require_rank(m.shape(), 2, "weighted_sum_rows");
  detail::require_rank(w.shape(), 1, "weighted_sum_rows");
  const int64_t k = m.shape()[0], d = m.shape()[1];
  if (w.shape()[0] != k)
    throw ShapeError("weighted_sum_rows: " + shape_str(m.shape()) + " vs " +
                     shape_str(w.shape()));
  std::vector<T> out(static_cast<size_t>(d), T(0));
  const auto mv = m.values();
  const auto wv = w.values();
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < d; ++j)
      out[static_cast<size_t>(j)] +=
          wv[static_cast<size_t>(i)] * mv[static_cast<size_t>(i * d + j)];
  const int32_t mid = m.id(), wid = w.id();
  return tape.emplace(Shape{d}, std::move(out), [mid, wid, k, d](Tape<T>& t, int32_t self) {
    const auto g = t.node(self).grad;
    const auto mv2 = t.value_span(mid);
    const auto wv2 = t.value_span(wid);
    auto gm = t.grad_span(mid);
    auto gw = t.grad_span(wid);
    for (int64_t i = 0; i < k; ++i) {
      T acc = T(0);
      for (int64_t j = 0; j < d; ++j) {
        acc += g[static_cast<size_t>(j)] * mv2[static_cast<size_t>(i * d + j)];
        gm[static_cast<size_t>(i * d + j)] +=
            wv2[static_cast<size_t>(i)] * g[static_cast<size_t>(j)];
      }
      gw[static_cast<size_t>(i)] += acc;
    }
  });
}

// Column means of a matrix: (r x c) -> (c).
template <typename T>
Tensor<T> mean_rows(Tensor<T> m) {
  Tape<T>& tape = *m.tape();
  detail::require_rank(m.shape(), 2, "mean_rows");
  const int64_t r = m.shape()[0], c = m.shape()[1];
  if (r == 0) throw ShapeError("mean_rows: empty matrix");
  std::vector<T> out(static_cast<size_t>(c), T(0));
  const auto mv = m.values();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j)
      out[static_cast<size_t>(j)] += mv[static_cast<size_t>(i * c + j)];
  const T inv = T(1) / static_cast<T>(r);
  for (auto& v : out) v *= inv;
  const int32_t mid = m.id();
  return tape.emplace(Shape{c}, std::move(out), [mid, r, c, inv](Tape<T>& t, int32_t self) {
    const auto g = t.node(self).grad;
    auto gm = t.grad_span(mid);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j)
        gm[static_cast<size_t>(i * c + j)] += g[static_cast<size_t>(j)] * inv;
  });
}

template <typename T>
Tensor<T> sum_all(Tensor<T> a) {
  Tape<T>& tape = *a.tape();
  T acc = T(0);
  for (T v : a.values()) acc += v;
  const int32_t aid = a.id();
  return tape.emplace(Shape{1}, std::vector<T>{acc}, [aid](Tape<T>& t, int32_t self) {
    const T g = t.node(self).grad[0];
    auto ga = t.grad_span(aid);
    for (auto& v : ga) v += g;
  });
}

template <typename T>
Tensor<T> mean_all(Tensor<T> a) {
  Tape<T>& tape = *a.tape();
  T acc = T(0);
  for (T v : a.values()) acc += v;
  const T inv = T(1) / static_cast<T>(a.size());
  const int32_t aid = a.id();
  return tape.emplace(Shape{1}, std::vector<T>{acc * inv}, [aid, inv](Tape<T>& t, int32_t self) {
    const T g = t.node(self).grad[0] * inv;
    auto ga = t.grad_span(aid);
    for (auto& v : ga) v += g;
  });
}

// -log softmax(logits)[target], computed via logsumexp for stability.
template <typename T>
Tensor<T> cross_entropy_from_logits(Tensor<T> logits, int64_t target) {
  Tape<T>& tape = *logits.tape();
  detail::require_rank(logits.shape(), 1, "cross_entropy_from_logits");
  const int64_t n = logits.shape()[0];
  if (target < 0 || target >= n)
    throw ParamError("cross_entropy: target " + std::to_string(target) +
                     " out of range [0, " + std::to_string(n) + ")");
  const auto lv = logits.values();
  T mx = lv[0];
  for (int64_t j = 1; j < n; ++j) mx = lv[static_cast<size_t>(j)] > mx ? lv[static_cast<size_t>(j)] : mx;
  T sum = T(0);
  std::vector<T> probs(static_cast<size_t>(n));
  for (int64_t j = 0; j < n; ++j) {
    probs[static_cast<size_t>(j)] = std::exp(lv[static_cast<size_t>(j)] - mx);
    sum += probs[static_cast<size_t>(j)];
  }
  const T inv = T(1) / sum;
  for (auto& p : probs) p *= inv;
  const T loss = std::log(sum) + mx - lv[static_cast<size_t>(target)];
  const int32_t lid = logits.id();
  return tape.emplace(Shape{1}, std::vector<T>{loss},
                      [lid, target, probs](Tape<T>& t, int32_t self) {
                        const T g = t.node(self).grad[0];
                        auto gl = t.grad_span(lid);
                        for (size_t j = 0; j < probs.size(); ++j) gl[j] += g * probs[j];
                        gl[static_cast<size_t>(target)] -= g;
                      });
}

}  // namespace sempt
