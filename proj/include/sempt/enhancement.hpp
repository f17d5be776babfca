#pragma once

#include <atomic>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sempt/encoder.hpp"
#include "sempt/errors.hpp"
#include "sempt/params.hpp"
#include "sempt/rng.hpp"
#include "sempt/strings.hpp"
#include "sempt/tensor.hpp"

namespace sempt {

inline std::string label_template(const std::string& category) {
  const std::string name = to_lower(trim(category));
  if (name.empty()) throw ParamError("label_template: empty category name");
  return "a photo of a " + name + ".";
}

// Two-layer fusion head: concat(label, aligned) -> hidden -> output, widths
// 2d -> d -> d with a tanh hidden layer. The final layer starts at zero so an
// untrained model reproduces the label-only solution.
namespace fusion {

inline const char* kW1 = "mlp.w1";
inline const char* kB1 = "mlp.b1";
inline const char* kW2 = "mlp.w2";
inline const char* kB2 = "mlp.b2";

template <typename T>
void init_params(ParamStore<T>& store, int64_t dim, uint64_t seed) {
  const int64_t in = 2 * dim;
  std::vector<T> w1(static_cast<size_t>(in * dim));
  Rng rng = derive_rng(seed, "fusion.w1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  rng.fill_uniform(w1, -bound, bound);
  store.add(kW1, Shape{in, dim}, std::move(w1));
  store.add(kB1, Shape{dim}, std::vector<T>(static_cast<size_t>(dim), T(0)));
  store.add(kW2, Shape{dim, dim}, std::vector<T>(static_cast<size_t>(dim * dim), T(0)));
  store.add(kB2, Shape{dim}, std::vector<T>(static_cast<size_t>(dim), T(0)));
}

template <typename T>
struct Bound {
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
Bound<T> bind(Tape<T>& tape, const ParamStore<T>& store, bool trainable = true) {
  auto leaf = [&](const char* name) {
    const auto& e = store.at(name);
    return tape.leaf(e.shape, e.value, trainable);
  };
  return Bound<T>{leaf(kW1), leaf(kB1), leaf(kW2), leaf(kB2)};
}

template <typename T>
Tensor<T> apply(Tape<T>& tape, Tensor<T> input, const Bound<T>& mlp) {
  (void)tape;
  Tensor<T> hidden = tanh_act(add(vecmat(input, mlp.w1), mlp.b1));
  return add(vecmat(hidden, mlp.w2), mlp.b2);
}

}  // namespace fusion

// Label embeddings through the prompt-aware text path, one per category, in
// registry order.
template <typename T>
std::vector<Tensor<T>> encode_labels(Tape<T>& tape, std::span<const std::string> categories,
                                     const Backend<T>& backend,
                                     std::optional<Tensor<T>> text_prompt) {
  std::vector<Tensor<T>> rows;
  rows.reserve(categories.size());
  for (const auto& c : categories)
    rows.push_back(backend.text_embedding(tape, label_template(c), text_prompt));
  return rows;
}

// Concatenate label and aligned embeddings and run the fusion head. Gradient
// reaches the MLP parameters and both inputs.
template <typename T>
Tensor<T> fuse(Tape<T>& tape, Tensor<T> label_embedding, Tensor<T> aligned_embedding,
               const fusion::Bound<T>& mlp, std::atomic<uint64_t>* fuse_counter = nullptr) {
  if (label_embedding.shape() != aligned_embedding.shape())
    throw ShapeError("fuse: width mismatch " + shape_str(label_embedding.shape()) + " vs " +
                     shape_str(aligned_embedding.shape()));
  const int64_t dim = label_embedding.size();
  if (mlp.w1.shape()[0] != 2 * dim)
    throw ShapeError("fuse: fusion head expects input width " +
                     std::to_string(mlp.w1.shape()[0]) + ", got " + std::to_string(2 * dim));
  if (fuse_counter) fuse_counter->fetch_add(1, std::memory_order_relaxed);
  return fusion::apply(tape, concat_last(label_embedding, aligned_embedding), mlp);
}

// Residual blend (1-alpha) * label + alpha * fused, then L2 normalization
// (the normalization is toggleable; cosine losses make the scale irrelevant).
// alpha == 0 short-circuits to the label embedding itself, which keeps the
// identity exact down to the bit.
template <typename T>
Tensor<T> residual_blend(Tape<T>& tape, Tensor<T> label_embedding, Tensor<T> fused,
                         T alpha, bool renormalize = true) {
  (void)tape;
  if (!(alpha >= T(0) && alpha <= T(1)))
    throw ParamError("residual blend weight must lie in [0, 1], got " +
                     std::to_string(static_cast<double>(alpha)));
  if (alpha == T(0)) return label_embedding;
  if (label_embedding.shape() != fused.shape())
    throw ShapeError("residual_blend: shape mismatch " + shape_str(label_embedding.shape()) +
                     " vs " + shape_str(fused.shape()));
  Tensor<T> mixed = add(scale(label_embedding, T(1) - alpha), scale(fused, alpha));
  return renormalize ? l2_normalize_last(mixed) : mixed;
}

}  // namespace sempt
