#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sempt/alignment.hpp"
#include "sempt/encoder.hpp"
#include "sempt/enhancement.hpp"
#include "sempt/errors.hpp"
#include "sempt/knowledge.hpp"
#include "sempt/params.hpp"
#include "sempt/tensor.hpp"

namespace sempt {

struct HyperParams {
  double alpha = 0.2;       // residual blend weight
  double beta = 0.4;        // loss mixing weight
  int64_t top_k = 2;        // descriptions kept per category
  double tau_loss = 0.07;   // classification temperature
  double tau_align = 0.07;  // alignment softmax temperature
  bool normalize_enhanced = true;
  bool loss_over_seen_only = false;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw ParamError("alpha must lie in [0, 1], got " + std::to_string(alpha));
    if (!(beta >= 0.0 && beta <= 1.0))
      throw ParamError("beta must lie in [0, 1], got " + std::to_string(beta));
    if (top_k < 1) throw ParamError("top_k must be >= 1");
    if (!(tau_loss > 0.0)) throw ParamError("tau_loss must be positive");
    if (!(tau_align > 0.0)) throw ParamError("tau_align must be positive");
  }
};

// Category names with their exposure. Seen categories come first, so loss
// restriction to seen rows is a prefix slice.
struct CategoryRegistry {
  std::vector<std::string> names;
  std::vector<bool> seen;

  static CategoryRegistry from_split(const std::vector<std::string>& seen_names,
                                     const std::vector<std::string>& unseen_names) {
    CategoryRegistry reg;
    for (const auto& n : seen_names) {
      reg.names.push_back(n);
      reg.seen.push_back(true);
    }
    for (const auto& n : unseen_names) {
      reg.names.push_back(n);
      reg.seen.push_back(false);
    }
    reg.validate();
    return reg;
  }

  int64_t size() const { return static_cast<int64_t>(names.size()); }
  int64_t num_seen() const {
    int64_t n = 0;
    for (bool s : seen) n += s ? 1 : 0;
    return n;
  }
  bool is_seen(int64_t i) const { return seen[static_cast<size_t>(i)]; }

  int64_t index_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int64_t>(i);
    throw LookupError("unregistered category: " + name);
  }

  void validate() const {
    if (names.empty()) throw ParamError("category registry is empty");
    if (names.size() != seen.size()) throw ContractError("registry flag/name size mismatch");
    std::set<std::string> uniq(names.begin(), names.end());
    if (uniq.size() != names.size())
      throw ParamError("category registry has duplicate names; seen and unseen sets overlap");
  }
};

struct ModelCounters {
  std::atomic<uint64_t> align_calls{0};
  std::atomic<uint64_t> fuse_calls{0};
};

// ---------------------------------------------------------------------------
// Losses

// Cosine similarities of v against each row, stacked into one vector.
template <typename T>
Tensor<T> similarity_row(Tape<T>& tape, Tensor<T> v, std::span<const Tensor<T>> rows) {
  std::vector<Tensor<T>> sims;
  sims.reserve(rows.size());
  for (const auto& r : rows) sims.push_back(cosine_sim(v, r));
  return stack_scalars(sims);
}

// -log softmax(<v, rows>/tau)[target]
template <typename T>
Tensor<T> classification_loss(Tape<T>& tape, Tensor<T> v, std::span<const Tensor<T>> rows,
                              int64_t target, T tau) {
  if (!(tau > T(0))) throw ParamError("classification temperature must be positive");
  Tensor<T> sims = similarity_row(tape, v, rows);
  return cross_entropy_from_logits(scale(sims, T(1) / tau), target);
}

template <typename T>
Tensor<T> total_loss(Tensor<T> loss_lbl, Tensor<T> loss_enh, T beta) {
  if (!(beta >= T(0) && beta <= T(1)))
    throw ParamError("beta must lie in [0, 1], got " + std::to_string(static_cast<double>(beta)));
  return add(scale(loss_lbl, T(1) - beta), scale(loss_enh, beta));
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
struct SemptModel {
  HyperParams hyper;
  CategoryRegistry registry;
  DescriptionSet descriptions;       // reordered to registry order
  Backend<T> backend;
  ParamStore<T> params;              // prompts (toy backend) + fusion head
  AttributeEmbeddings<T> description_embeddings;
  uint64_t build_seed = 0;
  std::shared_ptr<ModelCounters> counters;
  std::shared_ptr<AlignDiagnostics> align_diag;

  // Prompt parameters exist (and train) only on the toy backend; the
  // precomputed backend serves fixed vectors, so only the fusion head learns.
  bool prompts_trainable() const { return backend.is_toy(); }

  static SemptModel build(HyperParams hyper, CategoryRegistry registry,
                          const DescriptionSet& descriptions, Backend<T> backend,
                          uint64_t seed, const std::string& cache_dir = "") {
    hyper.validate();
    registry.validate();

    // Reorder descriptions to registry order so row i belongs to category i.
    DescriptionSet ordered;
    ordered.attribute_vocabulary = descriptions.attribute_vocabulary;
    for (const auto& name : registry.names) {
      ordered.categories.push_back(name);
      ordered.by_category[name] = descriptions.descriptions_for(name);
    }
    ordered.validate();
    if (hyper.top_k >= ordered.per_category())
      throw ParamError("top_k=" + std::to_string(hyper.top_k) +
                       " must be smaller than the per-category description count " +
                       std::to_string(ordered.per_category()));

    SemptModel model{std::move(hyper),
                     std::move(registry),
                     {},
                     std::move(backend),
                     {},
                     {},
                     seed,
                     std::make_shared<ModelCounters>(),
                     std::make_shared<AlignDiagnostics>()};
    model.descriptions = std::move(ordered);

    const int64_t dim = model.backend.config().embed_dim;
    fusion::init_params(model.params, dim, seed);
    if (model.prompts_trainable()) {
      const auto& enc = model.backend.toy_encoder();
      auto init_prompt = [&](const char* name, Shape shape, const char* tag) {
        std::vector<T> vals(static_cast<size_t>(numel(shape)));
        Rng rng = derive_rng(seed, tag);
        rng.fill_normal(vals, 0.02);
        model.params.add(name, std::move(shape), std::move(vals));
      };
      if (enc.config().visual_prompt_len > 0)
        init_prompt("prompt.visual", enc.visual_prompt_shape(), "prompt.visual");
      if (enc.config().text_prompt_len > 0)
        init_prompt("prompt.text", enc.text_prompt_shape(), "prompt.text");
    }

    model.description_embeddings =
        embed_descriptions(model.descriptions, model.backend, cache_dir);
    return model;
  }
};

// Trainable state bound to one tape. `trainable` false binds plain constants
// (inference with fixed parameters).
template <typename T>
struct BoundModel {
  std::optional<Tensor<T>> visual_prompt;
  std::optional<Tensor<T>> text_prompt;
  fusion::Bound<T> mlp;
  std::vector<std::pair<std::string, Tensor<T>>> leaves;
};

template <typename T>
BoundModel<T> bind_model(Tape<T>& tape, const ParamStore<T>& params, bool trainable) {
  BoundModel<T> bound;
  auto leaf = [&](const std::string& name) {
    const auto& e = params.at(name);
    Tensor<T> t = tape.leaf(e.shape, e.value, trainable);
    bound.leaves.emplace_back(name, t);
    return t;
  };
  if (params.has("prompt.visual")) bound.visual_prompt = leaf("prompt.visual");
  if (params.has("prompt.text")) bound.text_prompt = leaf("prompt.text");
  bound.mlp = fusion::Bound<T>{leaf(fusion::kW1), leaf(fusion::kB1), leaf(fusion::kW2),
                               leaf(fusion::kB2)};
  return bound;
}

template <typename T>
double vector_norm(std::span<const T> v) {
  double sq = 0.0;
  for (T x : v) sq += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(sq);
}

// Label rows for every registered category, in registry order.
template <typename T>
std::vector<Tensor<T>> label_rows(Tape<T>& tape, const SemptModel<T>& model,
                                  const BoundModel<T>& bound) {
  auto rows = encode_labels<T>(tape, model.registry.names, model.backend, bound.text_prompt);
  if (model.align_diag)
    for (const auto& r : rows) model.align_diag->record_unit_norm(vector_norm(r.values()));
  return rows;
}

// Attribute-enhanced row for one category, conditioned on the image
// embedding. With alpha == 0 the label row itself is returned and neither the
// alignment nor the fusion path runs.
template <typename T>
Tensor<T> enhanced_row(Tape<T>& tape, const SemptModel<T>& model, const BoundModel<T>& bound,
                       Tensor<T> v, Tensor<T> label_row, int64_t category,
                       std::vector<AlignmentRow>* diag_rows = nullptr) {
  const T alpha = static_cast<T>(model.hyper.alpha);
  if (alpha == T(0)) return label_row;
  model.counters->align_calls.fetch_add(1, std::memory_order_relaxed);
  CategoryAggregate<T> agg = aggregate_category(
      tape, v, model.description_embeddings, category, model.hyper.top_k,
      static_cast<T>(model.hyper.tau_align), model.align_diag.get(), diag_rows);
  Tensor<T> fused = fuse(tape, label_row, agg.embedding, bound.mlp,
                         &model.counters->fuse_calls);
  Tensor<T> enh = residual_blend(tape, label_row, fused, alpha, model.hyper.normalize_enhanced);
  if (model.align_diag && model.hyper.normalize_enhanced)
    model.align_diag->record_unit_norm(vector_norm(enh.values()));
  return enh;
}

// Enhanced rows for all categories against one image.
template <typename T>
std::vector<Tensor<T>> enhanced_rows(Tape<T>& tape, const SemptModel<T>& model,
                                     const BoundModel<T>& bound, Tensor<T> v,
                                     const std::vector<Tensor<T>>& labels,
                                     std::vector<AlignmentRow>* diag_rows = nullptr) {
  std::vector<Tensor<T>> out;
  out.reserve(labels.size());
  for (int64_t c = 0; c < model.registry.size(); ++c)
    out.push_back(enhanced_row(tape, model, bound, v, labels[static_cast<size_t>(c)], c,
                               diag_rows));
  return out;
}

}  // namespace sempt
