#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sempt/model.hpp"

namespace sempt {

enum class InferenceMode {
  kRouted,       // label rows for seen categories, enhanced rows for unseen
  kLabelOnly,    // label rows everywhere
  kEnhancedAll,  // enhanced rows everywhere
};

inline const char* inference_mode_name(InferenceMode m) {
  switch (m) {
    case InferenceMode::kRouted: return "routed";
    case InferenceMode::kLabelOnly: return "label_only";
    case InferenceMode::kEnhancedAll: return "enhanced_all";
  }
  return "?";
}

struct Prediction {
  int64_t category = -1;
  bool unseen_route = false;           // predicted category took the enhanced path
  std::vector<double> similarities;    // one per registered category
};

// Frozen snapshot of a trained model: label rows are precomputed with the
// trained text prompt, parameters bind as constants. Prediction is pure and
// safe to run from many threads at once.
template <typename T>
class InferenceEngine {
 public:
  HyperParams hyper;
  CategoryRegistry registry;
  ParamStore<T> params;
  std::vector<std::vector<T>> label_row_values;  // N x dim
  AttributeEmbeddings<T> description_embeddings;
  std::shared_ptr<const ToyDualEncoder<T>> encoder;  // null for precomputed models
  std::shared_ptr<ModelCounters> counters = std::make_shared<ModelCounters>();
  std::shared_ptr<AlignDiagnostics> align_diag = std::make_shared<AlignDiagnostics>();

  static InferenceEngine from_model(const SemptModel<T>& model) {
    InferenceEngine eng;
    eng.hyper = model.hyper;
    eng.registry = model.registry;
    eng.params = model.params;
    eng.description_embeddings = model.description_embeddings;
    eng.counters = model.counters;
    eng.align_diag = model.align_diag;
    if (model.backend.is_toy())
      eng.encoder = std::make_shared<ToyDualEncoder<T>>(model.backend.toy_encoder());

    Tape<T> tape;
    BoundModel<T> bound = bind_model(tape, model.params, /*trainable=*/false);
    std::vector<Tensor<T>> rows = label_rows(tape, model, bound);
    for (const auto& r : rows)
      eng.label_row_values.emplace_back(r.values().begin(), r.values().end());
    return eng;
  }

  void note_image_embedding(std::span<const T> v) const {
    if (align_diag) align_diag->record_unit_norm(vector_norm(v));
  }

  int64_t dim() const { return description_embeddings.dim; }

  // Image embedding from raw features through the frozen encoder and the
  // trained visual prompt. Toy models only.
  std::vector<T> embed_features(std::span<const T> features) const {
    if (!encoder)
      throw UnsupportedError(
          "this model was trained on precomputed embeddings; feed embeddings directly");
    Tape<T> tape;
    std::optional<Tensor<T>> prompt;
    if (params.has("prompt.visual")) {
      const auto& e = params.at("prompt.visual");
      prompt = tape.constant(e.shape, e.value);
    }
    Tensor<T> v = encoder->encode_image(tape, features, prompt);
    return std::vector<T>(v.values().begin(), v.values().end());
  }

  // Exposure-aware embedding choice: label row for seen categories, enhanced
  // row (conditioned on this image) for unseen ones.
  std::vector<T> inference_row(int64_t category, std::span<const T> image_embedding) const {
    check_category(category);
    if (registry.is_seen(category)) return label_row_values[static_cast<size_t>(category)];
    return enhanced_row_values(category, image_embedding, nullptr);
  }

  std::vector<T> enhanced_row_values(int64_t category, std::span<const T> image_embedding,
                                     std::vector<AlignmentRow>* diag_rows) const {
    check_category(category);
    if (hyper.alpha == 0.0) return label_row_values[static_cast<size_t>(category)];
    Tape<T> tape;
    BoundModel<T> bound = bind_model(tape, params, /*trainable=*/false);
    Tensor<T> v = tape.constant(Shape{dim()},
                                std::vector<T>(image_embedding.begin(), image_embedding.end()));
    Tensor<T> label = tape.constant(Shape{dim()}, label_row_values[static_cast<size_t>(category)]);
    counters->align_calls.fetch_add(1, std::memory_order_relaxed);
    CategoryAggregate<T> agg = aggregate_category(
        tape, v, description_embeddings, category, hyper.top_k,
        static_cast<T>(hyper.tau_align), align_diag.get(), diag_rows);
    Tensor<T> fused = fuse(tape, label, agg.embedding, bound.mlp, &counters->fuse_calls);
    Tensor<T> enh = residual_blend(tape, label, fused, static_cast<T>(hyper.alpha),
                                   hyper.normalize_enhanced);
    if (align_diag && hyper.normalize_enhanced)
      align_diag->record_unit_norm(vector_norm(enh.values()));
    return std::vector<T>(enh.values().begin(), enh.values().end());
  }

  // Argmax of cosine similarity over all registered categories; ties go to
  // the lowest index. The full similarity vector is returned for analysis.
  Prediction predict(std::span<const T> image_embedding,
                     InferenceMode mode = InferenceMode::kRouted,
                     std::vector<AlignmentRow>* diag_rows = nullptr) const {
    Prediction pred;
    const int64_t n = registry.size();
    pred.similarities.resize(static_cast<size_t>(n));
    std::vector<bool> enhanced_used(static_cast<size_t>(n), false);
    for (int64_t c = 0; c < n; ++c) {
      std::vector<T> row;
      const bool use_enhanced =
          mode == InferenceMode::kEnhancedAll ||
          (mode == InferenceMode::kRouted && !registry.is_seen(c));
      if (use_enhanced) {
        row = enhanced_row_values(c, image_embedding, diag_rows);
        enhanced_used[static_cast<size_t>(c)] = true;
      } else {
        row = label_row_values[static_cast<size_t>(c)];
      }
      pred.similarities[static_cast<size_t>(c)] = cosine(image_embedding, row);
    }
    pred.category = 0;
    for (int64_t c = 1; c < n; ++c)
      if (pred.similarities[static_cast<size_t>(c)] >
          pred.similarities[static_cast<size_t>(pred.category)])
        pred.category = c;
    pred.unseen_route = enhanced_used[static_cast<size_t>(pred.category)];
    return pred;
  }

 private:
  void check_category(int64_t category) const {
    if (category < 0 || category >= registry.size())
      throw LookupError("unregistered category index " + std::to_string(category));
  }

  static double cosine(std::span<const T> a, std::span<const T> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
      na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
      nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
  }
};

}  // namespace sempt
