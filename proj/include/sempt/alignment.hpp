#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sempt/bank.hpp"
#include "sempt/strings.hpp"
#include "sempt/encoder.hpp"
#include "sempt/errors.hpp"
#include "sempt/knowledge.hpp"
#include "sempt/tensor.hpp"

namespace sempt {

// Normalized description embeddings, one row per (category, description).
// These never depend on trainable parameters, so they are plain values.
template <typename T>
struct AttributeEmbeddings {
  int64_t num_categories = 0;
  int64_t per_category = 0;
  int64_t dim = 0;
  std::vector<T> values;  // num_categories * per_category * dim
  uint64_t content_hash = 0;

  std::span<const T> row(int64_t category, int64_t j) const {
    const int64_t base = (category * per_category + j) * dim;
    return std::span<const T>(values.data() + base, static_cast<size_t>(dim));
  }
};

// Running invariants collected while aggregating; read back by the
// acceptance suite after full runs. Thread-safe for parallel inference.
struct AlignDiagnostics {
  double max_weight_sum_err = 0.0;
  double min_embedding_norm = std::numeric_limits<double>::infinity();
  double max_embedding_norm = 0.0;
  uint64_t aggregates = 0;
  double max_unit_norm_err = 0.0;  // encoder outputs and enhanced rows
  uint64_t unit_rows = 0;

  void record(double weight_sum_err, double embedding_norm) {
    std::lock_guard<std::mutex> lock(mu_);
    max_weight_sum_err = std::max(max_weight_sum_err, weight_sum_err);
    min_embedding_norm = std::min(min_embedding_norm, embedding_norm);
    max_embedding_norm = std::max(max_embedding_norm, embedding_norm);
    ++aggregates;
  }

  void record_unit_norm(double norm) {
    std::lock_guard<std::mutex> lock(mu_);
    max_unit_norm_err = std::max(max_unit_norm_err, std::fabs(norm - 1.0));
    ++unit_rows;
  }

 private:
  std::mutex mu_;
};

// One diagnostics line per (category, description); dumped as CSV on demand.
struct AlignmentRow {
  int64_t category = 0;
  int64_t description_index = 0;
  double score = 0.0;
  double weight = 0.0;  // zero when not selected
  bool selected = false;
};

// Encode every description without any learnable prompt. When cache_dir is
// non-empty the result is persisted as a SEMB bank keyed by a content hash of
// the description set and the backend, so re-runs skip the encoder entirely.
template <typename T>
AttributeEmbeddings<T> embed_descriptions(const DescriptionSet& set, const Backend<T>& backend,
                                          const std::string& cache_dir = "") {
  set.validate();
  AttributeEmbeddings<T> out;
  out.num_categories = static_cast<int64_t>(set.categories.size());
  out.per_category = set.per_category();
  out.dim = backend.config().embed_dim;

  uint64_t h = set.content_hash();
  const uint64_t sig = backend.signature();
  h = fnv1a64(&sig, sizeof(sig), h);
  out.content_hash = h;

  const std::string cache_path =
      cache_dir.empty() ? "" : cache_dir + "/descr_" + hash_hex(h) + ".semb";
  if (!cache_path.empty()) {
    std::ifstream probe(cache_path, std::ios::binary);
    if (probe.good()) {
      const EmbeddingBank bank = EmbeddingBank::load(cache_path);
      if (bank.dim() == out.dim &&
          bank.size() == out.num_categories * out.per_category) {
        out.values.reserve(static_cast<size_t>(bank.size() * out.dim));
        for (int64_t c = 0; c < out.num_categories; ++c)
          for (int64_t j = 0; j < out.per_category; ++j) {
            const auto& v = bank.stored(std::to_string(c) + ":" + std::to_string(j));
            out.values.insert(out.values.end(), v.begin(), v.end());
          }
        return out;
      }
    }
  }

  out.values.reserve(static_cast<size_t>(out.num_categories * out.per_category * out.dim));
  for (int64_t c = 0; c < out.num_categories; ++c) {
    const auto& cat = set.categories[static_cast<size_t>(c)];
    const auto& descs = set.descriptions_for(cat);
    for (int64_t j = 0; j < out.per_category; ++j) {
      const std::string& text = descs[static_cast<size_t>(j)];
      if (trim(text).empty())
        throw DegenerateInputError("empty description for category '" + cat + "' at index " +
                                   std::to_string(j));
      const std::vector<T> emb = backend.text_embedding_values(text);
      if (static_cast<int64_t>(emb.size()) != out.dim)
        throw ShapeError("description embedding dimension mismatch for '" + cat + "'");
      out.values.insert(out.values.end(), emb.begin(), emb.end());
    }
  }

  if (!cache_path.empty()) {
    EmbeddingBank bank(out.dim);
    for (int64_t c = 0; c < out.num_categories; ++c)
      for (int64_t j = 0; j < out.per_category; ++j) {
        const auto r = out.row(c, j);
        bank.insert(std::to_string(c) + ":" + std::to_string(j),
                    std::vector<float>(r.begin(), r.end()));
      }
    bank.save(cache_path);
  }
  return out;
}

// Indices of the K largest scores, ascending index order, ties resolved in
// favour of the lower index. K must stay below the description count except
// in explicitly flagged test mode.
template <typename T>
std::vector<int64_t> select_topk(std::span<const T> scores, int64_t k, bool allow_full = false) {
  const int64_t s = static_cast<int64_t>(scores.size());
  if (k < 1) throw ParamError("select_topk: k must be >= 1");
  if (k > s || (k == s && !allow_full))
    throw ParamError("select_topk: k=" + std::to_string(k) +
                     " must be smaller than the candidate count " + std::to_string(s));
  std::vector<int64_t> idx(static_cast<size_t>(s));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });
  idx.resize(static_cast<size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Per-category description scores as on-tape scalars, so gradient reaches the
// image embedding.
template <typename T>
std::vector<Tensor<T>> score_category(Tape<T>& tape, Tensor<T> image_embedding,
                                      const AttributeEmbeddings<T>& embeddings,
                                      int64_t category) {
  if (category < 0 || category >= embeddings.num_categories)
    throw ParamError("score_category: category index out of range");
  if (image_embedding.size() != embeddings.dim)
    throw ShapeError("score_category: image embedding dimension " +
                     std::to_string(image_embedding.size()) + " vs description dimension " +
                     std::to_string(embeddings.dim));
  std::vector<Tensor<T>> scores;
  scores.reserve(static_cast<size_t>(embeddings.per_category));
  for (int64_t j = 0; j < embeddings.per_category; ++j) {
    Tensor<T> row = tape.constant(Shape{embeddings.dim}, embeddings.row(category, j));
    scores.push_back(cosine_sim(image_embedding, row));
  }
  return scores;
}

template <typename T>
struct CategoryAggregate {
  std::vector<int64_t> selected;  // ascending indices
  Tensor<T> weights;              // over selected, sums to 1
  Tensor<T> embedding;            // convex combination of the selected rows
};

// Top-K selection, temperature softmax over the selected scores, weighted
// combination of the selected rows. The selection itself is hard: gradient
// flows only through the selected branch. The output is intentionally not
// re-normalized; the fusion stage consumes it as-is.
template <typename T>
CategoryAggregate<T> aggregate_category(Tape<T>& tape, Tensor<T> image_embedding,
                                        const AttributeEmbeddings<T>& embeddings,
                                        int64_t category, int64_t k, T tau,
                                        AlignDiagnostics* diag = nullptr,
                                        std::vector<AlignmentRow>* rows_out = nullptr,
                                        bool allow_full = false) {
  std::vector<Tensor<T>> scores = score_category(tape, image_embedding, embeddings, category);
  std::vector<T> score_values;
  score_values.reserve(scores.size());
  for (const auto& s : scores) score_values.push_back(s.scalar());

  CategoryAggregate<T> agg;
  agg.selected = select_topk<T>(score_values, k, allow_full);

  std::vector<Tensor<T>> picked;
  picked.reserve(agg.selected.size());
  std::vector<T> row_data;
  row_data.reserve(agg.selected.size() * static_cast<size_t>(embeddings.dim));
  for (int64_t j : agg.selected) {
    picked.push_back(scores[static_cast<size_t>(j)]);
    const auto r = embeddings.row(category, j);
    row_data.insert(row_data.end(), r.begin(), r.end());
  }
  Tensor<T> selected_scores = stack_scalars(picked);
  agg.weights = softmax_last(selected_scores, tau);
  Tensor<T> rows = tape.constant(Shape{k, embeddings.dim}, std::move(row_data));
  agg.embedding = weighted_sum_rows(rows, agg.weights);

  const auto wv = agg.weights.values();
  double wsum = 0.0;
  for (T w : wv) wsum += static_cast<double>(w);
  double norm2 = 0.0;
  for (T v : agg.embedding.values()) norm2 += static_cast<double>(v) * static_cast<double>(v);
  if (diag) diag->record(std::fabs(wsum - 1.0), std::sqrt(norm2));

  if (rows_out) {
    for (int64_t j = 0; j < embeddings.per_category; ++j) {
      AlignmentRow row;
      row.category = category;
      row.description_index = j;
      row.score = static_cast<double>(score_values[static_cast<size_t>(j)]);
      const auto it = std::find(agg.selected.begin(), agg.selected.end(), j);
      row.selected = it != agg.selected.end();
      row.weight = row.selected
                       ? static_cast<double>(wv[static_cast<size_t>(it - agg.selected.begin())])
                       : 0.0;
      rows_out->push_back(row);
    }
  }
  return agg;
}

// Aggregated embedding for every category against one image.
template <typename T>
std::vector<Tensor<T>> align_all(Tape<T>& tape, Tensor<T> image_embedding,
                                 const AttributeEmbeddings<T>& embeddings, int64_t k, T tau,
                                 AlignDiagnostics* diag = nullptr,
                                 std::vector<AlignmentRow>* rows_out = nullptr,
                                 bool allow_full = false) {
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<size_t>(embeddings.num_categories));
  for (int64_t c = 0; c < embeddings.num_categories; ++c)
    out.push_back(aggregate_category(tape, image_embedding, embeddings, c, k, tau, diag,
                                     rows_out, allow_full)
                      .embedding);
  return out;
}

}  // namespace sempt
