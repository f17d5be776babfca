#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sempt/bank.hpp"
#include "sempt/dataset.hpp"
#include "sempt/knowledge.hpp"

namespace sempt {

// Self-contained benchmark world: latent attribute vectors in embedding
// space, categories as attribute subsets, images as noisy category centroids,
// descriptions as templated strings naming attribute subsets. Ground-truth
// text embeddings back the precomputed pipeline: a description embeds to the
// normalized mean of its named attribute vectors, a label embeds to the
// category centroid corrupted by per-category noise (label_noise). The label
// corruption is what gives attribute descriptions room to transfer.
struct SyntheticWorldSpec {
  int64_t latent_attributes = 6;
  int64_t attributes_per_category = 3;
  int64_t num_seen = 8;
  int64_t num_unseen = 4;
  int64_t samples_per_category = 40;
  double noise_sigma = 0.1;   // image feature noise
  double label_noise = 0.8;   // label embedding corruption
  int64_t embed_dim = 16;
  int64_t descriptions_per_category = 5;
  bool exact_descriptions = false;  // every description names the full attribute set
  uint64_t seed = 0;

  struct ExplicitCategory {
    std::string name;
    std::vector<int64_t> attributes;
    bool seen = true;
  };
  std::vector<ExplicitCategory> explicit_categories;  // optional; overrides auto layout

  void validate() const;
};

struct SyntheticWorld {
  SyntheticWorldSpec spec;
  Dataset dataset;
  DescriptionSet descriptions;
  AttributeVocabulary attributes;
  std::vector<std::vector<float>> attribute_vectors;      // oracle, unit rows
  std::vector<std::vector<int64_t>> category_attributes;  // per category
  std::vector<bool> designated_seen;                      // aligned with dataset.categories
  EmbeddingBank image_bank;  // img_#### -> feature
  EmbeddingBank text_bank;   // description / label-template string -> ground truth
};

SyntheticWorld generate_synthetic_world(const SyntheticWorldSpec& spec);

// Variant sharing a fixed attribute pool (cross-dataset protocol: a second
// world over the same latent attributes).
SyntheticWorld generate_synthetic_world_with_pool(
    const SyntheticWorldSpec& spec, const std::vector<std::vector<float>>& attribute_vectors,
    const std::vector<std::string>& attribute_names, const std::string& category_prefix);

}  // namespace sempt
