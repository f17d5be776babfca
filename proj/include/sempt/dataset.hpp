#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sempt/bank.hpp"

namespace sempt {

struct DatasetItem {
  std::string key;              // stable image id
  std::vector<float> features;  // raw features (toy) or embedding (precomputed)
  int32_t category = -1;        // index into Dataset::categories
};

struct Dataset {
  std::vector<DatasetItem> items;
  std::vector<std::string> categories;
  std::string source;  // "synthetic" | "embedding-bank"

  void validate() const;
  std::vector<int64_t> items_of(int32_t category) const;
};

// Base/novel category split with per-category train/test item indices.
struct SplitSpec {
  std::vector<std::string> seen_categories;
  std::vector<std::string> unseen_categories;
  std::map<std::string, std::vector<int64_t>> train_indices;  // seen categories only
  std::map<std::string, std::vector<int64_t>> test_indices;   // every category
  int64_t shots = 16;
  uint64_t seed = 0;

  std::vector<int64_t> all_train() const;
  std::vector<int64_t> all_test() const;
  std::string to_json() const;  // canonical bytes; identical inputs, identical bytes
  void validate(const Dataset& dataset) const;
};

// Shuffle categories by seed, first (n+1)/2 seen, rest unseen; sample `shots`
// train items per seen category (warn and take all when short).
SplitSpec make_base_novel_split(const Dataset& dataset, uint64_t seed, int64_t shots);

// Same, with an explicit seen-category count.
SplitSpec make_split_with_counts(const Dataset& dataset, uint64_t seed, int64_t shots,
                                 int64_t num_seen);

// Honor a fixed seen/unseen designation (aligned with dataset.categories).
SplitSpec make_designated_split(const Dataset& dataset, uint64_t seed, int64_t shots,
                                const std::vector<bool>& seen_flags);

// items file: one "key,category" line per item; features come from the bank.
Dataset load_bank_dataset(const EmbeddingBank& bank, const std::string& items_path);

}  // namespace sempt
