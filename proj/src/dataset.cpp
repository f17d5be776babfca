#include "sempt/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

#include "json.hpp"
#include "sempt/errors.hpp"
#include "sempt/rng.hpp"
#include "sempt/strings.hpp"

namespace sempt {

void Dataset::validate() const {
  if (items.empty()) throw FormatError("dataset has no items");
  if (categories.empty()) throw FormatError("dataset has no categories");
  std::set<std::string> uniq(categories.begin(), categories.end());
  if (uniq.size() != categories.size()) throw FormatError("dataset has duplicate categories");
  for (const auto& item : items)
    if (item.category < 0 || item.category >= static_cast<int32_t>(categories.size()))
      throw FormatError("item '" + item.key + "' references unknown category index " +
                        std::to_string(item.category));
}

std::vector<int64_t> Dataset::items_of(int32_t category) const {
  std::vector<int64_t> out;
  for (size_t i = 0; i < items.size(); ++i)
    if (items[i].category == category) out.push_back(static_cast<int64_t>(i));
  return out;
}

std::vector<int64_t> SplitSpec::all_train() const {
  std::vector<int64_t> out;
  for (const auto& c : seen_categories) {
    const auto it = train_indices.find(c);
    if (it != train_indices.end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

std::vector<int64_t> SplitSpec::all_test() const {
  std::vector<int64_t> out;
  for (const auto& [cat, idx] : test_indices) out.insert(out.end(), idx.begin(), idx.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::string SplitSpec::to_json() const {
  nlohmann::json doc;
  doc["seen"] = seen_categories;
  doc["unseen"] = unseen_categories;
  doc["shots"] = shots;
  doc["seed"] = seed;
  nlohmann::json train = nlohmann::json::object();
  for (const auto& [cat, idx] : train_indices) train[cat] = idx;
  nlohmann::json test = nlohmann::json::object();
  for (const auto& [cat, idx] : test_indices) test[cat] = idx;
  doc["train"] = train;
  doc["test"] = test;
  return doc.dump(2) + "\n";
}

void SplitSpec::validate(const Dataset& dataset) const {
  std::set<std::string> seen_set(seen_categories.begin(), seen_categories.end());
  std::set<std::string> unseen_set(unseen_categories.begin(), unseen_categories.end());
  for (const auto& c : seen_set)
    if (unseen_set.count(c)) throw ContractError("category in both splits: " + c);
  // No training item may carry an unseen-category label.
  for (const auto& [cat, idx] : train_indices) {
    if (!seen_set.count(cat)) throw ContractError("training items for unseen category " + cat);
    for (int64_t i : idx) {
      const auto& item = dataset.items[static_cast<size_t>(i)];
      if (dataset.categories[static_cast<size_t>(item.category)] != cat)
        throw ContractError("split item " + item.key + " mislabeled under " + cat);
    }
  }
}

SplitSpec make_designated_split(const Dataset& dataset, uint64_t seed, int64_t shots,
                                const std::vector<bool>& seen_flags) {
  dataset.validate();
  if (shots < 1) throw ParamError("shots must be >= 1");
  if (seen_flags.size() != dataset.categories.size())
    throw ParamError("seen designation does not match category count");

  SplitSpec split;
  split.shots = shots;
  split.seed = seed;
  for (size_t c = 0; c < dataset.categories.size(); ++c) {
    const std::string& name = dataset.categories[c];
    std::vector<int64_t> pool = dataset.items_of(static_cast<int32_t>(c));
    if (!seen_flags[c]) {
      split.unseen_categories.push_back(name);
      split.test_indices[name] = std::move(pool);
      continue;
    }
    split.seen_categories.push_back(name);
    Rng rng = derive_rng(seed, "split.items", fnv1a64(name));
    rng.shuffle(pool);
    int64_t take = shots;
    if (static_cast<int64_t>(pool.size()) < shots) {
      std::cerr << "warning: category '" << name << "' has only " << pool.size()
                << " items; taking all of them for training\n";
      take = static_cast<int64_t>(pool.size());
    }
    std::vector<int64_t> train(pool.begin(), pool.begin() + take);
    std::vector<int64_t> test(pool.begin() + take, pool.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    split.train_indices[name] = std::move(train);
    split.test_indices[name] = std::move(test);
  }
  split.validate(dataset);
  return split;
}

SplitSpec make_split_with_counts(const Dataset& dataset, uint64_t seed, int64_t shots,
                                 int64_t num_seen) {
  dataset.validate();
  const int64_t n = static_cast<int64_t>(dataset.categories.size());
  if (n < 2) throw ParamError("need at least 2 categories to split");
  if (num_seen < 1 || num_seen >= n)
    throw ParamError("seen-category count must be in [1, " + std::to_string(n) + ")");
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng = derive_rng(seed, "split.categories");
  rng.shuffle(order);
  std::vector<bool> seen_flags(static_cast<size_t>(n), false);
  for (int64_t i = 0; i < num_seen; ++i) seen_flags[static_cast<size_t>(order[static_cast<size_t>(i)])] = true;
  return make_designated_split(dataset, seed, shots, seen_flags);
}

SplitSpec make_base_novel_split(const Dataset& dataset, uint64_t seed, int64_t shots) {
  const int64_t n = static_cast<int64_t>(dataset.categories.size());
  // Even split; an odd category count tips the extra one into the seen half.
  return make_split_with_counts(dataset, seed, shots, (n + 1) / 2);
}

Dataset load_bank_dataset(const EmbeddingBank& bank, const std::string& items_path) {
  std::ifstream in(items_path);
  if (!in) throw IoError("cannot open items file " + items_path);
  Dataset ds;
  ds.source = "embedding-bank";
  std::map<std::string, int32_t> category_index;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t comma = t.find(',');
    if (comma == std::string::npos)
      throw FormatError(items_path + ":" + std::to_string(lineno) +
                        ": expected 'key,category'");
    const std::string key = trim(t.substr(0, comma));
    const std::string category = trim(t.substr(comma + 1));
    if (key.empty() || category.empty())
      throw FormatError(items_path + ":" + std::to_string(lineno) + ": blank key or category");
    auto [it, inserted] = category_index.emplace(
        category, static_cast<int32_t>(ds.categories.size()));
    if (inserted) ds.categories.push_back(category);
    DatasetItem item;
    item.key = key;
    item.features = bank.stored(key);  // raises a lookup error when missing
    item.category = it->second;
    ds.items.push_back(std::move(item));
  }
  ds.validate();
  return ds;
}

}  // namespace sempt
