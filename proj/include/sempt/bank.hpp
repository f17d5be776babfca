#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace sempt {

// On-disk and in-memory store of named float vectors. Binary layout (little
// endian): magic "SEMB", version u16, dim u32, count u32, then per record a
// u16 key length, the UTF-8 key, and dim f32 values. A JSON mirror
// {"dim": d, "items": {key: [floats]}} is accepted for hand-written fixtures.
class EmbeddingBank {
 public:
  EmbeddingBank() = default;
  explicit EmbeddingBank(int64_t dim);

  int64_t dim() const { return dim_; }
  int64_t size() const { return static_cast<int64_t>(keys_.size()); }
  const std::vector<std::string>& keys() const { return keys_; }
  bool contains(const std::string& key) const { return index_.count(key) != 0; }

  // Raw stored values, exactly as inserted.
  const std::vector<float>& stored(const std::string& key) const;

  // L2-normalized copy. Missing key raises a lookup error listing the nearest
  // keys; zero vectors are rejected as degenerate.
  std::vector<float> lookup(const std::string& key) const;

  void insert(const std::string& key, std::vector<float> values);

  void save(const std::string& path) const;
  static EmbeddingBank load(const std::string& path);  // sniffs SEMB vs JSON

  uint64_t content_hash() const;

 private:
  static EmbeddingBank load_binary(const std::string& path);
  static EmbeddingBank load_json(const std::string& path);

  int64_t dim_ = 0;
  std::vector<std::string> keys_;  // insertion order, used for save
  std::unordered_map<std::string, size_t> index_;
  std::vector<std::vector<float>> values_;
};

}  // namespace sempt
