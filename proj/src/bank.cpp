#include "sempt/bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "sempt/errors.hpp"
#include "sempt/hashing.hpp"
#include "sempt/strings.hpp"

namespace sempt {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'M', 'B'};
constexpr uint16_t kVersion = 1;

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}
  uint16_t u16() { return static_cast<uint16_t>(byte() | (byte() << 8)); }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte()) << (8 * i);
    return v;
  }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError(path_ + ": truncated embedding bank");
    std::string out = buf_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  uint32_t byte() {
    if (pos_ >= buf_.size()) throw FormatError(path_ + ": truncated embedding bank");
    return static_cast<unsigned char>(buf_[pos_++]);
  }
  const std::string& buf_;
  std::string path_;
  size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

}  // namespace

EmbeddingBank::EmbeddingBank(int64_t dim) : dim_(dim) {
  if (dim_ < 1) throw ParamError("embedding bank dimension must be positive");
}

const std::vector<float>& EmbeddingBank::stored(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw LookupError("no such key: " + key);
  return values_[it->second];
}

std::vector<float> EmbeddingBank::lookup(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) {
    // Rank existing keys by edit distance and name the closest few.
    std::vector<std::pair<size_t, std::string>> ranked;
    ranked.reserve(keys_.size());
    for (const auto& k : keys_) ranked.emplace_back(edit_distance(key, k), k);
    std::sort(ranked.begin(), ranked.end());
    std::string hint;
    for (size_t i = 0; i < ranked.size() && i < 3; ++i) {
      if (i) hint += ", ";
      hint += ranked[i].second;
    }
    throw LookupError("embedding bank has no key '" + key + "'" +
                      (hint.empty() ? "" : " (nearest: " + hint + ")"));
  }
  std::vector<float> out = values_[it->second];
  double sq = 0.0;
  for (float v : out) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (norm == 0.0) throw DegenerateInputError("embedding for '" + key + "' has zero norm");
  const float inv = static_cast<float>(1.0 / norm);
  for (auto& v : out) v *= inv;
  return out;
}

void EmbeddingBank::insert(const std::string& key, std::vector<float> values) {
  if (dim_ == 0) dim_ = static_cast<int64_t>(values.size());
  if (static_cast<int64_t>(values.size()) != dim_)
    throw FormatError("embedding for '" + key + "' has dimension " +
                      std::to_string(values.size()) + ", bank expects " + std::to_string(dim_));
  if (index_.count(key)) throw ContractError("duplicate bank key: " + key);
  index_.emplace(key, keys_.size());
  keys_.push_back(key);
  values_.push_back(std::move(values));
}

void EmbeddingBank::save(const std::string& path) const {
  std::string out;
  out.append(kMagic, 4);
  put_u16(out, kVersion);
  put_u32(out, static_cast<uint32_t>(dim_));
  put_u32(out, static_cast<uint32_t>(keys_.size()));
  for (size_t i = 0; i < keys_.size(); ++i) {
    if (keys_[i].size() > 0xffff) throw FormatError("bank key too long: " + keys_[i]);
    put_u16(out, static_cast<uint16_t>(keys_[i].size()));
    out += keys_[i];
    for (float v : values_[i]) put_f32(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path);
}

EmbeddingBank EmbeddingBank::load(const std::string& path) {
  const std::string head = read_file(path).substr(0, 4);
  if (head.size() >= 4 && std::memcmp(head.data(), kMagic, 4) == 0) return load_binary(path);
  return load_json(path);
}

EmbeddingBank EmbeddingBank::load_binary(const std::string& path) {
  const std::string buf = read_file(path);
  Reader r(buf, path);
  if (r.bytes(4) != std::string(kMagic, 4)) throw FormatError(path + ": bad magic");
  const uint16_t version = r.u16();
  if (version != kVersion)
    throw FormatError(path + ": unsupported bank version " + std::to_string(version));
  const int64_t dim = r.u32();
  const uint32_t count = r.u32();
  EmbeddingBank bank(dim);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t klen = r.u16();
    std::string key = r.bytes(klen);
    std::vector<float> vals(static_cast<size_t>(dim));
    for (auto& v : vals) v = r.f32();
    bank.insert(key, std::move(vals));
  }
  if (!r.done()) throw FormatError(path + ": trailing bytes after last record");
  return bank;
}

EmbeddingBank EmbeddingBank::load_json(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": not a SEMB file and not valid JSON: " + e.what());
  }
  if (!doc.contains("dim") || !doc.contains("items"))
    throw FormatError(path + ": JSON bank needs 'dim' and 'items'");
  EmbeddingBank bank(doc["dim"].get<int64_t>());
  for (const auto& [key, arr] : doc["items"].items()) {
    std::vector<float> vals;
    vals.reserve(arr.size());
    for (const auto& v : arr) vals.push_back(v.get<float>());
    bank.insert(key, std::move(vals));
  }
  return bank;
}

uint64_t EmbeddingBank::content_hash() const {
  uint64_t h = kFnvOffset;
  h = fnv1a64(&dim_, sizeof(dim_), h);
  for (size_t i = 0; i < keys_.size(); ++i) {
    h = fnv1a64(keys_[i], h);
    h = fnv1a64(values_[i].data(), values_[i].size() * sizeof(float), h);
  }
  return h;
}

}  // namespace sempt
