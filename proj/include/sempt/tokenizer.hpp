#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sempt/errors.hpp"
#include "sempt/hashing.hpp"
#include "sempt/strings.hpp"

namespace sempt {

struct TokenSequence {
  std::vector<int32_t> ids;
  bool empty() const { return ids.empty(); }
  int64_t length() const { return static_cast<int64_t>(ids.size()); }
};

// Whitespace/lowercase word tokenizer. Words hash into [1, vocab_size); id 0
// is the out-of-vocabulary bucket, used for tokens with no usable characters
// left after stripping punctuation. Sequences are truncated to max_len.
class Tokenizer {
 public:
  static constexpr int32_t kOovId = 0;

  Tokenizer(int64_t vocab_size, int64_t max_len) : vocab_size_(vocab_size), max_len_(max_len) {
    if (vocab_size_ < 2) throw ParamError("tokenizer vocabulary must hold at least 2 ids");
    if (max_len_ < 1) throw ParamError("tokenizer max length must be positive");
  }

  int64_t vocab_size() const { return vocab_size_; }
  int64_t max_len() const { return max_len_; }

  TokenSequence encode(const std::string& text) const {
    TokenSequence seq;
    for (const auto& raw : split_ws(to_lower(text))) {
      if (static_cast<int64_t>(seq.ids.size()) >= max_len_) break;
      const std::string word = strip_punct(raw);
      if (word.empty() && raw.empty()) continue;
      if (word.empty()) {
        seq.ids.push_back(kOovId);
        continue;
      }
      const uint64_t h = fnv1a64(word);
      seq.ids.push_back(static_cast<int32_t>(1 + h % static_cast<uint64_t>(vocab_size_ - 1)));
    }
    return seq;
  }

 private:
  static std::string strip_punct(const std::string& w) {
    size_t b = 0, e = w.size();
    auto keep = [](unsigned char c) { return std::isalnum(c) || c == '\'' || c == '-'; };
    while (b < e && !keep(static_cast<unsigned char>(w[b]))) ++b;
    while (e > b && !keep(static_cast<unsigned char>(w[e - 1]))) --e;
    return w.substr(b, e - b);
  }

  int64_t vocab_size_;
  int64_t max_len_;
};

}  // namespace sempt
