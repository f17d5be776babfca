#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sempt/bank.hpp"
#include "sempt/errors.hpp"
#include "sempt/hashing.hpp"
#include "sempt/rng.hpp"
#include "sempt/tensor.hpp"
#include "sempt/tokenizer.hpp"

namespace sempt {

struct EncoderConfig {
  int64_t input_width = 32;  // width of each input token
  int64_t embed_dim = 16;    // output embedding dimension
  int64_t mixing_layers = 2;
  int64_t vocab_size = 2048;
  int64_t visual_prompt_len = 4;
  int64_t text_prompt_len = 4;
  int64_t max_text_len = 32;
  std::string backend = "toy";  // "toy" | "precomputed"
  uint64_t seed = 1;

  void validate() const {
    if (embed_dim < 2) throw ParamError("encoder embed_dim must be >= 2");
    if (input_width < 1) throw ParamError("encoder input_width must be positive");
    if (mixing_layers < 0) throw ParamError("encoder mixing_layers must be >= 0");
    if (visual_prompt_len < 0 || text_prompt_len < 0)
      throw ParamError("prompt lengths must be >= 0");
    if (backend != "toy" && backend != "precomputed")
      throw ParamError("unknown encoder backend: " + backend);
  }

  uint64_t signature() const {
    uint64_t h = kFnvOffset;
    for (int64_t v : {input_width, embed_dim, mixing_layers, vocab_size, visual_prompt_len,
                      text_prompt_len, max_text_len})
      h = fnv1a64(&v, sizeof(v), h);
    h = fnv1a64(backend, h);
    h = fnv1a64(&seed, sizeof(seed), h);
    return h;
  }
};

// Frozen two-branch encoder. Each branch runs token rows through
// `mixing_layers` residual blocks (linear + tanh), mean-pools, projects to
// the embedding dimension and L2-normalizes. Learnable prompt tokens, when
// given, are prepended to the input rows; all other weights are fixed at
// construction from the config seed, so two processes with the same config
// build identical encoders.
template <typename T>
class ToyDualEncoder {
 public:
  explicit ToyDualEncoder(EncoderConfig cfg) : cfg_(std::move(cfg)), tokenizer_(make_tokenizer()) {
    cfg_.validate();
    init_branch(visual_, "visual");
    init_branch(textual_, "textual");
    token_table_.resize(static_cast<size_t>(cfg_.vocab_size * cfg_.input_width));
    Rng rng = derive_rng(cfg_.seed, "toy.token_table");
    for (auto& v : token_table_) v = static_cast<T>(rng.normal());
  }

  const EncoderConfig& config() const { return cfg_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }

  // Encode a feature vector (or a grid of stacked feature tokens, one per
  // input_width slice). Gradient reaches the visual prompt only.
  Tensor<T> encode_image(Tape<T>& tape, std::span<const T> features,
                         std::optional<Tensor<T>> visual_prompt) const {
    const int64_t w = cfg_.input_width;
    const int64_t len = static_cast<int64_t>(features.size());
    if (len == 0 || len % w != 0)
      throw ShapeError("encode_image: input of " + std::to_string(len) +
                       " values does not match configured input width " + std::to_string(w));
    Tensor<T> rows = tape.constant(Shape{len / w, w},
                                   std::vector<T>(features.begin(), features.end()));
    return run_branch(tape, visual_, rows, visual_prompt);
  }

  Tensor<T> encode_text(Tape<T>& tape, const std::string& text,
                        std::optional<Tensor<T>> text_prompt) const {
    const TokenSequence seq = tokenizer_.encode(text);
    return encode_tokens(tape, seq, text_prompt);
  }

  Tensor<T> encode_tokens(Tape<T>& tape, const TokenSequence& seq,
                          std::optional<Tensor<T>> text_prompt) const {
    if (seq.empty()) throw DegenerateInputError("encode_text: empty token sequence");
    const int64_t w = cfg_.input_width;
    std::vector<T> rows(static_cast<size_t>(seq.length() * w));
    for (int64_t i = 0; i < seq.length(); ++i) {
      const int32_t id = seq.ids[static_cast<size_t>(i)];
      if (id < 0 || id >= cfg_.vocab_size)
        throw ContractError("token id out of vocabulary range");
      const T* src = token_table_.data() + static_cast<size_t>(id) * static_cast<size_t>(w);
      std::copy(src, src + w, rows.begin() + static_cast<ptrdiff_t>(i * w));
    }
    Tensor<T> mat = tape.constant(Shape{seq.length(), w}, std::move(rows));
    return run_branch(tape, textual_, mat, text_prompt);
  }

  // Shapes for the learnable prompts this encoder expects.
  Shape visual_prompt_shape() const { return Shape{cfg_.visual_prompt_len, cfg_.input_width}; }
  Shape text_prompt_shape() const { return Shape{cfg_.text_prompt_len, cfg_.input_width}; }

  uint64_t frozen_checksum() const {
    uint64_t h = kFnvOffset;
    h = fnv1a64_bytes<T>(token_table_, h);
    for (const Branch* b : {&visual_, &textual_}) {
      for (const auto& w : b->layer_weights) h = fnv1a64_bytes<T>(w, h);
      for (const auto& w : b->layer_biases) h = fnv1a64_bytes<T>(w, h);
      h = fnv1a64_bytes<T>(b->head, h);
      h = fnv1a64_bytes<T>(b->head_bias, h);
    }
    return h;
  }

 private:
  struct Branch {
    std::vector<std::vector<T>> layer_weights;  // each input_width x input_width
    std::vector<std::vector<T>> layer_biases;   // each input_width
    std::vector<T> head;                        // input_width x embed_dim
    std::vector<T> head_bias;                   // embed_dim
  };

  Tokenizer make_tokenizer() const { return Tokenizer(cfg_.vocab_size, cfg_.max_text_len); }

  void init_branch(Branch& b, const char* tag) {
    const int64_t w = cfg_.input_width;
    const double sigma = 1.0 / std::sqrt(static_cast<double>(w));
    for (int64_t l = 0; l < cfg_.mixing_layers; ++l) {
      Rng rng = derive_rng(cfg_.seed, std::string("toy.") + tag + ".layer", static_cast<uint64_t>(l));
      std::vector<T> weight(static_cast<size_t>(w * w));
      rng.fill_normal(weight, sigma);
      std::vector<T> bias(static_cast<size_t>(w), T(0));
      b.layer_weights.push_back(std::move(weight));
      b.layer_biases.push_back(std::move(bias));
    }
    Rng rng = derive_rng(cfg_.seed, std::string("toy.") + tag + ".head");
    b.head.resize(static_cast<size_t>(w * cfg_.embed_dim));
    rng.fill_normal(b.head, sigma);
    b.head_bias.assign(static_cast<size_t>(cfg_.embed_dim), T(0));
  }

  Tensor<T> run_branch(Tape<T>& tape, const Branch& b, Tensor<T> rows,
                       std::optional<Tensor<T>> prompt) const {
    Tensor<T> h = rows;
    if (prompt.has_value() && prompt->size() > 0) {
      const Shape& ps = prompt->shape();
      if (ps.size() != 2 || ps[1] != cfg_.input_width)
        throw ShapeError("prompt shape " + shape_str(ps) + " does not match input width " +
                         std::to_string(cfg_.input_width));
      h = concat_rows(*prompt, h);
    }
    for (size_t l = 0; l < b.layer_weights.size(); ++l) {
      Tensor<T> w = tape.constant(Shape{cfg_.input_width, cfg_.input_width}, b.layer_weights[l]);
      Tensor<T> bias = tape.constant(Shape{cfg_.input_width}, b.layer_biases[l]);
      h = add(h, tanh_act(add(matmul(h, w), bias)));
    }
    Tensor<T> pooled = mean_rows(h);
    Tensor<T> head = tape.constant(Shape{cfg_.input_width, cfg_.embed_dim}, b.head);
    Tensor<T> head_bias = tape.constant(Shape{cfg_.embed_dim}, b.head_bias);
    Tensor<T> out = add(vecmat(pooled, head), head_bias);
    return l2_normalize_last(out);
  }

  EncoderConfig cfg_;
  Tokenizer tokenizer_;
  Branch visual_;
  Branch textual_;
  std::vector<T> token_table_;  // vocab_size x input_width
};

struct EncodeCounters {
  std::atomic<uint64_t> image_encodes{0};
  std::atomic<uint64_t> text_encodes{0};
  std::atomic<uint64_t> lookups{0};
};

// Dispatch between the trainable toy encoder and a bank of precomputed
// embeddings. The precomputed backend serves stored vectors only: prompts are
// inert and encode_image is refused outright.
template <typename T>
class Backend {
 public:
  static Backend toy(EncoderConfig cfg) {
    cfg.backend = "toy";
    Backend b;
    b.cfg_ = cfg;
    b.encoder_ = std::make_shared<ToyDualEncoder<T>>(cfg);
    b.counters_ = std::make_shared<EncodeCounters>();
    return b;
  }

  static Backend precomputed(EncoderConfig cfg, EmbeddingBank bank) {
    cfg.backend = "precomputed";
    if (bank.dim() != cfg.embed_dim)
      throw FormatError("bank dimension " + std::to_string(bank.dim()) +
                        " does not match configured embedding dimension " +
                        std::to_string(cfg.embed_dim));
    Backend b;
    b.cfg_ = cfg;
    b.bank_ = std::make_shared<EmbeddingBank>(std::move(bank));
    b.counters_ = std::make_shared<EncodeCounters>();
    return b;
  }

  const EncoderConfig& config() const { return cfg_; }
  bool is_toy() const { return cfg_.backend == "toy"; }
  const ToyDualEncoder<T>& toy_encoder() const {
    if (!encoder_) throw UnsupportedError("no toy encoder on the precomputed backend");
    return *encoder_;
  }
  const EmbeddingBank& bank() const {
    if (!bank_) throw UnsupportedError("no embedding bank on the toy backend");
    return *bank_;
  }
  EncodeCounters& counters() const { return *counters_; }

  Tensor<T> encode_image(Tape<T>& tape, std::span<const T> features,
                         std::optional<Tensor<T>> visual_prompt) const {
    if (!is_toy())
      throw UnsupportedError(
          "encode_image is unavailable on the precomputed backend; use lookup_embedding");
    counters_->image_encodes.fetch_add(1, std::memory_order_relaxed);
    return encoder_->encode_image(tape, features, visual_prompt);
  }

  Tensor<T> encode_text(Tape<T>& tape, const std::string& text,
                        std::optional<Tensor<T>> text_prompt) const {
    if (!is_toy())
      throw UnsupportedError(
          "encode_text is unavailable on the precomputed backend; use lookup_embedding");
    counters_->text_encodes.fetch_add(1, std::memory_order_relaxed);
    return encoder_->encode_text(tape, text, text_prompt);
  }

  std::vector<T> lookup_embedding(const std::string& key) const {
    if (is_toy())
      throw UnsupportedError("lookup_embedding is unavailable on the toy backend");
    counters_->lookups.fetch_add(1, std::memory_order_relaxed);
    const std::vector<float> raw = bank_->lookup(key);
    return std::vector<T>(raw.begin(), raw.end());
  }

  // Pipeline-facing image path: toy backends encode features, precomputed
  // backends look the item key up.
  Tensor<T> image_embedding(Tape<T>& tape, const std::string& key,
                            std::span<const float> features,
                            std::optional<Tensor<T>> visual_prompt) const {
    if (is_toy()) {
      std::vector<T> cast(features.begin(), features.end());
      return encode_image(tape, cast, visual_prompt);
    }
    std::vector<T> v = lookup_embedding(key);
    return tape.constant(Shape{static_cast<int64_t>(v.size())}, std::move(v));
  }

  // Pipeline-facing text path; on the precomputed backend the text itself is
  // the bank key and any prompt is ignored.
  Tensor<T> text_embedding(Tape<T>& tape, const std::string& text,
                           std::optional<Tensor<T>> text_prompt) const {
    if (is_toy()) return encode_text(tape, text, text_prompt);
    std::vector<T> v = lookup_embedding(text);
    return tape.constant(Shape{static_cast<int64_t>(v.size())}, std::move(v));
  }

  // Prompt-free text embedding as plain values (used for description rows).
  std::vector<T> text_embedding_values(const std::string& text) const {
    if (!is_toy()) return lookup_embedding(text);
    Tape<T> tape;
    Tensor<T> e = encode_text(tape, text, std::nullopt);
    return std::vector<T>(e.values().begin(), e.values().end());
  }

  uint64_t frozen_checksum() const {
    return is_toy() ? encoder_->frozen_checksum() : bank_->content_hash();
  }

  uint64_t signature() const {
    uint64_t h = cfg_.signature();
    const uint64_t frozen = frozen_checksum();
    return fnv1a64(&frozen, sizeof(frozen), h);
  }

 private:
  Backend() = default;
  EncoderConfig cfg_;
  std::shared_ptr<ToyDualEncoder<T>> encoder_;
  std::shared_ptr<EmbeddingBank> bank_;
  std::shared_ptr<EncodeCounters> counters_;
};

}  // namespace sempt
