#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sempt/errors.hpp"

namespace sempt {

struct Provenance {
  std::string model_id;
  std::string prompt_hash;
  std::string timestamp;  // empty for deterministic offline generation
};

// Shared attribute vocabulary. Entries are unique after lowercase/trim and at
// most 8 words long; both are enforced at parse time.
struct AttributeVocabulary {
  std::vector<std::string> attributes;
  Provenance provenance;

  void validate() const;
};

// Per-category description lists, all the same length, each description
// mentioning at least one vocabulary attribute.
struct DescriptionSet {
  std::vector<std::string> categories;                        // canonical order
  std::map<std::string, std::vector<std::string>> by_category;
  std::vector<std::string> attribute_vocabulary;              // the vocabulary used

  int64_t per_category() const;
  const std::vector<std::string>& descriptions_for(const std::string& category) const;
  void validate() const;
  uint64_t content_hash() const;
};

struct PromptTemplate {
  int step = 1;
  std::string text;

  // Replaces {name} placeholders; any placeholder left unfilled is an error.
  std::string render(const std::map<std::string, std::string>& subs) const;
};

PromptTemplate default_step1_template();
PromptTemplate default_step2_template();

std::string render_step1(std::span<const std::string> categories, int64_t ma,
                         const PromptTemplate& tmpl = default_step1_template());
std::string render_step2(const std::string& category, const AttributeVocabulary& vocab,
                         int64_t s, const PromptTemplate& tmpl = default_step2_template());

// LLM transport. complete() counts every outgoing request so cache hits are
// observable as zero calls.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  std::string complete(const std::string& prompt, double temperature) {
    ++calls_;
    return do_complete(prompt, temperature);
  }
  uint64_t calls() const { return calls_; }
  virtual std::string model_id() const = 0;

 private:
  virtual std::string do_complete(const std::string& prompt, double temperature) = 0;
  uint64_t calls_ = 0;
};

struct KnowledgeResult {
  AttributeVocabulary vocabulary;
  DescriptionSet descriptions;
};

// Built-in pool of short visual attribute phrases, shared by the offline stub
// and the synthetic world generator.
const std::vector<std::string>& builtin_attribute_pool();

// Deterministic offline generator drawing from the built-in pool. Same seed,
// same bytes.
KnowledgeResult stub_generate(uint64_t seed, std::span<const std::string> categories,
                              int64_t ma, int64_t s);

// Two-step construction through an LLM client with a replay cache: a warm
// cache answers without any network calls. The cache is written before the
// result is returned.
KnowledgeResult discover_and_generate(LlmClient& client,
                                      std::span<const std::string> categories, int64_t ma,
                                      int64_t s, const std::string& cache_path,
                                      const PromptTemplate& step1 = default_step1_template(),
                                      const PromptTemplate& step2 = default_step2_template());

void save_knowledge_cache(const std::string& path, const KnowledgeResult& result, int64_t ma,
                          int64_t s);
KnowledgeResult load_knowledge_cache(const std::string& path);

// Line-per-item response parsing: one item per line, optional leading
// numbering or bullets stripped, blanks dropped.
std::vector<std::string> parse_item_lines(const std::string& text);

bool mentions_attribute(const std::string& description, std::span<const std::string> attributes);

}  // namespace sempt
