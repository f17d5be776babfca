#include "sempt/knowledge.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

#include "json.hpp"
#include "sempt/hashing.hpp"
#include "sempt/rng.hpp"
#include "sempt/strings.hpp"

namespace sempt {

const std::vector<std::string>& builtin_attribute_pool() {
  static const std::vector<std::string> pool = {
      "petal shape",        "leaf structure",     "surface texture",   "color pattern",
      "body outline",       "wing markings",      "fur density",       "stem curvature",
      "edge sharpness",     "glossy finish",      "spot distribution", "stripe orientation",
      "limb proportion",    "crest profile",      "shell ridging",     "scale size",
      "beak curvature",     "tail length",        "ear shape",         "eye spacing",
      "vein pattern",       "petal count",        "branch angle",      "crown density",
  };
  return pool;
}

namespace {

int64_t word_count(const std::string& s) { return static_cast<int64_t>(split_ws(s).size()); }

std::string iso_timestamp_now() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace

void AttributeVocabulary::validate() const {
  if (attributes.empty()) throw FormatError("attribute vocabulary is empty");
  std::set<std::string> seen;
  for (const auto& a : attributes) {
    const std::string norm = normalize_text(a);
    if (norm.empty()) throw FormatError("attribute vocabulary contains a blank entry");
    if (!seen.insert(norm).second)
      throw FormatError("duplicate attribute after normalization: " + a);
    if (word_count(a) > 8) throw FormatError("attribute longer than 8 words: " + a);
  }
}

int64_t DescriptionSet::per_category() const {
  if (categories.empty()) return 0;
  return static_cast<int64_t>(by_category.at(categories.front()).size());
}

const std::vector<std::string>& DescriptionSet::descriptions_for(
    const std::string& category) const {
  auto it = by_category.find(category);
  if (it == by_category.end()) throw LookupError("no descriptions for category: " + category);
  return it->second;
}

void DescriptionSet::validate() const {
  if (categories.empty()) throw FormatError("description set has no categories");
  const int64_t s = per_category();
  if (s < 1) throw FormatError("description set has zero descriptions per category");
  for (const auto& cat : categories) {
    const auto& descs = descriptions_for(cat);
    if (static_cast<int64_t>(descs.size()) != s)
      throw FormatError("category '" + cat + "' has " + std::to_string(descs.size()) +
                        " descriptions, expected " + std::to_string(s));
    std::set<std::string> unique(descs.begin(), descs.end());
    if (unique.size() != descs.size())
      throw FormatError("category '" + cat + "' has duplicate descriptions");
    for (const auto& d : descs) {
      if (!mentions_attribute(d, attribute_vocabulary))
        throw FormatError("description for '" + cat +
                          "' mentions no vocabulary attribute: " + d);
    }
  }
}

uint64_t DescriptionSet::content_hash() const {
  uint64_t h = kFnvOffset;
  for (const auto& c : categories) {
    h = fnv1a64(c, h);
    for (const auto& d : descriptions_for(c)) h = fnv1a64(d, h);
  }
  for (const auto& a : attribute_vocabulary) h = fnv1a64(a, h);
  return h;
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& subs) const {
  std::string out = text;
  for (const auto& [key, value] : subs) {
    const std::string needle = "{" + key + "}";
    size_t pos = 0;
    while ((pos = out.find(needle, pos)) != std::string::npos) {
      out.replace(pos, needle.size(), value);
      pos += value.size();
    }
  }
  const size_t open = out.find('{');
  if (open != std::string::npos && out.find('}', open) != std::string::npos)
    throw ContractError("prompt template has an unfilled placeholder near: " +
                        out.substr(open, 24));
  return out;
}

PromptTemplate default_step1_template() {
  return PromptTemplate{
      1,
      "You are preparing a shared visual vocabulary for an image classifier.\n"
      "The label set includes categories such as: {categories}.\n"
      "List exactly {count} visual attributes that apply across these categories.\n"
      "The attributes must be diverse and orthogonal: cover distinct visual dimensions\n"
      "(shape, texture, color layout, structure, proportion) with no overlap in meaning.\n"
      "Write one attribute per line, at most 8 words each, no numbering, no commentary."};
}

PromptTemplate default_step2_template() {
  return PromptTemplate{
      2,
      "Category: {category}\n"
      "Shared visual attributes: {attributes}\n"
      "Write exactly {count} concise descriptions of how this category looks in a photo.\n"
      "Each description must mention a different combination of the shared attributes,\n"
      "and no two descriptions may repeat phrasing. Keep each under 20 words.\n"
      "Write one description per line, no numbering, no commentary."};
}

std::string render_step1(std::span<const std::string> categories, int64_t ma,
                         const PromptTemplate& tmpl) {
  if (categories.empty()) throw ParamError("render_step1: category list is empty");
  if (ma < 1) throw ParamError("render_step1: attribute count must be >= 1");
  std::vector<std::string> names(categories.begin(), categories.end());
  return tmpl.render({{"categories", join(names, ", ")}, {"count", std::to_string(ma)}});
}

std::string render_step2(const std::string& category, const AttributeVocabulary& vocab,
                         int64_t s, const PromptTemplate& tmpl) {
  if (s < 1) throw ParamError("render_step2: description count must be >= 1");
  vocab.validate();
  return tmpl.render({{"category", category},
                      {"attributes", join(vocab.attributes, ", ")},
                      {"count", std::to_string(s)}});
}

std::vector<std::string> parse_item_lines(const std::string& text) {
  std::vector<std::string> items;
  for (const auto& raw : split_lines(text)) {
    std::string line = trim(raw);
    // strip "12." / "12)" / "-" / "*" bullets
    size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
      line = trim(line.substr(i + 1));
    } else if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
      line = trim(line.substr(1));
    }
    if (!line.empty()) items.push_back(line);
  }
  return items;
}

bool mentions_attribute(const std::string& description,
                        std::span<const std::string> attributes) {
  const std::string norm = normalize_text(description);
  for (const auto& a : attributes) {
    const std::string na = normalize_text(a);
    if (!na.empty() && norm.find(na) != std::string::npos) return true;
  }
  return false;
}

KnowledgeResult stub_generate(uint64_t seed, std::span<const std::string> categories,
                              int64_t ma, int64_t s) {
  if (categories.empty()) throw ParamError("stub_generate: category list is empty");
  if (ma < 1 || s < 1) throw ParamError("stub_generate: ma and s must be >= 1");

  const auto& pool = builtin_attribute_pool();
  std::vector<std::string> extended = pool;
  for (int64_t grade = 2; static_cast<int64_t>(extended.size()) < ma; ++grade)
    for (const auto& base : pool) {
      if (static_cast<int64_t>(extended.size()) >= ma) break;
      extended.push_back(base + " grade " + std::to_string(grade));
    }

  Rng attr_rng = derive_rng(seed, "stub.attributes");
  std::vector<size_t> order(extended.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  attr_rng.shuffle(order);

  AttributeVocabulary vocab;
  for (int64_t i = 0; i < ma; ++i)
    vocab.attributes.push_back(extended[order[static_cast<size_t>(i)]]);
  uint64_t ph = kFnvOffset;
  for (const auto& c : categories) ph = fnv1a64(c, ph);
  ph = fnv1a64(&ma, sizeof(ma), ph);
  ph = fnv1a64(&s, sizeof(s), ph);
  ph = fnv1a64(&seed, sizeof(seed), ph);
  vocab.provenance = Provenance{"stub", hash_hex(ph), ""};
  vocab.validate();

  if (s > ma * (ma - 1))
    throw GenerationError("stub_generate: cannot form " + std::to_string(s) +
                          " distinct attribute pairs from " + std::to_string(ma) +
                          " attributes");

  DescriptionSet set;
  set.attribute_vocabulary = vocab.attributes;
  for (size_t ci = 0; ci < categories.size(); ++ci) {
    const std::string& cat = categories[ci];
    Rng rng = derive_rng(seed, "stub.descriptions", static_cast<uint64_t>(ci));
    std::set<std::string> used;
    std::vector<std::string> descs;
    while (static_cast<int64_t>(descs.size()) < s) {
      const int64_t a = rng.uniform_int(ma);
      int64_t b = rng.uniform_int(ma - 1);
      if (b >= a) ++b;
      std::string d = cat + ": " + vocab.attributes[static_cast<size_t>(a)] + ", " +
                      vocab.attributes[static_cast<size_t>(b)];
      if (used.insert(d).second) descs.push_back(std::move(d));
    }
    set.categories.push_back(cat);
    set.by_category.emplace(cat, std::move(descs));
  }
  set.validate();
  return KnowledgeResult{std::move(vocab), std::move(set)};
}

void save_knowledge_cache(const std::string& path, const KnowledgeResult& result, int64_t ma,
                          int64_t s) {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["ma"] = ma;
  doc["s"] = s;
  doc["attributes"] = result.vocabulary.attributes;
  doc["category_order"] = result.descriptions.categories;
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& c : result.descriptions.categories)
    cats[c] = result.descriptions.descriptions_for(c);
  doc["categories"] = cats;
  doc["provenance"] = {{"model", result.vocabulary.provenance.model_id},
                       {"prompt_hash", result.vocabulary.provenance.prompt_hash},
                       {"timestamp", result.vocabulary.provenance.timestamp}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << doc.dump(2) << "\n";
}

KnowledgeResult load_knowledge_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": invalid cache JSON: " + e.what());
  }
  KnowledgeResult result;
  result.vocabulary.attributes = doc.at("attributes").get<std::vector<std::string>>();
  const auto& prov = doc.at("provenance");
  result.vocabulary.provenance = Provenance{prov.at("model").get<std::string>(),
                                            prov.at("prompt_hash").get<std::string>(),
                                            prov.at("timestamp").get<std::string>()};
  result.descriptions.attribute_vocabulary = result.vocabulary.attributes;
  result.descriptions.categories = doc.at("category_order").get<std::vector<std::string>>();
  for (const auto& c : result.descriptions.categories)
    result.descriptions.by_category[c] =
        doc.at("categories").at(c).get<std::vector<std::string>>();
  result.vocabulary.validate();
  result.descriptions.validate();
  return result;
}

KnowledgeResult discover_and_generate(LlmClient& client,
                                      std::span<const std::string> categories, int64_t ma,
                                      int64_t s, const std::string& cache_path,
                                      const PromptTemplate& step1,
                                      const PromptTemplate& step2) {
  if (categories.empty()) throw ParamError("discover_and_generate: category list is empty");
  if (ma < 1 || s < 1) throw ParamError("discover_and_generate: ma and s must be >= 1");

  // Replay cache: reuse when it covers the same request.
  if (!cache_path.empty()) {
    std::ifstream probe(cache_path);
    if (probe.good()) {
      try {
        KnowledgeResult cached = load_knowledge_cache(cache_path);
        const std::vector<std::string> want(categories.begin(), categories.end());
        if (cached.descriptions.categories == want && cached.descriptions.per_category() == s)
          return cached;
      } catch (const Error& e) {
        std::cerr << "warning: ignoring unusable cache " << cache_path << ": " << e.what()
                  << "\n";
      }
    }
  }

  const std::string step1_prompt = render_step1(categories, ma, step1);
  const std::string step1_reply = client.complete(step1_prompt, 0.2);

  AttributeVocabulary vocab;
  std::set<std::string> seen_norm;
  for (const auto& item : parse_item_lines(step1_reply)) {
    const std::string norm = normalize_text(item);
    if (norm.empty()) continue;
    if (word_count(item) > 8) {
      std::cerr << "warning: dropping over-long attribute: " << item << "\n";
      continue;
    }
    if (!seen_norm.insert(norm).second) {
      std::cerr << "warning: dropping duplicate attribute: " << item << "\n";
      continue;
    }
    if (static_cast<int64_t>(vocab.attributes.size()) < ma) vocab.attributes.push_back(item);
  }
  if (vocab.attributes.empty())
    throw GenerationError("attribute discovery produced no usable attributes");

  uint64_t ph = fnv1a64(step1_prompt);
  vocab.provenance = Provenance{client.model_id(), hash_hex(ph), iso_timestamp_now()};

  DescriptionSet set;
  set.attribute_vocabulary = vocab.attributes;
  for (const auto& cat : categories) {
    std::vector<std::string> descs;
    std::set<std::string> used;
    const std::string prompt = render_step2(cat, vocab, s, step2);
    // One initial ask plus up to three re-asks, accumulating usable lines.
    for (int attempt = 0; attempt < 4 && static_cast<int64_t>(descs.size()) < s; ++attempt) {
      const std::string reply = client.complete(prompt, 0.7);
      for (const auto& item : parse_item_lines(reply)) {
        if (static_cast<int64_t>(descs.size()) >= s) break;
        if (!mentions_attribute(item, vocab.attributes)) {
          std::cerr << "warning: dropping description without attributes for '" << cat
                    << "': " << item << "\n";
          continue;
        }
        if (!used.insert(item).second) continue;
        descs.push_back(item);
      }
    }
    if (static_cast<int64_t>(descs.size()) < s)
      throw GenerationError("category '" + cat + "' yielded only " +
                            std::to_string(descs.size()) + " of " + std::to_string(s) +
                            " usable descriptions after 3 re-asks");
    set.categories.push_back(cat);
    set.by_category.emplace(cat, std::move(descs));
  }
  set.validate();

  KnowledgeResult result{std::move(vocab), std::move(set)};
  if (!cache_path.empty()) save_knowledge_cache(cache_path, result, ma, s);
  return result;
}

}  // namespace sempt
