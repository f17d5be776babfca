#include "sempt/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>

#include "json.hpp"
#include "sempt/errors.hpp"
#include "sempt/strings.hpp"
#include "sempt/version.hpp"

namespace sempt {

namespace {

int64_t parse_i64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int64_t out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw FormatError("config key " + key + ": expected an integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw FormatError("config key " + key + ": expected an unsigned integer, got '" + v + "'");
  }
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw FormatError("config key " + key + ": expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw FormatError("config key " + key + ": expected true/false, got '" + v + "'");
}

struct KeyDef {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"backend", [](RunConfig& c, const std::string& v) { c.backend = v; },
       [](const RunConfig& c) { return c.backend; }},
      {"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
       [](const RunConfig& c) { return c.out_dir; }},
      {"protocol", [](RunConfig& c, const std::string& v) { c.protocol = v; },
       [](const RunConfig& c) { return c.protocol; }},
      {"alpha", [](RunConfig& c, const std::string& v) { c.alpha = parse_f64("alpha", v); },
       [](const RunConfig& c) { return format_double(c.alpha); }},
      {"beta", [](RunConfig& c, const std::string& v) { c.beta = parse_f64("beta", v); },
       [](const RunConfig& c) { return format_double(c.beta); }},
      {"top_k", [](RunConfig& c, const std::string& v) { c.top_k = parse_i64("top_k", v); },
       [](const RunConfig& c) { return std::to_string(c.top_k); }},
      {"tau_loss",
       [](RunConfig& c, const std::string& v) { c.tau_loss = parse_f64("tau_loss", v); },
       [](const RunConfig& c) { return format_double(c.tau_loss); }},
      {"tau_align",
       [](RunConfig& c, const std::string& v) { c.tau_align = parse_f64("tau_align", v); },
       [](const RunConfig& c) { return format_double(c.tau_align); }},
      {"normalize_enhanced",
       [](RunConfig& c, const std::string& v) {
         c.normalize_enhanced = parse_bool("normalize_enhanced", v);
       },
       [](const RunConfig& c) { return c.normalize_enhanced ? "true" : "false"; }},
      {"loss_over_seen_only",
       [](RunConfig& c, const std::string& v) {
         c.loss_over_seen_only = parse_bool("loss_over_seen_only", v);
       },
       [](const RunConfig& c) { return c.loss_over_seen_only ? "true" : "false"; }},
      {"epochs", [](RunConfig& c, const std::string& v) { c.epochs = parse_i64("epochs", v); },
       [](const RunConfig& c) { return std::to_string(c.epochs); }},
      {"batch_size",
       [](RunConfig& c, const std::string& v) { c.batch_size = parse_i64("batch_size", v); },
       [](const RunConfig& c) { return std::to_string(c.batch_size); }},
      {"learning_rate",
       [](RunConfig& c, const std::string& v) {
         c.learning_rate = parse_f64("learning_rate", v);
       },
       [](const RunConfig& c) { return format_double(c.learning_rate); }},
      {"shots", [](RunConfig& c, const std::string& v) { c.shots = parse_i64("shots", v); },
       [](const RunConfig& c) { return std::to_string(c.shots); }},
      {"ma", [](RunConfig& c, const std::string& v) { c.ma = parse_i64("ma", v); },
       [](const RunConfig& c) { return std::to_string(c.ma); }},
      {"s", [](RunConfig& c, const std::string& v) { c.s = parse_i64("s", v); },
       [](const RunConfig& c) { return std::to_string(c.s); }},
      {"knowledge_cache",
       [](RunConfig& c, const std::string& v) { c.knowledge_cache = v; },
       [](const RunConfig& c) { return c.knowledge_cache; }},
      {"dump_diagnostics",
       [](RunConfig& c, const std::string& v) {
         c.dump_diagnostics = parse_bool("dump_diagnostics", v);
       },
       [](const RunConfig& c) { return c.dump_diagnostics ? "true" : "false"; }},
      {"ablate_embedding",
       [](RunConfig& c, const std::string& v) {
         c.ablate_embedding = parse_bool("ablate_embedding", v);
       },
       [](const RunConfig& c) { return c.ablate_embedding ? "true" : "false"; }},
      {"transfer_seeds",
       [](RunConfig& c, const std::string& v) {
         c.transfer_seeds = parse_i64("transfer_seeds", v);
       },
       [](const RunConfig& c) { return std::to_string(c.transfer_seeds); }},
      {"data.bank", [](RunConfig& c, const std::string& v) { c.data_bank = v; },
       [](const RunConfig& c) { return c.data_bank; }},
      {"data.items", [](RunConfig& c, const std::string& v) { c.data_items = v; },
       [](const RunConfig& c) { return c.data_items; }},
      // toy encoder
      {"encoder.input_width",
       [](RunConfig& c, const std::string& v) {
         c.encoder.input_width = parse_i64("encoder.input_width", v);
       },
       [](const RunConfig& c) { return std::to_string(c.encoder.input_width); }},
      {"encoder.embed_dim",
       [](RunConfig& c, const std::string& v) {
         c.encoder.embed_dim = parse_i64("encoder.embed_dim", v);
       },
       [](const RunConfig& c) { return std::to_string(c.encoder.embed_dim); }},
      {"encoder.layers",
       [](RunConfig& c, const std::string& v) {
         c.encoder.mixing_layers = parse_i64("encoder.layers", v);
       },
       [](const RunConfig& c) { return std::to_string(c.encoder.mixing_layers); }},
      {"encoder.vocab_size",
       [](RunConfig& c, const std::string& v) {
         c.encoder.vocab_size = parse_i64("encoder.vocab_size", v);
       },
       [](const RunConfig& c) { return std::to_string(c.encoder.vocab_size); }},
      {"encoder.visual_prompt_len",
       [](RunConfig& c, const std::string& v) {
         c.encoder.visual_prompt_len = parse_i64("encoder.visual_prompt_len", v);
       },
       [](const RunConfig& c) { return std::to_string(c.encoder.visual_prompt_len); }},
      {"encoder.text_prompt_len",
       [](RunConfig& c, const std::string& v) {
         c.encoder.text_prompt_len = parse_i64("encoder.text_prompt_len", v);
       },
       [](const RunConfig& c) { return std::to_string(c.encoder.text_prompt_len); }},
      {"encoder.max_text_len",
       [](RunConfig& c, const std::string& v) {
         c.encoder.max_text_len = parse_i64("encoder.max_text_len", v);
       },
       [](const RunConfig& c) { return std::to_string(c.encoder.max_text_len); }},
      {"encoder.seed",
       [](RunConfig& c, const std::string& v) { c.encoder.seed = parse_u64("encoder.seed", v); },
       [](const RunConfig& c) { return std::to_string(c.encoder.seed); }},
      // synthetic world
      {"world.latent_attributes",
       [](RunConfig& c, const std::string& v) {
         c.world.latent_attributes = parse_i64("world.latent_attributes", v);
       },
       [](const RunConfig& c) { return std::to_string(c.world.latent_attributes); }},
      {"world.attributes_per_category",
       [](RunConfig& c, const std::string& v) {
         c.world.attributes_per_category = parse_i64("world.attributes_per_category", v);
       },
       [](const RunConfig& c) { return std::to_string(c.world.attributes_per_category); }},
      {"world.num_seen",
       [](RunConfig& c, const std::string& v) {
         c.world.num_seen = parse_i64("world.num_seen", v);
       },
       [](const RunConfig& c) { return std::to_string(c.world.num_seen); }},
      {"world.num_unseen",
       [](RunConfig& c, const std::string& v) {
         c.world.num_unseen = parse_i64("world.num_unseen", v);
       },
       [](const RunConfig& c) { return std::to_string(c.world.num_unseen); }},
      {"world.samples_per_category",
       [](RunConfig& c, const std::string& v) {
         c.world.samples_per_category = parse_i64("world.samples_per_category", v);
       },
       [](const RunConfig& c) { return std::to_string(c.world.samples_per_category); }},
      {"world.noise_sigma",
       [](RunConfig& c, const std::string& v) {
         c.world.noise_sigma = parse_f64("world.noise_sigma", v);
       },
       [](const RunConfig& c) { return format_double(c.world.noise_sigma); }},
      {"world.label_noise",
       [](RunConfig& c, const std::string& v) {
         c.world.label_noise = parse_f64("world.label_noise", v);
       },
       [](const RunConfig& c) { return format_double(c.world.label_noise); }},
      {"world.embed_dim",
       [](RunConfig& c, const std::string& v) {
         c.world.embed_dim = parse_i64("world.embed_dim", v);
       },
       [](const RunConfig& c) { return std::to_string(c.world.embed_dim); }},
      {"world.descriptions_per_category",
       [](RunConfig& c, const std::string& v) {
         c.world.descriptions_per_category = parse_i64("world.descriptions_per_category", v);
       },
       [](const RunConfig& c) { return std::to_string(c.world.descriptions_per_category); }},
      {"world.exact_descriptions",
       [](RunConfig& c, const std::string& v) {
         c.world.exact_descriptions = parse_bool("world.exact_descriptions", v);
       },
       [](const RunConfig& c) { return c.world.exact_descriptions ? "true" : "false"; }},
      {"world.seed",
       [](RunConfig& c, const std::string& v) { c.world.seed = parse_u64("world.seed", v); },
       [](const RunConfig& c) { return std::to_string(c.world.seed); }},
  };
  return table;
}

const KeyDef* find_key(const std::string& name) {
  for (const auto& def : key_table())
    if (name == def.name) return &def;
  return nullptr;
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value,
                      const std::string& origin) {
  const KeyDef* def = find_key(key);
  if (!def) throw FormatError("unknown config key: " + key);
  def->set(*this, value);
  provenance[key] = origin;
}

RunConfig RunConfig::from_values(const std::map<std::string, std::string>& values,
                                 const std::string& origin) {
  RunConfig cfg;
  for (const auto& [k, v] : values) cfg.apply(k, v, origin);
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::string first = trim(text);
  if (!first.empty() && first[0] == '{') {
    // Embedded-config JSON (the form every artifact carries).
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path + ": invalid JSON config: " + e.what());
    }
    const nlohmann::json& values = doc.contains("values") ? doc["values"] : doc;
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : values.items())
      kv[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return from_values(kv, "file");
  }

  RunConfig cfg;
  std::string section;
  int64_t lineno = 0;
  for (const auto& raw : split_lines(text)) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const size_t comment = line.find(" #");
    if (comment != std::string::npos && line.find('"') == std::string::npos)
      line = trim(line.substr(0, comment));
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (!section.empty()) key = section + "." + key;
    cfg.apply(key, value, "file");
  }
  return cfg;
}

std::map<std::string, std::string> RunConfig::values() const {
  std::map<std::string, std::string> out;
  for (const auto& def : key_table()) out[def.name] = def.get(*this);
  return out;
}

std::string RunConfig::to_json() const {
  nlohmann::json doc;
  doc["version"] = kVersion;
  nlohmann::json vals = nlohmann::json::object();
  for (const auto& [k, v] : values()) vals[k] = v;
  doc["values"] = vals;
  nlohmann::json prov = nlohmann::json::object();
  for (const auto& def : key_table()) {
    auto it = provenance.find(def.name);
    prov[def.name] = it == provenance.end() ? "default" : it->second;
  }
  doc["provenance"] = prov;
  return doc.dump(2) + "\n";
}

std::vector<std::string> RunConfig::header_lines() const {
  std::vector<std::string> lines;
  lines.push_back(std::string("# version: ") + kVersion);
  for (const auto& [k, v] : values()) {
    auto it = provenance.find(k);
    const std::string origin = it == provenance.end() ? "default" : it->second;
    lines.push_back("# " + k + " = " + v + " (" + origin + ")");
  }
  return lines;
}

void RunConfig::validate() const {
  if (backend != "toy" && backend != "precomputed")
    throw ParamError("backend must be 'toy' or 'precomputed', got " + backend);
  static const std::vector<std::string> protocols = {"base-to-novel", "cross-dataset",
                                                     "few-shot", "transfer-check"};
  if (std::find(protocols.begin(), protocols.end(), protocol) == protocols.end())
    throw ParamError("unknown protocol: " + protocol);
  if (epochs < 1 || batch_size < 1) throw ParamError("epochs and batch_size must be >= 1");
  if (shots < 1) throw ParamError("shots must be >= 1");
  if (transfer_seeds < 1) throw ParamError("transfer_seeds must be >= 1");
  if (!(learning_rate > 0.0)) throw ParamError("learning_rate must be positive");
}

}  // namespace sempt
