#include "sempt/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "sempt/errors.hpp"
#include "sempt/version.hpp"

namespace sempt {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'P', 'C'};

struct BlobDir {
  std::string name;
  Shape shape;
};

void append_f32(std::string& out, std::span<const float> values) {
  static_assert(sizeof(float) == 4);
  for (float v : values) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

std::vector<float> read_f32(const std::string& buf, size_t& pos, int64_t count,
                            const std::string& path) {
  if (pos + static_cast<size_t>(count) * 4 > buf.size())
    throw FormatError(path + ": truncated checkpoint blob section");
  std::vector<float> out(static_cast<size_t>(count));
  for (auto& v : out) {
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i)
      bits |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    std::memcpy(&v, &bits, 4);
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const InferenceEngine<float>& engine,
                     const RunConfig& config) {
  nlohmann::json header;
  header["version"] = kVersion;
  header["config"] = nlohmann::json::parse(config.to_json());
  header["hyper"] = {{"alpha", engine.hyper.alpha},
                     {"beta", engine.hyper.beta},
                     {"top_k", engine.hyper.top_k},
                     {"tau_loss", engine.hyper.tau_loss},
                     {"tau_align", engine.hyper.tau_align},
                     {"normalize_enhanced", engine.hyper.normalize_enhanced},
                     {"loss_over_seen_only", engine.hyper.loss_over_seen_only}};
  header["registry"] = {{"names", engine.registry.names},
                        {"seen", std::vector<int>(engine.registry.seen.begin(),
                                                  engine.registry.seen.end())}};
  header["descriptions"] = {{"num_categories", engine.description_embeddings.num_categories},
                            {"per_category", engine.description_embeddings.per_category},
                            {"dim", engine.description_embeddings.dim}};
  header["toy_backend"] = engine.encoder != nullptr;

  nlohmann::json dir = nlohmann::json::array();
  std::string blob_bytes;
  auto put_blob = [&](const std::string& name, const Shape& shape,
                      std::span<const float> values) {
    dir.push_back({{"name", name}, {"shape", shape}});
    append_f32(blob_bytes, values);
  };
  for (const auto& [name, entry] : engine.params.items())
    put_blob(name, entry.shape, entry.value);
  {
    const int64_t n = engine.registry.size();
    const int64_t d = engine.dim();
    std::vector<float> rows;
    rows.reserve(static_cast<size_t>(n * d));
    for (const auto& r : engine.label_row_values) rows.insert(rows.end(), r.begin(), r.end());
    put_blob("frozen.label_rows", Shape{n, d}, rows);
    put_blob("frozen.description_embeddings",
             Shape{engine.description_embeddings.num_categories,
                   engine.description_embeddings.per_category, d},
             engine.description_embeddings.values);
  }
  header["blobs"] = dir;

  const std::string header_text = header.dump();
  std::string out;
  out.append(kMagic, 4);
  const uint32_t hlen = static_cast<uint32_t>(header_text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((hlen >> (8 * i)) & 0xff));
  out += header_text;
  out += blob_bytes;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path);
}

namespace {

nlohmann::json read_header(const std::string& path, std::string& buf, size_t& pos) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  buf.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError(path + ": not a checkpoint file");
  uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i)
    hlen |= static_cast<uint32_t>(static_cast<unsigned char>(buf[4 + static_cast<size_t>(i)]))
            << (8 * i);
  if (8 + static_cast<size_t>(hlen) > buf.size())
    throw FormatError(path + ": truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(8, hlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": bad checkpoint header: " + e.what());
  }
  pos = 8 + static_cast<size_t>(hlen);
  return header;
}

}  // namespace

RunConfig checkpoint_config(const std::string& path) {
  std::string buf;
  size_t pos = 0;
  const nlohmann::json header = read_header(path, buf, pos);
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : header.at("config").at("values").items())
    kv[k] = v.get<std::string>();
  return RunConfig::from_values(kv, "file");
}

InferenceEngine<float> load_checkpoint(const std::string& path) {
  std::string buf;
  size_t pos = 0;
  const nlohmann::json header = read_header(path, buf, pos);

  InferenceEngine<float> engine;
  const auto& hyper = header.at("hyper");
  engine.hyper.alpha = hyper.at("alpha").get<double>();
  engine.hyper.beta = hyper.at("beta").get<double>();
  engine.hyper.top_k = hyper.at("top_k").get<int64_t>();
  engine.hyper.tau_loss = hyper.at("tau_loss").get<double>();
  engine.hyper.tau_align = hyper.at("tau_align").get<double>();
  engine.hyper.normalize_enhanced = hyper.at("normalize_enhanced").get<bool>();
  engine.hyper.loss_over_seen_only = hyper.at("loss_over_seen_only").get<bool>();
  engine.hyper.validate();

  engine.registry.names = header.at("registry").at("names").get<std::vector<std::string>>();
  for (int v : header.at("registry").at("seen").get<std::vector<int>>())
    engine.registry.seen.push_back(v != 0);
  engine.registry.validate();

  const auto& ddesc = header.at("descriptions");
  engine.description_embeddings.num_categories = ddesc.at("num_categories").get<int64_t>();
  engine.description_embeddings.per_category = ddesc.at("per_category").get<int64_t>();
  engine.description_embeddings.dim = ddesc.at("dim").get<int64_t>();

  for (const auto& blob : header.at("blobs")) {
    const std::string name = blob.at("name").get<std::string>();
    const Shape shape = blob.at("shape").get<Shape>();
    std::vector<float> values = read_f32(buf, pos, numel(shape), path);
    if (name == "frozen.label_rows") {
      const int64_t n = shape.at(0), d = shape.at(1);
      for (int64_t i = 0; i < n; ++i)
        engine.label_row_values.emplace_back(values.begin() + i * d,
                                             values.begin() + (i + 1) * d);
    } else if (name == "frozen.description_embeddings") {
      engine.description_embeddings.values = std::move(values);
    } else {
      engine.params.add(name, shape, std::move(values));
    }
  }
  if (pos != buf.size()) throw FormatError(path + ": trailing bytes after blobs");

  if (header.at("toy_backend").get<bool>()) {
    const RunConfig cfg = checkpoint_config(path);
    EncoderConfig ec = cfg.encoder;
    ec.backend = "toy";
    engine.encoder = std::make_shared<ToyDualEncoder<float>>(ec);
  }
  return engine;
}

}  // namespace sempt
