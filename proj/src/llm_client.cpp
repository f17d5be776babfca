#include "sempt/llm_client.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#ifdef SEMPT_WITH_TLS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"
#include "json.hpp"
#include "sempt/errors.hpp"

namespace sempt {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ParamError("SEMPT_LLM_URL needs a scheme: " + url);
  const size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return ParsedUrl{url, "/"};
  return ParsedUrl{url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpLlmClient::HttpLlmClient(std::string url, std::string api_key, std::string model)
    : url_(std::move(url)), api_key_(std::move(api_key)), model_(std::move(model)) {
  if (url_.empty()) throw ParamError("LLM endpoint URL is empty");
  if (model_.empty()) throw ParamError("LLM model id is empty");
#ifndef SEMPT_WITH_TLS
  if (url_.rfind("https://", 0) == 0)
    throw UnsupportedError("built without TLS support; use an http:// endpoint");
#endif
}

std::unique_ptr<HttpLlmClient> HttpLlmClient::from_env() {
  const char* url = std::getenv("SEMPT_LLM_URL");
  const char* key = std::getenv("SEMPT_LLM_KEY");
  const char* model = std::getenv("SEMPT_LLM_MODEL");
  if (!url || !*url)
    throw ParamError("SEMPT_LLM_URL is not set; pass --stub for offline generation");
  if (!model || !*model) throw ParamError("SEMPT_LLM_MODEL is not set");
  return std::make_unique<HttpLlmClient>(url, key ? key : "", model);
}

std::string HttpLlmClient::do_complete(const std::string& prompt, double temperature) {
  const ParsedUrl parsed = split_url(url_);
  nlohmann::json body;
  body["model"] = model_;
  body["temperature"] = temperature;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt < 3; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(250 * (1 << attempt)));
    httplib::Client client(parsed.origin);
    client.set_connection_timeout(10);
    client.set_read_timeout(120);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(parsed.path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      continue;
    }
    try {
      nlohmann::json doc = nlohmann::json::parse(res->body);
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("malformed completion response: ") + e.what();
    }
  }
  throw IoError("LLM request failed after retries: " + last_error);
}

}  // namespace sempt
