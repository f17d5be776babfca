#pragma once

#include <memory>
#include <string>

#include "sempt/knowledge.hpp"

namespace sempt {

// Chat-completion client speaking the usual JSON wire format. Endpoint, key
// and model come from SEMPT_LLM_URL / SEMPT_LLM_KEY / SEMPT_LLM_MODEL.
class HttpLlmClient : public LlmClient {
 public:
  HttpLlmClient(std::string url, std::string api_key, std::string model);
  static std::unique_ptr<HttpLlmClient> from_env();

  std::string model_id() const override { return model_; }

 private:
  std::string do_complete(const std::string& prompt, double temperature) override;

  std::string url_;
  std::string api_key_;
  std::string model_;
};

}  // namespace sempt
