// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/llm/gateway.hpp"

#include <chrono>
#include <string>

namespace oceanql::llm {

struct HttpProviderConfig {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string api_key;
  std::string chat_model = "gpt-3.5-turbo-0125";
  std::string embedding_model = "text-embedding-3-small";
  std::chrono::seconds timeout{30};

  /// Reads LLM_BASE_URL, LLM_API_KEY and the optional LLM_CHAT_MODEL,
  /// LLM_EMBED_MODEL. Throws std::runtime_error if the base URL is unset.
  static HttpProviderConfig from_env();
};

/// OpenAI-compatible chat-completion and embedding client.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config);

  ChatResponse complete(const ChatRequest& request) override;
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  [[nodiscard]] std::string name() const override { return "http"; }

  /// Request body for /chat/completions.
  [[nodiscard]] nlohmann::json chat_body(const ChatRequest& request) const;
  static ChatResponse parse_chat_response(const nlohmann::json& body);

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body);

  HttpProviderConfig config_;
  std::string origin_;
  std::string path_prefix_;
};

}  // namespace oceanql::llm
