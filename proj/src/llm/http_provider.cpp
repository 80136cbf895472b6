// SPDX-License-Identifier: Apache-2.0
#include "oceanql/llm/http_provider.hpp"

#include "oceanql/error.hpp"

#include <httplib.h>

#include <cstdlib>

namespace oceanql::llm {

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return (v && *v) ? std::string(v) : fallback;
}

nlohmann::json tool_schema(const ToolDescriptor& t) {
  nlohmann::json props = nlohmann::json::object();
  nlohmann::json required = nlohmann::json::array();
  for (const auto& p : t.input_schema) {
    nlohmann::json prop = {{"type", p.type}, {"description", p.description}};
    if (p.type == "array") prop["items"] = {{"type", "string"}};
    props[p.name] = prop;
    if (p.required) required.push_back(p.name);
  }
  return {{"type", "function"},
          {"function",
           {{"name", t.name},
            {"description", t.description},
            {"parameters", {{"type", "object"}, {"properties", props}, {"required", required}}}}}};
}

}  // namespace

HttpProviderConfig HttpProviderConfig::from_env() {
  HttpProviderConfig c;
  c.base_url = env_or("LLM_BASE_URL", "");
  c.api_key = env_or("LLM_API_KEY", "");
  c.chat_model = env_or("LLM_CHAT_MODEL", c.chat_model);
  c.embedding_model = env_or("LLM_EMBED_MODEL", c.embedding_model);
  if (c.base_url.empty()) throw std::runtime_error("LLM_BASE_URL is not set");
  return c;
}

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
  // Split "scheme://host[:port]/prefix" into an origin for the client and a
  // path prefix prepended to every endpoint.
  const auto scheme_end = config_.base_url.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = config_.base_url.find('/', host_start);
  if (path_start == std::string::npos) {
    origin_ = config_.base_url;
  } else {
    origin_ = config_.base_url.substr(0, path_start);
    path_prefix_ = config_.base_url.substr(path_start);
  }
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

nlohmann::json HttpProvider::chat_body(const ChatRequest& request) const {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    nlohmann::json msg = {{"role", to_string(m.role)}, {"content", m.content}};
    if (m.tool_call) {
      msg["tool_calls"] = nlohmann::json::array(
          {{{"id", m.tool_call->id},
            {"type", "function"},
            {"function", {{"name", m.tool_call->name}, {"arguments", m.tool_call->arguments.dump()}}}}});
    }
    if (m.role == Role::Tool) msg["tool_call_id"] = m.tool_call_id;
    messages.push_back(std::move(msg));
  }
  nlohmann::json body = {{"model", config_.chat_model},
                         {"messages", messages},
                         {"temperature", request.temperature}};
  if (!request.tools.empty()) {
    nlohmann::json tools = nlohmann::json::array();
    for (const auto& t : request.tools) tools.push_back(tool_schema(t));
    body["tools"] = tools;
  }
  return body;
}

ChatResponse HttpProvider::parse_chat_response(const nlohmann::json& body) {
  try {
    const auto& msg = body.at("choices").at(0).at("message");
    ChatResponse r;
    if (msg.contains("tool_calls") && msg["tool_calls"].is_array() && !msg["tool_calls"].empty()) {
      const auto& call = msg["tool_calls"][0];
      const auto& fn = call.at("function");
      nlohmann::json args = nlohmann::json::object();
      const auto& raw = fn.value("arguments", std::string("{}"));
      args = nlohmann::json::parse(raw, nullptr, false);
      if (args.is_discarded()) args = nlohmann::json::object();
      r = ChatResponse::make_tool_call(fn.at("name").get<std::string>(), std::move(args));
      r.call.id = call.value("id", "");
    } else {
      const auto& content = msg.at("content");
      r = ChatResponse::make_text(content.is_string() ? content.get<std::string>() : std::string());
    }
    if (body.contains("usage")) {
      r.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0ULL);
      r.usage.completion_tokens = body["usage"].value("completion_tokens", 0ULL);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed chat response: ") + e.what());
  }
}

nlohmann::json HttpProvider::post(const std::string& path, const nlohmann::json& body) {
  httplib::Client client(origin_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  auto res = client.Post(path_prefix_ + path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("http provider: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("http provider: status " + std::to_string(res->status) + ": " + res->body);
  }
  auto parsed = nlohmann::json::parse(res->body, nullptr, false);
  if (parsed.is_discarded()) throw TransportError("http provider: response is not JSON");
  return parsed;
}

ChatResponse HttpProvider::complete(const ChatRequest& request) {
  return parse_chat_response(post("/chat/completions", chat_body(request)));
}

std::vector<EmbeddingVector> HttpProvider::embed(const std::vector<std::string>& texts) {
  const auto body = post("/embeddings", {{"model", config_.embedding_model}, {"input", texts}});
  std::vector<EmbeddingVector> out;
  try {
    for (const auto& d : body.at("data")) {
      EmbeddingVector v;
      v.values = d.at("embedding").get<std::vector<float>>();
      out.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed embedding response: ") + e.what());
  }
  if (out.size() != texts.size()) throw TransportError("embedding count mismatch");
  return out;
}

}  // namespace oceanql::llm
