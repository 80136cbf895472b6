// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oceanql::llm {

/// Each profile stands in for one specialised model: it fixes the system
/// preamble and the two bundled demonstrations sent with every request.
enum class Profile {
  Evaluator,
  SqlGeneral,
  SqlSimilarity,
  SqlVisualization,
  KgExtraction,
  ChartCode,
  GeneralAnswer,
};

std::string_view to_string(Profile p);
Profile profile_from_string(std::string_view s);

enum class Role { System, User, Assistant, Tool };

std::string_view to_string(Role r);
Role role_from_string(std::string_view s);

struct ToolCall {
  std::string id;
  std::string name;
  nlohmann::json arguments = nlohmann::json::object();
};

struct Message {
  Role role = Role::User;
  std::string content;
  /// Assistant messages that selected a tool.
  std::optional<ToolCall> tool_call;
  /// Tool messages: which tool produced the content.
  std::string tool_name;
  std::string tool_call_id;

  static Message system(std::string text) { return {Role::System, std::move(text), {}, {}, {}}; }
  static Message user(std::string text) { return {Role::User, std::move(text), {}, {}, {}}; }
  static Message assistant(std::string text) { return {Role::Assistant, std::move(text), {}, {}, {}}; }
};

enum class OutputKind { Names, Rows, Taxonomy, Chart, Text };

std::string_view to_string(OutputKind k);

struct ToolParam {
  std::string name;
  std::string type;  // JSON-schema primitive: string, boolean, array
  std::string description;
  bool required = false;
};

struct ToolDescriptor {
  std::string name;
  std::string description;
  std::vector<ToolParam> input_schema;
  OutputKind output_kind = OutputKind::Text;
};

struct TokenUsage {
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;

  [[nodiscard]] std::uint64_t total() const { return prompt_tokens + completion_tokens; }
  TokenUsage& operator+=(const TokenUsage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    return *this;
  }
  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

struct ChatRequest {
  Profile profile = Profile::Evaluator;
  std::vector<Message> messages;
  std::vector<ToolDescriptor> tools;
  std::size_t max_tokens = 16000;
  double temperature = 0.0;
};

struct ChatResponse {
  enum class Kind { Text, ToolCall };
  Kind kind = Kind::Text;
  std::string text;
  ToolCall call;
  TokenUsage usage;

  static ChatResponse make_text(std::string t) {
    ChatResponse r;
    r.text = std::move(t);
    return r;
  }
  static ChatResponse make_tool_call(std::string name, nlohmann::json args) {
    ChatResponse r;
    r.kind = Kind::ToolCall;
    r.call.name = std::move(name);
    r.call.arguments = std::move(args);
    return r;
  }
  [[nodiscard]] bool is_tool_call() const { return kind == Kind::ToolCall; }
};

struct EmbeddingVector {
  std::vector<float> values;

  [[nodiscard]] double norm() const;
  /// Scales to unit length; zero vectors stay zero.
  void normalize();
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Last user message of a request, or empty.
std::string_view last_user_content(const ChatRequest& req);

/// Sum of whitespace tokens over every message and tool descriptor.
std::uint64_t count_prompt_tokens(const ChatRequest& req);

nlohmann::json to_json(const Message& m);
nlohmann::json to_json(const ChatRequest& r);
nlohmann::json to_json(const ChatResponse& r);
nlohmann::json to_json(const ToolDescriptor& t);

}  // namespace oceanql::llm
