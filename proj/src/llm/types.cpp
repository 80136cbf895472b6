// SPDX-License-Identifier: Apache-2.0
#include "oceanql/llm/types.hpp"

#include "oceanql/text.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace oceanql::llm {

namespace {

constexpr std::array<std::pair<Profile, std::string_view>, 7> kProfiles = {{
    {Profile::Evaluator, "evaluator"},
    {Profile::SqlGeneral, "sql_general"},
    {Profile::SqlSimilarity, "sql_similarity"},
    {Profile::SqlVisualization, "sql_visualization"},
    {Profile::KgExtraction, "kg_extraction"},
    {Profile::ChartCode, "chart_code"},
    {Profile::GeneralAnswer, "general_answer"},
}};

}  // namespace

std::string_view to_string(Profile p) {
  for (const auto& [k, v] : kProfiles) {
    if (k == p) return v;
  }
  return "evaluator";
}

Profile profile_from_string(std::string_view s) {
  for (const auto& [k, v] : kProfiles) {
    if (v == s) return k;
  }
  throw std::invalid_argument("unknown profile: " + std::string(s));
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "assistant") return Role::Assistant;
  if (s == "tool") return Role::Tool;
  if (s == "user") return Role::User;
  throw std::invalid_argument("unknown role: " + std::string(s));
}

std::string_view to_string(OutputKind k) {
  switch (k) {
    case OutputKind::Names: return "names";
    case OutputKind::Rows: return "rows";
    case OutputKind::Taxonomy: return "taxonomy";
    case OutputKind::Chart: return "chart";
    case OutputKind::Text: return "text";
  }
  return "text";
}

double EmbeddingVector::norm() const {
  double s = 0;
  for (float v : values) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

void EmbeddingVector::normalize() {
  const double n = norm();
  if (n == 0) return;
  for (auto& v : values) v = static_cast<float>(v / n);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.values.size() != b.values.size()) {
    throw std::invalid_argument("embedding dimension mismatch");
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += static_cast<double>(a.values[i]) * b.values[i];
    na += static_cast<double>(a.values[i]) * a.values[i];
    nb += static_cast<double>(b.values[i]) * b.values[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string_view last_user_content(const ChatRequest& req) {
  for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
    if (it->role == Role::User) return it->content;
  }
  return {};
}

std::uint64_t count_prompt_tokens(const ChatRequest& req) {
  std::uint64_t n = 0;
  for (const auto& m : req.messages) {
    n += text::count_tokens(m.content);
    if (m.tool_call) {
      n += text::count_tokens(m.tool_call->name) + text::count_tokens(m.tool_call->arguments.dump());
    }
  }
  for (const auto& t : req.tools) {
    n += text::count_tokens(t.name) + text::count_tokens(t.description);
    for (const auto& p : t.input_schema) n += text::count_tokens(p.name) + text::count_tokens(p.description);
  }
  return n;
}

nlohmann::json to_json(const Message& m) {
  nlohmann::json j = {{"role", to_string(m.role)}, {"content", m.content}};
  if (m.tool_call) {
    j["tool_call"] = {{"id", m.tool_call->id}, {"name", m.tool_call->name}, {"arguments", m.tool_call->arguments}};
  }
  if (!m.tool_name.empty()) j["tool_name"] = m.tool_name;
  if (!m.tool_call_id.empty()) j["tool_call_id"] = m.tool_call_id;
  return j;
}

nlohmann::json to_json(const ToolDescriptor& t) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : t.input_schema) {
    params.push_back({{"name", p.name}, {"type", p.type}, {"description", p.description}, {"required", p.required}});
  }
  return {{"name", t.name}, {"description", t.description}, {"input_schema", params},
          {"output_kind", to_string(t.output_kind)}};
}

nlohmann::json to_json(const ChatRequest& r) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : r.messages) msgs.push_back(to_json(m));
  nlohmann::json tools = nlohmann::json::array();
  for (const auto& t : r.tools) tools.push_back(to_json(t));
  return {{"profile", to_string(r.profile)}, {"messages", msgs}, {"tools", tools},
          {"max_tokens", r.max_tokens}, {"temperature", r.temperature}};
}

nlohmann::json to_json(const ChatResponse& r) {
  nlohmann::json j;
  if (r.is_tool_call()) {
    j["tool_call"] = {{"name", r.call.name}, {"arguments", r.call.arguments}};
  } else {
    j["text"] = r.text;
  }
  j["usage"] = {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}};
  return j;
}

}  // namespace oceanql::llm
