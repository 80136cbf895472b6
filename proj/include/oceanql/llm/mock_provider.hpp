// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/llm/gateway.hpp"

#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace oceanql::llm {

/// One scripted reply: a response or a simulated transport failure.
struct ScriptedReply {
  std::optional<ChatResponse> response;
  std::string error;

  static ScriptedReply text(std::string t) { return {ChatResponse::make_text(std::move(t)), {}}; }
  static ScriptedReply json(const nlohmann::json& j) { return text(j.dump()); }
  static ScriptedReply tool(std::string name, nlohmann::json args = nlohmann::json::object()) {
    return {ChatResponse::make_tool_call(std::move(name), std::move(args)), {}};
  }
  static ScriptedReply failure(std::string message) { return {std::nullopt, std::move(message)}; }
};

/// Transcript rule. All present criteria must hold. Among matches, a
/// fingerprint rule wins; otherwise the rule whose `contains` text occurs
/// latest in the final user message; then file order.
struct TranscriptRule {
  Profile profile = Profile::Evaluator;
  std::optional<std::string> contains;
  std::optional<bool> with_tools;
  std::optional<std::vector<std::string>> tools_done;
  std::optional<std::string> fingerprint;
  ScriptedReply reply;
  std::string origin;
};

/// Deterministic offline provider. Replies come first from per-profile
/// scripted queues, then from transcript rules. Token usage is counted in
/// whitespace tokens.
class MockProvider : public Provider {
 public:
  static constexpr std::size_t kEmbeddingDim = 16;

  MockProvider() = default;

  /// Loads every *.json transcript file in a directory (sorted by name) or a
  /// single file.
  void load_transcripts(const std::filesystem::path& path);
  void add_rules_from_json(const nlohmann::json& j, const std::string& origin);
  void add_rule(TranscriptRule rule);

  /// FIFO queue consulted before rules for the given profile.
  void enqueue(Profile profile, ScriptedReply reply);
  /// Served whenever the queue and rules are exhausted for this profile.
  void set_fallback(Profile profile, ScriptedReply reply);
  [[nodiscard]] std::size_t pending(Profile profile) const;

  ChatResponse complete(const ChatRequest& request) override;
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  [[nodiscard]] std::string name() const override { return "mock"; }

  [[nodiscard]] std::size_t rule_count() const;

  /// fnv1a64 over "<profile>\n<last user message>", hex encoded.
  static std::string fingerprint(const ChatRequest& request);

  /// Pure function of the text: glossary axes on dims 0..6, hashed tokens on
  /// dims 7..15, unit-normalised.
  static EmbeddingVector mock_embedding(std::string_view text);

 private:
  mutable std::mutex mu_;
  std::map<Profile, std::deque<ScriptedReply>> queues_;
  std::map<Profile, ScriptedReply> fallbacks_;
  std::vector<TranscriptRule> rules_;
};

/// Parses a reply object: {"text": ...} | {"json": {...}} |
/// {"tool_call": {"name": ..., "arguments": {...}}} | {"error": ...}.
ScriptedReply parse_reply(const nlohmann::json& j);

}  // namespace oceanql::llm
