// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/pipeline/orchestrator.hpp"

#include <filesystem>

namespace oceanql::pipeline {

struct ReplayTurn {
  std::string prompt;
  /// output_kind, and optionally modified_prompt, sql_contains, dispatched,
  /// new_spec (the chart must differ from the previous one).
  nlohmann::json expect = nlohmann::json::object();
};

struct ReplayConversation {
  std::string id;
  std::vector<ReplayTurn> turns;
};

/// Throws FormatError.
std::vector<ReplayConversation> load_conversations(const std::filesystem::path& path);
std::vector<ReplayConversation> conversations_from_json(const nlohmann::json& j);

struct TurnOutcome {
  std::string prompt;
  std::string output_kind;
  std::string modified_prompt;
  std::vector<std::string> failures;
  std::vector<std::string> leaks;
  llm::TokenUsage usage;
  double latency_ms = 0;
  [[nodiscard]] bool pass() const { return failures.empty(); }
};

struct ConversationOutcome {
  std::string id;
  std::vector<TurnOutcome> turns;
  [[nodiscard]] bool pass() const;
  [[nodiscard]] std::uint64_t total_tokens() const;
  [[nodiscard]] double max_latency_ms() const;
};

struct ReplayReport {
  ContextMode mode = ContextMode::ModifiedPrompt;
  std::vector<ConversationOutcome> conversations;
  [[nodiscard]] std::uint64_t total_tokens() const;
  [[nodiscard]] std::size_t passed() const;
  /// Latencies are left out unless asked for, so the report is reproducible.
  [[nodiscard]] nlohmann::json to_json(bool with_latency = false) const;
};

/// Replays every conversation in a fresh ConversationState. In modified_prompt
/// mode a turn also fails when a prior turn leaks into a downstream request.
ReplayReport replay(const std::vector<ReplayConversation>& conversations, const Services& services,
                    EvaluateOptions options);

/// Side-by-side token totals of two reports over the same conversations.
nlohmann::json compare_modes(const ReplayReport& modified, const ReplayReport& full);

}  // namespace oceanql::pipeline
