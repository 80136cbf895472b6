// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/data/datastore.hpp"
#include "oceanql/error.hpp"
#include "oceanql/llm/gateway.hpp"
#include "oceanql/resolve/name_resolver.hpp"
#include "oceanql/similarity/index.hpp"
#include "oceanql/sql/synthesis.hpp"
#include "oceanql/taxonomy/taxonomy.hpp"
#include "oceanql/vision/image.hpp"
#include "oceanql/viz/chart.hpp"

#include <json.hpp>

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace oceanql::pipeline {

struct StageEvent {
  std::size_t seq = 0;  // per session, from 1
  std::string stage;    // e.g. "resolving names"
  std::string tool;     // dispatched tool, empty for non-tool stages
  std::int64_t at_ms = 0;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct Turn {
  llm::Role role = llm::Role::User;
  std::string content;
  std::vector<std::string> attachments;  // image refs
};

struct ResultSummary {
  std::size_t turn = 0;  // index of the user turn it answers
  std::string text;      // at most EvaluateOptions::summary_cap bytes
};

/// Per-session state. Turns are append-only.
class ConversationState {
 public:
  explicit ConversationState(std::string session_id) : session_id_(std::move(session_id)) {}

  [[nodiscard]] const std::string& session_id() const { return session_id_; }
  [[nodiscard]] const std::vector<Turn>& turns() const { return turns_; }
  [[nodiscard]] const std::vector<StageEvent>& stage_log() const { return stage_log_; }
  [[nodiscard]] const std::vector<ResultSummary>& result_summaries() const { return summaries_; }

  std::size_t append_turn(Turn t);
  void add_summary(ResultSummary s);
  const StageEvent& add_stage(std::string stage, std::string tool);

  /// Last chart, for follow-up modifications.
  std::optional<viz::VizResult> last_chart;

 private:
  std::string session_id_;
  std::vector<Turn> turns_;
  std::vector<StageEvent> stage_log_;
  std::vector<ResultSummary> summaries_;
};

struct ModifiedPrompt {
  std::string text;
  std::size_t source_turn = 0;
  std::vector<std::string> injected_context;
};

enum class ResponseKind { Text, Table, Images, Chart, Taxonomy, Error };
std::string_view to_string(ResponseKind k);

struct PipelineResponse {
  ResponseKind output_kind = ResponseKind::Text;
  nlohmann::json payload = nlohmann::json::object();
  std::optional<std::string> sql;
  std::vector<StageEvent> stages;
  llm::TokenUsage token_usage;
  std::string modified_prompt;
  std::vector<std::string> dispatched;  // tool names in order

  /// Error payload: {"category", "detail"}.
  static PipelineResponse error(ErrorCategory c, const std::string& detail);
  [[nodiscard]] std::optional<ErrorCategory> error_category() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// How downstream calls see earlier turns.
enum class ContextMode {
  ModifiedPrompt,  // one rewrite call over result summaries
  FullHistory,     // the raw transcript is prepended to the prompt
};

std::string_view to_string(ContextMode m);
ContextMode context_mode_from_string(std::string_view s);

struct EvaluateOptions {
  std::size_t call_limit = 5;
  std::size_t summary_cap = 512;
  std::size_t similarity_k = 10;
  ContextMode mode = ContextMode::ModifiedPrompt;
  std::chrono::milliseconds budget{30000};
};

/// The five tool functions offered to the evaluator.
const std::vector<llm::ToolDescriptor>& tool_descriptors();

/// Prior-turn texts that appear verbatim in the model requests of one
/// evaluate. Profile preambles, demonstrations, the prompt rewrite call and
/// occurrences of the modified prompt itself are ignored.
std::vector<std::string> context_leaks(const std::vector<llm::LogEntry>& entries, const llm::ProfileLibrary& profiles,
                                       const std::vector<Turn>& prior_turns, const std::string& modified);

using StageSink = std::function<void(const StageEvent&)>;
/// Resolves an uploaded image reference; nullopt when unknown.
using ImageLookup = std::function<std::optional<vision::Image>(const std::string& ref)>;

struct Services {
  llm::Gateway& gateway;
  const data::Datastore& store;
  const resolve::NameResolver& resolver;
  const taxonomy::Taxonomy& taxonomy;
  const similarity::VectorIndex* index = nullptr;
  ImageLookup uploads;
};

class Orchestrator {
 public:
  explicit Orchestrator(Services services, EvaluateOptions options = {});

  /// Self-contained rewrite of prompt. With no earlier results the prompt is
  /// returned unchanged without a model call.
  ModifiedPrompt modify_prompt(const ConversationState& state, const std::string& prompt);

  /// Appends the user turn, runs the tool loop, appends the assistant turn and
  /// its summary. Failures come back as error responses, never as exceptions.
  PipelineResponse evaluate(ConversationState& state, const std::string& prompt,
                            const std::vector<std::string>& attachments = {}, const StageSink& sink = {});

  [[nodiscard]] const EvaluateOptions& options() const { return options_; }

  /// One-line summary of a response, capped at cap bytes.
  static std::string summarize(const std::string& prompt, const PipelineResponse& r, std::size_t cap);

  /// What the user was shown, as stored in the conversation transcript.
  static std::string transcript(const PipelineResponse& r);

 private:
  struct Loop;
  nlohmann::json dispatch(Loop& loop, const llm::ToolCall& call);
  nlohmann::json run_query(Loop& loop, const nlohmann::json& args);
  nlohmann::json run_visualization(Loop& loop, const nlohmann::json& args);
  std::string full_history_prompt(const ConversationState& state, const std::string& prompt) const;
  nlohmann::json image_cards(const data::ResultTable& table) const;

  Services svc_;
  EvaluateOptions options_;
  sql::SqlSynthesizer sql_;
  viz::VizSynthesizer viz_;
};

}  // namespace oceanql::pipeline
