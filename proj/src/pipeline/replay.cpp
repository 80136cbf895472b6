// SPDX-License-Identifier: Apache-2.0
#include "oceanql/pipeline/replay.hpp"

#include "oceanql/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace oceanql::pipeline {

std::vector<ReplayConversation> conversations_from_json(const nlohmann::json& j) {
  std::vector<ReplayConversation> out;
  try {
    for (const auto& c : j.at("conversations")) {
      ReplayConversation conv;
      conv.id = c.at("id").get<std::string>();
      for (const auto& t : c.at("turns")) {
        conv.turns.push_back({t.at("prompt").get<std::string>(), t.value("expect", nlohmann::json::object())});
      }
      out.push_back(std::move(conv));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad conversation fixture: ") + e.what());
  }
  return out;
}

std::vector<ReplayConversation> load_conversations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return conversations_from_json(j);
}

bool ConversationOutcome::pass() const {
  return std::all_of(turns.begin(), turns.end(), [](const auto& t) { return t.pass(); });
}

std::uint64_t ConversationOutcome::total_tokens() const {
  std::uint64_t n = 0;
  for (const auto& t : turns) n += t.usage.prompt_tokens + t.usage.completion_tokens;
  return n;
}

double ConversationOutcome::max_latency_ms() const {
  double m = 0;
  for (const auto& t : turns) m = std::max(m, t.latency_ms);
  return m;
}

std::uint64_t ReplayReport::total_tokens() const {
  std::uint64_t n = 0;
  for (const auto& c : conversations) n += c.total_tokens();
  return n;
}

std::size_t ReplayReport::passed() const {
  return static_cast<std::size_t>(
      std::count_if(conversations.begin(), conversations.end(), [](const auto& c) { return c.pass(); }));
}

nlohmann::json ReplayReport::to_json(bool with_latency) const {
  nlohmann::json convs = nlohmann::json::array();
  for (const auto& c : conversations) {
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : c.turns) {
      nlohmann::json tj{{"prompt", t.prompt},
                        {"output_kind", t.output_kind},
                        {"modified_prompt", t.modified_prompt},
                        {"pass", t.pass()},
                        {"failures", t.failures},
                        {"prompt_tokens", t.usage.prompt_tokens},
                        {"completion_tokens", t.usage.completion_tokens}};
      if (with_latency) tj["latency_ms"] = t.latency_ms;
      turns.push_back(std::move(tj));
    }
    convs.push_back({{"id", c.id}, {"pass", c.pass()}, {"total_tokens", c.total_tokens()}, {"turns", turns}});
  }
  return {{"mode", std::string(to_string(mode))},
          {"conversations", convs},
          {"passed", passed()},
          {"total_tokens", total_tokens()}};
}

namespace {

void check_turn(TurnOutcome& out, const PipelineResponse& r, const nlohmann::json& expect, ContextMode mode,
                const std::optional<nlohmann::json>& previous_spec) {
  if (expect.contains("output_kind") && expect["output_kind"].get<std::string>() != out.output_kind) {
    out.failures.push_back("output_kind " + out.output_kind + ", expected " + expect["output_kind"].get<std::string>());
  }
  if (mode == ContextMode::ModifiedPrompt && expect.contains("modified_prompt") &&
      expect["modified_prompt"].get<std::string>() != out.modified_prompt) {
    out.failures.push_back("modified prompt differs");
  }
  if (expect.contains("sql_contains")) {
    const auto needle = expect["sql_contains"].get<std::string>();
    if (!r.sql || r.sql->find(needle) == std::string::npos) out.failures.push_back("sql lacks " + needle);
  }
  if (expect.contains("dispatched") && expect["dispatched"].get<std::vector<std::string>>() != r.dispatched) {
    out.failures.push_back("dispatch order " + nlohmann::json(r.dispatched).dump());
  }
  if (expect.value("new_spec", false) && r.output_kind == ResponseKind::Chart && previous_spec &&
      r.payload["spec"] == *previous_spec) {
    out.failures.push_back("chart specification unchanged");
  }
  for (const auto& l : out.leaks) out.failures.push_back("context leak " + l);
}

}  // namespace

ReplayReport replay(const std::vector<ReplayConversation>& conversations, const Services& services,
                    EvaluateOptions options) {
  ReplayReport report;
  report.mode = options.mode;
  Orchestrator orch(services, options);
  for (const auto& conv : conversations) {
    ConversationOutcome outcome;
    outcome.id = conv.id;
    ConversationState state(conv.id + "/" + std::string(to_string(options.mode)));
    std::optional<nlohmann::json> previous_spec;
    for (const auto& turn : conv.turns) {
      const auto prior = state.turns();
      const auto log_start = services.gateway.log_size();
      const auto t0 = std::chrono::steady_clock::now();
      auto r = orch.evaluate(state, turn.prompt);
      const auto t1 = std::chrono::steady_clock::now();

      TurnOutcome t;
      t.prompt = turn.prompt;
      t.output_kind = std::string(to_string(r.output_kind));
      t.modified_prompt = r.modified_prompt;
      t.usage = r.token_usage;
      t.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      if (options.mode == ContextMode::ModifiedPrompt) {
        auto log = services.gateway.log();
        std::vector<llm::LogEntry> mine(log.begin() + static_cast<long>(log_start), log.end());
        std::erase_if(mine, [&](const auto& e) { return e.session != state.session_id(); });
        t.leaks = context_leaks(mine, services.gateway.profiles(), prior, r.modified_prompt);
      }
      check_turn(t, r, turn.expect, options.mode, previous_spec);
      if (r.output_kind == ResponseKind::Chart) previous_spec = r.payload["spec"];
      outcome.turns.push_back(std::move(t));
    }
    report.conversations.push_back(std::move(outcome));
  }
  return report;
}

nlohmann::json compare_modes(const ReplayReport& modified, const ReplayReport& full) {
  nlohmann::json rows = nlohmann::json::array();
  bool all_fewer = modified.conversations.size() == full.conversations.size();
  for (std::size_t i = 0; i < modified.conversations.size() && i < full.conversations.size(); ++i) {
    const auto a = modified.conversations[i].total_tokens();
    const auto b = full.conversations[i].total_tokens();
    all_fewer = all_fewer && a < b;
    rows.push_back({{"id", modified.conversations[i].id}, {"modified_prompt_tokens", a}, {"full_history_tokens", b}});
  }
  const auto a = modified.total_tokens();
  const auto b = full.total_tokens();
  const double reduction = b == 0 ? 0.0 : 100.0 * (static_cast<double>(b) - static_cast<double>(a)) / static_cast<double>(b);
  return {{"conversations", rows},
          {"modified_prompt_tokens", a},
          {"full_history_tokens", b},
          {"reduction_percent", std::round(reduction * 100.0) / 100.0},
          {"fewer_tokens_every_conversation", all_fewer},
          {"passed", {{"modified_prompt", modified.passed()}, {"full_history", full.passed()}}}};
}

}  // namespace oceanql::pipeline
