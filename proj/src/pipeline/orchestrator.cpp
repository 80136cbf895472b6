// SPDX-License-Identifier: Apache-2.0
#include "oceanql/pipeline/orchestrator.hpp"

#include "oceanql/log.hpp"
#include "oceanql/similarity/corpus.hpp"
#include "oceanql/text.hpp"

#include <algorithm>
#include <set>

namespace oceanql::pipeline {
namespace {

using Clock = std::chrono::steady_clock;

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string stage_for(const std::string& tool) {
  if (tool == "resolve_names") return "resolving names";
  if (tool == "generate_query") return "generating SQL";
  if (tool == "get_taxonomy") return "looking up taxonomy";
  if (tool == "generate_visualization") return "generating visualization";
  if (tool == "answer_general") return "answering";
  return "dispatching " + tool;
}

ErrorCategory category_for(const std::string& tool) {
  if (tool == "resolve_names" || tool == "get_taxonomy") return ErrorCategory::NameResolution;
  if (tool == "generate_query") return ErrorCategory::SqlGeneration;
  if (tool == "generate_visualization") return ErrorCategory::ChartGeneration;
  return ErrorCategory::PromptEvaluation;
}

std::string bare_word(const std::string& w) {
  std::string out;
  for (char c : w) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '\'') out += c;
  }
  return text::to_lower_ascii(out);
}

std::string strip_edges(std::string s) {
  while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

// Phrases of the rewrite that the user did not type and that occur in the
// earlier results: for each run of words absent from the prompt, the longest
// sub-run found in history.
std::vector<std::string> injected_phrases(const std::string& modified, const std::string& prompt,
                                          const std::string& history) {
  std::set<std::string> typed;
  for (const auto& w : text::split_ws(prompt)) typed.insert(bare_word(w));
  const auto lower_history = text::to_lower_ascii(history);
  const auto words = text::split_ws(modified);

  std::vector<std::string> out;
  auto take_run = [&](std::size_t b, std::size_t e) {
    std::size_t best_b = 0, best_len = 0;
    for (std::size_t i = b; i < e; ++i) {
      for (std::size_t j = e; j > i + best_len; --j) {
        std::vector<std::string> part(words.begin() + static_cast<long>(i), words.begin() + static_cast<long>(j));
        auto phrase = strip_edges(text::join(part, " "));
        if (!phrase.empty() && lower_history.find(text::to_lower_ascii(phrase)) != std::string::npos) {
          best_b = i;
          best_len = j - i;
          break;
        }
      }
    }
    if (best_len == 0) return;
    std::vector<std::string> part(words.begin() + static_cast<long>(best_b),
                                  words.begin() + static_cast<long>(best_b + best_len));
    out.push_back(strip_edges(text::join(part, " ")));
  };
  std::size_t i = 0;
  while (i < words.size()) {
    if (typed.count(bare_word(words[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < words.size() && !typed.count(bare_word(words[j]))) ++j;
    take_run(i, j);
    i = j;
  }
  return out;
}

nlohmann::json record_json(const data::ImageRecord& r) {
  return {{"id", r.id},
          {"url", r.url},
          {"latitude", r.latitude},
          {"longitude", r.longitude},
          {"depth_meters", r.depth_meters},
          {"temperature_celsius", r.temperature_celsius},
          {"pressure_dbar", r.pressure_dbar},
          {"salinity", r.salinity},
          {"oxygen_ml_l", r.oxygen_ml_l},
          {"timestamp", r.timestamp},
          {"observer", r.observer}};
}

nlohmann::json box_json(const data::BoundingBoxRecord& b) {
  return {{"id", b.id},         {"image_id", b.image_id}, {"concept", b.concept_name},
          {"x", b.x},           {"y", b.y},               {"width", b.width},
          {"height", b.height}, {"verification_timestamp", b.verification_timestamp}};
}

llm::TokenUsage minus(const llm::TokenUsage& a, const llm::TokenUsage& b) {
  return {a.prompt_tokens - b.prompt_tokens, a.completion_tokens - b.completion_tokens};
}

}  // namespace

nlohmann::json StageEvent::to_json() const {
  return {{"seq", seq}, {"stage", stage}, {"tool", tool}, {"at_ms", at_ms}};
}

std::size_t ConversationState::append_turn(Turn t) {
  turns_.push_back(std::move(t));
  return turns_.size() - 1;
}

void ConversationState::add_summary(ResultSummary s) { summaries_.push_back(std::move(s)); }

const StageEvent& ConversationState::add_stage(std::string stage, std::string tool) {
  stage_log_.push_back({stage_log_.size() + 1, std::move(stage), std::move(tool), now_ms()});
  return stage_log_.back();
}

std::string_view to_string(ResponseKind k) {
  switch (k) {
    case ResponseKind::Text: return "text";
    case ResponseKind::Table: return "table";
    case ResponseKind::Images: return "images";
    case ResponseKind::Chart: return "chart";
    case ResponseKind::Taxonomy: return "taxonomy";
    case ResponseKind::Error: return "error";
  }
  return "text";
}

std::string_view to_string(ContextMode m) {
  return m == ContextMode::FullHistory ? "full_history" : "modified_prompt";
}

ContextMode context_mode_from_string(std::string_view s) {
  if (s == "modified_prompt") return ContextMode::ModifiedPrompt;
  if (s == "full_history") return ContextMode::FullHistory;
  throw std::invalid_argument("unknown context mode '" + std::string(s) + "'");
}

PipelineResponse PipelineResponse::error(ErrorCategory c, const std::string& detail) {
  PipelineResponse r;
  r.output_kind = ResponseKind::Error;
  r.payload = {{"category", std::string(to_string(c))}, {"detail", detail}};
  return r;
}

std::optional<ErrorCategory> PipelineResponse::error_category() const {
  if (output_kind != ResponseKind::Error) return std::nullopt;
  return error_category_from_string(payload.at("category").get<std::string>());
}

nlohmann::json PipelineResponse::to_json() const {
  nlohmann::json stage_list = nlohmann::json::array();
  for (const auto& s : stages) stage_list.push_back(s.to_json());
  return {{"output_kind", std::string(to_string(output_kind))},
          {"payload", payload},
          {"sql", sql ? nlohmann::json(*sql) : nlohmann::json()},
          {"stages", stage_list},
          {"token_usage", {{"prompt_tokens", token_usage.prompt_tokens},
                           {"completion_tokens", token_usage.completion_tokens}}},
          {"modified_prompt", modified_prompt},
          {"dispatched", dispatched}};
}

const std::vector<llm::ToolDescriptor>& tool_descriptors() {
  static const std::vector<llm::ToolDescriptor> tools{
      {"resolve_names",
       "Map a common name or a description of a creature to scientific names of species in the database.",
       {{"description", "string", "Common name or description to resolve", true}},
       llm::OutputKind::Names},
      {"generate_query",
       "Query the observation database for text answers, tables or images. Set similarity to search by image.",
       {{"names", "array", "Scientific names the query is about", false},
        {"similarity", "boolean", "Rank by visual similarity to the attached image", false}},
       llm::OutputKind::Rows},
      {"get_taxonomy",
       "Show the taxonomic tree around a species.",
       {{"concept", "string", "Scientific name", true}},
       llm::OutputKind::Taxonomy},
      {"generate_visualization",
       "Produce a chart from database data, or modify the previous chart.",
       {{"names", "array", "Scientific names the chart is about", false},
        {"modify", "boolean", "Edit the previous chart instead of creating one", false}},
       llm::OutputKind::Chart},
      {"answer_general",
       "Answer a general marine-science question that needs no database access.",
       {},
       llm::OutputKind::Text},
  };
  return tools;
}

std::vector<std::string> context_leaks(const std::vector<llm::LogEntry>& entries, const llm::ProfileLibrary& profiles,
                                       const std::vector<Turn>& prior_turns, const std::string& modified) {
  std::vector<std::string> leaks;
  for (const auto& e : entries) {
    if (e.kind != llm::LogEntry::Kind::Complete) continue;
    const auto& req = e.request;
    if (req.profile == llm::Profile::Evaluator && req.tools.empty()) continue;  // prompt rewrite
    std::set<std::string> fixed;
    if (profiles.has(req.profile)) {
      const auto& spec = profiles.get(req.profile);
      fixed.insert(spec.preamble);
      for (const auto& d : spec.demonstrations) {
        fixed.insert(d.user);
        fixed.insert(d.assistant);
      }
    }
    std::string payload;
    for (const auto& m : req.messages) {
      if (fixed.count(m.content)) continue;
      payload += m.content + "\n";
    }
    if (!modified.empty()) {
      for (auto pos = payload.find(modified); pos != std::string::npos; pos = payload.find(modified, pos)) {
        payload.erase(pos, modified.size());
      }
    }
    for (const auto& t : prior_turns) {
      if (!t.content.empty() && payload.find(t.content) != std::string::npos) {
        leaks.push_back(std::string(llm::to_string(req.profile)) + ": " + t.content);
      }
    }
  }
  return leaks;
}

struct Orchestrator::Loop {
  Loop(ConversationState& st, const StageSink& sk, std::vector<std::string> att, Clock::time_point dl)
      : state(st), sink(sk), attachments(std::move(att)), deadline(dl) {}

  ConversationState& state;
  const StageSink& sink;
  ModifiedPrompt modified;
  std::vector<std::string> attachments;
  Clock::time_point deadline;

  std::vector<std::string> names;
  std::string current_tool;
  bool has_output = false;
  ResponseKind kind = ResponseKind::Text;
  nlohmann::json payload = nlohmann::json::object();
  std::optional<std::string> sql;
  std::optional<viz::VizResult> chart;

  void stage(std::string name, std::string tool = {}) {
    const auto& ev = state.add_stage(std::move(name), std::move(tool));
    if (sink) sink(ev);
  }
  [[nodiscard]] const std::string& session() const { return state.session_id(); }
};

Orchestrator::Orchestrator(Services services, EvaluateOptions options)
    : svc_(std::move(services)),
      options_(options),
      sql_(svc_.gateway, svc_.store),
      viz_(svc_.gateway, sql_) {}

ModifiedPrompt Orchestrator::modify_prompt(const ConversationState& state, const std::string& prompt) {
  ModifiedPrompt out;
  out.text = prompt;
  out.source_turn = state.turns().size();
  if (state.result_summaries().empty()) return out;

  std::string history;
  for (const auto& s : state.result_summaries()) history += "- " + s.text + "\n";
  llm::ChatRequest req;
  req.profile = llm::Profile::Evaluator;
  req.messages = {llm::Message::user("Earlier results:\n" + history + "Current prompt: " + prompt +
                                     "\nRewrite the current prompt.")};
  llm::ChatResponse reply;
  try {
    reply = svc_.gateway.complete(req, state.session_id());
  } catch (const TransportError& e) {
    throw PipelineError(ErrorCategory::PromptEvaluation, std::string("prompt rewrite failed: ") + e.what());
  }
  auto rewritten = reply.is_tool_call() ? std::string() : text::trim(reply.text);
  if (rewritten.size() >= 2 && rewritten.front() == '"' && rewritten.back() == '"') {
    rewritten = rewritten.substr(1, rewritten.size() - 2);
  }
  if (!rewritten.empty()) out.text = rewritten;
  if (out.text != prompt) out.injected_context = injected_phrases(out.text, prompt, history);
  return out;
}

std::string Orchestrator::full_history_prompt(const ConversationState& state, const std::string& prompt) const {
  if (state.turns().empty()) return prompt;
  std::string out = "Previous conversation:\n";
  for (const auto& t : state.turns()) {
    out += t.role == llm::Role::User ? "User: " : "Assistant: ";
    out += t.content + "\n";
  }
  return out + "Current prompt: " + prompt;
}

std::string Orchestrator::summarize(const std::string& prompt, const PipelineResponse& r, std::size_t cap) {
  std::string detail;
  const auto& p = r.payload;
  switch (r.output_kind) {
    case ResponseKind::Text:
      if (p.contains("names")) {
        detail = "names: " + text::join(p["names"].get<std::vector<std::string>>(), ", ");
      } else {
        detail = "text: " + text::truncate_utf8(p.value("text", ""), 160);
      }
      break;
    case ResponseKind::Table:
      detail = "table: " + std::to_string(p["rows"].size()) + " rows; columns: ";
      {
        std::vector<std::string> cols;
        for (const auto& c : p["columns"]) cols.push_back(c.at("name").get<std::string>());
        detail += text::join(cols, ", ");
      }
      if (!p["rows"].empty()) {
        std::vector<std::string> first;
        for (const auto& v : p["rows"][0]) first.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        detail += "; first row: " + text::join(first, ", ");
      }
      break;
    case ResponseKind::Images: {
      detail = "images: " + std::to_string(p["images"].size()) + " rows";
      std::vector<std::string> concepts;
      for (const auto& card : p["images"]) {
        if (!card.contains("bounding_box")) continue;
        auto c = card["bounding_box"]["concept"].get<std::string>();
        if (std::find(concepts.begin(), concepts.end(), c) == concepts.end()) concepts.push_back(c);
      }
      if (!concepts.empty()) detail += "; concepts: " + text::join(concepts, ", ");
      break;
    }
    case ResponseKind::Chart: {
      auto spec = viz::ChartSpec::from_json(p["spec"]);
      detail = "chart: " + std::string(viz::to_string(spec.chart_type)) + " of " + text::join(spec.columns(), ", ") +
               "; " + std::to_string(p["data"]["rows"].size()) + " rows";
      break;
    }
    case ResponseKind::Taxonomy: detail = "taxonomy: " + p.value("concept", ""); break;
    case ResponseKind::Error: detail = "error: " + p.value("category", ""); break;
  }
  return text::truncate_utf8("prompt: " + prompt + " | " + detail, cap);
}

std::string Orchestrator::transcript(const PipelineResponse& r) {
  const auto& p = r.payload;
  std::string out;
  if (p.contains("message")) out = p["message"].get<std::string>() + "\n";
  auto scalar = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
  switch (r.output_kind) {
    case ResponseKind::Text:
      if (p.contains("names")) {
        out += "Scientific names: " + text::join(p["names"].get<std::vector<std::string>>(), ", ");
      } else {
        out += p.value("text", "");
      }
      break;
    case ResponseKind::Table: {
      std::vector<std::string> cols;
      for (const auto& c : p["columns"]) cols.push_back(c.at("name").get<std::string>());
      out += text::join(cols, " | ");
      for (const auto& row : p["rows"]) {
        std::vector<std::string> cells;
        for (const auto& v : row) cells.push_back(scalar(v));
        out += "\n" + text::join(cells, " | ");
      }
      break;
    }
    case ResponseKind::Images:
      out += std::to_string(p["images"].size()) + " images:";
      for (const auto& card : p["images"]) {
        out += "\n-";
        if (card.contains("bounding_box")) {
          out += " " + card["bounding_box"]["concept"].get<std::string>() + " (box " +
                 card["bounding_box"]["id"].dump() + ")";
        }
        if (card.contains("image")) out += " " + card["image"]["url"].get<std::string>();
        if (!card.contains("bounding_box") && !card.contains("image")) out += " " + card["row"].dump();
      }
      break;
    case ResponseKind::Chart:
      out += "Chart: " + p["spec"].dump() + "\nRows: " + std::to_string(p["data"]["rows"].size());
      break;
    case ResponseKind::Taxonomy: out += p.value("text", ""); break;
    case ResponseKind::Error:
      out += "Error (" + p["category"].get<std::string>() + "): " + p["detail"].get<std::string>();
      break;
  }
  if (r.sql) out += "\nSQL: " + *r.sql;
  return out;
}

nlohmann::json Orchestrator::image_cards(const data::ResultTable& table) const {
  const auto box_col = table.column_index("bounding_box_id");
  const auto image_col = table.column_index("image_id");
  nlohmann::json cards = nlohmann::json::array();
  for (const auto& row : table.rows) {
    nlohmann::json card;
    nlohmann::json fields = nlohmann::json::object();
    for (std::size_t c = 0; c < table.columns.size(); ++c) fields[table.columns[c].name] = data::to_json(row[c]);
    card["row"] = fields;
    std::optional<std::int64_t> image_id;
    if (box_col && std::holds_alternative<std::int64_t>(row[*box_col])) {
      if (auto box = svc_.store.bounding_box(std::get<std::int64_t>(row[*box_col]))) {
        card["bounding_box"] = box_json(*box);
        image_id = box->image_id;
      }
    }
    if (!image_id && image_col && std::holds_alternative<std::int64_t>(row[*image_col])) {
      image_id = std::get<std::int64_t>(row[*image_col]);
    }
    if (image_id) {
      if (auto img = svc_.store.image(*image_id)) {
        card["image"] = record_json(*img);
        nlohmann::json boxes = nlohmann::json::array();
        for (const auto& b : svc_.store.boxes_for_image(*image_id)) boxes.push_back(box_json(b));
        card["boxes"] = boxes;
        if (svc_.taxonomy.contains(card.contains("bounding_box") ? card["bounding_box"]["concept"].get<std::string>()
                                                                 : std::string())) {
          card["taxonomy"] = svc_.taxonomy.ancestors(card["bounding_box"]["concept"].get<std::string>());
        }
      }
    }
    cards.push_back(std::move(card));
  }
  return {{"images", cards}, {"truncated", table.truncated}};
}

nlohmann::json Orchestrator::run_query(Loop& loop, const nlohmann::json& args) {
  auto names = loop.names;
  if (args.contains("names") && args["names"].is_array()) names = args["names"].get<std::vector<std::string>>();
  const bool similar = args.value("similarity", false);

  sql::GeneratedQuery q;
  if (similar) {
    loop.current_tool = "similarity";
    if (!svc_.index) throw PipelineError(ErrorCategory::SimilaritySearch, "no similarity index is loaded");
    std::optional<vision::Image> image;
    if (args.contains("bounding_box_id")) {
      try {
        image = similarity::box_crop(svc_.store, args["bounding_box_id"].get<std::int64_t>());
      } catch (const std::out_of_range& e) {
        throw PipelineError(ErrorCategory::SimilaritySearch, e.what());
      }
    } else if (!loop.attachments.empty() && svc_.uploads) {
      image = svc_.uploads(loop.attachments.back());
    }
    if (!image) throw PipelineError(ErrorCategory::SimilaritySearch, "no image was provided to compare against");
    std::vector<std::int64_t> ids;
    try {
      for (const auto& h : svc_.index->cosine_topk(similarity::extract_features(*image).values, options_.similarity_k)) {
        ids.push_back(h.id);
      }
    } catch (const std::invalid_argument& e) {
      throw PipelineError(ErrorCategory::SimilaritySearch, e.what());
    }
    loop.current_tool = "generate_query";
    q = sql_.generate_sql(loop.modified.text, sql::QueryProfile::SimilaritySearch, names, ids, loop.session());
  } else {
    q = sql_.generate_sql(loop.modified.text, sql::QueryProfile::GeneralOutput, names, std::nullopt, loop.session());
  }
  auto table = sql_.execute_with_retry(q, loop.session());
  loop.sql = q.sql;
  loop.has_output = true;
  switch (q.output_kind) {
    case sql::QueryOutput::Text:
      loop.kind = ResponseKind::Text;
      loop.payload = {{"text", sql::fill_template(q.template_text, table)}};
      break;
    case sql::QueryOutput::Images:
      loop.kind = ResponseKind::Images;
      loop.payload = image_cards(table);
      break;
    case sql::QueryOutput::Table:
    case sql::QueryOutput::ChartData:
      loop.kind = ResponseKind::Table;
      loop.payload = data::to_json(table);
      break;
  }
  return {{"output", std::string(sql::to_string(q.output_kind))},
          {"rows", table.rows.size()},
          {"attempts", q.attempts}};
}

nlohmann::json Orchestrator::run_visualization(Loop& loop, const nlohmann::json& args) {
  auto names = loop.names;
  if (args.contains("names") && args["names"].is_array()) names = args["names"].get<std::vector<std::string>>();
  viz::VizResult r;
  if (args.value("modify", false) && loop.state.last_chart) {
    r = viz_.modify_chart(*loop.state.last_chart, loop.modified.text, loop.session());
  } else {
    r = viz_.run(loop.modified.text, names, loop.session());
  }
  loop.has_output = true;
  loop.kind = ResponseKind::Chart;
  loop.payload = {{"spec", r.chart.spec.to_json()},
                  {"data", data::to_json(r.chart.data)},
                  {"regenerated", r.chart.regenerated}};
  loop.sql = r.query.sql;
  const auto type = std::string(viz::to_string(r.chart.spec.chart_type));
  const auto rows = r.chart.data.rows.size();
  loop.chart = std::move(r);
  return {{"chart_type", type}, {"rows", rows}};
}

nlohmann::json Orchestrator::dispatch(Loop& loop, const llm::ToolCall& call) {
  loop.current_tool = call.name;
  const auto& args = call.arguments;
  if (!args.is_object()) throw PipelineError(ErrorCategory::PromptEvaluation, "tool arguments must be an object");

  if (call.name == "resolve_names") {
    const auto description =
        args.contains("description") && args["description"].is_string() ? args["description"].get<std::string>()
                                                                          : loop.modified.text;
    resolve::ResolutionResult res;
    try {
      res = svc_.resolver.resolve(description, loop.session());
    } catch (const TransportError& e) {
      throw PipelineError(ErrorCategory::NameResolution, std::string("name resolution failed: ") + e.what());
    }
    loop.names = res.names;
    loop.has_output = true;
    loop.kind = ResponseKind::Text;
    loop.payload = {{"text", res.names.empty() ? std::string("No matching species were found.")
                                               : text::join(res.names, ", ")},
                    {"names", res.names},
                    {"method", std::string(resolve::to_string(res.method))}};
    return {{"names", res.names}};
  }
  if (call.name == "generate_query") return run_query(loop, args);
  if (call.name == "get_taxonomy") {
    std::string concept_name;
    if (args.contains("concept") && args["concept"].is_string()) {
      concept_name = args["concept"].get<std::string>();
    } else if (!loop.names.empty()) {
      concept_name = loop.names.front();
    }
    if (!svc_.taxonomy.contains(concept_name)) {
      throw PipelineError(ErrorCategory::NameResolution, "no taxonomy entry for '" + concept_name + "'");
    }
    auto tree = svc_.taxonomy.render_tree(concept_name);
    loop.has_output = true;
    loop.kind = ResponseKind::Taxonomy;
    loop.payload = {{"concept", concept_name},
                    {"rank", svc_.taxonomy.node(concept_name).rank},
                    {"ancestors", svc_.taxonomy.ancestors(concept_name)},
                    {"text", tree.text},
                    {"tree", tree.tree}};
    return {{"concept", concept_name}, {"ancestors", svc_.taxonomy.ancestors(concept_name).size()}};
  }
  if (call.name == "generate_visualization") return run_visualization(loop, args);
  if (call.name == "answer_general") {
    llm::ChatRequest req;
    req.profile = llm::Profile::GeneralAnswer;
    req.messages = {llm::Message::user(loop.modified.text)};
    llm::ChatResponse reply;
    try {
      reply = svc_.gateway.complete(req, loop.session());
    } catch (const TransportError& e) {
      throw PipelineError(ErrorCategory::PromptEvaluation, std::string("general answer failed: ") + e.what());
    }
    loop.has_output = true;
    loop.kind = ResponseKind::Text;
    loop.payload = {{"text", text::trim(reply.text)}};
    return {{"answered", true}};
  }
  throw PipelineError(ErrorCategory::PromptEvaluation, "unknown tool '" + call.name + "'");
}

PipelineResponse Orchestrator::evaluate(ConversationState& state, const std::string& prompt,
                                        const std::vector<std::string>& attachments, const StageSink& sink) {
  const auto usage_before = svc_.gateway.usage_report(state.session_id());
  const auto stages_before = state.stage_log().size();
  Loop loop(state, sink, attachments, Clock::now() + options_.budget);
  PipelineResponse resp;
  std::vector<std::string> dispatched;
  std::string last_summary = "none";

  auto check_budget = [&] {
    if (Clock::now() > loop.deadline) {
      throw PipelineError(ErrorCategory::PromptEvaluation,
                          "response time budget of " + std::to_string(options_.budget.count()) + " ms exceeded");
    }
  };

  std::size_t user_turn = state.turns().size();
  try {
    loop.stage("evaluating prompt");
    if (text::trim(prompt).empty()) throw PipelineError(ErrorCategory::PromptEvaluation, "empty prompt");
    if (options_.mode == ContextMode::ModifiedPrompt) {
      loop.modified = modify_prompt(state, prompt);
    } else {
      loop.modified = {full_history_prompt(state, prompt), state.turns().size(), {}};
    }
    user_turn = state.append_turn({llm::Role::User, prompt, attachments});

    std::vector<llm::Message> messages{llm::Message::user(loop.modified.text)};
    std::size_t dispatches = 0;
    std::string final_text;
    for (;;) {
      check_budget();
      llm::ChatRequest req;
      req.profile = llm::Profile::Evaluator;
      req.messages = messages;
      req.tools = tool_descriptors();
      llm::ChatResponse reply;
      loop.current_tool.clear();
      try {
        reply = svc_.gateway.complete(req, state.session_id());
      } catch (const TransportError& e) {
        throw PipelineError(ErrorCategory::PromptEvaluation, std::string("tool selection failed: ") + e.what());
      }
      if (!reply.is_tool_call()) {
        final_text = text::trim(reply.text);
        break;
      }
      if (dispatches == options_.call_limit) {
        throw PipelineError(ErrorCategory::PromptEvaluation,
                            "function call limit of " + std::to_string(options_.call_limit) +
                                " reached; last result: " + last_summary);
      }
      ++dispatches;
      auto call = reply.call;
      if (call.id.empty()) call.id = "call_" + std::to_string(dispatches);
      loop.stage(stage_for(call.name), call.name);
      dispatched.push_back(call.name);
      auto result = dispatch(loop, call);
      last_summary = text::truncate_utf8(call.name + " -> " + result.dump(), options_.summary_cap);

      llm::Message assistant = llm::Message::assistant("");
      assistant.tool_call = call;
      llm::Message tool{llm::Role::Tool, text::truncate_utf8(result.dump(), options_.summary_cap), {}, call.name,
                        call.id};
      messages.push_back(std::move(assistant));
      messages.push_back(std::move(tool));
    }

    if (loop.has_output) {
      resp.output_kind = loop.kind;
      resp.payload = loop.payload;
      if (!final_text.empty()) resp.payload["message"] = final_text;
    } else {
      resp.payload = {{"text", final_text}};
    }
    resp.sql = loop.sql;
    if (loop.chart) state.last_chart = loop.chart;
  } catch (const PipelineError& e) {
    resp = PipelineResponse::error(e.category(), e.what());
  } catch (const TokenLimitError& e) {
    resp = PipelineResponse::error(ErrorCategory::TokenLimit, e.what());
  } catch (const std::exception& e) {
    auto c = loop.current_tool == "similarity" ? ErrorCategory::SimilaritySearch : category_for(loop.current_tool);
    resp = PipelineResponse::error(c, e.what());
  }
  if (resp.output_kind == ResponseKind::Error) {
    log::info("evaluate failed: " + resp.payload["detail"].get<std::string>());
    if (loop.sql) resp.sql = loop.sql;
  }
  if (state.turns().size() == user_turn) state.append_turn({llm::Role::User, prompt, attachments});

  loop.stage("complete");
  resp.modified_prompt = loop.modified.text.empty() ? prompt : loop.modified.text;
  resp.dispatched = std::move(dispatched);
  resp.stages.assign(state.stage_log().begin() + static_cast<long>(stages_before), state.stage_log().end());
  resp.token_usage = minus(svc_.gateway.usage_report(state.session_id()), usage_before);

  auto summary = summarize(resp.modified_prompt, resp, options_.summary_cap);
  state.append_turn({llm::Role::Assistant, transcript(resp), {}});
  state.add_summary({user_turn, std::move(summary)});
  return resp;
}

}  // namespace oceanql::pipeline
