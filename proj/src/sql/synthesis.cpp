// SPDX-License-Identifier: Apache-2.0
#include "oceanql/sql/synthesis.hpp"

#include "oceanql/error.hpp"
#include "oceanql/log.hpp"
#include "oceanql/sql/lexer.hpp"
#include "oceanql/text.hpp"

#include <algorithm>
#include <regex>

namespace oceanql::sql {

llm::Profile to_llm_profile(QueryProfile p) {
  switch (p) {
    case QueryProfile::GeneralOutput: return llm::Profile::SqlGeneral;
    case QueryProfile::SimilaritySearch: return llm::Profile::SqlSimilarity;
    case QueryProfile::Visualization: return llm::Profile::SqlVisualization;
  }
  return llm::Profile::SqlGeneral;
}

std::string_view to_string(QueryProfile p) {
  switch (p) {
    case QueryProfile::GeneralOutput: return "general_output";
    case QueryProfile::SimilaritySearch: return "similarity_search";
    case QueryProfile::Visualization: return "visualization";
  }
  return "general_output";
}

std::string_view to_string(QueryOutput k) {
  switch (k) {
    case QueryOutput::Text: return "text";
    case QueryOutput::Table: return "table";
    case QueryOutput::Images: return "images";
    case QueryOutput::ChartData: return "chart_data";
  }
  return "table";
}

QueryOutput query_output_from_string(std::string_view s) {
  if (s == "text") return QueryOutput::Text;
  if (s == "table") return QueryOutput::Table;
  if (s == "images") return QueryOutput::Images;
  if (s == "chart_data") return QueryOutput::ChartData;
  throw std::invalid_argument("unknown output kind: " + std::string(s));
}

std::string_view to_string(DataType t) {
  switch (t) {
    case DataType::Number: return "number";
    case DataType::Text: return "text";
    case DataType::Timestamp: return "timestamp";
    case DataType::Latitude: return "latitude";
    case DataType::Longitude: return "longitude";
  }
  return "text";
}

DataType data_type_from_string(std::string_view s) {
  if (s == "number") return DataType::Number;
  if (s == "text") return DataType::Text;
  if (s == "timestamp") return DataType::Timestamp;
  if (s == "latitude") return DataType::Latitude;
  if (s == "longitude") return DataType::Longitude;
  throw std::invalid_argument("unknown data type: " + std::string(s));
}

std::string with_similarity_ids(const std::string& sql, const std::vector<std::int64_t>& ids) {
  std::string values;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    values += (i ? ", (" : "(") + std::to_string(i + 1) + ", " + std::to_string(ids[i]) + ")";
  }
  // An empty id list still yields a well-formed, empty table.
  const std::string cte = ids.empty()
                              ? "similar_boxes(rank, bounding_box_id) AS (SELECT 0, 0 WHERE 0)"
                              : "similar_boxes(rank, bounding_box_id) AS (VALUES " + values + ")";
  const auto toks = tokenize(sql);
  if (!toks.empty() && toks[0].is_word("WITH")) {
    std::size_t after = toks[0].end();
    std::string rest = sql.substr(after);
    if (toks.size() > 1 && toks[1].is_word("RECURSIVE")) {
      return sql.substr(0, toks[1].end()) + " " + cte + "," + sql.substr(toks[1].end());
    }
    return "WITH " + cte + "," + rest;
  }
  return "WITH " + cte + " " + sql;
}

std::string fill_template(const std::string& template_text, const data::ResultTable& table) {
  static const std::regex placeholder(R"(\{([A-Za-z_][A-Za-z0-9_]*)\})");
  const bool has_placeholders = std::regex_search(template_text, placeholder);
  if (table.empty()) {
    if (has_placeholders || template_text.empty()) return kNoDataSentence;
    return template_text + " " + kNoDataSentence;
  }
  std::string out;
  auto it = std::sregex_iterator(template_text.begin(), template_text.end(), placeholder);
  std::size_t last = 0;
  for (; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const auto name = m[1].str();
    auto idx = table.column_index(name);
    if (!idx) throw PipelineError(ErrorCategory::SqlGeneration, "template placeholder {" + name + "} is not a result column");
    out += template_text.substr(last, static_cast<std::size_t>(m.position(0)) - last);
    out += data::to_display(table.rows[0][*idx]);
    last = static_cast<std::size_t>(m.position(0) + m.length(0));
  }
  out += template_text.substr(last);
  return out;
}

void parse_query_reply(const std::string& reply, GeneratedQuery& q) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text::strip_code_fence(reply));
  } catch (const nlohmann::json::exception&) {
    throw PipelineError(ErrorCategory::SqlGeneration, "model output is not a JSON query object");
  }
  if (!j.is_object() || !j.contains("sql") || !j["sql"].is_string() || text::trim(j["sql"].get<std::string>()).empty()) {
    throw PipelineError(ErrorCategory::SqlGeneration, "model output lacks an sql field");
  }
  q.model_sql = text::trim(j["sql"].get<std::string>());
  try {
    if (j.contains("output_kind")) q.output_kind = query_output_from_string(j["output_kind"].get<std::string>());
    if (j.contains("template") && j["template"].is_string()) q.template_text = j["template"].get<std::string>();
    if (j.contains("signature")) {
      q.signature.clear();
      for (const auto& c : j["signature"]) {
        q.signature.push_back({c.at("name").get<std::string>(), data_type_from_string(c.at("type").get<std::string>())});
      }
    }
  } catch (const std::exception& e) {
    throw PipelineError(ErrorCategory::SqlGeneration, std::string("malformed query object: ") + e.what());
  }
  if (q.profile == QueryProfile::Visualization) q.output_kind = QueryOutput::ChartData;
}

std::optional<std::string> signature_mismatch(const data::Datastore& store, const GeneratedQuery& q) {
  if (q.profile != QueryProfile::Visualization) return std::nullopt;
  if (q.signature.empty()) return "visualization query has no data-type signature";
  std::vector<std::string> expected;
  for (const auto& c : q.signature) {
    if (std::find(expected.begin(), expected.end(), c.name) != expected.end()) {
      return "signature lists column " + c.name + " twice";
    }
    expected.push_back(c.name);
  }
  std::vector<std::string> actual;
  try {
    actual = store.result_columns(q.sql);
  } catch (const data::SqlExecutionError&) {
    return std::nullopt;  // execution reports the real error
  }
  if (actual == expected) return std::nullopt;
  return "result columns " + nlohmann::json(actual).dump() + " do not match the signature " +
         nlohmann::json(expected).dump();
}

SqlSynthesizer::SqlSynthesizer(llm::Gateway& gateway, const data::Datastore& store, SqlConfig config)
    : gateway_(gateway), store_(store), config_(config) {}

void SqlSynthesizer::apply_reply(GeneratedQuery& q, const llm::ChatResponse& reply) const {
  if (reply.is_tool_call()) throw PipelineError(ErrorCategory::SqlGeneration, "model returned a tool call");
  parse_query_reply(reply.text, q);
  q.sql = q.similarity_ids.empty() && q.profile != QueryProfile::SimilaritySearch
              ? q.model_sql
              : with_similarity_ids(q.model_sql, q.similarity_ids);
}

GeneratedQuery SqlSynthesizer::generate_sql(const std::string& prompt, QueryProfile profile,
                                            const std::vector<std::string>& names,
                                            const std::optional<std::vector<std::int64_t>>& similarity_ids,
                                            const std::string& session) {
  GeneratedQuery q;
  q.profile = profile;
  q.request_text = prompt;
  if (!names.empty()) q.request_text += "\nConcepts: " + nlohmann::json(names).dump();
  if (similarity_ids) {
    q.similarity_ids = *similarity_ids;
    q.request_text += "\nsimilar_boxes holds " + std::to_string(similarity_ids->size()) + " ranked bounding boxes";
  }
  llm::ChatRequest req;
  req.profile = to_llm_profile(profile);
  req.messages = {llm::Message::system("Schema:\n" + data::observation_schema().describe()),
                  llm::Message::user(q.request_text)};
  llm::ChatResponse reply;
  try {
    reply = gateway_.complete(req, session);
  } catch (const TransportError& e) {
    throw PipelineError(ErrorCategory::SqlGeneration, std::string("query generation failed: ") + e.what());
  }
  apply_reply(q, reply);
  return q;
}

std::string SqlSynthesizer::regeneration_text(const GeneratedQuery& q, const std::string& error) {
  return q.request_text + "\nThe previous SQL failed.\nSQL: " + q.model_sql + "\nError: " + error +
         "\nReturn a corrected JSON query object.";
}

data::ResultTable SqlSynthesizer::execute_with_retry(GeneratedQuery& q, const std::string& session) {
  std::string last_error;
  for (std::size_t regen = 0;; ++regen) {
    ++q.attempts;
    try {
      const auto submitted = q.sql;
      auto v = validate_query(submitted);
      if (!v.ok()) throw GuardrailError(*v.violation);
      q.sql = v.sql;
      auto mismatch = signature_mismatch(store_, q);
      if (!mismatch) return execute_guarded(store_, submitted, config_.timeout, config_.row_cap);
      last_error = *mismatch;
    } catch (const GuardrailError& e) {
      last_error = e.what();
    } catch (const data::SqlExecutionError& e) {
      last_error = e.what();
    }
    log::info("sql attempt " + std::to_string(q.attempts) + " failed: " + last_error);
    if (regen == config_.max_regens) break;

    llm::ChatRequest req;
    req.profile = to_llm_profile(q.profile);
    req.messages = {llm::Message::system("Schema:\n" + data::observation_schema().describe()),
                    llm::Message::user(regeneration_text(q, last_error))};
    llm::ChatResponse reply;
    try {
      reply = gateway_.complete(req, session);
    } catch (const TransportError& e) {
      throw PipelineError(ErrorCategory::SqlGeneration, std::string("query regeneration failed: ") + e.what());
    }
    apply_reply(q, reply);
  }
  throw PipelineError(ErrorCategory::SqlGeneration,
                      "query failed after " + std::to_string(q.attempts) + " attempts: " + last_error);
}

}  // namespace oceanql::sql
