// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/data/datastore.hpp"
#include "oceanql/llm/gateway.hpp"
#include "oceanql/sql/guard.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace oceanql::sql {

/// The three SQL prompt profiles.
enum class QueryProfile { GeneralOutput, SimilaritySearch, Visualization };

llm::Profile to_llm_profile(QueryProfile p);
std::string_view to_string(QueryProfile p);

enum class QueryOutput { Text, Table, Images, ChartData };

std::string_view to_string(QueryOutput k);
QueryOutput query_output_from_string(std::string_view s);

/// Column types a chart consumes.
enum class DataType { Number, Text, Timestamp, Latitude, Longitude };

std::string_view to_string(DataType t);
DataType data_type_from_string(std::string_view s);

struct SignatureColumn {
  std::string name;
  DataType type;
  bool operator==(const SignatureColumn&) const = default;
};

struct GeneratedQuery {
  std::string sql;        // as executed: validated, similarity CTE prepended
  std::string model_sql;  // as the model wrote it
  QueryOutput output_kind = QueryOutput::Table;
  std::string template_text;
  std::vector<SignatureColumn> signature;  // visualization profile only
  std::vector<std::int64_t> similarity_ids;
  std::size_t attempts = 0;  // executions tried
  QueryProfile profile = QueryProfile::GeneralOutput;
  std::string request_text;  // user message of the generation call
};

struct SqlConfig {
  std::size_t max_regens = 2;
  std::size_t row_cap = data::kDefaultRowCap;
  std::chrono::milliseconds timeout = data::kDefaultTimeout;
};

/// Fixed sentence for templated answers over an empty result.
inline constexpr const char* kNoDataSentence = "No matching data was found in the database.";

/// WITH similar_boxes(rank, bounding_box_id) AS (VALUES (1, id1), ...) in
/// front of sql, merged into an existing WITH clause.
std::string with_similarity_ids(const std::string& sql, const std::vector<std::int64_t>& ids);

/// Substitutes {column} placeholders with first-row values. Throws
/// PipelineError(sql_generation) for a placeholder that is not a column.
std::string fill_template(const std::string& template_text, const data::ResultTable& table);

/// For visualization queries: the reason the statement's result columns
/// differ from its signature (names, in order), if they do.
std::optional<std::string> signature_mismatch(const data::Datastore& store, const GeneratedQuery& q);

class SqlSynthesizer {
 public:
  SqlSynthesizer(llm::Gateway& gateway, const data::Datastore& store, SqlConfig config = {});

  /// One gateway call. Throws PipelineError(sql_generation) on gateway or
  /// parse failure; TokenLimitError passes through.
  GeneratedQuery generate_sql(const std::string& prompt, QueryProfile profile, const std::vector<std::string>& names,
                              const std::optional<std::vector<std::int64_t>>& similarity_ids = std::nullopt,
                              const std::string& session = {});

  /// Validates and executes; on a guardrail or runtime error asks the model
  /// for a fix with the failed SQL and the verbatim error, up to max_regens
  /// times. q is updated in place (sql, attempts).
  data::ResultTable execute_with_retry(GeneratedQuery& q, const std::string& session = {});

  /// Regeneration request body for a failed attempt; exposed for tests.
  static std::string regeneration_text(const GeneratedQuery& q, const std::string& error);

  [[nodiscard]] const SqlConfig& config() const { return config_; }
  [[nodiscard]] const data::Datastore& store() const { return store_; }

 private:
  void apply_reply(GeneratedQuery& q, const llm::ChatResponse& reply) const;

  llm::Gateway& gateway_;
  const data::Datastore& store_;
  SqlConfig config_;
};

/// Parses a model reply into (sql, output_kind, template, signature).
/// Accepts bare JSON or JSON inside a ``` fence. Throws PipelineError.
void parse_query_reply(const std::string& reply, GeneratedQuery& q);

}  // namespace oceanql::sql
