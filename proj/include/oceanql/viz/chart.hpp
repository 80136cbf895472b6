// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/data/datastore.hpp"
#include "oceanql/llm/gateway.hpp"
#include "oceanql/sql/synthesis.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace oceanql::viz {

enum class ChartType { Bar, Line, Scatter, Heatmap, Box, Area, MapScatter, MapHeatmap };

std::string_view to_string(ChartType t);
/// Throws SpecError for an unknown name.
ChartType chart_type_from_string(std::string_view s);

/// Malformed chart specification.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr const char* kChannels[] = {"x", "y", "color", "size", "hover"};

/// Declarative chart: channels map to result columns. hover may carry several
/// columns; every other channel carries one.
struct ChartSpec {
  ChartType chart_type = ChartType::Bar;
  std::map<std::string, std::vector<std::string>> encodings;
  std::string title;
  nlohmann::json options = nlohmann::json::object();

  /// Columns referenced by any channel, first-use order.
  [[nodiscard]] std::vector<std::string> columns() const;
  [[nodiscard]] nlohmann::json to_json() const;
  /// Validates structure (types, channels, required channels). Throws SpecError.
  static ChartSpec from_json(const nlohmann::json& j);
  bool operator==(const ChartSpec&) const = default;
};

/// JSON Schema for ChartSpec documents.
nlohmann::json chart_spec_schema();

/// Reason spec cannot use these columns, if any: an encoded column is missing
/// or a numeric-only channel points at a non-numeric column.
std::optional<std::string> check_against(const ChartSpec& spec, const std::vector<sql::SignatureColumn>& columns);

struct BoundChart {
  ChartSpec spec;
  data::ResultTable data;
  bool regenerated = false;
};

struct BindResult {
  std::optional<BoundChart> chart;
  std::string error;
};

/// Signature derived from result column types; ints and reals are numbers.
std::vector<sql::SignatureColumn> table_signature(const data::ResultTable& table,
                                                  const std::vector<sql::SignatureColumn>& declared = {});

BindResult bind_data(const ChartSpec& spec, const data::ResultTable& table,
                     const std::vector<sql::SignatureColumn>& declared = {});

struct VizConfig {
  std::size_t sample_rows = 5;
};

struct VizResult {
  sql::GeneratedQuery query;
  BoundChart chart;
};

class VizSynthesizer {
 public:
  VizSynthesizer(llm::Gateway& gateway, sql::SqlSynthesizer& sql, VizConfig config = {});

  /// Visualization-profile query plus its signature.
  sql::GeneratedQuery plan_visualization(const std::string& prompt, const std::vector<std::string>& names,
                                         const std::string& session = {});

  /// One chart_code call. Throws SpecError on an invalid reply and
  /// PipelineError(chart_generation) on gateway failure.
  ChartSpec generate_chart_spec(const std::string& prompt, const std::vector<sql::SignatureColumn>& signature,
                                const std::string& session = {});

  /// One chart_code call that sees the actual columns and a row sample.
  ChartSpec regenerate_with_data(const std::string& prompt, const data::ResultTable& table,
                                 const std::vector<sql::SignatureColumn>& declared, const std::string& error,
                                 const std::string& session = {});

  /// plan, then query execution and spec generation concurrently, then bind
  /// with at most one regeneration. Throws PipelineError.
  VizResult run(const std::string& prompt, const std::vector<std::string>& names, const std::string& session = {});

  /// Same pipeline with the two middle steps run one after the other.
  VizResult run_sequential(const std::string& prompt, const std::vector<std::string>& names,
                           const std::string& session = {});

  /// Follow-up edit of previous. Rebinds the cached data when the new spec only
  /// uses columns it has; otherwise plans a new query with the extra columns.
  VizResult modify_chart(const VizResult& previous, const std::string& prompt, const std::string& session = {});

  [[nodiscard]] static std::string signature_text(const std::vector<sql::SignatureColumn>& columns);

 private:
  VizResult finish(sql::GeneratedQuery q, data::ResultTable table, std::optional<ChartSpec> spec,
                   std::string spec_error, const std::string& prompt, const std::string& session);
  ChartSpec ask(const std::string& user, const std::string& session);

  llm::Gateway& gateway_;
  sql::SqlSynthesizer& sql_;
  VizConfig config_;
};

}  // namespace oceanql::viz
