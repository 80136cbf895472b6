// SPDX-License-Identifier: Apache-2.0
#include "oceanql/viz/chart.hpp"

#include "oceanql/error.hpp"
#include "oceanql/log.hpp"
#include "oceanql/text.hpp"

#include <algorithm>
#include <array>
#include <exception>
#include <future>
#include <set>

namespace oceanql::viz {
namespace {

constexpr std::array<std::pair<ChartType, std::string_view>, 8> kTypeNames{{
    {ChartType::Bar, "bar"},
    {ChartType::Line, "line"},
    {ChartType::Scatter, "scatter"},
    {ChartType::Heatmap, "heatmap"},
    {ChartType::Box, "box"},
    {ChartType::Area, "area"},
    {ChartType::MapScatter, "map_scatter"},
    {ChartType::MapHeatmap, "map_heatmap"},
}};

bool is_channel(const std::string& c) {
  return std::find(std::begin(kChannels), std::end(kChannels), c) != std::end(kChannels);
}

bool is_numeric(sql::DataType t) {
  return t == sql::DataType::Number || t == sql::DataType::Latitude || t == sql::DataType::Longitude;
}

bool is_map(ChartType t) { return t == ChartType::MapScatter || t == ChartType::MapHeatmap; }

// Channels whose column must be numeric for the given chart.
std::vector<std::string> numeric_channels(ChartType t) {
  switch (t) {
    case ChartType::MapScatter:
    case ChartType::MapHeatmap:
    case ChartType::Scatter: return {"x", "y", "size"};
    case ChartType::Line:
    case ChartType::Area:
    case ChartType::Box: return {"y", "size"};
    case ChartType::Bar:
    case ChartType::Heatmap: return {"size"};
  }
  return {"size"};
}

}  // namespace

std::string_view to_string(ChartType t) {
  for (const auto& [type, name] : kTypeNames) {
    if (type == t) return name;
  }
  return "bar";
}

ChartType chart_type_from_string(std::string_view s) {
  for (const auto& [type, name] : kTypeNames) {
    if (name == s) return type;
  }
  throw SpecError("unknown chart_type '" + std::string(s) + "'");
}

std::vector<std::string> ChartSpec::columns() const {
  std::vector<std::string> out;
  for (const char* ch : kChannels) {
    auto it = encodings.find(ch);
    if (it == encodings.end()) continue;
    for (const auto& c : it->second) {
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
  }
  return out;
}

nlohmann::json ChartSpec::to_json() const {
  nlohmann::json enc = nlohmann::json::object();
  for (const auto& [ch, cols] : encodings) {
    if (ch == "hover") {
      enc[ch] = cols;
    } else {
      enc[ch] = cols.front();
    }
  }
  return {{"chart_type", std::string(to_string(chart_type))}, {"encodings", enc}, {"title", title}, {"options", options}};
}

ChartSpec ChartSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SpecError("chart specification must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "chart_type" && key != "encodings" && key != "title" && key != "options") {
      throw SpecError("unknown field '" + key + "'");
    }
  }
  if (!j.contains("chart_type") || !j["chart_type"].is_string()) throw SpecError("chart_type is required");
  ChartSpec spec;
  spec.chart_type = chart_type_from_string(j["chart_type"].get<std::string>());

  if (!j.contains("encodings") || !j["encodings"].is_object()) throw SpecError("encodings must be an object");
  for (const auto& [ch, v] : j["encodings"].items()) {
    if (!is_channel(ch)) throw SpecError("unknown channel '" + ch + "'");
    std::vector<std::string> cols;
    if (v.is_string()) {
      cols.push_back(v.get<std::string>());
    } else if (ch == "hover" && v.is_array()) {
      for (const auto& c : v) {
        if (!c.is_string()) throw SpecError("hover columns must be strings");
        cols.push_back(c.get<std::string>());
      }
    } else {
      throw SpecError("channel '" + ch + "' must name a column");
    }
    if (cols.empty() || std::any_of(cols.begin(), cols.end(), [](const auto& c) { return c.empty(); })) {
      throw SpecError("channel '" + ch + "' has an empty column name");
    }
    spec.encodings[ch] = std::move(cols);
  }
  if (spec.chart_type != ChartType::Box && !spec.encodings.count("x")) {
    throw SpecError(std::string(to_string(spec.chart_type)) + " needs an x channel");
  }
  if (!spec.encodings.count("y")) throw SpecError(std::string(to_string(spec.chart_type)) + " needs a y channel");

  if (j.contains("title")) {
    if (!j["title"].is_string()) throw SpecError("title must be a string");
    spec.title = j["title"].get<std::string>();
  }
  if (j.contains("options")) {
    if (!j["options"].is_object()) throw SpecError("options must be an object");
    spec.options = j["options"];
  }
  return spec;
}

nlohmann::json chart_spec_schema() {
  nlohmann::json types = nlohmann::json::array();
  for (const auto& [_, name] : kTypeNames) types.push_back(name);
  const nlohmann::json column = {{"type", "string"}, {"minLength", 1}};
  return {
      {"$schema", "https://json-schema.org/draft/2020-12/schema"},
      {"$id", "urn:oceanql:chart-spec:v1"},
      {"title", "ChartSpec"},
      {"description", "Declarative chart bound to the columns of a query result."},
      {"type", "object"},
      {"required", {"chart_type", "encodings"}},
      {"additionalProperties", false},
      {"properties",
       {{"chart_type", {{"enum", types}}},
        {"encodings",
         {{"type", "object"},
          {"required", {"y"}},
          {"additionalProperties", false},
          {"properties",
           {{"x", column},
            {"y", column},
            {"color", column},
            {"size", column},
            {"hover", {{"oneOf", {column, {{"type", "array"}, {"items", column}, {"minItems", 1}}}}}}}}}},
        {"title", {{"type", "string"}}},
        {"options", {{"type", "object"}}}}},
      {"if", {{"properties", {{"chart_type", {{"not", {{"const", "box"}}}}}}}}},
      {"then", {{"properties", {{"encodings", {{"required", {"x", "y"}}}}}}}},
  };
}

std::optional<std::string> check_against(const ChartSpec& spec, const std::vector<sql::SignatureColumn>& columns) {
  auto find = [&](const std::string& name) -> const sql::SignatureColumn* {
    for (const auto& c : columns) {
      if (c.name == name) return &c;
    }
    return nullptr;
  };
  for (const auto& name : spec.columns()) {
    if (!find(name)) return "column " + name + " is not in the data";
  }
  for (const auto& ch : numeric_channels(spec.chart_type)) {
    auto it = spec.encodings.find(ch);
    if (it == spec.encodings.end()) continue;
    const auto* col = find(it->second.front());
    if (!is_numeric(col->type)) {
      return "channel " + ch + " of a " + std::string(to_string(spec.chart_type)) + " chart needs a numeric column, " +
             col->name + " is " + std::string(sql::to_string(col->type));
    }
  }
  if (is_map(spec.chart_type)) {
    const auto* x = find(spec.encodings.at("x").front());
    const auto* y = find(spec.encodings.at("y").front());
    if (x->type == sql::DataType::Latitude || y->type == sql::DataType::Longitude) {
      return "map charts take longitude on x and latitude on y";
    }
  }
  return std::nullopt;
}

std::vector<sql::SignatureColumn> table_signature(const data::ResultTable& table,
                                                  const std::vector<sql::SignatureColumn>& declared) {
  std::vector<sql::SignatureColumn> out;
  for (const auto& col : table.columns) {
    std::optional<sql::DataType> want;
    for (const auto& d : declared) {
      if (d.name == col.name) want = d.type;
    }
    sql::DataType t = sql::DataType::Text;
    switch (col.type) {
      case data::ColumnType::Integer:
      case data::ColumnType::Real:
        // Declared refinements of a number survive; a declared text does not.
        t = want && is_numeric(*want) ? *want : sql::DataType::Number;
        break;
      case data::ColumnType::Text:
        t = want == sql::DataType::Timestamp ? sql::DataType::Timestamp : sql::DataType::Text;
        break;
      case data::ColumnType::Null:
        t = want.value_or(sql::DataType::Number);
        break;
    }
    out.push_back({col.name, t});
  }
  return out;
}

BindResult bind_data(const ChartSpec& spec, const data::ResultTable& table,
                     const std::vector<sql::SignatureColumn>& declared) {
  BindResult r;
  if (auto err = check_against(spec, table_signature(table, declared))) {
    r.error = *err;
    return r;
  }
  r.chart = BoundChart{spec, table, false};
  return r;
}

VizSynthesizer::VizSynthesizer(llm::Gateway& gateway, sql::SqlSynthesizer& sql, VizConfig config)
    : gateway_(gateway), sql_(sql), config_(config) {}

std::string VizSynthesizer::signature_text(const std::vector<sql::SignatureColumn>& columns) {
  std::vector<std::string> parts;
  for (const auto& c : columns) parts.push_back(c.name + ":" + std::string(sql::to_string(c.type)));
  return text::join(parts, ", ");
}

sql::GeneratedQuery VizSynthesizer::plan_visualization(const std::string& prompt, const std::vector<std::string>& names,
                                                       const std::string& session) {
  return sql_.generate_sql(prompt, sql::QueryProfile::Visualization, names, std::nullopt, session);
}

ChartSpec VizSynthesizer::ask(const std::string& user, const std::string& session) {
  llm::ChatRequest req;
  req.profile = llm::Profile::ChartCode;
  req.messages = {llm::Message::user(user)};
  llm::ChatResponse reply;
  try {
    reply = gateway_.complete(req, session);
  } catch (const TransportError& e) {
    throw PipelineError(ErrorCategory::ChartGeneration, std::string("chart generation failed: ") + e.what());
  }
  if (reply.is_tool_call()) throw SpecError("model returned a tool call instead of a chart specification");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text::strip_code_fence(reply.text));
  } catch (const nlohmann::json::exception&) {
    throw SpecError("model output is not JSON");
  }
  return ChartSpec::from_json(j);
}

ChartSpec VizSynthesizer::generate_chart_spec(const std::string& prompt,
                                              const std::vector<sql::SignatureColumn>& signature,
                                              const std::string& session) {
  auto spec = ask("Prompt: " + prompt + "\nColumns: " + signature_text(signature), session);
  if (auto err = check_against(spec, signature)) throw SpecError(*err);
  return spec;
}

ChartSpec VizSynthesizer::regenerate_with_data(const std::string& prompt, const data::ResultTable& table,
                                               const std::vector<sql::SignatureColumn>& declared,
                                               const std::string& error, const std::string& session) {
  auto sample = data::to_json(table.head(config_.sample_rows));
  return ask("Prompt: " + prompt + "\nColumns: " + signature_text(table_signature(table, declared)) +
                 "\nSample rows: " + sample["rows"].dump() + "\nThe previous chart specification failed: " + error +
                 "\nReturn a corrected chart specification.",
             session);
}

VizResult VizSynthesizer::finish(sql::GeneratedQuery q, data::ResultTable table, std::optional<ChartSpec> spec,
                                 std::string spec_error, const std::string& prompt, const std::string& session) {
  if (spec) {
    auto bound = bind_data(*spec, table, q.signature);
    if (bound.chart) return {std::move(q), std::move(*bound.chart)};
    spec_error = bound.error;
  }
  log::info("chart spec rejected: " + spec_error);
  ChartSpec second;
  try {
    second = regenerate_with_data(prompt, table, q.signature, spec_error, session);
  } catch (const SpecError& e) {
    throw PipelineError(ErrorCategory::ChartGeneration, std::string("chart regeneration failed: ") + e.what());
  }
  auto bound = bind_data(second, table, q.signature);
  if (!bound.chart) throw PipelineError(ErrorCategory::ChartGeneration, "chart regeneration failed: " + bound.error);
  bound.chart->regenerated = true;
  return {std::move(q), std::move(*bound.chart)};
}

VizResult VizSynthesizer::run(const std::string& prompt, const std::vector<std::string>& names,
                              const std::string& session) {
  auto q = plan_visualization(prompt, names, session);
  const auto signature = q.signature;
  auto pending = std::async(std::launch::async, [&] { return sql_.execute_with_retry(q, session); });

  std::optional<ChartSpec> spec;
  std::string spec_error;
  std::exception_ptr failure;
  try {
    spec = generate_chart_spec(prompt, signature, session);
  } catch (const SpecError& e) {
    spec_error = e.what();
  } catch (...) {
    failure = std::current_exception();
  }
  auto table = pending.get();  // joins before any rethrow
  if (failure) std::rethrow_exception(failure);
  return finish(std::move(q), std::move(table), std::move(spec), std::move(spec_error), prompt, session);
}

VizResult VizSynthesizer::run_sequential(const std::string& prompt, const std::vector<std::string>& names,
                                         const std::string& session) {
  auto q = plan_visualization(prompt, names, session);
  const auto signature = q.signature;
  auto table = sql_.execute_with_retry(q, session);
  std::optional<ChartSpec> spec;
  std::string spec_error;
  try {
    spec = generate_chart_spec(prompt, signature, session);
  } catch (const SpecError& e) {
    spec_error = e.what();
  }
  return finish(std::move(q), std::move(table), std::move(spec), std::move(spec_error), prompt, session);
}

VizResult VizSynthesizer::modify_chart(const VizResult& previous, const std::string& prompt,
                                       const std::string& session) {
  const auto have = table_signature(previous.chart.data, previous.query.signature);
  ChartSpec spec;
  try {
    spec = ask("Previous specification: " + previous.chart.spec.to_json().dump() + "\nColumns: " +
                   signature_text(have) + "\nModification: " + prompt,
               session);
  } catch (const SpecError& e) {
    throw PipelineError(ErrorCategory::ChartGeneration, std::string("chart modification failed: ") + e.what());
  }

  std::vector<std::string> missing;
  for (const auto& c : spec.columns()) {
    if (!previous.chart.data.column_index(c)) missing.push_back(c);
  }
  if (missing.empty()) {
    return finish(previous.query, previous.chart.data, std::move(spec), {}, prompt, session);
  }

  // The cached rows lack a column the new chart needs: query again.
  auto q = plan_visualization(prompt + "\nPrevious SQL: " + previous.query.model_sql +
                                  "\nRequired columns: " + text::join(spec.columns(), ", "),
                              {}, session);
  auto table = sql_.execute_with_retry(q, session);
  return finish(std::move(q), std::move(table), std::move(spec), {}, prompt, session);
}

}  // namespace oceanql::viz
