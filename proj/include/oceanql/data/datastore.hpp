// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

struct sqlite3;

namespace oceanql::data {

struct ImageRecord {
  std::int64_t id = 0;
  std::string url;
  double latitude = 0, longitude = 0;
  double depth_meters = 0;
  double temperature_celsius = 0;
  double pressure_dbar = 0;
  double salinity = 0;
  double oxygen_ml_l = 0;
  std::string timestamp;
  std::string observer;
};

struct BoundingBoxRecord {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::string concept_name;
  int x = 0, y = 0, width = 0, height = 0;
  std::string verification_timestamp;
};

struct MarineRegionRecord {
  std::string name;
  double min_latitude = 0, max_latitude = 0, min_longitude = 0, max_longitude = 0;
  /// Same inclusive test as the BETWEEN join.
  [[nodiscard]] bool contains(double lat, double lon) const {
    return lat >= min_latitude && lat <= max_latitude && lon >= min_longitude && lon <= max_longitude;
  }
};

enum class ColumnType { Integer, Real, Text, Null };
std::string_view to_string(ColumnType t);

struct Column {
  std::string name;
  ColumnType type = ColumnType::Null;
};

using Value = std::variant<std::monostate, std::int64_t, double, std::string>;

/// Plain rendering: integers as-is, reals with up to 15 significant digits
/// and no locale grouping, NULL as empty.
std::string to_display(const Value& v);
nlohmann::json to_json(const Value& v);

struct ResultTable {
  std::vector<Column> columns;
  std::vector<std::vector<Value>> rows;
  bool truncated = false;

  [[nodiscard]] std::optional<std::size_t> column_index(std::string_view name) const;
  [[nodiscard]] bool empty() const { return rows.empty(); }
  /// First n rows, same columns.
  [[nodiscard]] ResultTable head(std::size_t n) const;
};

nlohmann::json to_json(const ResultTable& t);

struct ColumnSpec {
  std::string name;
  std::string type;
};

struct ForeignKey {
  std::string table, column, ref_table, ref_column;
};

struct SchemaDescriptor {
  std::map<std::string, std::vector<ColumnSpec>> tables;
  std::map<std::string, std::string> primary_keys;
  std::vector<ForeignKey> foreign_keys;

  [[nodiscard]] bool has_table(std::string_view name) const;
  /// Tables with columns, then PK and FK lines. Stable text for prompts.
  [[nodiscard]] std::string describe() const;
};

/// The three-table schema served by Datastore.
const SchemaDescriptor& observation_schema();

/// SQLite error text, verbatim.
class SqlExecutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class QueryTimeout : public SqlExecutionError {
 public:
  using SqlExecutionError::SqlExecutionError;
};

struct SeedCounts {
  std::size_t images = 0, bounding_boxes = 0, regions = 0;
};

inline constexpr std::size_t kDefaultRowCap = 1000;
inline constexpr std::chrono::milliseconds kDefaultTimeout{10000};

/// In-memory observation store. Immutable once load_seed returns; queries
/// run on a pool of read-only copies so readers never block each other.
class Datastore {
 public:
  Datastore();
  ~Datastore();
  Datastore(const Datastore&) = delete;
  Datastore& operator=(const Datastore&) = delete;

  void init_schema();

  /// Loads images.csv, bounding_boxes.csv and marine_regions.csv. Throws
  /// FormatError naming file and row on a malformed or inconsistent row
  /// (nothing is kept), std::logic_error on a second load. known_concepts,
  /// when non-empty, restricts bounding_boxes.concept.
  void load_seed(const std::filesystem::path& dir, const std::vector<std::string>& known_concepts = {});

  [[nodiscard]] bool loaded() const { return loaded_; }

  /// Accepts TOP n and a dbo. prefix. Throws SqlExecutionError/QueryTimeout.
  ResultTable run_readonly(std::string_view sql, std::chrono::milliseconds timeout = kDefaultTimeout,
                           std::size_t row_cap = kDefaultRowCap) const;

  /// Column names a statement would produce, without running it.
  std::vector<std::string> result_columns(std::string_view sql) const;

  /// Statements that reached run_readonly.
  [[nodiscard]] std::size_t statements_executed() const { return executed_.load(); }

  [[nodiscard]] SeedCounts counts() const;
  [[nodiscard]] std::optional<ImageRecord> image(std::int64_t id) const;
  [[nodiscard]] std::optional<BoundingBoxRecord> bounding_box(std::int64_t id) const;
  [[nodiscard]] std::vector<BoundingBoxRecord> boxes_for_image(std::int64_t image_id) const;
  /// Ascending id.
  [[nodiscard]] std::vector<BoundingBoxRecord> all_bounding_boxes() const;
  [[nodiscard]] std::vector<MarineRegionRecord> regions() const;

 private:
  struct Conn;
  class Lease;
  Lease acquire() const;
  /// run_readonly without the statement count; used by internal lookups.
  ResultTable query(std::string_view sql, std::chrono::milliseconds timeout = kDefaultTimeout,
                    std::size_t row_cap = kDefaultRowCap) const;
  void release(sqlite3* db) const;

  sqlite3* writer_ = nullptr;
  bool schema_ = false;
  bool loaded_ = false;
  std::string image_bytes_;  // serialized snapshot readers deserialize from

  mutable std::mutex pool_mu_;
  mutable std::condition_variable pool_cv_;
  mutable std::vector<sqlite3*> idle_;
  mutable std::size_t open_readers_ = 0;
  mutable std::atomic<std::size_t> executed_{0};
};

/// Minimal RFC 4180 reader; first row is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace oceanql::data
