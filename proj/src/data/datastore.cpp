// SPDX-License-Identifier: Apache-2.0
#include "oceanql/data/datastore.hpp"

#include "oceanql/error.hpp"
#include "oceanql/sql/lexer.hpp"

#include <sqlite3.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace oceanql::data {

std::string_view to_string(ColumnType t) {
  switch (t) {
    case ColumnType::Integer: return "integer";
    case ColumnType::Real: return "real";
    case ColumnType::Text: return "text";
    case ColumnType::Null: return "null";
  }
  return "null";
}

std::string to_display(const Value& v) {
  if (std::holds_alternative<std::int64_t>(v)) return std::to_string(std::get<std::int64_t>(v));
  if (std::holds_alternative<double>(v)) {
    const double d = std::get<double>(v);
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 1e15) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.0f", d);
      return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.15g", d);
    return buf;
  }
  if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
  return "";
}

nlohmann::json to_json(const Value& v) {
  if (std::holds_alternative<std::int64_t>(v)) return std::get<std::int64_t>(v);
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
  return nullptr;
}

std::optional<std::size_t> ResultTable::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return i;
  }
  return std::nullopt;
}

ResultTable ResultTable::head(std::size_t n) const {
  ResultTable t{columns, {}, truncated || rows.size() > n};
  t.rows.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(std::min(n, rows.size())));
  return t;
}

nlohmann::json to_json(const ResultTable& t) {
  auto cols = nlohmann::json::array();
  for (const auto& c : t.columns) cols.push_back({{"name", c.name}, {"type", to_string(c.type)}});
  auto rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    auto row = nlohmann::json::array();
    for (const auto& v : r) row.push_back(to_json(v));
    rows.push_back(std::move(row));
  }
  return {{"columns", cols}, {"rows", rows}, {"truncated", t.truncated}};
}

bool SchemaDescriptor::has_table(std::string_view name) const { return tables.count(std::string(name)) > 0; }

std::string SchemaDescriptor::describe() const {
  std::ostringstream out;
  for (const auto& [table, cols] : tables) {
    out << "TABLE " << table << " (";
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? ", " : "") << cols[i].name << " " << cols[i].type;
    out << ")\n";
  }
  for (const auto& [table, pk] : primary_keys) out << "PRIMARY KEY " << table << "." << pk << "\n";
  for (const auto& fk : foreign_keys) {
    out << "FOREIGN KEY " << fk.table << "." << fk.column << " REFERENCES " << fk.ref_table << "." << fk.ref_column
        << "\n";
  }
  return out.str();
}

const SchemaDescriptor& observation_schema() {
  static const SchemaDescriptor s = [] {
    SchemaDescriptor d;
    d.tables["images"] = {{"id", "INTEGER"},          {"url", "TEXT"},
                          {"latitude", "REAL"},       {"longitude", "REAL"},
                          {"depth_meters", "REAL"},   {"temperature_celsius", "REAL"},
                          {"pressure_dbar", "REAL"},  {"salinity", "REAL"},
                          {"oxygen_ml_l", "REAL"},    {"timestamp", "TEXT"},
                          {"observer", "TEXT"}};
    d.tables["bounding_boxes"] = {{"id", "INTEGER"}, {"image_id", "INTEGER"}, {"concept", "TEXT"},
                                  {"x", "INTEGER"},  {"y", "INTEGER"},        {"width", "INTEGER"},
                                  {"height", "INTEGER"}, {"verification_timestamp", "TEXT"}};
    d.tables["marine_regions"] = {{"name", "TEXT"},
                                  {"min_latitude", "REAL"},
                                  {"max_latitude", "REAL"},
                                  {"min_longitude", "REAL"},
                                  {"max_longitude", "REAL"}};
    d.primary_keys = {{"images", "id"}, {"bounding_boxes", "id"}, {"marine_regions", "name"}};
    d.foreign_keys = {{"bounding_boxes", "image_id", "images", "id"}};
    return d;
  }();
  return s;
}

namespace {

constexpr const char* kSchemaSql = R"(
CREATE TABLE images (
  id INTEGER PRIMARY KEY,
  url TEXT NOT NULL,
  latitude REAL NOT NULL CHECK (latitude BETWEEN -90 AND 90),
  longitude REAL NOT NULL CHECK (longitude BETWEEN -180 AND 180),
  depth_meters REAL NOT NULL CHECK (depth_meters >= 0),
  temperature_celsius REAL,
  pressure_dbar REAL,
  salinity REAL,
  oxygen_ml_l REAL,
  timestamp TEXT,
  observer TEXT
);
CREATE TABLE bounding_boxes (
  id INTEGER PRIMARY KEY,
  image_id INTEGER NOT NULL REFERENCES images(id),
  concept TEXT NOT NULL,
  x INTEGER NOT NULL,
  y INTEGER NOT NULL,
  width INTEGER NOT NULL CHECK (width > 0),
  height INTEGER NOT NULL CHECK (height > 0),
  verification_timestamp TEXT
);
CREATE TABLE marine_regions (
  name TEXT PRIMARY KEY,
  min_latitude REAL NOT NULL,
  max_latitude REAL NOT NULL,
  min_longitude REAL NOT NULL,
  max_longitude REAL NOT NULL,
  CHECK (min_latitude <= max_latitude AND min_longitude <= max_longitude)
);
CREATE INDEX bounding_boxes_image ON bounding_boxes(image_id);
CREATE INDEX bounding_boxes_concept ON bounding_boxes(concept);
)";

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw SqlExecutionError(msg);
  }
}

struct Stmt {
  sqlite3_stmt* s = nullptr;
  Stmt(sqlite3* db, std::string_view sql, const char** tail = nullptr) {
    if (sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &s, tail) != SQLITE_OK) {
      throw SqlExecutionError(sqlite3_errmsg(db));
    }
  }
  ~Stmt() { sqlite3_finalize(s); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;
};

int deny_writes(void*, int action, const char*, const char*, const char*, const char*) {
  switch (action) {
    case SQLITE_SELECT:
    case SQLITE_READ:
    case SQLITE_FUNCTION:
    case SQLITE_RECURSIVE:
      return SQLITE_OK;
    default:
      return SQLITE_DENY;
  }
}

struct Deadline {
  std::chrono::steady_clock::time_point at;
  bool hit = false;
};

int check_deadline(void* p) {
  auto* d = static_cast<Deadline*>(p);
  if (std::chrono::steady_clock::now() >= d->at) {
    d->hit = true;
    return 1;
  }
  return 0;
}

Value column_value(sqlite3_stmt* s, int i) {
  switch (sqlite3_column_type(s, i)) {
    case SQLITE_INTEGER: return static_cast<std::int64_t>(sqlite3_column_int64(s, i));
    case SQLITE_FLOAT: return sqlite3_column_double(s, i);
    case SQLITE_NULL: return std::monostate{};
    default: {
      const auto* t = reinterpret_cast<const char*>(sqlite3_column_text(s, i));
      return std::string(t ? t : "", static_cast<std::size_t>(sqlite3_column_bytes(s, i)));
    }
  }
}

ColumnType type_of(const Value& v) {
  if (std::holds_alternative<std::int64_t>(v)) return ColumnType::Integer;
  if (std::holds_alternative<double>(v)) return ColumnType::Real;
  if (std::holds_alternative<std::string>(v)) return ColumnType::Text;
  return ColumnType::Null;
}

// Everything after the first statement must be whitespace, comments or ';'.
void require_single_statement(const char* tail) {
  try {
    for (const auto& t : sql::tokenize(tail ? tail : "")) {
      if (!t.is_punct(";")) throw SqlExecutionError("only a single statement may be executed");
    }
  } catch (const sql::LexError& e) {
    throw SqlExecutionError(e.what());
  }
}

}  // namespace

class Datastore::Lease {
 public:
  Lease(const Datastore* store, sqlite3* db) : store_(store), db_(db) {}
  ~Lease() {
    if (db_) store_->release(db_);
  }
  Lease(Lease&& o) noexcept : store_(o.store_), db_(o.db_) { o.db_ = nullptr; }
  Lease(const Lease&) = delete;
  sqlite3* get() const { return db_; }

 private:
  const Datastore* store_;
  sqlite3* db_;
};

Datastore::Datastore() {
  if (sqlite3_open_v2(":memory:", &writer_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE, nullptr) != SQLITE_OK) {
    throw SqlExecutionError("cannot open in-memory database");
  }
  exec(writer_, "PRAGMA foreign_keys = ON");
}

Datastore::~Datastore() {
  for (auto* db : idle_) sqlite3_close(db);
  sqlite3_close(writer_);
}

void Datastore::init_schema() {
  if (schema_) throw std::logic_error("schema already initialised");
  exec(writer_, kSchemaSql);
  schema_ = true;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), {});
  CsvTable t;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  std::size_t line = 1, row_line = 1;
  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    if (t.header.empty()) {
      t.header = std::move(row);
    } else if (!(row.size() == 1 && row[0].empty())) {
      t.rows.push_back(std::move(row));
      t.line_numbers.push_back(row_line);
    }
    row.clear();
    any = false;
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const char c = data[i];
    if (!any) row_line = line;
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      // CRLF
    } else if (c == '\n') {
      end_row();
      ++line;
    } else {
      field += c;
    }
  }
  if (quoted) throw FormatError(path.filename().string() + ": unterminated quoted field");
  if (any) end_row();
  return t;
}

namespace {

void bind_row(sqlite3* db, sqlite3_stmt* s, const CsvTable& t, std::size_t r, const std::vector<std::string>& types,
              const std::string& file) {
  const auto& row = t.rows[r];
  const auto where = file + " row " + std::to_string(t.line_numbers[r]);
  if (row.size() != t.header.size()) {
    throw FormatError(where + ": expected " + std::to_string(t.header.size()) + " fields, got " +
                      std::to_string(row.size()));
  }
  sqlite3_reset(s);
  sqlite3_clear_bindings(s);
  for (std::size_t i = 0; i < row.size(); ++i) {
    const int idx = static_cast<int>(i) + 1;
    const auto& v = row[i];
    if (v.empty() && types[i] != "TEXT") {
      sqlite3_bind_null(s, idx);
      continue;
    }
    try {
      std::size_t used = 0;
      if (types[i] == "INTEGER") {
        const auto n = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        sqlite3_bind_int64(s, idx, n);
      } else if (types[i] == "REAL") {
        const auto d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        sqlite3_bind_double(s, idx, d);
      } else {
        sqlite3_bind_text(s, idx, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
      }
    } catch (const std::logic_error&) {
      throw FormatError(where + ": bad " + types[i] + " value '" + v + "' for " + t.header[i]);
    }
  }
  if (sqlite3_step(s) != SQLITE_DONE) throw FormatError(where + ": " + sqlite3_errmsg(db));
}

}  // namespace

void Datastore::load_seed(const std::filesystem::path& dir, const std::vector<std::string>& known_concepts) {
  if (loaded_) throw std::logic_error("seed data already loaded");
  if (!schema_) init_schema();
  const std::set<std::string> known(known_concepts.begin(), known_concepts.end());
  exec(writer_, "BEGIN");
  try {
    for (const char* table : {"marine_regions", "images", "bounding_boxes"}) {
      const std::string file = std::string(table) + ".csv";
      const auto csv = read_csv(dir / file);
      const auto& cols = observation_schema().tables.at(table);
      if (csv.header.size() != cols.size()) throw FormatError(file + ": header has wrong column count");
      std::vector<std::string> types;
      std::string sql = std::string("INSERT INTO ") + table + " (";
      for (std::size_t i = 0; i < cols.size(); ++i) {
        if (csv.header[i] != cols[i].name) throw FormatError(file + ": unexpected column " + csv.header[i]);
        sql += (i ? "," : "") + cols[i].name;
        types.push_back(cols[i].type);
      }
      sql += ") VALUES (";
      for (std::size_t i = 0; i < cols.size(); ++i) sql += i ? ",?" : "?";
      sql += ")";
      Stmt ins(writer_, sql);
      const auto concept_col = std::string(table) == "bounding_boxes" ? 2 : -1;
      for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        if (concept_col >= 0 && !known.empty() && csv.rows[r].size() > 2 && !known.count(csv.rows[r][2])) {
          throw FormatError(file + " row " + std::to_string(csv.line_numbers[r]) + ": unknown concept '" +
                            csv.rows[r][2] + "'");
        }
        bind_row(writer_, ins.s, csv, r, types, file);
      }
    }
    exec(writer_, "COMMIT");
  } catch (...) {
    sqlite3_exec(writer_, "ROLLBACK", nullptr, nullptr, nullptr);
    exec(writer_, "DELETE FROM bounding_boxes; DELETE FROM images; DELETE FROM marine_regions;");
    throw;
  }

  sqlite3_int64 size = 0;
  unsigned char* bytes = sqlite3_serialize(writer_, "main", &size, 0);
  if (!bytes) throw SqlExecutionError("cannot snapshot database");
  image_bytes_.assign(reinterpret_cast<const char*>(bytes), static_cast<std::size_t>(size));
  sqlite3_free(bytes);
  loaded_ = true;
}

Datastore::Lease Datastore::acquire() const {
  if (!loaded_) throw std::logic_error("datastore not loaded");
  std::unique_lock lock(pool_mu_);
  for (;;) {
    if (!idle_.empty()) {
      auto* db = idle_.back();
      idle_.pop_back();
      return Lease(this, db);
    }
    if (open_readers_ < 16) break;
    pool_cv_.wait(lock);
  }
  ++open_readers_;
  lock.unlock();

  sqlite3* db = nullptr;
  if (sqlite3_open_v2(":memory:", &db, SQLITE_OPEN_READWRITE, nullptr) != SQLITE_OK) {
    sqlite3_close(db);
    std::lock_guard g(pool_mu_);
    --open_readers_;
    throw SqlExecutionError("cannot open reader");
  }
  auto* buf = static_cast<unsigned char*>(sqlite3_malloc64(image_bytes_.size()));
  std::copy(image_bytes_.begin(), image_bytes_.end(), buf);
  const auto n = static_cast<sqlite3_int64>(image_bytes_.size());
  if (sqlite3_deserialize(db, "main", buf, n, n, SQLITE_DESERIALIZE_FREEONCLOSE | SQLITE_DESERIALIZE_READONLY) !=
      SQLITE_OK) {
    sqlite3_close(db);
    std::lock_guard g(pool_mu_);
    --open_readers_;
    throw SqlExecutionError("cannot load reader snapshot");
  }
  exec(db, "PRAGMA query_only = 1");
  sqlite3_set_authorizer(db, deny_writes, nullptr);
  return Lease(this, db);
}

void Datastore::release(sqlite3* db) const {
  std::lock_guard g(pool_mu_);
  idle_.push_back(db);
  pool_cv_.notify_one();
}

ResultTable Datastore::run_readonly(std::string_view sql_text, std::chrono::milliseconds timeout,
                                    std::size_t row_cap) const {
  ++executed_;
  return query(sql_text, timeout, row_cap);
}

ResultTable Datastore::query(std::string_view sql_text, std::chrono::milliseconds timeout, std::size_t row_cap) const {
  std::string sql;
  try {
    sql = sql::to_sqlite_dialect(sql_text);
  } catch (const sql::LexError& e) {
    throw SqlExecutionError(e.what());
  }
  auto lease = acquire();
  sqlite3* db = lease.get();
  const char* tail = nullptr;
  Stmt st(db, sql, &tail);
  if (!st.s) throw SqlExecutionError("empty statement");
  require_single_statement(tail);
  if (!sqlite3_stmt_readonly(st.s)) throw SqlExecutionError("attempt to write a readonly database");

  Deadline dl{std::chrono::steady_clock::now() + timeout};
  sqlite3_progress_handler(db, 1000, check_deadline, &dl);
  struct ClearHandler {
    sqlite3* db;
    ~ClearHandler() { sqlite3_progress_handler(db, 0, nullptr, nullptr); }
  } clear{db};

  ResultTable out;
  const int ncol = sqlite3_column_count(st.s);
  for (int i = 0; i < ncol; ++i) out.columns.push_back({sqlite3_column_name(st.s, i), ColumnType::Null});
  for (;;) {
    const int rc = sqlite3_step(st.s);
    if (rc == SQLITE_DONE) break;
    if (rc != SQLITE_ROW) {
      if (dl.hit) throw QueryTimeout("query exceeded " + std::to_string(timeout.count()) + " ms");
      throw SqlExecutionError(sqlite3_errmsg(db));
    }
    if (out.rows.size() == row_cap) {
      out.truncated = true;
      break;
    }
    std::vector<Value> row;
    row.reserve(static_cast<std::size_t>(ncol));
    for (int i = 0; i < ncol; ++i) {
      row.push_back(column_value(st.s, i));
      auto& col = out.columns[static_cast<std::size_t>(i)];
      const auto t = type_of(row.back());
      if (col.type == ColumnType::Null || (col.type == ColumnType::Integer && t == ColumnType::Real)) {
        if (t != ColumnType::Null) col.type = t;
      }
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::vector<std::string> Datastore::result_columns(std::string_view sql_text) const {
  std::string sql;
  try {
    sql = sql::to_sqlite_dialect(sql_text);
  } catch (const sql::LexError& e) {
    throw SqlExecutionError(e.what());
  }
  auto lease = acquire();
  const char* tail = nullptr;
  Stmt st(lease.get(), sql, &tail);
  std::vector<std::string> cols;
  if (!st.s) return cols;
  for (int i = 0; i < sqlite3_column_count(st.s); ++i) cols.emplace_back(sqlite3_column_name(st.s, i));
  return cols;
}

SeedCounts Datastore::counts() const {
  auto one = [&](const char* sql) {
    return static_cast<std::size_t>(std::get<std::int64_t>(query(sql).rows.at(0).at(0)));
  };
  return {one("SELECT COUNT(*) FROM images"), one("SELECT COUNT(*) FROM bounding_boxes"),
          one("SELECT COUNT(*) FROM marine_regions")};
}

namespace {

std::string text_at(const std::vector<Value>& r, std::size_t i) { return to_display(r.at(i)); }
double real_at(const std::vector<Value>& r, std::size_t i) {
  const auto& v = r.at(i);
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  if (std::holds_alternative<std::int64_t>(v)) return static_cast<double>(std::get<std::int64_t>(v));
  return 0;
}
std::int64_t int_at(const std::vector<Value>& r, std::size_t i) { return static_cast<std::int64_t>(real_at(r, i)); }

ImageRecord to_image(const std::vector<Value>& r) {
  return {int_at(r, 0),  text_at(r, 1),  real_at(r, 2), real_at(r, 3), real_at(r, 4), real_at(r, 5),
          real_at(r, 6), real_at(r, 7),  real_at(r, 8), text_at(r, 9), text_at(r, 10)};
}

BoundingBoxRecord to_box(const std::vector<Value>& r) {
  return {int_at(r, 0),
          int_at(r, 1),
          text_at(r, 2),
          static_cast<int>(int_at(r, 3)),
          static_cast<int>(int_at(r, 4)),
          static_cast<int>(int_at(r, 5)),
          static_cast<int>(int_at(r, 6)),
          text_at(r, 7)};
}

constexpr const char* kImageCols =
    "id, url, latitude, longitude, depth_meters, temperature_celsius, pressure_dbar, salinity, oxygen_ml_l, "
    "timestamp, observer";
constexpr const char* kBoxCols = "id, image_id, concept, x, y, width, height, verification_timestamp";

}  // namespace

std::optional<ImageRecord> Datastore::image(std::int64_t id) const {
  auto t = query(std::string("SELECT ") + kImageCols + " FROM images WHERE id = " + std::to_string(id));
  if (t.rows.empty()) return std::nullopt;
  return to_image(t.rows[0]);
}

std::optional<BoundingBoxRecord> Datastore::bounding_box(std::int64_t id) const {
  auto t = query(std::string("SELECT ") + kBoxCols + " FROM bounding_boxes WHERE id = " + std::to_string(id));
  if (t.rows.empty()) return std::nullopt;
  return to_box(t.rows[0]);
}

std::vector<BoundingBoxRecord> Datastore::boxes_for_image(std::int64_t image_id) const {
  auto t = query(std::string("SELECT ") + kBoxCols + " FROM bounding_boxes WHERE image_id = " +
                        std::to_string(image_id) + " ORDER BY id");
  std::vector<BoundingBoxRecord> out;
  for (const auto& r : t.rows) out.push_back(to_box(r));
  return out;
}

std::vector<BoundingBoxRecord> Datastore::all_bounding_boxes() const {
  auto t = query(std::string("SELECT ") + kBoxCols + " FROM bounding_boxes ORDER BY id",
                        kDefaultTimeout, static_cast<std::size_t>(-1));
  std::vector<BoundingBoxRecord> out;
  for (const auto& r : t.rows) out.push_back(to_box(r));
  return out;
}

std::vector<MarineRegionRecord> Datastore::regions() const {
  auto t = query("SELECT name, min_latitude, max_latitude, min_longitude, max_longitude FROM marine_regions "
                        "ORDER BY name");
  std::vector<MarineRegionRecord> out;
  for (const auto& r : t.rows) out.push_back({text_at(r, 0), real_at(r, 1), real_at(r, 2), real_at(r, 3), real_at(r, 4)});
  return out;
}

}  // namespace oceanql::data
