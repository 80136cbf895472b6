// SPDX-License-Identifier: Apache-2.0
#include "oceanql/sql/guard.hpp"

#include "oceanql/sql/lexer.hpp"
#include "oceanql/text.hpp"

#include <algorithm>
#include <array>

namespace oceanql::sql {

std::string_view to_string(GuardRule r) {
  switch (r) {
    case GuardRule::NotSelect: return "not_select";
    case GuardRule::MultiStatement: return "multi_statement";
    case GuardRule::ForbiddenTable: return "forbidden_table";
    case GuardRule::WriteKeyword: return "write_keyword";
    case GuardRule::NoRowBound: return "no_row_bound";
  }
  return "not_select";
}

namespace {

constexpr std::array kWriteWords = {"INSERT", "UPDATE", "DELETE", "DROP",     "ALTER",  "CREATE",  "ATTACH",
                                    "DETACH", "PRAGMA", "VACUUM", "REINDEX",  "GRANT",  "REVOKE",  "EXEC",
                                    "EXECUTE", "MERGE", "TRUNCATE", "INTO",   "UPSERT", "ANALYZE", "SAVEPOINT",
                                    "RELEASE", "COMMIT", "ROLLBACK", "BEGIN", "LOAD_EXTENSION", "WRITEFILE",
                                    "READFILE", "EDIT"};

// Words that end a FROM clause.
constexpr std::array kFromEndWords = {"WHERE", "GROUP",  "ORDER",  "LIMIT",  "HAVING",
                                      "UNION", "INTERSECT", "EXCEPT", "WINDOW", "OFFSET"};

bool is_one_of(const Token& t, const auto& words) {
  return t.kind == TokenKind::Word && std::find(words.begin(), words.end(), t.upper) != words.end();
}

GuardrailViolation violation(GuardRule r, std::string d) { return {r, std::move(d)}; }

}  // namespace

Validation validate_query(std::string_view sql, const data::SchemaDescriptor& schema, const ValidatorOptions& options) {
  Validation out;
  out.sql = std::string(sql);
  std::vector<Token> toks;
  try {
    toks = tokenize(sql);
  } catch (const LexError& e) {
    out.violation = violation(GuardRule::NotSelect, std::string("unparseable statement: ") + e.what());
    return out;
  }

  // Statement split at depth-0 semicolons; trailing empty statements are fine.
  std::size_t first_end = toks.size();
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].is_punct(";")) {
      first_end = i;
      break;
    }
  }
  for (std::size_t i = first_end; i < toks.size(); ++i) {
    if (!toks[i].is_punct(";")) {
      out.violation = violation(GuardRule::MultiStatement, "more than one statement");
      return out;
    }
  }
  toks.resize(first_end);
  if (toks.empty()) {
    out.violation = violation(GuardRule::NotSelect, "empty statement");
    return out;
  }
  if (!toks[0].is_word("SELECT") && !toks[0].is_word("WITH")) {
    out.violation = violation(GuardRule::NotSelect, "statement starts with " + toks[0].text);
    return out;
  }
  for (const auto& t : toks) {
    if (is_one_of(t, kWriteWords)) {
      out.violation = violation(GuardRule::WriteKeyword, "keyword " + t.upper);
      return out;
    }
  }

  // CTE names: WITH [RECURSIVE] name [(cols)] AS ( ... ) [, name ...]
  std::set<std::string> ctes;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const bool starts = toks[i].is_word("WITH") || (toks[i].is_punct(",") && i > 0 && toks[i - 1].is_punct(")"));
    if (!starts) continue;
    std::size_t j = i + 1;
    if (j < toks.size() && toks[j].is_word("RECURSIVE")) ++j;
    if (j >= toks.size() || !toks[j].is_identifier()) continue;
    std::size_t k = j + 1;
    if (k < toks.size() && toks[k].is_punct("(")) {
      int depth = 0;
      for (; k < toks.size(); ++k) {
        if (toks[k].is_punct("(")) ++depth;
        if (toks[k].is_punct(")") && --depth == 0) break;
      }
      ++k;
    }
    if (k < toks.size() && toks[k].is_word("AS")) ctes.insert(text::to_lower_ascii(toks[j].text));
  }

  auto allowed = [&](const std::string& name) {
    return ctes.count(name) > 0 || schema.has_table(name);
  };

  // Checks the table reference at toks[j]; returns false once a violation is set.
  auto check_ref = [&](std::size_t j) {
    if (j >= toks.size() || toks[j].is_punct("(")) return true;  // subquery; its own FROM is visited later
    if (!toks[j].is_identifier()) {
      out.violation = violation(GuardRule::ForbiddenTable, "unexpected table reference " + toks[j].text);
      return false;
    }
    std::string name = text::to_lower_ascii(toks[j].text);
    std::size_t next = j + 1;
    if (next + 1 < toks.size() && toks[next].is_punct(".") && toks[next + 1].is_identifier()) {
      const auto qualifier = name;
      name = text::to_lower_ascii(toks[next + 1].text);
      next += 2;
      if (qualifier != "dbo" && qualifier != "main") {
        out.violation = violation(GuardRule::ForbiddenTable, "schema " + qualifier + " is not allowed");
        return false;
      }
    }
    if (next < toks.size() && toks[next].is_punct("(")) {
      out.violation = violation(GuardRule::ForbiddenTable, "table-valued function " + name);
      return false;
    }
    if (!allowed(name)) {
      out.violation = violation(GuardRule::ForbiddenTable, "table " + name + " is not in the schema");
      return false;
    }
    if (!ctes.count(name)) out.tables.insert(name);
    return true;
  };

  // Table references follow JOIN, FROM, and every comma of a FROM clause at
  // the clause's own nesting depth (including after a JOIN ... ON expression).
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].is_word("JOIN")) {
      if (!check_ref(i + 1)) return out;
      continue;
    }
    if (!toks[i].is_word("FROM")) continue;
    if (!check_ref(i + 1)) return out;
    int depth = 0;
    for (std::size_t k = i + 1; k < toks.size(); ++k) {
      if (toks[k].is_punct("(")) ++depth;
      if (toks[k].is_punct(")") && --depth < 0) break;
      if (depth != 0) continue;
      if (is_one_of(toks[k], kFromEndWords)) break;
      if (toks[k].is_punct(",") && !check_ref(k + 1)) return out;
    }
  }

  // Row bound on the outermost query: TOP right after a depth-0 SELECT, or a
  // depth-0 LIMIT.
  bool bounded = false, compound = false;
  std::size_t main_select = toks.size();
  int depth = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].is_punct("(")) ++depth;
    if (toks[i].is_punct(")")) --depth;
    if (depth != 0) continue;
    if (toks[i].is_word("LIMIT")) bounded = true;
    if (toks[i].is_word("UNION") || toks[i].is_word("INTERSECT") || toks[i].is_word("EXCEPT")) compound = true;
    if (toks[i].is_word("SELECT")) {
      if (main_select == toks.size()) main_select = i;
      std::size_t j = i + 1;
      if (j < toks.size() && (toks[j].is_word("DISTINCT") || toks[j].is_word("ALL"))) ++j;
      if (j < toks.size() && toks[j].is_word("TOP")) bounded = true;
    }
  }
  if (!bounded) {
    if (!options.inject_row_bound) {
      out.violation = violation(GuardRule::NoRowBound, "no TOP or LIMIT clause");
      return out;
    }
    const auto bound = std::to_string(options.injected_bound);
    std::string s(sql.substr(0, toks.back().end()));
    if (compound || main_select == toks.size()) {
      s += " LIMIT " + bound;
    } else {
      std::size_t j = main_select + 1;
      if (j < toks.size() && (toks[j].is_word("DISTINCT") || toks[j].is_word("ALL"))) ++j;
      const auto at = toks[j - 1].end();
      s.insert(at, " TOP " + bound);
    }
    out.sql = s;
    out.row_bound_injected = true;
  }
  return out;
}

data::ResultTable execute_guarded(const data::Datastore& store, std::string_view sql, std::chrono::milliseconds timeout,
                                  std::size_t row_cap) {
  auto v = validate_query(sql);
  if (!v.ok()) throw GuardrailError(*v.violation);
  if (!v.row_bound_injected) return store.run_readonly(v.sql, timeout, row_cap);
  // Run the injected bound with one probe row so truncation is reported.
  ValidatorOptions probe;
  probe.injected_bound = data::kDefaultRowCap + 1;
  auto p = validate_query(sql, data::observation_schema(), probe);
  return store.run_readonly(p.sql, timeout, std::min(row_cap, data::kDefaultRowCap));
}

}  // namespace oceanql::sql
