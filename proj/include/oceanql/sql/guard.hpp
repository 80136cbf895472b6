// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/data/datastore.hpp"

#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace oceanql::sql {

enum class GuardRule { NotSelect, MultiStatement, ForbiddenTable, WriteKeyword, NoRowBound };

std::string_view to_string(GuardRule r);

struct GuardrailViolation {
  GuardRule rule;
  std::string detail;
};

struct ValidatorOptions {
  /// Add TOP 1000 when the statement has no TOP/LIMIT instead of reporting
  /// no_row_bound.
  bool inject_row_bound = true;
  std::size_t injected_bound = data::kDefaultRowCap;
};

struct Validation {
  std::optional<GuardrailViolation> violation;
  std::string sql;                // possibly with an injected row bound
  std::set<std::string> tables;   // referenced base tables, lowercase
  bool row_bound_injected = false;

  [[nodiscard]] bool ok() const { return !violation.has_value(); }
};

/// Single SELECT (optionally WITH ...) over schema tables and its own CTEs,
/// no write keywords, and a row bound. Reports the first violated rule.
Validation validate_query(std::string_view sql, const data::SchemaDescriptor& schema = data::observation_schema(),
                          const ValidatorOptions& options = {});

class GuardrailError : public std::runtime_error {
 public:
  explicit GuardrailError(GuardrailViolation v)
      : std::runtime_error("guardrail violation (" + std::string(to_string(v.rule)) + "): " + v.detail),
        violation_(std::move(v)) {}
  [[nodiscard]] const GuardrailViolation& violation() const { return violation_; }

 private:
  GuardrailViolation violation_;
};

/// The only path from generated SQL to the store: re-validates and throws
/// GuardrailError before anything reaches run_readonly. An injected row bound
/// yields at most that many rows, with truncated set when more existed.
data::ResultTable execute_guarded(const data::Datastore& store, std::string_view sql,
                                  std::chrono::milliseconds timeout = data::kDefaultTimeout,
                                  std::size_t row_cap = data::kDefaultRowCap);

}  // namespace oceanql::sql
