// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oceanql {

/// Closed set of failure categories surfaced to users. Every failure path in
/// the pipeline maps to exactly one of these.
enum class ErrorCategory {
  PromptEvaluation,
  NameResolution,
  SqlGeneration,
  ChartGeneration,
  TokenLimit,
  SimilaritySearch,
};

[[nodiscard]] constexpr std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::PromptEvaluation: return "prompt_evaluation";
    case ErrorCategory::NameResolution: return "name_resolution";
    case ErrorCategory::SqlGeneration: return "sql_generation";
    case ErrorCategory::ChartGeneration: return "chart_generation";
    case ErrorCategory::TokenLimit: return "token_limit";
    case ErrorCategory::SimilaritySearch: return "similarity_search";
  }
  return "prompt_evaluation";
}

/// Throws std::invalid_argument on an unknown name.
ErrorCategory error_category_from_string(std::string_view s);

/// Pipeline failure carrying its category.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(ErrorCategory category, const std::string& detail)
      : std::runtime_error(detail), category_(category) {}

  [[nodiscard]] ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Model transport failure (network, HTTP status, missing mock transcript).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A single request would exceed the configured token budget.
class TokenLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed on-disk artifact or input file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace oceanql
