// SPDX-License-Identifier: Apache-2.0
#include "oceanql/error.hpp"

#include <array>

namespace oceanql {

ErrorCategory error_category_from_string(std::string_view s) {
  constexpr std::array kAll = {
      ErrorCategory::PromptEvaluation, ErrorCategory::NameResolution,
      ErrorCategory::SqlGeneration,    ErrorCategory::ChartGeneration,
      ErrorCategory::TokenLimit,       ErrorCategory::SimilaritySearch,
  };
  for (auto c : kAll) {
    if (to_string(c) == s) return c;
  }
  throw std::invalid_argument("unknown error category: " + std::string(s));
}

}  // namespace oceanql
