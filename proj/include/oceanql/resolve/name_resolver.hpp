// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/kg/species_kg.hpp"
#include "oceanql/llm/gateway.hpp"

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oceanql::resolve {

/// Subject-relation-object structure extracted from a creature description.
struct PromptTriple {
  std::string subject;
  std::string relation;
  std::string object;
  friend bool operator==(const PromptTriple&, const PromptTriple&) = default;
};

enum class Method { Dictionary, KgSubject, KgObject, StringFallback, EmbeddingFallback, None };

std::string_view to_string(Method m);

struct ResolutionResult {
  std::vector<std::string> names;
  Method method = Method::None;
  /// Characteristic phrases for subject matches.
  std::vector<std::string> values;
  std::optional<std::string> matched_key;
  /// Stages attempted, in order.
  std::vector<std::string> stages;
};

/// Extraction reply missing, malformed, or violating the triple invariant.
class ExtractionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SubjectAlignment {
  std::vector<std::string> concepts;  // concepts whose name or alias equals the subject
  std::vector<std::string> values;    // union of their lists under the key
  bool key_present = false;           // at least one matched species has the key
};

/// Exact normalised match of the subject against scientific names and
/// aliases. Concepts ascending; values in concept order, deduplicated.
SubjectAlignment align_subject(const PromptTriple& triple, std::string_view key, std::span<const kg::SpeciesKG> kgs);

/// Concepts whose list under key contains the normalised object, ascending.
std::vector<std::string> align_object(const PromptTriple& triple, std::string_view key,
                                      std::span<const kg::SpeciesKG> kgs);

struct ResolverConfig {
  double relation_threshold = 0.5;
  std::size_t result_cap = 10;
  std::size_t embedding_top_k = 10;
  double embedding_min_score = 0.3;
};

/// Four-stage chain: dictionary, KG alignment, token string match, paragraph
/// embedding match. Read-only after construction.
class NameResolver {
 public:
  NameResolver(const kg::KnowledgeBase& kb, llm::Gateway& gateway, ResolverConfig config = {});

  ResolutionResult resolve(std::string_view description, const std::string& session = {}) const;

  [[nodiscard]] std::vector<std::string> lookup_common_name(std::string_view name) const;

  /// One kg_extraction call. Throws ExtractionError.
  PromptTriple extract_triple(std::string_view description, const std::string& session = {}) const;

  /// Characteristic key with the highest cosine to the relation, if it clears
  /// the threshold.
  [[nodiscard]] std::optional<std::string> match_relation(std::string_view relation,
                                                          const std::string& session = {}) const;

  [[nodiscard]] std::vector<std::string> fallback_string_match(std::string_view description) const;
  [[nodiscard]] std::vector<std::string> fallback_embedding_match(std::string_view description,
                                                                  const std::string& session = {}) const;

  [[nodiscard]] const ResolverConfig& config() const { return config_; }
  [[nodiscard]] const kg::KnowledgeBase& knowledge() const { return kb_; }

 private:
  std::vector<std::string> cap_known(std::vector<std::string> names) const;

  const kg::KnowledgeBase& kb_;
  llm::Gateway& gateway_;
  ResolverConfig config_;
  std::vector<llm::EmbeddingVector> key_embeddings_;
};

}  // namespace oceanql::resolve
