// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/kg/species_kg.hpp"
#include "oceanql/llm/gateway.hpp"

#include <string>
#include <utility>
#include <vector>

namespace oceanql::kg {

struct BuildReport {
  std::vector<std::string> skipped;  // concepts whose extraction failed
  std::size_t gateway_calls = 0;
};

/// Offline ingestion of the species corpus into KGs, a common-name
/// dictionary and paragraph embeddings.
class KgBuilder {
 public:
  KgBuilder(llm::Gateway& gateway, std::vector<std::string> known_concepts);

  /// One kg_extraction call; a malformed reply is re-asked once, after which
  /// only the valid keys are kept. Throws TransportError on gateway failure
  /// and std::invalid_argument for an unknown concept.
  SpeciesKG build_species_kg(const SourceDocument& doc);

  /// Builds every document; failures are skipped and logged. Output sorted
  /// by concept regardless of input order.
  KnowledgeBase build(const std::vector<SourceDocument>& docs,
                      const std::vector<std::pair<std::string, std::string>>& curated,
                      BuildReport* report = nullptr);

 private:
  llm::Gateway& gateway_;
  std::vector<std::string> known_;
  std::size_t calls_ = 0;
};

/// Every alias maps to its concept, curated pairs are merged, collisions
/// become multi-valued, and each known concept maps to itself.
CommonNameDictionary build_common_name_dictionary(
    const std::vector<SpeciesKG>& kgs, const std::vector<std::pair<std::string, std::string>>& curated,
    const std::vector<std::string>& known_concepts = {});

}  // namespace oceanql::kg
