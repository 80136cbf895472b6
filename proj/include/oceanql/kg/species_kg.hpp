// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/llm/types.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oceanql::kg {

/// The only characteristic keys a SpeciesKG may hold.
inline constexpr std::array<std::string_view, 7> kCharacteristicKeys = {
    "aliases", "body parts", "colors", "predators", "diet", "environment", "descriptors"};

bool is_characteristic_key(std::string_view key);

struct SourceDocument {
  std::string species;
  std::vector<std::string> paragraphs;
  std::string source;
};

/// Characteristics per key. A key absent from the map means the source had
/// nothing to say about it; an empty list means it was asked and came back
/// empty.
struct SpeciesKG {
  std::string species;
  std::map<std::string, std::vector<std::string>> characteristics;

  [[nodiscard]] const std::vector<std::string>* find(std::string_view key) const;
  friend bool operator==(const SpeciesKG&, const SpeciesKG&) = default;
};

/// Normalised common name -> scientific names (sorted, unique, non-empty).
struct CommonNameDictionary {
  std::map<std::string, std::vector<std::string>> entries;

  /// Normalises before lookup; empty for unknown names.
  [[nodiscard]] std::vector<std::string> lookup(std::string_view name) const;
  friend bool operator==(const CommonNameDictionary&, const CommonNameDictionary&) = default;
};

struct Paragraph {
  std::string species;
  std::size_t index = 0;
  std::string text;
  friend bool operator==(const Paragraph&, const Paragraph&) = default;
};

/// Everything name resolution reads at query time.
struct KnowledgeBase {
  std::vector<std::string> concepts;
  std::vector<SpeciesKG> kgs;
  CommonNameDictionary dictionary;
  std::vector<Paragraph> paragraphs;
  std::vector<llm::EmbeddingVector> paragraph_embeddings;

  [[nodiscard]] bool is_known_concept(std::string_view name) const;
};

inline constexpr int kArtifactVersion = 1;

/// Writes species_kg.json, common_names.json, paragraphs.json,
/// paragraph_embeddings.bin and concepts.json into dir.
void persist(const std::filesystem::path& dir, const KnowledgeBase& kb);

/// Throws FormatError on missing files, malformed content or a version
/// mismatch.
KnowledgeBase load(const std::filesystem::path& dir);

std::vector<std::string> load_concepts(const std::filesystem::path& file);
std::vector<SourceDocument> load_corpus(const std::filesystem::path& docs_dir);
std::vector<std::pair<std::string, std::string>> load_curated_pairs(const std::filesystem::path& file);

nlohmann::json to_json(const SpeciesKG& kg);
SpeciesKG species_kg_from_json(const nlohmann::json& j);

}  // namespace oceanql::kg
