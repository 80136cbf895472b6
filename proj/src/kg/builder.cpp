// SPDX-License-Identifier: Apache-2.0
#include "oceanql/kg/builder.hpp"

#include "oceanql/error.hpp"
#include "oceanql/log.hpp"
#include "oceanql/text.hpp"

#include <algorithm>
#include <set>

namespace oceanql::kg {

namespace {

std::string document_prompt(const SourceDocument& doc) {
  std::string prompt = "Species: " + doc.species + "\nText:\n";
  for (const auto& p : doc.paragraphs) {
    if (!text::trim(p).empty()) prompt += p + "\n";
  }
  return prompt;
}

// Keeps whitelisted keys whose value is a list of strings. Returns nullopt if
// the reply is not a JSON object at all.
std::optional<SpeciesKG> parse_extraction(const std::string& species, const std::string& reply, bool* had_invalid) {
  auto j = nlohmann::json::parse(reply, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  SpeciesKG kg;
  kg.species = species;
  for (const auto& [key, value] : j.items()) {
    const std::string k = text::normalize(key);
    if (!is_characteristic_key(k) || !value.is_array()) {
      *had_invalid = true;
      continue;
    }
    std::vector<std::string> phrases;
    for (const auto& v : value) {
      if (!v.is_string()) {
        *had_invalid = true;
        continue;
      }
      auto phrase = text::normalize(v.get<std::string>());
      if (!phrase.empty() && std::find(phrases.begin(), phrases.end(), phrase) == phrases.end()) {
        phrases.push_back(std::move(phrase));
      }
    }
    kg.characteristics[k] = std::move(phrases);
  }
  return kg;
}

}  // namespace

KgBuilder::KgBuilder(llm::Gateway& gateway, std::vector<std::string> known_concepts)
    : gateway_(gateway), known_(std::move(known_concepts)) {}

SpeciesKG KgBuilder::build_species_kg(const SourceDocument& doc) {
  if (std::find(known_.begin(), known_.end(), doc.species) == known_.end()) {
    throw std::invalid_argument("document species is not a known database species: " + doc.species);
  }
  const bool empty = std::all_of(doc.paragraphs.begin(), doc.paragraphs.end(),
                                 [](const std::string& p) { return text::trim(p).empty(); });
  if (empty) {
    SpeciesKG kg;
    kg.species = doc.species;
    for (auto k : kCharacteristicKeys) kg.characteristics[std::string(k)] = {};
    return kg;
  }

  llm::ChatRequest req;
  req.profile = llm::Profile::KgExtraction;
  req.messages.push_back(llm::Message::user(document_prompt(doc)));
  ++calls_;
  auto reply = gateway_.complete(req, "kg-builder");

  bool had_invalid = false;
  auto kg = parse_extraction(doc.species, reply.text, &had_invalid);
  if (kg && !had_invalid) return *kg;

  // One re-ask with the bad answer and the rules restated.
  req.messages.push_back(llm::Message::assistant(reply.text));
  req.messages.push_back(llm::Message::user(
      "That answer was not valid. Reply with only a JSON object whose keys are among aliases, body parts, "
      "colors, predators, diet, environment, descriptors and whose values are lists of strings.\nSpecies: " +
      doc.species));
  ++calls_;
  auto retry = gateway_.complete(req, "kg-builder");
  bool retry_invalid = false;
  auto second = parse_extraction(doc.species, retry.text, &retry_invalid);
  if (second) {
    if (retry_invalid) log::warn("kg: dropped invalid keys for " + doc.species);
    return *second;
  }
  if (kg) {
    log::warn("kg: keeping partial extraction for " + doc.species);
    return *kg;
  }
  log::warn("kg: no usable extraction for " + doc.species);
  SpeciesKG partial;
  partial.species = doc.species;
  return partial;
}

KnowledgeBase KgBuilder::build(const std::vector<SourceDocument>& docs,
                               const std::vector<std::pair<std::string, std::string>>& curated,
                               BuildReport* report) {
  calls_ = 0;
  KnowledgeBase kb;
  kb.concepts = known_;
  std::sort(kb.concepts.begin(), kb.concepts.end());

  std::vector<const SourceDocument*> ordered;
  for (const auto& d : docs) ordered.push_back(&d);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const SourceDocument* a, const SourceDocument* b) { return a->species < b->species; });

  BuildReport local;
  for (const auto* doc : ordered) {
    try {
      kb.kgs.push_back(build_species_kg(*doc));
    } catch (const TransportError& e) {
      log::warn("kg: skipping " + doc->species + ": " + e.what());
      local.skipped.push_back(doc->species);
      continue;
    } catch (const std::invalid_argument& e) {
      log::warn(std::string("kg: skipping document: ") + e.what());
      local.skipped.push_back(doc->species);
      continue;
    }
    for (std::size_t i = 0; i < doc->paragraphs.size(); ++i) {
      if (text::trim(doc->paragraphs[i]).empty()) continue;
      kb.paragraphs.push_back({doc->species, i, doc->paragraphs[i]});
    }
  }

  kb.dictionary = build_common_name_dictionary(kb.kgs, curated, kb.concepts);

  if (!kb.paragraphs.empty()) {
    std::vector<std::string> texts;
    texts.reserve(kb.paragraphs.size());
    for (const auto& p : kb.paragraphs) texts.push_back(p.text);
    kb.paragraph_embeddings = gateway_.embed(texts, "kg-builder");
  }
  local.gateway_calls = calls_;
  if (report) *report = std::move(local);
  return kb;
}

CommonNameDictionary build_common_name_dictionary(const std::vector<SpeciesKG>& kgs,
                                                  const std::vector<std::pair<std::string, std::string>>& curated,
                                                  const std::vector<std::string>& known_concepts) {
  std::map<std::string, std::set<std::string>> merged;
  for (const auto& c : known_concepts) merged[text::normalize(c)].insert(c);
  for (const auto& kg : kgs) {
    merged[text::normalize(kg.species)].insert(kg.species);
    if (const auto* aliases = kg.find("aliases")) {
      for (const auto& a : *aliases) {
        const auto key = text::normalize(a);
        if (!key.empty()) merged[key].insert(kg.species);
      }
    }
  }
  for (const auto& [name, species] : curated) {
    if (!known_concepts.empty() &&
        std::find(known_concepts.begin(), known_concepts.end(), species) == known_concepts.end()) {
      log::warn("kg: curated pair names unknown species " + species);
      continue;
    }
    const auto key = text::normalize(name);
    if (!key.empty()) merged[key].insert(species);
  }
  CommonNameDictionary dict;
  for (auto& [k, v] : merged) dict.entries[k] = std::vector<std::string>(v.begin(), v.end());
  return dict;
}

}  // namespace oceanql::kg
