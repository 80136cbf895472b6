// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "oceanql/error.hpp"
#include "oceanql/text.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

using namespace oceanql;
using oceanql::fixture::MockStack;

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const kg::SpeciesKG& find_kg(const kg::KnowledgeBase& kb, const std::string& species) {
  auto it = std::find_if(kb.kgs.begin(), kb.kgs.end(), [&](const auto& k) { return k.species == species; });
  if (it == kb.kgs.end()) throw std::runtime_error("missing kg " + species);
  return *it;
}

}  // namespace

TEST(KgBuilder, AureliaFixtureMatchesFigure) {
  MockStack s;
  auto kb = fixture::build_fixture_kb(*s.gateway);
  const auto& aurelia = find_kg(kb, "Aurelia aurita");
  EXPECT_TRUE(contains(*aurelia.find("colors"), "translucent"));
  EXPECT_TRUE(contains(*aurelia.find("aliases"), "moon jellyfish"));
  EXPECT_TRUE(contains(*aurelia.find("aliases"), "moon jelly"));
}

TEST(KgBuilder, BuildsAllTwentyFiveSpecies) {
  MockStack s;
  kg::BuildReport report;
  kg::KgBuilder builder(*s.gateway, kg::load_concepts(fixture::data_dir() / "concepts.json"));
  auto kb = builder.build(kg::load_corpus(fixture::data_dir() / "corpus" / "docs"), {}, &report);
  EXPECT_EQ(kb.kgs.size(), 25u);
  EXPECT_TRUE(report.skipped.empty());
  EXPECT_EQ(report.gateway_calls, 25u);
  EXPECT_EQ(kb.paragraph_embeddings.size(), kb.paragraphs.size());
  EXPECT_GT(kb.paragraphs.size(), 50u);
}

TEST(KgBuilder, EmptyDocumentYieldsAllEmptyListsWithoutCall) {
  MockStack s(false);
  kg::KgBuilder builder(*s.gateway, {"Aurelia aurita"});
  auto kg = builder.build_species_kg({"Aurelia aurita", {"", "  "}, "fixture"});
  EXPECT_EQ(kg.characteristics.size(), kg::kCharacteristicKeys.size());
  for (const auto& [k, v] : kg.characteristics) EXPECT_TRUE(v.empty()) << k;
  EXPECT_EQ(s.gateway->log_size(), 0u);
}

TEST(KgBuilder, StoresReplyVerbatimUnderKey) {
  MockStack s(false);
  s.mock->enqueue(llm::Profile::KgExtraction, llm::ScriptedReply::json({{"colors", {"orange", "red"}}}));
  kg::KgBuilder builder(*s.gateway, {"Chionoecetes tanneri"});
  auto kg = builder.build_species_kg({"Chionoecetes tanneri", {"A crab."}, "fixture"});
  ASSERT_NE(kg.find("colors"), nullptr);
  EXPECT_EQ(*kg.find("colors"), (std::vector<std::string>{"orange", "red"}));
  EXPECT_EQ(kg.characteristics.size(), 1u);
}

TEST(KgBuilder, MalformedReplyIsReaskedOnceThenPartial) {
  MockStack s(false);
  s.mock->enqueue(llm::Profile::KgExtraction, llm::ScriptedReply::text("not json"));
  s.mock->enqueue(llm::Profile::KgExtraction,
                  llm::ScriptedReply::json({{"colors", {"Red "}}, {"weight", {"heavy"}}, {"diet", "fish"}}));
  kg::KgBuilder builder(*s.gateway, {"Sebastes miniatus"});
  auto kg = builder.build_species_kg({"Sebastes miniatus", {"A fish."}, "fixture"});
  EXPECT_EQ(s.gateway->log_size(), 2u);
  // Only the whitelisted key with a proper list survives, normalised.
  EXPECT_EQ(kg.characteristics.size(), 1u);
  EXPECT_EQ(*kg.find("colors"), (std::vector<std::string>{"red"}));
}

TEST(KgBuilder, GatewayFailureSkipsDocument) {
  MockStack s(false);
  s.mock->set_fallback(llm::Profile::KgExtraction, llm::ScriptedReply::failure("offline"));
  kg::KgBuilder builder(*s.gateway, {"Mola mola"});
  kg::BuildReport report;
  auto kb = builder.build({{"Mola mola", {"A fish."}, "fixture"}}, {}, &report);
  EXPECT_TRUE(kb.kgs.empty());
  EXPECT_EQ(report.skipped, (std::vector<std::string>{"Mola mola"}));
}

TEST(KgBuilder, RejectsUnknownConcept) {
  MockStack s(false);
  kg::KgBuilder builder(*s.gateway, {"Mola mola"});
  EXPECT_THROW(builder.build_species_kg({"Nessie", {"x"}, "f"}), std::invalid_argument);
}

TEST(KgBuilder, KeyClosureAndNormalisedPhrases) {
  MockStack s;
  auto kb = fixture::build_fixture_kb(*s.gateway);
  for (const auto& kg : kb.kgs) {
    for (const auto& [k, phrases] : kg.characteristics) {
      EXPECT_TRUE(kg::is_characteristic_key(k)) << k;
      for (const auto& p : phrases) EXPECT_EQ(text::normalize(p), p) << kg.species;
    }
  }
}

TEST(KgBuilder, OrderIndependentAndByteIdenticalRebuild) {
  auto docs = kg::load_corpus(fixture::data_dir() / "corpus" / "docs");
  auto curated = kg::load_curated_pairs(fixture::data_dir() / "corpus" / "curated_common_names.json");
  auto concepts = kg::load_concepts(fixture::data_dir() / "concepts.json");

  MockStack a;
  kg::KgBuilder ba(*a.gateway, concepts);
  auto dir_a = fixture::temp_dir("kg-a");
  kg::persist(dir_a, ba.build(docs, curated));

  std::mt19937 rng(7);
  std::shuffle(docs.begin(), docs.end(), rng);
  MockStack b;
  kg::KgBuilder bb(*b.gateway, concepts);
  auto dir_b = fixture::temp_dir("kg-b");
  kg::persist(dir_b, bb.build(docs, curated));

  for (const char* f : {"species_kg.json", "common_names.json", "paragraphs.json", "paragraph_embeddings.bin",
                        "concepts.json"}) {
    EXPECT_EQ(slurp(dir_a / f), slurp(dir_b / f)) << f;
  }
}

TEST(KgPersist, RoundTripAndVersionCheck) {
  MockStack s;
  auto kb = fixture::build_fixture_kb(*s.gateway);
  auto dir = fixture::temp_dir("kg-rt");
  kg::persist(dir, kb);
  auto back = kg::load(dir);
  EXPECT_EQ(back.kgs, kb.kgs);
  EXPECT_EQ(back.dictionary, kb.dictionary);
  EXPECT_EQ(back.paragraphs, kb.paragraphs);
  EXPECT_EQ(back.concepts, kb.concepts);
  ASSERT_EQ(back.paragraph_embeddings.size(), kb.paragraph_embeddings.size());
  EXPECT_EQ(back.paragraph_embeddings[3].values, kb.paragraph_embeddings[3].values);

  std::ofstream(dir / "species_kg.json") << R"({"version": 99, "kgs": []})";
  EXPECT_THROW(kg::load(dir), FormatError);
}

TEST(CommonNames, AliasesCollisionsAndIdentity) {
  MockStack s;
  auto kb = fixture::build_fixture_kb(*s.gateway);
  EXPECT_EQ(kb.dictionary.lookup("moon jellyfish"), (std::vector<std::string>{"Aurelia aurita"}));
  EXPECT_EQ(kb.dictionary.lookup("lanternfish"),
            (std::vector<std::string>{"Stenobrachius leucopsarus", "Tarletonbeania crenularis"}));
  EXPECT_EQ(kb.dictionary.lookup("Aurelia aurita"), (std::vector<std::string>{"Aurelia aurita"}));
  EXPECT_EQ(kb.dictionary.lookup("pacific whiting"), (std::vector<std::string>{"Merluccius productus"}));
  for (const auto& [k, v] : kb.dictionary.entries) {
    EXPECT_FALSE(v.empty());
    for (const auto& c : v) EXPECT_TRUE(kb.is_known_concept(c)) << c;
  }
}

TEST(CommonNames, EmptyInputEmptyDictionary) {
  EXPECT_TRUE(kg::build_common_name_dictionary({}, {}).entries.empty());
}

TEST(CommonNames, SharedAliasUnion) {
  kg::SpeciesKG a{"A a", {{"aliases", {"lanternfish"}}}};
  kg::SpeciesKG b{"B b", {{"aliases", {"lanternfish"}}}};
  auto d = kg::build_common_name_dictionary({a, b}, {});
  EXPECT_EQ(d.lookup("Lanternfish"), (std::vector<std::string>{"A a", "B b"}));
}
