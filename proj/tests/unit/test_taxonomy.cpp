// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "oceanql/error.hpp"
#include "oceanql/taxonomy/taxonomy.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace oceanql;
using taxonomy::Taxonomy;

namespace {

Taxonomy fixture_tax() { return Taxonomy::load(fixture::data_dir() / "taxonomy.json"); }

nlohmann::json raw() {
  std::ifstream in(fixture::data_dir() / "taxonomy.json");
  return nlohmann::json::parse(in);
}

}  // namespace

TEST(Taxonomy, RootHasNoAncestors) {
  auto t = fixture_tax();
  EXPECT_EQ(t.root(), "Animalia");
  EXPECT_TRUE(t.ancestors("Animalia").empty());
}

TEST(Taxonomy, AureliaLineageParentFirst) {
  auto t = fixture_tax();
  EXPECT_EQ(t.ancestors("Aurelia aurita"), (std::vector<std::string>{"Aurelia", "Ulmaridae", "Semaeostomeae",
                                                                     "Scyphozoa", "Cnidaria", "Animalia"}));
  EXPECT_EQ(t.depth("Aurelia aurita"), 6u);
}

TEST(Taxonomy, ChildrenAndLinkConsistency) {
  auto t = fixture_tax();
  EXPECT_EQ(t.children("Aurelia"), (std::vector<std::string>{"Aurelia aurita"}));
  EXPECT_TRUE(t.children("Mola mola").empty());
  EXPECT_EQ(t.children("Sebastes"), (std::vector<std::string>{"Sebastes miniatus", "Sebastes mystinus"}));

  // Oracle straight from the file: each non-root node appears in its parent's children.
  std::size_t checked = 0;
  const auto file = raw();
  for (const auto& n : file.at("nodes")) {
    if (n.at("parent").is_null()) continue;
    const auto& kids = t.children(n.at("parent").get<std::string>());
    EXPECT_NE(std::find(kids.begin(), kids.end(), n.at("name").get<std::string>()), kids.end());
    ++checked;
  }
  EXPECT_EQ(checked + 1, t.size());
}

TEST(Taxonomy, EveryFixtureSpeciesIsALeafWithFullLineage) {
  auto t = fixture_tax();
  auto concepts = kg::load_concepts(fixture::data_dir() / "concepts.json");
  for (const auto& c : concepts) {
    ASSERT_TRUE(t.contains(c)) << c;
    EXPECT_EQ(t.node(c).rank, "species");
    EXPECT_EQ(t.ancestors(c).back(), "Animalia");
  }
}

TEST(Taxonomy, RenderMarksNodeBetweenAncestorsAndChildren) {
  auto t = fixture_tax();
  auto r = t.render_tree("Solmissus");
  EXPECT_EQ(r.text,
            "- Animalia (kingdom)\n"
            "  - Cnidaria (phylum)\n"
            "    - Hydrozoa (class)\n"
            "      - Narcomedusae (order)\n"
            "        - Cuninidae (family)\n"
            "          * Solmissus (genus)\n"
            "            - Solmissus incisa (species)\n");
  EXPECT_EQ(r.tree["name"], "Animalia");
  auto root = t.render_tree("Animalia");
  EXPECT_EQ(root.tree["marked"], true);
  EXPECT_GE(root.tree["children"].size(), 1u);
}

TEST(Taxonomy, ChildDisplayCap) {
  nlohmann::json j{{"version", 1}, {"nodes", nlohmann::json::array()}};
  j["nodes"].push_back({{"name", "R"}, {"rank", "kingdom"}, {"parent", nullptr}});
  for (int i = 0; i < 60; ++i) j["nodes"].push_back({{"name", "c" + std::to_string(100 + i)}, {"rank", "x"}, {"parent", "R"}});
  auto r = Taxonomy::from_json(j).render_tree("R");
  EXPECT_EQ(r.tree["children"].size(), taxonomy::kChildDisplayCap);
  EXPECT_EQ(r.tree["truncated"], 10);
  EXPECT_NE(r.text.find("... 10 more"), std::string::npos);
}

TEST(Taxonomy, Errors) {
  auto t = fixture_tax();
  EXPECT_THROW(t.render_tree("Glorbus"), taxonomy::UnknownTaxon);
  EXPECT_THROW(t.ancestors("Glorbus"), taxonomy::UnknownTaxon);

  nlohmann::json two_roots{{"version", 1},
                           {"nodes", {{{"name", "A"}, {"parent", nullptr}}, {{"name", "B"}, {"parent", nullptr}}}}};
  EXPECT_THROW(Taxonomy::from_json(two_roots), FormatError);
  nlohmann::json cycle{{"version", 1},
                       {"nodes",
                        {{{"name", "R"}, {"parent", nullptr}},
                         {{"name", "A"}, {"parent", "B"}},
                         {{"name", "B"}, {"parent", "A"}}}}};
  EXPECT_THROW(Taxonomy::from_json(cycle), FormatError);
}
