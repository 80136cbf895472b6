// SPDX-License-Identifier: Apache-2.0
#include "oceanql/taxonomy/taxonomy.hpp"

#include "oceanql/error.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace oceanql::taxonomy {

Taxonomy Taxonomy::from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != 1) throw FormatError("taxonomy: unsupported version");
  Taxonomy t;
  for (const auto& n : j.at("nodes")) {
    TaxonNode node;
    node.name = n.at("name").get<std::string>();
    node.rank = n.value("rank", "");
    if (n.contains("parent") && !n.at("parent").is_null()) node.parent = n.at("parent").get<std::string>();
    if (!t.nodes_.emplace(node.name, node).second) throw FormatError("taxonomy: duplicate node " + node.name);
  }
  for (auto& [name, node] : t.nodes_) {
    if (!node.parent) {
      if (!t.root_.empty()) throw FormatError("taxonomy: more than one root (" + t.root_ + ", " + name + ")");
      t.root_ = name;
      continue;
    }
    auto it = t.nodes_.find(*node.parent);
    if (it == t.nodes_.end()) throw FormatError("taxonomy: " + name + " has unknown parent " + *node.parent);
    it->second.children.push_back(name);
  }
  if (t.root_.empty()) throw FormatError("taxonomy: no root");
  if (j.contains("root") && j.at("root").get<std::string>() != t.root_) throw FormatError("taxonomy: root mismatch");
  // std::map iteration already yields children in ascending order.
  for (const auto& [name, node] : t.nodes_) {
    std::set<std::string> seen{name};
    for (auto p = node.parent; p; p = t.nodes_.at(*p).parent) {
      if (!seen.insert(*p).second) throw FormatError("taxonomy: cycle through " + name);
    }
  }
  return t;
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("taxonomy: cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("taxonomy: " + std::string(e.what()));
  }
}

const TaxonNode& Taxonomy::node(const std::string& name) const {
  auto it = nodes_.find(name);
  if (it == nodes_.end()) throw UnknownTaxon(name);
  return it->second;
}

std::vector<std::string> Taxonomy::ancestors(const std::string& name) const {
  std::vector<std::string> out;
  for (auto p = node(name).parent; p; p = nodes_.at(*p).parent) out.push_back(*p);
  return out;
}

const std::vector<std::string>& Taxonomy::children(const std::string& name) const { return node(name).children; }

RenderedTree Taxonomy::render_tree(const std::string& name) const {
  const auto& target = node(name);
  auto chain = ancestors(name);
  std::reverse(chain.begin(), chain.end());

  RenderedTree out;
  auto line = [&](std::size_t depth, const TaxonNode& n, bool marked) {
    out.text += std::string(depth * 2, ' ') + (marked ? "* " : "- ") + n.name + " (" + n.rank + ")\n";
  };
  auto as_json = [](const TaxonNode& n, bool marked) {
    return nlohmann::json{{"name", n.name}, {"rank", n.rank}, {"marked", marked}, {"children", nlohmann::json::array()}};
  };

  std::size_t depth = 0;
  for (const auto& a : chain) line(depth++, nodes_.at(a), false);
  line(depth, target, true);

  auto self = as_json(target, true);
  const std::size_t shown = std::min(target.children.size(), kChildDisplayCap);
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& c = nodes_.at(target.children[i]);
    line(depth + 1, c, false);
    self["children"].push_back(as_json(c, false));
  }
  const std::size_t hidden = target.children.size() - shown;
  self["truncated"] = hidden;
  if (hidden > 0) out.text += std::string((depth + 1) * 2, ' ') + "... " + std::to_string(hidden) + " more\n";

  nlohmann::json tree = self;
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    auto parent = as_json(nodes_.at(*it), false);
    parent["children"].push_back(tree);
    tree = parent;
  }
  out.tree = tree;
  return out;
}

}  // namespace oceanql::taxonomy
