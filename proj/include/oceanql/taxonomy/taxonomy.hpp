// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace oceanql::taxonomy {

struct TaxonNode {
  std::string name;
  std::string rank;
  std::optional<std::string> parent;
  std::vector<std::string> children;  // ascending
};

class UnknownTaxon : public std::out_of_range {
 public:
  explicit UnknownTaxon(const std::string& name) : std::out_of_range("unknown taxon: " + name), name_(name) {}
  [[nodiscard]] const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

struct RenderedTree {
  std::string text;
  nlohmann::json tree;  // {name, rank, marked, children[], truncated}
};

inline constexpr std::size_t kChildDisplayCap = 50;

class Taxonomy {
 public:
  /// Checks single root, link consistency and acyclicity. Throws FormatError.
  static Taxonomy from_json(const nlohmann::json& j);
  static Taxonomy load(const std::filesystem::path& path);

  [[nodiscard]] bool contains(const std::string& name) const { return nodes_.count(name) > 0; }
  [[nodiscard]] const TaxonNode& node(const std::string& name) const;
  [[nodiscard]] const std::string& root() const { return root_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Immediate parent first, root last.
  [[nodiscard]] std::vector<std::string> ancestors(const std::string& name) const;
  [[nodiscard]] const std::vector<std::string>& children(const std::string& name) const;
  [[nodiscard]] std::size_t depth(const std::string& name) const { return ancestors(name).size(); }

  /// Ancestors above, the node marked with '*', children below (capped).
  [[nodiscard]] RenderedTree render_tree(const std::string& name) const;

 private:
  std::map<std::string, TaxonNode> nodes_;
  std::string root_;
};

}  // namespace oceanql::taxonomy
