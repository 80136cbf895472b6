// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/llm/mock_provider.hpp"
#include "oceanql/pipeline/orchestrator.hpp"

#include <filesystem>
#include <memory>

namespace oceanql::service {

inline constexpr std::size_t kUploadCap = 8u << 20;

struct RuntimeConfig {
  std::filesystem::path data_dir;
  std::string provider = "mock";    // mock | http
  std::filesystem::path kg_dir;      // empty: build from the bundled corpus at startup
  std::filesystem::path index_path;  // empty: build from the seed database at startup
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t upload_cap = kUploadCap;
  std::size_t queue_depth = 4;
  std::chrono::milliseconds ceiling{30000};

  /// Keys: data_dir, provider, kg, index, host, port, upload_cap_bytes,
  /// queue_depth, ceiling_ms. Relative paths resolve against base.
  static RuntimeConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
  /// Throws FormatError.
  static RuntimeConfig load(const std::filesystem::path& file);
  /// OCEANQL_DATA_DIR, OCEANQL_PROVIDER, OCEANQL_KG, OCEANQL_INDEX, OCEANQL_HOST, OCEANQL_PORT.
  void apply_env();
};

/// Everything one process needs to answer prompts. Read-only after
/// construction apart from the gateway's log.
class Runtime {
 public:
  /// provider overrides config.provider when given.
  explicit Runtime(RuntimeConfig config, std::shared_ptr<llm::Provider> provider = nullptr);
  ~Runtime();

  [[nodiscard]] pipeline::Services services(pipeline::ImageLookup uploads = {});
  [[nodiscard]] pipeline::EvaluateOptions evaluate_options() const;

  [[nodiscard]] const RuntimeConfig& config() const { return config_; }
  [[nodiscard]] llm::Gateway& gateway() { return *gateway_; }
  [[nodiscard]] const data::Datastore& store() const { return *store_; }
  [[nodiscard]] const kg::KnowledgeBase& knowledge_base() const { return kb_; }
  [[nodiscard]] const resolve::NameResolver& resolver() const { return *resolver_; }
  [[nodiscard]] const taxonomy::Taxonomy& taxonomy() const { return taxonomy_; }
  [[nodiscard]] const similarity::VectorIndex& index() const { return *index_; }

 private:
  RuntimeConfig config_;
  std::unique_ptr<llm::Gateway> gateway_;
  std::unique_ptr<data::Datastore> store_;
  kg::KnowledgeBase kb_;
  std::unique_ptr<resolve::NameResolver> resolver_;
  taxonomy::Taxonomy taxonomy_;
  std::unique_ptr<similarity::VectorIndex> index_;
};

/// Mock provider with every transcript under data_dir/mock loaded.
std::shared_ptr<llm::MockProvider> make_mock_provider(const std::filesystem::path& data_dir);

}  // namespace oceanql::service
