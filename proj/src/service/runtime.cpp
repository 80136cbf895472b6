// SPDX-License-Identifier: Apache-2.0
#include "oceanql/service/runtime.hpp"

#include "oceanql/error.hpp"
#include "oceanql/kg/builder.hpp"
#include "oceanql/llm/http_provider.hpp"
#include "oceanql/llm/mock_provider.hpp"
#include "oceanql/log.hpp"
#include "oceanql/similarity/corpus.hpp"

#include <cstdlib>
#include <fstream>

namespace fs = std::filesystem;

namespace oceanql::service {
namespace {

fs::path resolve_path(const std::string& p, const fs::path& base) {
  fs::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

const char* env(const char* name) {
  const char* v = std::getenv(name);
  return v && *v ? v : nullptr;
}

}  // namespace

RuntimeConfig RuntimeConfig::from_json(const nlohmann::json& j, const fs::path& base) {
  RuntimeConfig c;
  try {
    if (j.contains("data_dir")) c.data_dir = resolve_path(j["data_dir"].get<std::string>(), base);
    if (j.contains("provider")) c.provider = j["provider"].get<std::string>();
    if (j.contains("kg")) c.kg_dir = resolve_path(j["kg"].get<std::string>(), base);
    if (j.contains("index")) c.index_path = resolve_path(j["index"].get<std::string>(), base);
    if (j.contains("host")) c.host = j["host"].get<std::string>();
    if (j.contains("port")) c.port = j["port"].get<int>();
    if (j.contains("upload_cap_bytes")) c.upload_cap = j["upload_cap_bytes"].get<std::size_t>();
    if (j.contains("queue_depth")) c.queue_depth = j["queue_depth"].get<std::size_t>();
    if (j.contains("ceiling_ms")) c.ceiling = std::chrono::milliseconds(j["ceiling_ms"].get<long>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad runtime config: ") + e.what());
  }
  if (c.provider != "mock" && c.provider != "http") throw FormatError("provider must be mock or http");
  return c;
}

RuntimeConfig RuntimeConfig::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open " + file.string());
  try {
    return from_json(nlohmann::json::parse(in), file.parent_path());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

void RuntimeConfig::apply_env() {
  if (auto v = env("OCEANQL_DATA_DIR")) data_dir = v;
  if (auto v = env("OCEANQL_PROVIDER")) provider = v;
  if (auto v = env("OCEANQL_KG")) kg_dir = v;
  if (auto v = env("OCEANQL_INDEX")) index_path = v;
  if (auto v = env("OCEANQL_HOST")) host = v;
  if (auto v = env("OCEANQL_PORT")) port = std::stoi(v);
}

std::shared_ptr<llm::MockProvider> make_mock_provider(const fs::path& data_dir) {
  auto mock = std::make_shared<llm::MockProvider>();
  mock->load_transcripts(data_dir / "mock");
  return mock;
}

Runtime::Runtime(RuntimeConfig config, std::shared_ptr<llm::Provider> provider) : config_(std::move(config)) {
  const auto& data = config_.data_dir;
  if (!provider) {
    if (config_.provider == "http") {
      provider = std::make_shared<llm::HttpProvider>(llm::HttpProviderConfig::from_env());
    } else {
      provider = make_mock_provider(data);
    }
  }
  gateway_ = std::make_unique<llm::Gateway>(provider, llm::ProfileLibrary::load(data / "profiles.json"));

  const auto concepts = kg::load_concepts(data / "concepts.json");
  store_ = std::make_unique<data::Datastore>();
  store_->load_seed(data / "seed", concepts);

  if (!config_.kg_dir.empty()) {
    kb_ = kg::load(config_.kg_dir);
  } else {
    kg::KgBuilder builder(*gateway_, concepts);
    kb_ = builder.build(kg::load_corpus(data / "corpus" / "docs"),
                        kg::load_curated_pairs(data / "corpus" / "curated_common_names.json"));
  }
  resolver_ = std::make_unique<resolve::NameResolver>(kb_, *gateway_);
  taxonomy_ = taxonomy::Taxonomy::load(data / "taxonomy.json");
  index_ = std::make_unique<similarity::VectorIndex>(config_.index_path.empty()
                                                         ? similarity::build_index(*store_)
                                                         : similarity::VectorIndex::load(config_.index_path));
  // Startup traffic (knowledge-graph extraction) is not part of any session.
  gateway_->clear_log();
  log::info("runtime ready: provider=" + gateway_->provider().name() + " species=" + std::to_string(kb_.kgs.size()) +
            " index=" + std::to_string(index_->size()));
}

Runtime::~Runtime() = default;

pipeline::Services Runtime::services(pipeline::ImageLookup uploads) {
  return {*gateway_, *store_, *resolver_, taxonomy_, index_.get(), std::move(uploads)};
}

pipeline::EvaluateOptions Runtime::evaluate_options() const {
  pipeline::EvaluateOptions o;
  o.budget = config_.ceiling;
  return o;
}

}  // namespace oceanql::service
