// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/data/datastore.hpp"
#include "oceanql/kg/builder.hpp"
#include "oceanql/llm/gateway.hpp"
#include "oceanql/llm/mock_provider.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <unistd.h>

namespace oceanql::fixture {

inline std::filesystem::path data_dir() { return OCEANQL_DATA_DIR; }

struct MockStack {
  std::shared_ptr<llm::MockProvider> mock = std::make_shared<llm::MockProvider>();
  std::unique_ptr<llm::Gateway> gateway;

  explicit MockStack(bool with_transcripts = true) {
    if (with_transcripts) mock->load_transcripts(data_dir() / "mock");
    gateway = std::make_unique<llm::Gateway>(
        mock, llm::ProfileLibrary::load(data_dir() / "profiles.json"),
        llm::GatewayOptions{1, std::chrono::milliseconds(0)});
  }
};

/// Knowledge base built from the bundled corpus through the mock provider.
inline kg::KnowledgeBase build_fixture_kb(llm::Gateway& gw) {
  kg::KgBuilder builder(gw, kg::load_concepts(data_dir() / "concepts.json"));
  return builder.build(kg::load_corpus(data_dir() / "corpus" / "docs"),
                       kg::load_curated_pairs(data_dir() / "corpus" / "curated_common_names.json"));
}

/// Seed database shared by every test in the binary.
inline const data::Datastore& seeded_store() {
  static const data::Datastore* store = [] {
    auto* d = new data::Datastore();
    d->load_seed(data_dir() / "seed", kg::load_concepts(data_dir() / "concepts.json"));
    return d;
  }();
  return *store;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("oceanql-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oceanql::fixture
