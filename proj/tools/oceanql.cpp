// SPDX-License-Identifier: Apache-2.0
#include "oceanql/data/datastore.hpp"
#include "oceanql/data/seed.hpp"
#include "oceanql/kg/builder.hpp"
#include "oceanql/llm/http_provider.hpp"
#include "oceanql/kg/species_kg.hpp"
#include "oceanql/pipeline/replay.hpp"
#include "oceanql/service/api.hpp"
#include "oceanql/service/runtime.hpp"
#include "oceanql/similarity/corpus.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace oceanql;

namespace {

// One line, "error: <message>", on stderr; nonzero exit.
int fail(const std::string& msg) {
  std::string line = msg;
  for (auto& c : line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: " << line << "\n";
  return 1;
}

int cmd_seed_db(const fs::path& data, bool generate) {
  const auto seed_dir = data / "seed";
  if (generate) data::write_seed(seed_dir);
  data::Datastore store;
  store.load_seed(seed_dir, kg::load_concepts(data / "concepts.json"));
  const auto c = store.counts();
  std::cout << "images=" << c.images << " bounding_boxes=" << c.bounding_boxes << " regions=" << c.regions << "\n";
  return 0;
}

struct Common {
  fs::path data = OCEANQL_DATA_DIR;
  fs::path config;
  fs::path kg;
  fs::path index;
  std::string provider;
  std::string host;
  int port = -1;
};

// Config file, then environment, then flags.
service::RuntimeConfig runtime_config(const Common& c) {
  auto cfg = c.config.empty() ? service::RuntimeConfig{} : service::RuntimeConfig::load(c.config);
  if (cfg.data_dir.empty()) cfg.data_dir = c.data;
  cfg.apply_env();
  if (!c.kg.empty()) cfg.kg_dir = c.kg;
  if (!c.index.empty()) cfg.index_path = c.index;
  if (!c.provider.empty()) cfg.provider = c.provider;
  if (!c.host.empty()) cfg.host = c.host;
  if (c.port >= 0) cfg.port = c.port;
  return cfg;
}

int cmd_serve(const Common& c) {
  service::Runtime runtime(runtime_config(c));
  service::ApiServer api(runtime);
  const int port = api.bind(runtime.config().host, runtime.config().port);
  std::cout << "listening on http://" << runtime.config().host << ":" << port << std::endl;
  api.listen();
  return 0;
}

int cmd_build_kg(const Common& c, const fs::path& out) {
  auto cfg = runtime_config(c);
  auto provider = cfg.provider == "http" ? nullptr : service::make_mock_provider(cfg.data_dir);
  std::shared_ptr<llm::Provider> p = provider;
  if (!p) p = std::make_shared<llm::HttpProvider>(llm::HttpProviderConfig::from_env());
  llm::Gateway gw(p, llm::ProfileLibrary::load(cfg.data_dir / "profiles.json"));
  kg::KgBuilder builder(gw, kg::load_concepts(cfg.data_dir / "concepts.json"));
  const auto kb = builder.build(kg::load_corpus(cfg.data_dir / "corpus" / "docs"),
                                kg::load_curated_pairs(cfg.data_dir / "corpus" / "curated_common_names.json"));
  kg::persist(out, kb);
  std::cout << "species=" << kb.kgs.size() << " written to " << out.string() << "\n";
  return 0;
}

int cmd_build_index(const Common& c, const fs::path& out) {
  const auto cfg = runtime_config(c);
  data::Datastore store;
  store.load_seed(cfg.data_dir / "seed", kg::load_concepts(cfg.data_dir / "concepts.json"));
  const auto index = similarity::build_index(store);
  index.save(out);
  std::cout << "vectors=" << index.size() << " dim=" << index.dim() << " written to " << out.string() << "\n";
  return 0;
}

int cmd_resolve(const Common& c, const std::string& description) {
  service::Runtime runtime(runtime_config(c));
  const auto r = runtime.resolver().resolve(description);
  nlohmann::json out{{"names", r.names}, {"method", std::string(resolve::to_string(r.method))}, {"stages", r.stages}};
  if (!r.values.empty()) out["values"] = r.values;
  std::cout << out.dump(2) << "\n";
  return 0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_replay(const Common& c, const std::string& mode, fs::path fixtures, const fs::path& out,
               const fs::path& golden, bool latency) {
  auto cfg = runtime_config(c);
  if (fixtures.empty()) fixtures = cfg.data_dir / "replay" / "conversations.json";
  const auto convs = pipeline::load_conversations(fixtures);
  service::Runtime runtime(cfg);

  auto run = [&](pipeline::ContextMode m) {
    auto opts = runtime.evaluate_options();
    opts.mode = m;
    return pipeline::replay(convs, runtime.services(), opts);
  };
  nlohmann::json report;
  bool ok = true;
  if (mode == "both") {
    const auto modified = run(pipeline::ContextMode::ModifiedPrompt);
    const auto full = run(pipeline::ContextMode::FullHistory);
    report = {{"modified_prompt", modified.to_json(latency)},
              {"full_history", full.to_json(latency)},
              {"comparison", pipeline::compare_modes(modified, full)}};
    ok = modified.passed() == modified.conversations.size() &&
         report["comparison"]["fewer_tokens_every_conversation"].get<bool>();
  } else {
    const auto r = run(pipeline::context_mode_from_string(mode));
    report = r.to_json(latency);
    ok = r.passed() == r.conversations.size() || r.mode == pipeline::ContextMode::FullHistory;
  }
  const auto text = report.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream(out, std::ios::binary) << text;
  }
  if (!golden.empty() && slurp(golden) != text) return fail("report differs from " + golden.string());
  if (!ok) return fail("replay expectations failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oceanql: natural-language exploration of marine observation data"};
  app.require_subcommand(1);
  Common common;
  fs::path& data = common.data;
  app.add_option("--data", data, "Data directory")->check(CLI::ExistingDirectory);
  app.add_option("--config", common.config, "Runtime config JSON")->check(CLI::ExistingFile);
  app.add_option("--kg", common.kg, "Persisted knowledge-graph directory");
  app.add_option("--index", common.index, "Saved vector index");
  app.add_option("--provider", common.provider, "Model provider")->check(CLI::IsMember({"mock", "http"}));

  auto* seed = app.add_subcommand("seed-db", "Load (or regenerate with --generate) the seed CSVs and report counts");
  bool generate = false;
  seed->add_flag("--generate", generate, "Regenerate the synthetic seed CSVs first");

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--host", common.host, "Bind address");
  serve->add_option("--port", common.port, "Port; 0 picks a free one")->check(CLI::Range(0, 65535));

  fs::path out;
  auto* build_kg = app.add_subcommand("build-kg", "Build the species knowledge graphs and persist them");
  build_kg->add_option("out", out, "Output directory")->required();
  auto* build_index = app.add_subcommand("build-index", "Index every bounding-box crop of the seed database");
  build_index->add_option("out", out, "Output file")->required();

  std::string description;
  auto* resolve_cmd = app.add_subcommand("resolve", "Resolve a creature description to scientific names");
  resolve_cmd->add_option("description", description, "Common name or description")->required();

  std::string mode = "both";
  fs::path fixtures, golden;
  bool latency = false;
  auto* replay = app.add_subcommand("replay-eval", "Replay multi-turn fixtures and report tokens and failures");
  replay->add_option("--mode", mode, "Context mode")->check(CLI::IsMember({"modified_prompt", "full_history", "both"}));
  replay->add_option("--fixtures", fixtures, "Conversation fixture file")->check(CLI::ExistingFile);
  replay->add_option("--out", out, "Write the report here instead of stdout");
  replay->add_option("--golden", golden, "Fail unless the report matches this file")->check(CLI::ExistingFile);
  replay->add_flag("--latency", latency, "Include per-turn latency (not reproducible)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(e.what());
  }
  try {
    if (*seed) return cmd_seed_db(data, generate);
    if (*serve) return cmd_serve(common);
    if (*build_kg) return cmd_build_kg(common, out);
    if (*build_index) return cmd_build_index(common, out);
    if (*resolve_cmd) return cmd_resolve(common, description);
    if (*replay) return cmd_replay(common, mode, fixtures, out, golden, latency);
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  return 0;
}
