// SPDX-License-Identifier: Apache-2.0
#include "oceanql/kg/species_kg.hpp"

#include "oceanql/error.hpp"
#include "oceanql/text.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace oceanql::kg {

namespace fs = std::filesystem;

namespace {

constexpr char kEmbeddingMagic[4] = {'O', 'Q', 'E', 'M'};

nlohmann::json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open " + file.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

nlohmann::json read_versioned(const fs::path& file) {
  auto j = read_json(file);
  if (!j.is_object() || j.value("version", -1) != kArtifactVersion) {
    throw FormatError(file.string() + ": schema version mismatch (expected " +
                      std::to_string(kArtifactVersion) + ")");
  }
  return j;
}

void write_json(const fs::path& file, const nlohmann::json& j) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const fs::path& file) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError(file.string() + ": truncated");
  return v;
}

}  // namespace

bool is_characteristic_key(std::string_view key) {
  return std::find(kCharacteristicKeys.begin(), kCharacteristicKeys.end(), key) != kCharacteristicKeys.end();
}

const std::vector<std::string>* SpeciesKG::find(std::string_view key) const {
  auto it = characteristics.find(std::string(key));
  return it == characteristics.end() ? nullptr : &it->second;
}

std::vector<std::string> CommonNameDictionary::lookup(std::string_view name) const {
  auto it = entries.find(text::normalize(name));
  return it == entries.end() ? std::vector<std::string>{} : it->second;
}

bool KnowledgeBase::is_known_concept(std::string_view name) const {
  return std::find(concepts.begin(), concepts.end(), name) != concepts.end();
}

nlohmann::json to_json(const SpeciesKG& kg) {
  nlohmann::json chars = nlohmann::json::object();
  for (const auto& [k, v] : kg.characteristics) chars[k] = v;
  return {{"concept", kg.species}, {"characteristics", chars}};
}

SpeciesKG species_kg_from_json(const nlohmann::json& j) {
  SpeciesKG kg;
  kg.species = j.at("concept").get<std::string>();
  for (const auto& [k, v] : j.at("characteristics").items()) {
    if (!is_characteristic_key(k)) throw FormatError("unknown characteristic key '" + k + "' for " + kg.species);
    kg.characteristics[k] = v.get<std::vector<std::string>>();
  }
  return kg;
}

void persist(const fs::path& dir, const KnowledgeBase& kb) {
  fs::create_directories(dir);

  nlohmann::json kgs = nlohmann::json::array();
  for (const auto& k : kb.kgs) kgs.push_back(to_json(k));
  write_json(dir / "species_kg.json", {{"version", kArtifactVersion}, {"kgs", kgs}});

  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [k, v] : kb.dictionary.entries) entries[k] = v;
  write_json(dir / "common_names.json", {{"version", kArtifactVersion}, {"entries", entries}});

  nlohmann::json paras = nlohmann::json::array();
  for (const auto& p : kb.paragraphs) paras.push_back({{"concept", p.species}, {"index", p.index}, {"text", p.text}});
  write_json(dir / "paragraphs.json", {{"version", kArtifactVersion}, {"paragraphs", paras}});

  write_json(dir / "concepts.json", {{"version", kArtifactVersion}, {"concepts", kb.concepts}});

  if (kb.paragraph_embeddings.size() != kb.paragraphs.size()) {
    throw FormatError("paragraph embedding count does not match paragraph count");
  }
  const std::uint32_t dim = kb.paragraph_embeddings.empty()
                                ? 0
                                : static_cast<std::uint32_t>(kb.paragraph_embeddings.front().values.size());
  std::ofstream out(dir / "paragraph_embeddings.bin", std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write paragraph_embeddings.bin");
  out.write(kEmbeddingMagic, 4);
  put<std::uint32_t>(out, kArtifactVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(kb.paragraph_embeddings.size()));
  put<std::uint32_t>(out, dim);
  for (const auto& e : kb.paragraph_embeddings) {
    if (e.values.size() != dim) throw FormatError("mixed paragraph embedding dimensions");
    out.write(reinterpret_cast<const char*>(e.values.data()), static_cast<std::streamsize>(dim * sizeof(float)));
  }
}

KnowledgeBase load(const fs::path& dir) {
  KnowledgeBase kb;
  kb.concepts = load_concepts(dir / "concepts.json");

  const auto kgs = read_versioned(dir / "species_kg.json");
  for (const auto& k : kgs.at("kgs")) kb.kgs.push_back(species_kg_from_json(k));

  const auto names = read_versioned(dir / "common_names.json");
  for (const auto& [k, v] : names.at("entries").items()) {
    kb.dictionary.entries[k] = v.get<std::vector<std::string>>();
  }

  const auto paras = read_versioned(dir / "paragraphs.json");
  for (const auto& p : paras.at("paragraphs")) {
    kb.paragraphs.push_back({p.at("concept").get<std::string>(), p.at("index").get<std::size_t>(),
                             p.at("text").get<std::string>()});
  }

  const fs::path bin = dir / "paragraph_embeddings.bin";
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw FormatError("cannot open " + bin.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kEmbeddingMagic, 4) != 0) {
    throw FormatError(bin.string() + ": bad magic");
  }
  if (get<std::uint32_t>(in, bin) != kArtifactVersion) throw FormatError(bin.string() + ": schema version mismatch");
  const auto count = get<std::uint32_t>(in, bin);
  const auto dim = get<std::uint32_t>(in, bin);
  if (count != kb.paragraphs.size()) throw FormatError(bin.string() + ": count does not match paragraphs.json");
  kb.paragraph_embeddings.resize(count);
  for (auto& e : kb.paragraph_embeddings) {
    e.values.resize(dim);
    if (!in.read(reinterpret_cast<char*>(e.values.data()), static_cast<std::streamsize>(dim * sizeof(float)))) {
      throw FormatError(bin.string() + ": truncated");
    }
  }
  return kb;
}

std::vector<std::string> load_concepts(const fs::path& file) {
  return read_versioned(file).at("concepts").get<std::vector<std::string>>();
}

std::vector<SourceDocument> load_corpus(const fs::path& docs_dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(docs_dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SourceDocument> docs;
  for (const auto& f : files) {
    const auto j = read_json(f);
    docs.push_back({j.at("concept").get<std::string>(), j.at("paragraphs").get<std::vector<std::string>>(),
                    j.value("source", "")});
  }
  return docs;
}

std::vector<std::pair<std::string, std::string>> load_curated_pairs(const fs::path& file) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& p : read_versioned(file).at("pairs")) {
    out.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
  }
  return out;
}

}  // namespace oceanql::kg
