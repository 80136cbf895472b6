// SPDX-License-Identifier: Apache-2.0
#include "oceanql/resolve/name_resolver.hpp"

#include "oceanql/error.hpp"
#include "oceanql/log.hpp"
#include "oceanql/text.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace oceanql::resolve {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Dictionary: return "dictionary";
    case Method::KgSubject: return "kg_subject";
    case Method::KgObject: return "kg_object";
    case Method::StringFallback: return "string_fallback";
    case Method::EmbeddingFallback: return "embedding_fallback";
    case Method::None: return "none";
  }
  return "none";
}

SubjectAlignment align_subject(const PromptTriple& triple, std::string_view key, std::span<const kg::SpeciesKG> kgs) {
  SubjectAlignment out;
  const auto subject = text::normalize(triple.subject);
  if (subject.empty()) return out;
  std::vector<const kg::SpeciesKG*> matched;
  for (const auto& kg : kgs) {
    bool hit = text::normalize(kg.species) == subject;
    if (!hit) {
      if (const auto* aliases = kg.find("aliases")) {
        hit = std::any_of(aliases->begin(), aliases->end(),
                          [&](const std::string& a) { return text::normalize(a) == subject; });
      }
    }
    if (hit) matched.push_back(&kg);
  }
  std::sort(matched.begin(), matched.end(),
            [](const kg::SpeciesKG* a, const kg::SpeciesKG* b) { return a->species < b->species; });
  for (const auto* kg : matched) {
    out.concepts.push_back(kg->species);
    if (const auto* list = kg->find(key)) {
      out.key_present = true;
      for (const auto& v : *list) {
        if (std::find(out.values.begin(), out.values.end(), v) == out.values.end()) out.values.push_back(v);
      }
    }
  }
  return out;
}

std::vector<std::string> align_object(const PromptTriple& triple, std::string_view key,
                                      std::span<const kg::SpeciesKG> kgs) {
  std::vector<std::string> out;
  const auto object = text::normalize(triple.object);
  if (object.empty()) return out;
  for (const auto& kg : kgs) {
    const auto* list = kg.find(key);
    if (!list) continue;
    if (std::any_of(list->begin(), list->end(), [&](const std::string& v) { return text::normalize(v) == object; })) {
      out.push_back(kg.species);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

NameResolver::NameResolver(const kg::KnowledgeBase& kb, llm::Gateway& gateway, ResolverConfig config)
    : kb_(kb), gateway_(gateway), config_(config) {
  std::vector<std::string> keys(kg::kCharacteristicKeys.begin(), kg::kCharacteristicKeys.end());
  key_embeddings_ = gateway_.embed(keys, "resolver");
}

std::vector<std::string> NameResolver::cap_known(std::vector<std::string> names) const {
  std::vector<std::string> out;
  for (auto& n : names) {
    if (out.size() >= config_.result_cap) break;
    if (!kb_.is_known_concept(n)) continue;
    if (std::find(out.begin(), out.end(), n) != out.end()) continue;
    out.push_back(std::move(n));
  }
  return out;
}

std::vector<std::string> NameResolver::lookup_common_name(std::string_view name) const {
  return kb_.dictionary.lookup(name);
}

PromptTriple NameResolver::extract_triple(std::string_view description, const std::string& session) const {
  if (text::trim(description).empty()) throw ExtractionError("empty description");
  llm::ChatRequest req;
  req.profile = llm::Profile::KgExtraction;
  req.messages.push_back(llm::Message::user("Description: " + std::string(description)));
  llm::ChatResponse resp;
  try {
    resp = gateway_.complete(req, session);
  } catch (const TransportError& e) {
    throw ExtractionError(std::string("extraction call failed: ") + e.what());
  }
  auto j = nlohmann::json::parse(resp.text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ExtractionError("extraction reply is not a JSON object");
  auto field = [&](const char* name) {
    const auto it = j.find(name);
    return (it != j.end() && it->is_string()) ? text::trim(it->get<std::string>()) : std::string();
  };
  PromptTriple t{field("subject"), field("relation"), field("object")};
  if (t.relation.empty()) throw ExtractionError("extracted triple has an empty relation");
  if (t.subject.empty() && t.object.empty()) throw ExtractionError("extracted triple has neither subject nor object");
  return t;
}

std::optional<std::string> NameResolver::match_relation(std::string_view relation, const std::string& session) const {
  const auto v = gateway_.embed({std::string(relation)}, session).front();
  double best = -2;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < key_embeddings_.size(); ++i) {
    const double c = llm::cosine(v, key_embeddings_[i]);
    if (c > best) {
      best = c;
      best_i = i;
    }
  }
  if (best < config_.relation_threshold) return std::nullopt;
  return std::string(kg::kCharacteristicKeys[best_i]);
}

std::vector<std::string> NameResolver::fallback_string_match(std::string_view description) const {
  const auto wanted = text::content_tokens(description);
  if (wanted.empty()) return {};
  std::set<std::string> hits;
  for (const auto& p : kb_.paragraphs) {
    const auto tokens = text::split_ws(text::normalize(p.text));
    const std::set<std::string> have(tokens.begin(), tokens.end());
    if (std::all_of(wanted.begin(), wanted.end(), [&](const std::string& w) { return have.contains(w); })) {
      hits.insert(p.species);
    }
  }
  return cap_known({hits.begin(), hits.end()});
}

std::vector<std::string> NameResolver::fallback_embedding_match(std::string_view description,
                                                                const std::string& session) const {
  if (kb_.paragraph_embeddings.empty()) return {};
  const auto q = gateway_.embed({std::string(description)}, session).front();
  std::vector<double> scores(kb_.paragraph_embeddings.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = llm::cosine(q, kb_.paragraph_embeddings[i]);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::string> names;
  for (std::size_t r = 0; r < order.size() && r < config_.embedding_top_k; ++r) {
    const auto i = order[r];
    if (scores[i] < config_.embedding_min_score) break;
    names.push_back(kb_.paragraphs[i].species);
  }
  return cap_known(std::move(names));
}

ResolutionResult NameResolver::resolve(std::string_view description, const std::string& session) const {
  if (text::trim(description).empty()) throw std::invalid_argument("resolve: empty description");
  ResolutionResult result;

  result.stages.push_back("dictionary");
  auto names = lookup_common_name(description);
  if (names.empty()) names = lookup_common_name(text::join(text::content_tokens(description), " "));
  if (!names.empty()) {
    result.names = cap_known(std::move(names));
    result.method = Method::Dictionary;
    return result;
  }

  result.stages.push_back("kg_alignment");
  try {
    const auto triple = extract_triple(description, session);
    if (auto key = match_relation(triple.relation, session)) {
      result.matched_key = key;
      if (!triple.subject.empty()) {
        auto sub = align_subject(triple, *key, kb_.kgs);
        if (!sub.concepts.empty()) {
          // The subject is identified; the KG is authoritative from here on.
          if (sub.key_present) {
            result.names = cap_known(std::move(sub.concepts));
            result.values = std::move(sub.values);
            result.method = Method::KgSubject;
          }
          return result;
        }
      }
      if (!triple.object.empty()) {
        auto objs = align_object(triple, *key, kb_.kgs);
        if (!objs.empty()) {
          result.names = cap_known(std::move(objs));
          result.method = Method::KgObject;
          return result;
        }
      }
    }
  } catch (const ExtractionError& e) {
    log::info(std::string("resolve: extraction failed, degrading to string fallback: ") + e.what());
  }

  result.stages.push_back("string_fallback");
  if (auto hits = fallback_string_match(description); !hits.empty()) {
    result.names = std::move(hits);
    result.method = Method::StringFallback;
    return result;
  }

  result.stages.push_back("embedding_fallback");
  if (auto hits = fallback_embedding_match(description, session); !hits.empty()) {
    result.names = std::move(hits);
    result.method = Method::EmbeddingFallback;
  }
  return result;
}

}  // namespace oceanql::resolve
