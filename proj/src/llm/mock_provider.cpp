// SPDX-License-Identifier: Apache-2.0
#include "oceanql/llm/mock_provider.hpp"

#include "oceanql/error.hpp"
#include "oceanql/text.hpp"

#include <algorithm>
#include <fstream>

namespace oceanql::llm {

namespace {

// Phrases that embed onto one characteristic axis. Index order matches the
// seven characteristic keys: aliases, body parts, colors, predators, diet,
// environment, descriptors.
struct GlossaryEntry {
  std::string_view phrase;
  std::size_t axis;
};

constexpr GlossaryEntry kGlossary[] = {
    {"aliases", 0},      {"alias", 0},        {"common name", 0},  {"common names", 0},
    {"called", 0},       {"nickname", 0},     {"also known as", 0},
    {"body parts", 1},   {"body part", 1},    {"anatomy", 1},      {"parts", 1},
    {"morphology", 1},   {"has", 1},          {"limbs", 1},
    {"colors", 2},       {"color", 2},        {"colour", 2},       {"colours", 2},
    {"colored", 2},      {"coloured", 2},     {"hue", 2},
    {"predators", 3},    {"predator", 3},     {"eaten by", 3},     {"preyed on by", 3},
    {"hunted by", 3},    {"enemies", 3},      {"threats", 3},
    {"diet", 4},         {"eats", 4},         {"eat", 4},          {"food", 4},
    {"feeds on", 4},     {"feed on", 4},      {"prey", 4},         {"consumes", 4},
    {"environment", 5},  {"habitat", 5},      {"lives", 5},        {"lives in", 5},
    {"found in", 5},     {"inhabits", 5},     {"live", 5},
    {"descriptors", 6},  {"descriptor", 6},   {"description", 6},  {"appearance", 6},
    {"looks like", 6},   {"shape", 6},        {"features", 6},
};

constexpr std::size_t kGlossaryAxes = 7;

std::optional<std::size_t> glossary_axis(std::string_view phrase) {
  for (const auto& g : kGlossary) {
    if (g.phrase == phrase) return g.axis;
  }
  return std::nullopt;
}

}  // namespace

ScriptedReply parse_reply(const nlohmann::json& j) {
  if (j.contains("error")) return ScriptedReply::failure(j.at("error").get<std::string>());
  if (j.contains("tool_call")) {
    const auto& tc = j.at("tool_call");
    return ScriptedReply::tool(tc.at("name").get<std::string>(),
                               tc.value("arguments", nlohmann::json::object()));
  }
  if (j.contains("json")) return ScriptedReply::json(j.at("json"));
  if (j.contains("text")) return ScriptedReply::text(j.at("text").get<std::string>());
  throw FormatError("transcript reply needs one of text/json/tool_call/error");
}

void MockProvider::load_transcripts(const std::filesystem::path& path) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw FormatError("cannot open transcript " + f.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("transcript " + f.string() + ": " + e.what());
    }
    add_rules_from_json(j, f.filename().string());
  }
}

void MockProvider::add_rules_from_json(const nlohmann::json& j, const std::string& origin) {
  const auto& rules = j.is_array() ? j : j.at("rules");
  for (const auto& r : rules) {
    TranscriptRule rule;
    rule.profile = profile_from_string(r.at("profile").get<std::string>());
    if (r.contains("contains")) rule.contains = r["contains"].get<std::string>();
    if (r.contains("with_tools")) rule.with_tools = r["with_tools"].get<bool>();
    if (r.contains("tools_done")) rule.tools_done = r["tools_done"].get<std::vector<std::string>>();
    if (r.contains("fingerprint")) rule.fingerprint = r["fingerprint"].get<std::string>();
    rule.reply = parse_reply(r.at("reply"));
    rule.origin = origin;
    add_rule(std::move(rule));
  }
}

void MockProvider::add_rule(TranscriptRule rule) {
  std::lock_guard lk(mu_);
  rules_.push_back(std::move(rule));
}

void MockProvider::enqueue(Profile profile, ScriptedReply reply) {
  std::lock_guard lk(mu_);
  queues_[profile].push_back(std::move(reply));
}

void MockProvider::set_fallback(Profile profile, ScriptedReply reply) {
  std::lock_guard lk(mu_);
  fallbacks_[profile] = std::move(reply);
}

std::size_t MockProvider::pending(Profile profile) const {
  std::lock_guard lk(mu_);
  auto it = queues_.find(profile);
  return it == queues_.end() ? 0 : it->second.size();
}

std::size_t MockProvider::rule_count() const {
  std::lock_guard lk(mu_);
  return rules_.size();
}

std::string MockProvider::fingerprint(const ChatRequest& request) {
  std::string key(to_string(request.profile));
  key += '\n';
  key += last_user_content(request);
  return text::hex64(text::fnv1a64(key));
}

ChatResponse MockProvider::complete(const ChatRequest& request) {
  std::optional<ScriptedReply> chosen;
  {
    std::lock_guard lk(mu_);
    auto q = queues_.find(request.profile);
    if (q != queues_.end() && !q->second.empty()) {
      chosen = std::move(q->second.front());
      q->second.pop_front();
    }
    if (!chosen) {
      const std::string_view last = last_user_content(request);
      std::vector<std::string> done;
      for (const auto& m : request.messages) {
        if (m.role == Role::Tool) done.push_back(m.tool_name);
      }
      const std::string fp = fingerprint(request);

      const TranscriptRule* best = nullptr;
      long best_score = -2;
      for (const auto& r : rules_) {
        if (r.profile != request.profile) continue;
        if (r.with_tools && *r.with_tools != !request.tools.empty()) continue;
        if (r.tools_done && *r.tools_done != done) continue;
        long score = -1;
        if (r.fingerprint) {
          if (*r.fingerprint != fp) continue;
          score = std::numeric_limits<long>::max();
        } else if (r.contains) {
          const auto pos = last.rfind(*r.contains);
          if (pos == std::string_view::npos) continue;
          score = static_cast<long>(pos + r.contains->size());
        }
        if (score > best_score) {
          best = &r;
          best_score = score;
        }
      }
      if (best) {
        chosen = best->reply;
      } else if (auto f = fallbacks_.find(request.profile); f != fallbacks_.end()) {
        chosen = f->second;
      }
    }
  }
  if (!chosen) {
    throw TransportError("mock: no transcript entry for profile " + std::string(to_string(request.profile)) +
                         " fingerprint " + fingerprint(request));
  }
  if (!chosen->response) throw TransportError(chosen->error);

  ChatResponse resp = *chosen->response;
  resp.usage.prompt_tokens = count_prompt_tokens(request);
  resp.usage.completion_tokens = resp.is_tool_call()
                                     ? text::count_tokens(resp.call.name) + text::count_tokens(resp.call.arguments.dump())
                                     : text::count_tokens(resp.text);
  return resp;
}

EmbeddingVector MockProvider::mock_embedding(std::string_view raw) {
  EmbeddingVector v;
  v.values.assign(kEmbeddingDim, 0.0f);
  const std::string norm = text::normalize(raw);
  if (auto axis = glossary_axis(norm)) {
    v.values[*axis] = 1.0f;
    return v;
  }
  const auto tokens = text::split_ws(norm);
  for (const auto& tok : tokens) {
    if (auto axis = glossary_axis(tok)) {
      v.values[*axis] += 1.0f;
      continue;
    }
    const std::uint64_t h = text::fnv1a64(tok);
    const std::size_t dim = kGlossaryAxes + (h % (kEmbeddingDim - kGlossaryAxes));
    v.values[dim] += ((h >> 32) & 1U) ? 1.0f : -1.0f;
  }
  if (v.norm() == 0) v.values[kEmbeddingDim - 1] = 1.0f;
  v.normalize();
  return v;
}

std::vector<EmbeddingVector> MockProvider::embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(mock_embedding(t));
  return out;
}

}  // namespace oceanql::llm
