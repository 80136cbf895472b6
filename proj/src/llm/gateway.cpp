// SPDX-License-Identifier: Apache-2.0
#include "oceanql/llm/gateway.hpp"

#include "oceanql/error.hpp"
#include "oceanql/text.hpp"

#include <fstream>
#include <thread>

namespace oceanql::llm {

ProfileLibrary ProfileLibrary::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open profile file " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("profile file " + file.string() + ": " + e.what());
  }
  return from_json(j);
}

ProfileLibrary ProfileLibrary::from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kVersion) {
    throw FormatError("profile library version mismatch");
  }
  ProfileLibrary lib;
  for (const auto& [name, body] : j.at("profiles").items()) {
    ProfileSpec spec;
    spec.profile = profile_from_string(name);
    spec.preamble = body.at("preamble").get<std::string>();
    for (const auto& d : body.at("demonstrations")) {
      Demonstration demo;
      if (d.contains("sql")) {
        // SQL demonstrations are (prompt, sql, template) triples; the model
        // answers with the same JSON shape it is asked to produce.
        demo.user = d.at("prompt").get<std::string>();
        nlohmann::json answer = {{"sql", d.at("sql")},
                                 {"output_kind", d.value("output_kind", "table")},
                                 {"template", d.value("template", "")}};
        if (d.contains("signature")) answer["signature"] = d["signature"];
        demo.assistant = answer.dump();
      } else {
        demo.user = d.at("user").get<std::string>();
        const auto& a = d.at("assistant");
        demo.assistant = a.is_string() ? a.get<std::string>() : a.dump();
      }
      spec.demonstrations.push_back(std::move(demo));
    }
    if (spec.demonstrations.size() != 2) {
      throw FormatError("profile " + name + " must carry exactly two demonstrations");
    }
    lib.specs_[spec.profile] = std::move(spec);
  }
  return lib;
}

const ProfileSpec& ProfileLibrary::get(Profile p) const {
  auto it = specs_.find(p);
  if (it == specs_.end()) throw FormatError("profile not configured: " + std::string(to_string(p)));
  return it->second;
}

Gateway::Gateway(std::shared_ptr<Provider> provider, ProfileLibrary profiles, GatewayOptions options)
    : provider_(std::move(provider)), profiles_(std::move(profiles)), options_(options) {}

ChatRequest Gateway::assemble(const ChatRequest& request) const {
  ChatRequest out = request;
  out.messages.clear();
  if (profiles_.has(request.profile)) {
    const auto& spec = profiles_.get(request.profile);
    out.messages.push_back(Message::system(spec.preamble));
    for (const auto& m : request.messages) {
      if (m.role == Role::System) out.messages.push_back(m);
    }
    for (const auto& d : spec.demonstrations) {
      out.messages.push_back(Message::user(d.user));
      out.messages.push_back(Message::assistant(d.assistant));
    }
  } else {
    for (const auto& m : request.messages) {
      if (m.role == Role::System) out.messages.push_back(m);
    }
  }
  for (const auto& m : request.messages) {
    if (m.role != Role::System) out.messages.push_back(m);
  }
  return out;
}

ChatResponse Gateway::complete(const ChatRequest& request, const std::string& session) {
  if (request.messages.empty()) throw std::invalid_argument("chat request without messages");
  ChatRequest assembled = assemble(request);

  const auto prompt_tokens = count_prompt_tokens(assembled);
  if (prompt_tokens > request.max_tokens) {
    LogEntry e{LogEntry::Kind::Complete, session, assembled, std::nullopt, {}, "token limit"};
    record(std::move(e));
    throw TokenLimitError("request needs " + std::to_string(prompt_tokens) + " tokens, budget is " +
                          std::to_string(request.max_tokens));
  }

  std::string last_error;
  auto backoff = options_.backoff;
  for (int attempt = 0; attempt <= options_.transport_retries; ++attempt) {
    if (attempt > 0 && backoff.count() > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    try {
      ChatResponse resp = provider_->complete(assembled);
      if (request.tools.empty() && resp.is_tool_call()) {
        // No tool on offer: treat whatever came back as final text.
        resp = ChatResponse::make_text(resp.call.arguments.dump());
      }
      {
        std::lock_guard lk(mu_);
        usage_[session] += resp.usage;
      }
      record({LogEntry::Kind::Complete, session, assembled, resp, {}, {}});
      return resp;
    } catch (const TransportError& e) {
      last_error = e.what();
      record({LogEntry::Kind::Complete, session, assembled, std::nullopt, {}, last_error});
    }
  }
  throw TransportError(last_error);
}

std::vector<EmbeddingVector> Gateway::embed(const std::vector<std::string>& texts, const std::string& session) {
  if (texts.empty()) throw std::invalid_argument("embed called with no texts");
  std::string last_error;
  auto backoff = options_.backoff;
  for (int attempt = 0; attempt <= options_.transport_retries; ++attempt) {
    if (attempt > 0 && backoff.count() > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    try {
      auto vecs = provider_->embed(texts);
      for (auto& v : vecs) v.normalize();
      TokenUsage u;
      for (const auto& t : texts) u.prompt_tokens += text::count_tokens(t);
      {
        std::lock_guard lk(mu_);
        usage_[session] += u;
      }
      LogEntry e;
      e.kind = LogEntry::Kind::Embed;
      e.session = session;
      e.embed_inputs = texts;
      record(std::move(e));
      return vecs;
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw TransportError(last_error);
}

TokenUsage Gateway::usage_report(const std::string& session) const {
  std::lock_guard lk(mu_);
  auto it = usage_.find(session);
  return it == usage_.end() ? TokenUsage{} : it->second;
}

std::vector<LogEntry> Gateway::log() const {
  std::lock_guard lk(mu_);
  return log_;
}

std::vector<LogEntry> Gateway::log_for(const std::string& session) const {
  std::lock_guard lk(mu_);
  std::vector<LogEntry> out;
  for (const auto& e : log_) {
    if (e.session == session) out.push_back(e);
  }
  return out;
}

std::size_t Gateway::log_size() const {
  std::lock_guard lk(mu_);
  return log_.size();
}

void Gateway::clear_log() {
  std::lock_guard lk(mu_);
  log_.clear();
}

void Gateway::record(LogEntry entry) {
  std::lock_guard lk(mu_);
  log_.push_back(std::move(entry));
}

}  // namespace oceanql::llm
