// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/llm/types.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace oceanql::llm {

struct Demonstration {
  std::string user;
  std::string assistant;
};

struct ProfileSpec {
  Profile profile = Profile::Evaluator;
  std::string preamble;
  std::vector<Demonstration> demonstrations;
};

/// System preambles and demonstrations for every profile, loaded from a
/// versioned JSON file. Each profile carries exactly two demonstrations.
class ProfileLibrary {
 public:
  static constexpr int kVersion = 1;

  static ProfileLibrary load(const std::filesystem::path& file);
  static ProfileLibrary from_json(const nlohmann::json& j);

  [[nodiscard]] const ProfileSpec& get(Profile p) const;
  [[nodiscard]] bool has(Profile p) const { return specs_.contains(p); }

 private:
  std::map<Profile, ProfileSpec> specs_;
};

class Provider {
 public:
  virtual ~Provider() = default;
  /// Throws TransportError on failure.
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

struct GatewayOptions {
  int transport_retries = 1;
  std::chrono::milliseconds backoff{200};
};

struct LogEntry {
  enum class Kind { Complete, Embed };
  Kind kind = Kind::Complete;
  std::string session;
  ChatRequest request;  // assembled request as sent to the provider
  std::optional<ChatResponse> response;
  std::vector<std::string> embed_inputs;
  std::string error;
};

/// Single choke point for model traffic: assembles profile prompts, enforces
/// the token budget, retries transport failures, and records every call.
class Gateway {
 public:
  Gateway(std::shared_ptr<Provider> provider, ProfileLibrary profiles, GatewayOptions options = {});

  /// Throws TokenLimitError if the assembled prompt exceeds request.max_tokens,
  /// TransportError once retries are exhausted.
  ChatResponse complete(const ChatRequest& request, const std::string& session = {});

  /// Unit-normalised embeddings, one per input text.
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts,
                                     const std::string& session = {});

  [[nodiscard]] TokenUsage usage_report(const std::string& session) const;
  [[nodiscard]] std::vector<LogEntry> log() const;
  [[nodiscard]] std::vector<LogEntry> log_for(const std::string& session) const;
  [[nodiscard]] std::size_t log_size() const;
  void clear_log();

  [[nodiscard]] const ProfileLibrary& profiles() const { return profiles_; }
  [[nodiscard]] Provider& provider() { return *provider_; }

  /// Profile preamble, caller system messages, demonstrations, then the rest.
  [[nodiscard]] ChatRequest assemble(const ChatRequest& request) const;

 private:
  void record(LogEntry entry);

  std::shared_ptr<Provider> provider_;
  ProfileLibrary profiles_;
  GatewayOptions options_;

  mutable std::mutex mu_;
  std::vector<LogEntry> log_;
  std::map<std::string, TokenUsage> usage_;
};

}  // namespace oceanql::llm
