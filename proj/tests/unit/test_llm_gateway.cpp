// SPDX-License-Identifier: Apache-2.0
#include "oceanql/error.hpp"
#include "oceanql/llm/gateway.hpp"
#include "oceanql/llm/http_provider.hpp"
#include "oceanql/llm/mock_provider.hpp"

#include <httplib.h>
#include <gtest/gtest.h>

#include <thread>

using namespace oceanql;
using namespace oceanql::llm;

namespace {

ProfileLibrary profiles() { return ProfileLibrary::load(std::string(OCEANQL_DATA_DIR) + "/profiles.json"); }

struct Fixture {
  std::shared_ptr<MockProvider> mock = std::make_shared<MockProvider>();
  Gateway gw{mock, profiles(), GatewayOptions{1, std::chrono::milliseconds(0)}};
};

ChatRequest user_request(Profile p, std::string text) {
  ChatRequest r;
  r.profile = p;
  r.messages.push_back(Message::user(std::move(text)));
  return r;
}

ToolDescriptor tool(std::string name) { return {std::move(name), "d", {}, OutputKind::Text}; }

}  // namespace

TEST(ProfileLibrary, EveryProfileHasTwoDemonstrations) {
  auto lib = profiles();
  for (auto p : {Profile::Evaluator, Profile::SqlGeneral, Profile::SqlSimilarity, Profile::SqlVisualization,
                 Profile::KgExtraction, Profile::ChartCode, Profile::GeneralAnswer}) {
    ASSERT_TRUE(lib.has(p)) << to_string(p);
    EXPECT_EQ(lib.get(p).demonstrations.size(), 2u);
  }
}

TEST(ProfileLibrary, RejectsWrongVersionAndDemoCount) {
  EXPECT_THROW(ProfileLibrary::from_json({{"version", 2}, {"profiles", nlohmann::json::object()}}), FormatError);
  nlohmann::json one = {{"version", 1},
                        {"profiles", {{"evaluator", {{"preamble", "p"}, {"demonstrations", {{{"user", "u"}, {"assistant", "a"}}}}}}}}};
  EXPECT_THROW(ProfileLibrary::from_json(one), FormatError);
}

TEST(Gateway, MockTranscriptSelectsTool) {
  Fixture f;
  f.mock->add_rules_from_json(
      nlohmann::json::parse(R"([{"profile":"evaluator","contains":"find images of","with_tools":true,
        "reply":{"tool_call":{"name":"resolve_names","arguments":{"description":"X"}}}}])"),
      "inline");
  auto req = user_request(Profile::Evaluator, "find images of X");
  req.tools = {tool("resolve_names")};
  auto resp = f.gw.complete(req, "s");
  ASSERT_TRUE(resp.is_tool_call());
  EXPECT_EQ(resp.call.name, "resolve_names");
  EXPECT_EQ(resp.call.arguments["description"], "X");
}

TEST(Gateway, EmptyToolListAlwaysYieldsText) {
  Fixture f;
  f.mock->enqueue(Profile::Evaluator, ScriptedReply::tool("resolve_names", {{"description", "x"}}));
  auto resp = f.gw.complete(user_request(Profile::Evaluator, "hello"), "s");
  EXPECT_FALSE(resp.is_tool_call());
}

TEST(Gateway, TokenBudgetExceeded) {
  Fixture f;
  f.mock->set_fallback(Profile::GeneralAnswer, ScriptedReply::text("ok"));
  auto req = user_request(Profile::GeneralAnswer, "word word word");
  req.max_tokens = 5;
  EXPECT_THROW(f.gw.complete(req, "s"), TokenLimitError);
  req.max_tokens = 16000;
  EXPECT_NO_THROW(f.gw.complete(req, "s"));
}

TEST(Gateway, AssemblesPreambleSystemDemosThenMessages) {
  Fixture f;
  ChatRequest req;
  req.profile = Profile::SqlGeneral;
  req.messages = {Message::user("prompt text"), Message::system("SCHEMA")};
  auto a = f.gw.assemble(req);
  ASSERT_EQ(a.messages.size(), 7u);
  EXPECT_EQ(a.messages[0].content, f.gw.profiles().get(Profile::SqlGeneral).preamble);
  EXPECT_EQ(a.messages[1].content, "SCHEMA");
  EXPECT_EQ(a.messages[2].role, Role::User);
  EXPECT_EQ(a.messages[3].role, Role::Assistant);
  EXPECT_EQ(a.messages[6].content, "prompt text");
}

TEST(Gateway, UsageAccumulatesPerSession) {
  Fixture f;
  EXPECT_EQ(f.gw.usage_report("s"), TokenUsage{});
  ChatResponse r1 = ChatResponse::make_text("x");
  // Usage is recomputed by the mock, so compare against the recorded log.
  f.mock->set_fallback(Profile::GeneralAnswer, ScriptedReply::text("a b c"));
  auto a = f.gw.complete(user_request(Profile::GeneralAnswer, "one two"), "s");
  auto b = f.gw.complete(user_request(Profile::GeneralAnswer, "three"), "s");
  TokenUsage expected = a.usage;
  expected += b.usage;
  EXPECT_EQ(f.gw.usage_report("s"), expected);
  EXPECT_EQ(a.usage.completion_tokens, 3u);
  EXPECT_EQ(f.gw.usage_report("other"), TokenUsage{});
}

TEST(TokenUsage, Additive) {
  TokenUsage a{10, 5};
  a += TokenUsage{7, 3};
  EXPECT_EQ(a, (TokenUsage{17, 8}));
}

TEST(Gateway, RetriesTransportFailureOnce) {
  Fixture f;
  f.mock->enqueue(Profile::GeneralAnswer, ScriptedReply::failure("boom"));
  f.mock->enqueue(Profile::GeneralAnswer, ScriptedReply::text("recovered"));
  EXPECT_EQ(f.gw.complete(user_request(Profile::GeneralAnswer, "q"), "s").text, "recovered");

  f.mock->enqueue(Profile::GeneralAnswer, ScriptedReply::failure("boom"));
  f.mock->enqueue(Profile::GeneralAnswer, ScriptedReply::failure("boom again"));
  EXPECT_THROW(f.gw.complete(user_request(Profile::GeneralAnswer, "q"), "s"), TransportError);
}

TEST(Gateway, LogsEveryCallInOrder) {
  Fixture f;
  f.mock->set_fallback(Profile::GeneralAnswer, ScriptedReply::text("ok"));
  f.gw.complete(user_request(Profile::GeneralAnswer, "first"), "s");
  f.gw.embed({"colors"}, "s");
  f.gw.complete(user_request(Profile::GeneralAnswer, "second"), "t");
  auto log = f.gw.log();
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[0].kind, LogEntry::Kind::Complete);
  EXPECT_EQ(last_user_content(log[0].request), "first");
  EXPECT_EQ(log[1].kind, LogEntry::Kind::Embed);
  EXPECT_EQ(f.gw.log_for("t").size(), 1u);
}

TEST(MockTranscript, LatestOccurrenceWins) {
  MockProvider mock;
  mock.add_rules_from_json(nlohmann::json::parse(R"([
    {"profile":"general_answer","contains":"turn one","reply":{"text":"A"}},
    {"profile":"general_answer","contains":"turn two","reply":{"text":"B"}}])"),
                           "inline");
  EXPECT_EQ(mock.complete(user_request(Profile::GeneralAnswer, "history: turn one. now: turn two")).text, "B");
  EXPECT_EQ(mock.complete(user_request(Profile::GeneralAnswer, "turn two then turn one")).text, "A");
}

TEST(MockTranscript, ToolsDoneAndFingerprint) {
  MockProvider mock;
  auto req = user_request(Profile::Evaluator, "q");
  const auto fp = MockProvider::fingerprint(req);
  mock.add_rules_from_json(nlohmann::json::parse(R"([
    {"profile":"evaluator","contains":"q","tools_done":[],"reply":{"text":"first"}},
    {"profile":"evaluator","contains":"q","tools_done":["resolve_names"],"reply":{"text":"second"}}])"),
                           "inline");
  EXPECT_EQ(mock.complete(req).text, "first");
  Message tool_msg{Role::Tool, "names", std::nullopt, "resolve_names", "c1"};
  auto req2 = req;
  req2.messages.push_back(tool_msg);
  EXPECT_EQ(mock.complete(req2).text, "second");

  mock.add_rules_from_json(nlohmann::json::array({{{"profile", "evaluator"}, {"fingerprint", fp}, {"reply", {{"text", "fp"}}}}}),
                           "inline");
  EXPECT_EQ(mock.complete(req).text, "fp");
  EXPECT_THROW(mock.complete(user_request(Profile::ChartCode, "nothing")), TransportError);
}

TEST(MockEmbedding, DeterministicAndUnitNorm) {
  Fixture f;
  auto a = f.gw.embed({"colors"});
  auto b = f.gw.embed({"colors"});
  EXPECT_EQ(a[0].values, b[0].values);
  for (const char* s : {"colors", "zxqw", "what it eats", "", "a long sentence about jellyfish in the bay"}) {
    auto v = f.gw.embed({s});
    EXPECT_NEAR(v[0].norm(), 1.0, 1e-6) << s;
    EXPECT_EQ(v[0].values.size(), MockProvider::kEmbeddingDim);
  }
}

TEST(MockEmbedding, GlossaryEncodesOrdering) {
  auto eats = MockProvider::mock_embedding("eats");
  EXPECT_GT(cosine(eats, MockProvider::mock_embedding("diet")), cosine(eats, MockProvider::mock_embedding("colors")));
  EXPECT_NEAR(cosine(MockProvider::mock_embedding("color"), MockProvider::mock_embedding("colors")), 1.0, 1e-9);
}

TEST(HttpProvider, SpeaksOpenAiCompatibleProtocol) {
  httplib::Server server;
  nlohmann::json seen;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    auto body = nlohmann::json::parse(R"({
      "choices": [{"message": {"role": "assistant", "content": null,
        "tool_calls": [{"id": "call_1", "type": "function",
          "function": {"name": "resolve_names", "arguments": "{\"description\":\"moon jelly\"}"}}]}}],
      "usage": {"prompt_tokens": 12, "completion_tokens": 4}})");
    res.set_content(body.dump(), "application/json");
  });
  server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    auto in = nlohmann::json::parse(req.body);
    nlohmann::json data = nlohmann::json::array();
    for (std::size_t i = 0; i < in["input"].size(); ++i) data.push_back({{"embedding", {3.0, 4.0}}});
    res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpProviderConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.api_key = "k";
  auto provider = std::make_shared<HttpProvider>(cfg);
  Gateway gw(provider, profiles(), GatewayOptions{0, std::chrono::milliseconds(0)});

  auto req = user_request(Profile::Evaluator, "what eats moon jelly");
  req.tools = {tool("resolve_names")};
  auto resp = gw.complete(req, "s");
  ASSERT_TRUE(resp.is_tool_call());
  EXPECT_EQ(resp.call.arguments["description"], "moon jelly");
  EXPECT_EQ(resp.usage, (TokenUsage{12, 4}));
  EXPECT_EQ(seen["tools"][0]["function"]["name"], "resolve_names");
  EXPECT_EQ(seen["temperature"], 0.0);

  auto v = gw.embed({"a", "b"});
  ASSERT_EQ(v.size(), 2u);
  EXPECT_NEAR(v[0].values[0], 0.6, 1e-6);

  server.stop();
  t.join();
}

TEST(HttpProvider, TransportFailureSurfaces) {
  HttpProviderConfig cfg;
  cfg.base_url = "http://127.0.0.1:1/v1";
  cfg.timeout = std::chrono::seconds(1);
  HttpProvider p(cfg);
  EXPECT_THROW(p.complete(user_request(Profile::Evaluator, "x")), TransportError);
}
