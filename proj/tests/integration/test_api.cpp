// SPDX-License-Identifier: Apache-2.0
#include "oceanql/pattern/pattern.hpp"
#include "oceanql/service/api.hpp"
#include "oceanql/similarity/corpus.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <condition_variable>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace oceanql {
namespace {

using json = nlohmann::json;

/// Mock provider whose evaluator calls can be held back.
class GatedProvider : public llm::Provider {
 public:
  explicit GatedProvider(std::shared_ptr<llm::Provider> inner) : inner_(std::move(inner)) {}

  llm::ChatResponse complete(const llm::ChatRequest& request) override {
    if (request.profile == llm::Profile::Evaluator) {
      std::unique_lock lk(mu_);
      ++waiting_;
      cv_.notify_all();
      cv_.wait(lk, [&] { return open_; });
      --waiting_;
    }
    return inner_->complete(request);
  }
  std::vector<llm::EmbeddingVector> embed(const std::vector<std::string>& texts) override {
    return inner_->embed(texts);
  }
  [[nodiscard]] std::string name() const override { return "gated-mock"; }

  void close() {
    std::lock_guard lk(mu_);
    open_ = false;
  }
  void open() {
    std::lock_guard lk(mu_);
    open_ = true;
    cv_.notify_all();
  }
  /// Blocks until at least n evaluator calls are held.
  void wait_for_waiting(int n) {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return waiting_ >= n; });
  }

 private:
  std::shared_ptr<llm::Provider> inner_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool open_ = true;
  int waiting_ = 0;
};

struct Server {
  std::shared_ptr<GatedProvider> gate;
  std::unique_ptr<service::Runtime> runtime;
  std::unique_ptr<service::ApiServer> api;
  int port = 0;

  explicit Server(std::chrono::milliseconds ceiling) {
    service::RuntimeConfig cfg;
    cfg.data_dir = fixture::data_dir();
    cfg.ceiling = ceiling;
    gate = std::make_shared<GatedProvider>(service::make_mock_provider(cfg.data_dir));
    runtime = std::make_unique<service::Runtime>(cfg, gate);
    api = std::make_unique<service::ApiServer>(*runtime);
    port = api->start("127.0.0.1", 0);
  }
  ~Server() {
    gate->open();
    api->stop();
  }

  [[nodiscard]] httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(std::chrono::seconds(60));
    return c;
  }
};

class ApiTest : public ::testing::Test {
 protected:
  static Server& server() {
    static Server s(std::chrono::milliseconds(30000));
    return s;
  }
  static httplib::Client client() { return server().client(); }

  static std::string new_session() {
    auto res = client().Post("/api/sessions");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 201);
    return json::parse(res->body).at("session_id").get<std::string>();
  }

  static httplib::Result post_message(const std::string& session, const json& body) {
    return client().Post("/api/sessions/" + session + "/messages", body.dump(), "application/json");
  }

  static json session_info(const std::string& session) {
    auto res = client().Get("/api/sessions/" + session);
    EXPECT_TRUE(res);
    return json::parse(res->body);
  }

  /// Polls the session until pred holds.
  template <class Pred>
  static void wait_for(const std::string& session, Pred pred) {
    for (int i = 0; i < 2000; ++i) {
      if (pred(session_info(session))) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    FAIL() << "timed out waiting on session " << session;
  }

  static std::string upload(const std::string& session, const std::string& bytes, int expect_status = 201) {
    auto res = client().Post("/api/images?session_id=" + session, bytes, "application/octet-stream");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, expect_status) << res->body;
    if (res->status != 201) return "";
    return json::parse(res->body).at("image_id").get<std::string>();
  }
};

struct SseEvent {
  std::string event;
  std::string id;
  json data;
};

std::vector<SseEvent> parse_sse(const std::string& text) {
  std::vector<SseEvent> out;
  std::size_t pos = 0;
  while (true) {
    auto end = text.find("\n\n", pos);
    if (end == std::string::npos) break;
    SseEvent e;
    std::istringstream block(text.substr(pos, end - pos));
    std::string line;
    while (std::getline(block, line)) {
      if (line.rfind("event: ", 0) == 0) e.event = line.substr(7);
      if (line.rfind("id: ", 0) == 0) e.id = line.substr(4);
      if (line.rfind("data: ", 0) == 0) e.data = json::parse(line.substr(6));
    }
    out.push_back(e);
    pos = end + 2;
  }
  return out;
}

/// Reads the event stream to its end.
std::string read_stream(const Server& s, const std::string& session, const httplib::Headers& headers = {}) {
  std::string body;
  auto c = s.client();
  auto res = c.Get("/api/sessions/" + session + "/events", headers, [&](const char* data, std::size_t n) {
    body.append(data, n);
    return true;
  });
  EXPECT_TRUE(res);
  if (res) EXPECT_EQ(res->status, 200);
  return body;
}

std::vector<std::string> stage_names(const std::vector<SseEvent>& events) {
  std::vector<std::string> out;
  for (const auto& e : events) {
    if (e.event == "stage") out.push_back(e.data.at("stage").get<std::string>());
  }
  return out;
}

TEST_F(ApiTest, SessionsAreCreatedWithFreshIds) {
  std::set<std::string> ids;
  for (int i = 0; i < 20; ++i) ids.insert(new_session());
  EXPECT_EQ(ids.size(), 20u);
  for (const auto& id : ids) EXPECT_EQ(id.size(), 32u);  // 128 bits, hex
  auto info = session_info(*ids.begin());
  EXPECT_TRUE(info["turns"].empty());
  EXPECT_FALSE(info["in_flight"].get<bool>());
}

TEST_F(ApiTest, HealthReportsProvider) {
  auto res = client().Get("/api/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["provider"], "mock");
}

TEST_F(ApiTest, MoonJellyfishNamesAurelia) {
  const auto s = new_session();
  auto res = post_message(s, {{"text", "What is the scientific name of moon jellyfish?"}});
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto env = json::parse(res->body);
  EXPECT_EQ(env["output_kind"], "text");
  EXPECT_NE(env["payload"]["text"].get<std::string>().find("Aurelia aurita"), std::string::npos) << env.dump();
  EXPECT_EQ(env["session_id"], s);
  EXPECT_FALSE(env["request_id"].get<std::string>().empty());
  EXPECT_GE(env["elapsed_ms"].get<std::int64_t>(), 0);
  EXPECT_LT(env["elapsed_ms"].get<std::int64_t>(), 2000);
  ASSERT_FALSE(env["stages"].empty());
  EXPECT_EQ(env["stages"].back()["stage"], "complete");

  auto info = session_info(s);
  ASSERT_EQ(info["turns"].size(), 2u);
  EXPECT_EQ(info["turns"][0]["role"], "user");
  EXPECT_EQ(info["turns"][1]["role"], "assistant");
}

TEST_F(ApiTest, UnknownSessionAndBadBodies) {
  const std::string ghost(32, 'a');
  auto res = post_message(ghost, {{"text", "hello"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(client().Get("/api/sessions/" + ghost)->status, 404);
  EXPECT_EQ(client().Get("/api/sessions/" + ghost + "/events")->status, 404);
  EXPECT_EQ(client().Delete("/api/sessions/" + ghost)->status, 404);
  EXPECT_EQ(client().Post("/api/images?session_id=" + ghost, "x", "image/png")->status, 404);

  const auto s = new_session();
  EXPECT_EQ(client().Post("/api/sessions/" + s + "/messages", "not json", "application/json")->status, 400);
  EXPECT_EQ(post_message(s, {{"image_id", "7"}})->status, 400);
  EXPECT_EQ(post_message(s, {{"text", "x"}, {"image_id", "u0123"}})->status, 404);

  EXPECT_EQ(client().Delete("/api/sessions/" + s)->status, 204);
  EXPECT_EQ(post_message(s, {{"text", "x"}})->status, 404);
}

TEST_F(ApiTest, QueueOverflowIs429) {
  auto& srv = server();
  const auto s = new_session();
  const std::string prompt = "What is the scientific name of moon jellyfish?";
  srv.gate->close();

  std::vector<std::future<int>> posts;
  auto fire = [&] {
    posts.push_back(std::async(std::launch::async, [&] {
      auto r = post_message(s, {{"text", prompt}});
      return r ? r->status : -1;
    }));
  };
  fire();
  srv.gate->wait_for_waiting(1);
  wait_for(s, [](const json& j) { return j["in_flight"].get<bool>(); });
  for (int i = 0; i < 4; ++i) fire();
  wait_for(s, [](const json& j) { return j["queued"].get<int>() == 4; });

  auto over = post_message(s, {{"text", prompt}});
  ASSERT_TRUE(over);
  EXPECT_EQ(over->status, 429);

  // Other sessions are unaffected by the full queue.
  const auto other = new_session();
  auto info = session_info(other);
  EXPECT_FALSE(info["in_flight"].get<bool>());

  srv.gate->open();
  for (auto& f : posts) EXPECT_EQ(f.get(), 200);
  EXPECT_EQ(session_info(s)["turns"].size(), 10u);
}

TEST_F(ApiTest, EventStreamOrderAndReconnectReplay) {
  auto& srv = server();
  const auto s = new_session();
  srv.gate->close();
  auto post = std::async(std::launch::async,
                         [&] { return post_message(s, {{"text", "What is the scientific name of moon jellyfish?"}}); });
  srv.gate->wait_for_waiting(1);
  wait_for(s, [](const json& j) { return j["in_flight"].get<bool>(); });

  // First connection drops after the first event.
  std::string first;
  {
    auto c = srv.client();
    c.Get("/api/sessions/" + s + "/events", [&](const char* d, std::size_t n) {
      first.append(d, n);
      return first.find("\n\n") == std::string::npos;
    });
  }
  auto early = parse_sse(first);
  ASSERT_FALSE(early.empty());
  EXPECT_EQ(early[0].data["stage"], "evaluating prompt");

  // Reconnects: one from scratch, one resuming after the first event.
  auto full = std::async(std::launch::async, [&] { return read_stream(srv, s); });
  auto resumed = std::async(std::launch::async, [&] { return read_stream(srv, s, {{"Last-Event-ID", early[0].id}}); });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  srv.gate->open();

  auto res = post.get();
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto env = json::parse(res->body);
  std::vector<std::string> expected;
  for (const auto& st : env["stages"]) expected.push_back(st["stage"]);
  ASSERT_GE(expected.size(), 3u);

  auto events = parse_sse(full.get());
  EXPECT_EQ(stage_names(events), expected);
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(events.back().event, "done");
  EXPECT_EQ(events.back().data["request_id"], env["request_id"]);
  for (std::size_t i = 1; i + 1 < events.size(); ++i) {
    EXPECT_LT(std::stoul(events[i - 1].id), std::stoul(events[i].id));
  }

  auto tail = parse_sse(resumed.get());
  EXPECT_EQ(stage_names(tail), std::vector<std::string>(expected.begin() + 1, expected.end()));
  EXPECT_EQ(tail.back().event, "done");
}

TEST_F(ApiTest, EventStreamWaitsForNextRequest) {
  auto& srv = server();
  const auto s = new_session();
  auto stream = std::async(std::launch::async, [&] { return read_stream(srv, s); });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  auto res = post_message(s, {{"text", "What is the scientific name of moon jellyfish?"}});
  ASSERT_EQ(res->status, 200);
  auto events = parse_sse(stream.get());
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(stage_names(events).front(), "evaluating prompt");
  EXPECT_EQ(stage_names(events).back(), "complete");
  EXPECT_EQ(events.back().event, "done");
}

TEST_F(ApiTest, PngUploadRoundTrip) {
  const auto s = new_session();
  vision::Image img(23, 17);
  std::mt19937 rng(5);
  for (auto& b : img.rgba) b = static_cast<std::uint8_t>(rng());
  const auto id = upload(s, vision::encode_png(img));
  ASSERT_FALSE(id.empty());
  EXPECT_EQ(id.front(), 'u');

  auto res = client().Get("/api/images/" + id + "/image");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(vision::decode_image(res->body), img);
  EXPECT_EQ(session_info(s)["uploads"], json::array({id}));

  // Deleting the session drops its uploads.
  client().Delete("/api/sessions/" + s);
  EXPECT_EQ(client().Get("/api/images/" + id + "/image")->status, 404);
}

TEST_F(ApiTest, JpegAndMultipartUploads) {
  const auto s = new_session();
  std::ifstream in(std::string(OCEANQL_TEST_FIXTURES) + "/red_16x8.jpg", std::ios::binary);
  const std::string jpeg((std::istreambuf_iterator<char>(in)), {});
  auto res = client().Post("/api/images?session_id=" + s, jpeg, "image/jpeg");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201);
  auto j = json::parse(res->body);
  EXPECT_EQ(j["format"], "jpeg");
  EXPECT_EQ(j["width"], 16);
  EXPECT_EQ(j["height"], 8);

  httplib::MultipartFormDataItems items{{"file", vision::encode_png(vision::Image(4, 3, 1, 2, 3)), "a.png", "image/png"}};
  auto mp = client().Post("/api/images?session_id=" + s, items);
  ASSERT_TRUE(mp);
  EXPECT_EQ(mp->status, 201);
  EXPECT_EQ(json::parse(mp->body)["width"], 4);
}

TEST_F(ApiTest, OversizeAndBadFormatUploads) {
  const auto s = new_session();
  std::string big = vision::encode_png(vision::Image(2, 2));
  big.resize(service::kUploadCap + 1, '\0');
  upload(s, big, 413);
  std::string huge(service::kUploadCap * 2, '\0');
  upload(s, huge, 413);

  upload(s, "GIF89a not supported", 415);
  std::string truncated = vision::encode_png(vision::Image(30, 30, 9, 9, 9));
  truncated.resize(truncated.size() / 2);
  upload(s, truncated, 415);
  EXPECT_TRUE(session_info(s)["uploads"].empty());
}

TEST_F(ApiTest, DatabaseImageAndCard) {
  const auto& db = server().runtime->store();
  auto res = client().Get("/api/images/7/image");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(vision::decode_image(res->body), similarity::render_db_image(db, 7));

  auto card = client().Get("/api/images/7");
  ASSERT_EQ(card->status, 200);
  auto j = json::parse(card->body);
  EXPECT_DOUBLE_EQ(j["depth_meters"].get<double>(), db.image(7)->depth_meters);
  ASSERT_EQ(j["boxes"].size(), db.boxes_for_image(7).size());
  const auto concept_name = j["boxes"][0]["concept"].get<std::string>();
  EXPECT_EQ(j["boxes"][0]["taxonomy"], json(server().runtime->taxonomy().ancestors(concept_name)));
  EXPECT_EQ(client().Get("/api/images/99999999")->status, 404);
}

TEST_F(ApiTest, SimilarityWithUploadedImage) {
  const auto& db = server().runtime->store();
  const std::int64_t box_id = 1234;
  const auto crop = similarity::box_crop(db, box_id);
  const auto s = new_session();
  const auto id = upload(s, vision::encode_png(crop));
  auto res = post_message(s, {{"text", "Find me similar looking images from the database"}, {"image_id", id}});
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto env = json::parse(res->body);
  ASSERT_EQ(env["output_kind"], "images") << env.dump();
  ASSERT_TRUE(env["sql"].is_string());
  const auto& images = env["payload"]["images"];
  ASSERT_FALSE(images.empty());
  EXPECT_EQ(images[0]["bounding_box"]["id"], box_id);

  const auto hits = server().runtime->index().cosine_topk(similarity::extract_features(crop).values, 10);
  ASSERT_EQ(images.size(), hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) EXPECT_EQ(images[i]["bounding_box"]["id"], hits[i].id) << i;
}

TEST_F(ApiTest, UploadsAreNotVisibleToOtherSessions) {
  const auto a = new_session();
  const auto b = new_session();
  const auto id = upload(a, vision::encode_png(vision::Image(8, 8, 200, 10, 10)));
  auto res = post_message(b, {{"text", "Find me similar looking images from the database"}, {"image_id", id}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
}

// Pattern endpoints, through HTTP.

std::string b64png(const vision::Image& img) { return service::base64_encode(vision::encode_png(img)); }

pattern::Mask mask_from_png(const std::string& b64) {
  auto img = vision::decode_image(service::base64_decode(b64));
  pattern::Mask m(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) m.set(x, y, img.at(x, y)[3] != 0);
  return m;
}

vision::Image two_tone() {
  vision::Image img(40, 20);
  std::uint8_t r, g, b;
  vision::hsv_to_rgb({200, 0.6, 0.6}, r, g, b);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) img.set(x, y, r, g, b);
  vision::hsv_to_rgb({200, 0.6, 0.85}, r, g, b);
  for (int y = 0; y < 20; ++y)
    for (int x = 20; x < 40; ++x) img.set(x, y, r, g, b);
  return img;
}

TEST_F(ApiTest, PatternSegmentTwoTone) {
  auto res = client().Post("/api/pattern/segment", json{{"image", b64png(two_tone())}, {"seed", {{"x", 5}, {"y", 5}}}}.dump(),
                           "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto j = json::parse(res->body);
  ASSERT_EQ(j["masks"].size(), 3u);
  pattern::Mask left(40, 20);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) left.set(x, y);
  EXPECT_EQ(mask_from_png(j["masks"][0]["png"]), left);
  EXPECT_EQ(mask_from_png(j["masks"][1]["png"]), left);
  EXPECT_EQ(mask_from_png(j["masks"][2]["png"]).count(), 800u);
  EXPECT_EQ(j["masks"][2]["count"], 800);
  EXPECT_EQ(j["masks"][0]["label"], "tight");
  EXPECT_TRUE(mask_from_png(j["masks"][0]["png"]).subset_of(mask_from_png(j["masks"][1]["png"])));

  auto oob = client().Post("/api/pattern/segment", json{{"image", b64png(two_tone())}, {"seed", {{"x", 40}, {"y", 0}}}}.dump(),
                           "application/json");
  EXPECT_EQ(oob->status, 400);
  auto bad = client().Post("/api/pattern/segment", json{{"image", "AAAA"}, {"seed", {{"x", 0}, {"y", 0}}}}.dump(),
                           "application/json");
  EXPECT_EQ(bad->status, 415);
  auto missing = client().Post("/api/pattern/segment", json{{"image_id", "u00"}, {"seed", {{"x", 0}, {"y", 0}}}}.dump(),
                               "application/json");
  EXPECT_EQ(missing->status, 404);
}

TEST_F(ApiTest, PatternExtractRangeMonotonic) {
  const auto s = new_session();
  std::mt19937 rng(11);
  vision::Image img(32, 24);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      img.set(x, y, static_cast<std::uint8_t>(100 + rng() % 60), static_cast<std::uint8_t>(60 + rng() % 40),
              static_cast<std::uint8_t>(rng() % 50));
  const auto id = upload(s, vision::encode_png(img));
  std::size_t previous = 0;
  for (double scale : {0.0, 0.25, 0.5, 1.0, 2.0}) {
    json body{{"image_id", id},
              {"seed", {{"x", 16}, {"y", 12}}},
              {"mask", 2},
              {"target", {{"x", 16}, {"y", 12}}},
              {"range", {{"h", 18 * scale}, {"s", 0.15 * scale}, {"v", 0.25 * scale}}}};
    auto res = client().Post("/api/pattern/extract", body.dump(), "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const auto j = json::parse(res->body);
    const auto p = vision::decode_image(service::base64_decode(j["png"].get<std::string>()));

    // Same answer as the library call on the same inputs.
    const auto seg = pattern::segment(img, {16, 12});
    const auto ref = pattern::extract_pattern(img, seg.masks[2], {16, 12},
                                              {18 * scale, 0.15 * scale, 0.25 * scale});
    EXPECT_EQ(p, ref.image);
    EXPECT_EQ(j["selected"].get<std::size_t>(), ref.selected);
    EXPECT_EQ(j["offset_x"], ref.offset_x);
    EXPECT_GE(ref.selected, previous);
    previous = ref.selected;
  }
}

TEST_F(ApiTest, PatternSearchSelfMatch) {
  const auto& db = server().runtime->store();
  const std::int64_t box_id = 1234;
  const auto crop = similarity::box_crop(db, box_id);
  const json body{{"image", b64png(crop)},
                  {"seed", {{"x", crop.width / 2}, {"y", crop.height / 2}}},
                  {"tolerances", {2.0, 2.0, 2.0}},
                  {"mask", 2},
                  {"target", {{"x", crop.width / 2}, {"y", crop.height / 2}}},
                  {"range", {{"h", 180}, {"s", 1}, {"v", 1}}},
                  {"k", 10}};
  auto res = client().Post("/api/pattern/search", body.dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto hits = json::parse(res->body)["hits"];
  ASSERT_EQ(hits.size(), 10u);
  EXPECT_EQ(hits[0]["bounding_box_id"], box_id);
  EXPECT_DOUBLE_EQ(hits[0]["distance"].get<double>(), 0.0);

  // Pattern supplied directly gives the same ranking.
  auto direct = client().Post("/api/pattern/search", json{{"pattern", b64png(crop)}, {"k", 10}}.dump(), "application/json");
  ASSERT_EQ(direct->status, 200);
  EXPECT_EQ(json::parse(direct->body)["hits"], hits);
  auto zero = client().Post("/api/pattern/search", json{{"pattern", b64png(crop)}, {"k", 0}}.dump(), "application/json");
  EXPECT_EQ(zero->status, 400);
}

TEST_F(ApiTest, TaxonomyEndpoint) {
  const auto& tax = server().runtime->taxonomy();
  auto res = client().Get("/api/taxonomy/Aurelia%20aurita");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  EXPECT_EQ(j["concept"], "Aurelia aurita");
  EXPECT_EQ(j["ancestors"], json(tax.ancestors("Aurelia aurita")));
  EXPECT_EQ(j["text"], tax.render_tree("Aurelia aurita").text);
  EXPECT_EQ(client().Get("/api/taxonomy/Nonexistus%20fictus")->status, 404);
}

TEST_F(ApiTest, Base64RoundTrip) {
  std::mt19937 rng(2);
  for (std::size_t n = 0; n < 40; ++n) {
    std::string s(n, '\0');
    for (auto& c : s) c = static_cast<char>(rng());
    EXPECT_EQ(service::base64_decode(service::base64_encode(s)), s) << n;
  }
  EXPECT_EQ(service::base64_encode("foob"), "Zm9vYg==");
  EXPECT_EQ(service::base64_decode("data:image/png;base64,Zm9v"), "foo");
  EXPECT_THROW(service::base64_decode("Zm9"), FormatError);
  EXPECT_THROW(service::base64_decode("Zm9!"), FormatError);
}

// Differential check: conversations run interleaved across sessions give the
// same envelopes as each conversation run on its own.

json comparable(json env) {
  for (const char* k : {"request_id", "session_id", "elapsed_ms", "queued_ms"}) env.erase(k);
  for (auto& st : env["stages"]) st.erase("at_ms");
  return env;
}

std::vector<std::vector<std::string>> replay_prompts() {
  std::ifstream in(fixture::data_dir() / "replay" / "conversations.json");
  const auto j = json::parse(in);
  std::vector<std::vector<std::string>> out;
  for (const auto& c : j["conversations"]) {
    std::vector<std::string> turns;
    for (const auto& t : c["turns"]) turns.push_back(t["prompt"]);
    out.push_back(turns);
  }
  return out;
}

TEST_F(ApiTest, SessionIsolationUnderInterleaving) {
  const auto convs = replay_prompts();
  ASSERT_EQ(convs.size(), 10u);

  auto run = [&](const std::vector<std::string>& turns) {
    const auto s = new_session();
    std::vector<json> envs;
    for (const auto& p : turns) {
      auto res = post_message(s, {{"text", p}});
      EXPECT_TRUE(res);
      EXPECT_EQ(res->status, 200);
      envs.push_back(comparable(json::parse(res->body)));
    }
    return envs;
  };

  std::vector<std::vector<json>> alone;
  for (const auto& c : convs) alone.push_back(run(c));

  std::mt19937 rng(17);
  for (int round = 0; round < 2; ++round) {
    std::vector<std::size_t> order(convs.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::future<std::vector<json>>> futures;
    for (auto i : order) futures.push_back(std::async(std::launch::async, run, std::cref(convs[i])));
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto got = futures[k].get();
      EXPECT_EQ(got, alone[order[k]]) << "conversation " << order[k] << " round " << round;
    }
  }

  // Every envelope whose query ran carries its SQL.
  std::size_t with_sql = 0;
  for (const auto& conv : alone) {
    for (const auto& env : conv) {
      const auto& d = env["dispatched"];
      const bool queried = std::find(d.begin(), d.end(), "generate_query") != d.end() ||
                           std::find(d.begin(), d.end(), "generate_visualization") != d.end();
      if (queried && env["output_kind"] != "error") {
        EXPECT_TRUE(env["sql"].is_string()) << env.dump();
        ++with_sql;
      }
    }
  }
  EXPECT_GT(with_sql, 20u);
}

TEST(ApiCeiling, SlowProviderGets504WithinCeiling) {
  Server srv(std::chrono::milliseconds(300));
  auto c = srv.client();
  auto created = c.Post("/api/sessions");
  const auto s = json::parse(created->body)["session_id"].get<std::string>();

  srv.gate->close();
  const auto t0 = std::chrono::steady_clock::now();
  auto res = c.Post("/api/sessions/" + s + "/messages", json{{"text", "What is the scientific name of moon jellyfish?"}}.dump(),
                    "application/json");
  const auto waited =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 504);
  const auto env = json::parse(res->body);
  EXPECT_EQ(env["output_kind"], "error");
  EXPECT_EQ(env["payload"]["category"], "prompt_evaluation");
  EXPECT_NE(env["payload"]["detail"].get<std::string>().find("300 ms"), std::string::npos);
  EXPECT_GE(env["elapsed_ms"].get<std::int64_t>(), 300);
  EXPECT_LT(waited, 2000);

  // The held evaluate finishes once released; the session keeps serving.
  srv.gate->open();
  auto next = c.Post("/api/sessions/" + s + "/messages", json{{"text", "What is the scientific name of moon jellyfish?"}}.dump(),
                     "application/json");
  ASSERT_TRUE(next);
  EXPECT_EQ(next->status, 200);
}

}  // namespace
}  // namespace oceanql

namespace oceanql {
namespace {

TEST(ApiDocs, OpenApiListsEveryRoute) {
  std::ifstream in(std::string(OCEANQL_DOCS_DIR) + "/openapi.json");
  const auto doc = nlohmann::json::parse(in);
  for (const char* path : {"/api/health", "/api/sessions", "/api/sessions/{id}", "/api/sessions/{id}/messages",
                           "/api/sessions/{id}/events", "/api/images", "/api/images/{image_id}",
                           "/api/images/{image_id}/image", "/api/taxonomy/{concept}", "/api/pattern/segment",
                           "/api/pattern/extract", "/api/pattern/search"}) {
    EXPECT_TRUE(doc["paths"].contains(path)) << path;
  }
  const auto& codes = doc["paths"]["/api/sessions/{id}/messages"]["post"]["responses"];
  for (const char* code : {"200", "404", "429", "504"}) EXPECT_TRUE(codes.contains(code)) << code;
}

TEST(ApiDocs, ExampleConfigLoads) {
  const std::filesystem::path docs = OCEANQL_DOCS_DIR;
  const auto cfg = service::RuntimeConfig::load(docs / "config.example.json");
  EXPECT_EQ(std::filesystem::weakly_canonical(cfg.data_dir), std::filesystem::weakly_canonical(fixture::data_dir()));
  EXPECT_EQ(cfg.ceiling, std::chrono::milliseconds(30000));
  EXPECT_EQ(cfg.queue_depth, 4u);
  EXPECT_EQ(cfg.upload_cap, service::kUploadCap);
  EXPECT_THROW(service::RuntimeConfig::from_json({{"provider", "carrier-pigeon"}}), FormatError);
}

}  // namespace
}  // namespace oceanql
