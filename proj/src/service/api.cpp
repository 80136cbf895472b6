// SPDX-License-Identifier: Apache-2.0
#include "oceanql/service/api.hpp"

#include "oceanql/error.hpp"
#include "oceanql/pattern/pattern.hpp"
#include "oceanql/similarity/corpus.hpp"

#include <httplib.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

namespace oceanql::service {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::int64_t since_ms(Clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t).count();
}

std::string random_id(const std::string& prefix) {
  unsigned char buf[16];
  if (RAND_bytes(buf, sizeof buf) != 1) throw std::runtime_error("RAND_bytes failed");
  static const char* hex = "0123456789abcdef";
  std::string out = prefix;
  for (unsigned char c : buf) {
    out += hex[c >> 4];
    out += hex[c & 15];
  }
  return out;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", {{"status", status}, {"message", message}}}});
}

bool all_digits(const std::string& s) {
  return !s.empty() && s.size() < 19 && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string_view format_name(vision::ImageFormat f) {
  switch (f) {
    case vision::ImageFormat::Png: return "png";
    case vision::ImageFormat::Jpeg: return "jpeg";
    case vision::ImageFormat::Unknown: break;
  }
  return "unknown";
}

vision::Image mask_image(const pattern::Mask& m) {
  vision::Image img(m.width, m.height, 0, 0, 0, 0);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (m.at(x, y)) img.set(x, y, 255, 255, 255, 255);
    }
  }
  return img;
}

pattern::Pixel pixel_from(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_object()) throw std::invalid_argument(std::string("missing '") + key + "'");
  return {j[key].at("x").get<int>(), j[key].at("y").get<int>()};
}

pattern::HsvRange range_from(const json& j) {
  pattern::HsvRange r;
  if (j.contains("range")) {
    const auto& o = j["range"];
    r.h = o.value("h", r.h);
    r.s = o.value("s", r.s);
    r.v = o.value("v", r.v);
  }
  return r;
}

struct NotFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Unsupported : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (auto comma = text.find(','); text.rfind("data:", 0) == 0 && comma != std::string_view::npos) {
    text.remove_prefix(comma + 1);
  }
  std::string clean;
  clean.reserve(text.size());
  for (char c : text) {
    if (c != '\n' && c != '\r' && c != ' ' && c != '\t') clean += c;
  }
  if (clean.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::string out(clean.size() / 4 * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
  if (n < 0) throw FormatError("malformed base64");
  std::size_t pad = 0;
  if (!clean.empty() && clean.back() == '=') ++pad;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

struct ApiServer::Impl {
  struct Request {
    std::string id;
    std::vector<pipeline::StageEvent> events;
    bool done = false;
    pipeline::PipelineResponse response;
  };

  struct Session {
    explicit Session(const std::string& id) : state(id), created_at(now_ms()) {}

    pipeline::ConversationState state;
    std::int64_t created_at;
    std::map<std::string, vision::Image> uploads;
    std::vector<std::string> upload_order;

    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::uint64_t> queue;  // front is in flight
    std::uint64_t next_ticket = 0;
    std::uint64_t request_seq = 0;
    std::shared_ptr<Request> current;  // in flight, or the last finished
    bool closed = false;
  };

  explicit Impl(Runtime& rt) : runtime(rt) {}

  Runtime& runtime;
  httplib::Server server;
  int port = -1;
  std::thread listener;

  mutable std::mutex mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::map<std::string, std::string> upload_owner;  // image id -> session id

  std::mutex workers_mu;
  std::condition_variable workers_cv;
  std::size_t workers = 0;

  std::shared_ptr<Session> find(const std::string& id) const {
    std::lock_guard lk(mu);
    auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : it->second;
  }

  std::optional<vision::Image> upload(const std::string& image_id) const {
    std::shared_ptr<Session> s;
    {
      std::lock_guard lk(mu);
      auto it = upload_owner.find(image_id);
      if (it == upload_owner.end()) return std::nullopt;
      auto sit = sessions.find(it->second);
      if (sit == sessions.end()) return std::nullopt;
      s = sit->second;
    }
    std::lock_guard lk(s->mu);
    auto it = s->uploads.find(image_id);
    if (it == s->uploads.end()) return std::nullopt;
    return it->second;
  }

  std::optional<vision::Image> db_image(const std::string& ref) const {
    if (!all_digits(ref)) return std::nullopt;
    const auto id = std::stoll(ref);
    if (!runtime.store().image(id)) return std::nullopt;
    return similarity::render_db_image(runtime.store(), id);
  }

  /// Upload of the given session, or a database image.
  std::optional<vision::Image> session_image(Session& s, const std::string& ref) const {
    {
      std::lock_guard lk(s.mu);
      auto it = s.uploads.find(ref);
      if (it != s.uploads.end()) return it->second;
    }
    return db_image(ref);
  }

  /// Image referenced by a pattern request: inline base64, upload id or database image id.
  vision::Image pattern_source(const json& body) const {
    if (body.contains("image") && body["image"].is_string()) {
      try {
        return vision::decode_image(base64_decode(body["image"].get<std::string>()));
      } catch (const FormatError& e) {
        throw Unsupported(e.what());
      }
    }
    if (!body.contains("image_id")) throw std::invalid_argument("missing 'image' or 'image_id'");
    const auto& ref = body["image_id"];
    const std::string id = ref.is_number_integer() ? std::to_string(ref.get<std::int64_t>()) : ref.get<std::string>();
    if (auto img = upload(id)) return *img;
    if (auto img = db_image(id)) return *img;
    throw NotFound("unknown image '" + id + "'");
  }

  static pattern::SegmentConfig segment_config(const json& body) {
    pattern::SegmentConfig cfg;
    if (body.contains("tolerances")) {
      const auto t = body["tolerances"].get<std::vector<double>>();
      if (t.size() != 3) throw std::invalid_argument("'tolerances' needs three values");
      std::copy(t.begin(), t.end(), cfg.tolerances.begin());
    }
    return cfg;
  }

  pattern::PatternImage extract(const json& body) const {
    const auto img = pattern_source(body);
    const auto seg = pattern::segment(img, pixel_from(body, "seed"), segment_config(body));
    const int choice = body.value("mask", 0);
    if (choice < 0 || choice > 2) throw std::invalid_argument("'mask' must be 0, 1 or 2");
    return pattern::extract_pattern(img, seg.masks[static_cast<std::size_t>(choice)], pixel_from(body, "target"),
                                    range_from(body));
  }

  void routes();
  void post_message(const httplib::Request& req, httplib::Response& res);
  void events(const httplib::Request& req, httplib::Response& res);
  void post_image(const httplib::Request& req, httplib::Response& res);

  /// Runs one evaluate on a tracked background thread.
  void launch(std::shared_ptr<Session> s, std::shared_ptr<Request> r, std::string text,
              std::vector<std::string> attachments);
};

void ApiServer::Impl::launch(std::shared_ptr<Session> s, std::shared_ptr<Request> r, std::string text,
                             std::vector<std::string> attachments) {
  {
    std::lock_guard lk(workers_mu);
    ++workers;
  }
  std::thread([this, s, r, text = std::move(text), attachments = std::move(attachments)] {
    pipeline::ImageLookup lookup = [this, s](const std::string& ref) { return session_image(*s, ref); };
    pipeline::Orchestrator orch(runtime.services(lookup), runtime.evaluate_options());
    auto sink = [&](const pipeline::StageEvent& e) {
      std::lock_guard lk(s->mu);
      r->events.push_back(e);
      s->cv.notify_all();
    };
    // evaluate reports failures as error responses; state is only touched by the front of the queue.
    auto resp = orch.evaluate(s->state, text, attachments, sink);
    {
      std::lock_guard lk(s->mu);
      r->response = std::move(resp);
      r->done = true;
      s->queue.pop_front();
      s->cv.notify_all();
    }
    std::lock_guard lk(workers_mu);
    --workers;
    workers_cv.notify_all();
  }).detach();
}

void ApiServer::Impl::post_message(const httplib::Request& req, httplib::Response& res) {
  const auto start = Clock::now();
  auto s = find(req.matches[1]);
  if (!s) return send_error(res, 404, "unknown session");

  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception&) {
    return send_error(res, 400, "request body is not JSON");
  }
  if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
    return send_error(res, 400, "'text' is required");
  }
  std::vector<std::string> attachments;
  if (body.contains("image_id") && !body["image_id"].is_null()) {
    const auto& ref = body["image_id"];
    const std::string id = ref.is_number_integer() ? std::to_string(ref.get<std::int64_t>()) : ref.get<std::string>();
    if (!session_image(*s, id)) return send_error(res, 404, "unknown image '" + id + "'");
    attachments.push_back(id);
  }

  const auto ceiling = runtime.config().ceiling;
  const auto deadline = start + ceiling;
  auto timeout = [&](const std::string& request_id) {
    auto env = pipeline::PipelineResponse::error(
                   ErrorCategory::PromptEvaluation,
                   "response time ceiling of " + std::to_string(ceiling.count()) + " ms exceeded")
                   .to_json();
    env["request_id"] = request_id;
    env["session_id"] = s->state.session_id();
    env["elapsed_ms"] = since_ms(start);
    send_json(res, 504, env);
  };

  std::unique_lock lk(s->mu);
  if (s->closed) return send_error(res, 404, "unknown session");
  if (s->queue.size() >= runtime.config().queue_depth + 1) {
    return send_error(res, 429, "session queue is full");
  }
  const auto ticket = s->next_ticket++;
  const std::string request_id = s->state.session_id().substr(0, 8) + "-" + std::to_string(++s->request_seq);
  s->queue.push_back(ticket);
  if (!s->cv.wait_until(lk, deadline, [&] { return s->closed || s->queue.front() == ticket; })) {
    s->queue.erase(std::find(s->queue.begin(), s->queue.end(), ticket));
    s->cv.notify_all();
    lk.unlock();
    return timeout(request_id);
  }
  if (s->closed) {
    s->queue.erase(std::find(s->queue.begin(), s->queue.end(), ticket));
    return send_error(res, 404, "unknown session");
  }
  const auto queued_ms = since_ms(start);
  auto r = std::make_shared<Request>();
  r->id = request_id;
  s->current = r;
  s->cv.notify_all();
  lk.unlock();

  launch(s, r, body["text"].get<std::string>(), std::move(attachments));

  lk.lock();
  if (!s->cv.wait_until(lk, deadline, [&] { return r->done; })) {
    lk.unlock();
    return timeout(request_id);
  }
  auto env = r->response.to_json();
  lk.unlock();
  env["request_id"] = request_id;
  env["session_id"] = s->state.session_id();
  env["elapsed_ms"] = since_ms(start);
  env["queued_ms"] = queued_ms;
  send_json(res, 200, env);
}

void ApiServer::Impl::events(const httplib::Request& req, httplib::Response& res) {
  auto s = find(req.matches[1]);
  if (!s) return send_error(res, 404, "unknown session");

  struct Cursor {
    std::shared_ptr<Request> request;
    std::size_t sent = 0;
    std::size_t skip_through = 0;  // Last-Event-ID
  };
  auto cur = std::make_shared<Cursor>();
  if (req.has_header("Last-Event-ID")) {
    try {
      cur->skip_through = std::stoull(req.get_header_value("Last-Event-ID"));
    } catch (const std::exception&) {
    }
  }
  {
    // Follow the in-flight request; otherwise wait for the next one.
    std::lock_guard lk(s->mu);
    if (s->current && !s->current->done) cur->request = s->current;
  }
  const auto previous = [&] {
    std::lock_guard lk(s->mu);
    return s->current;
  }();

  res.set_header("Cache-Control", "no-cache");
  res.set_chunked_content_provider("text/event-stream", [s, cur, previous](std::size_t, httplib::DataSink& sink) {
    std::unique_lock lk(s->mu);
    if (!cur->request) {
      s->cv.wait_for(lk, std::chrono::milliseconds(200),
                     [&] { return s->closed || (s->current && s->current != previous); });
      if (s->closed) {
        lk.unlock();
        sink.done();
        return true;
      }
      if (!s->current || s->current == previous) return true;
      cur->request = s->current;
    }
    auto& r = *cur->request;
    if (cur->sent == r.events.size() && !r.done) {
      s->cv.wait_for(lk, std::chrono::milliseconds(200),
                     [&] { return s->closed || r.done || cur->sent < r.events.size(); });
    }
    std::string out;
    for (; cur->sent < r.events.size(); ++cur->sent) {
      const auto& e = r.events[cur->sent];
      if (e.seq <= cur->skip_through) continue;
      auto data = e.to_json();
      data["request_id"] = r.id;
      out += "id: " + std::to_string(e.seq) + "\nevent: stage\ndata: " + data.dump() + "\n\n";
    }
    const bool finished = r.done || s->closed;
    const std::string request_id = r.id;
    lk.unlock();
    if (!out.empty() && !sink.write(out.data(), out.size())) return false;
    if (finished) {
      const std::string done = "event: done\ndata: " + json{{"request_id", request_id}}.dump() + "\n\n";
      if (!sink.write(done.data(), done.size())) return false;
      sink.done();
    }
    return true;
  });
}

void ApiServer::Impl::post_image(const httplib::Request& req, httplib::Response& res) {
  const auto session_id = req.get_param_value("session_id");
  if (session_id.empty()) return send_error(res, 400, "'session_id' query parameter is required");
  auto s = find(session_id);
  if (!s) return send_error(res, 404, "unknown session");

  std::string part;
  const std::string* bytes = &req.body;
  if (req.is_multipart_form_data()) {
    if (!req.has_file("file")) return send_error(res, 400, "multipart upload needs a 'file' part");
    part = req.get_file_value("file").content;
    bytes = &part;
  }
  if (bytes->size() > runtime.config().upload_cap) {
    return send_error(res, 413, "upload exceeds " + std::to_string(runtime.config().upload_cap) + " bytes");
  }
  const auto format = vision::sniff_format(*bytes);
  if (format == vision::ImageFormat::Unknown) return send_error(res, 415, "only PNG and JPEG uploads are accepted");
  vision::Image img;
  try {
    img = vision::decode_image(*bytes);
  } catch (const FormatError& e) {
    return send_error(res, 415, e.what());
  }

  const auto id = random_id("u");
  {
    std::lock_guard lk(s->mu);
    if (s->closed) return send_error(res, 404, "unknown session");
    s->uploads[id] = img;
    s->upload_order.push_back(id);
  }
  {
    std::lock_guard lk(mu);
    upload_owner[id] = session_id;
  }
  send_json(res, 201, {{"image_id", id}, {"session_id", session_id}, {"width", img.width}, {"height", img.height},
                       {"format", format_name(format)}});
}

void ApiServer::Impl::routes() {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    send_error(res, 500, msg);
  });
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID");
    res.status = 204;
  });

  server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
    std::size_t n;
    {
      std::lock_guard lk(mu);
      n = sessions.size();
    }
    send_json(res, 200, {{"status", "ok"}, {"provider", runtime.config().provider}, {"sessions", n}});
  });

  server.Post("/api/sessions", [this](const httplib::Request&, httplib::Response& res) {
    const auto id = random_id("");
    {
      std::lock_guard lk(mu);
      sessions.emplace(id, std::make_shared<Session>(id));
    }
    send_json(res, 201, {{"session_id", id}});
  });

  server.Get(R"(/api/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto s = find(req.matches[1]);
    if (!s) return send_error(res, 404, "unknown session");
    std::lock_guard lk(s->mu);
    json turns = json::array();
    for (const auto& t : s->state.turns()) {
      turns.push_back({{"role", llm::to_string(t.role)}, {"content", t.content}, {"attachments", t.attachments}});
    }
    const bool in_flight = !s->queue.empty();
    send_json(res, 200,
              {{"session_id", s->state.session_id()},
               {"created_at", s->created_at},
               {"turns", turns},
               {"uploads", s->upload_order},
               {"in_flight", in_flight},
               {"queued", in_flight ? s->queue.size() - 1 : 0}});
  });

  server.Delete(R"(/api/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    std::shared_ptr<Session> s;
    {
      std::lock_guard lk(mu);
      auto it = sessions.find(req.matches[1]);
      if (it == sessions.end()) return send_error(res, 404, "unknown session");
      s = it->second;
      sessions.erase(it);
      for (auto u = upload_owner.begin(); u != upload_owner.end();) {
        u = u->second == s->state.session_id() ? upload_owner.erase(u) : std::next(u);
      }
    }
    std::lock_guard lk(s->mu);
    s->closed = true;
    s->cv.notify_all();
    res.status = 204;
  });

  server.Post(R"(/api/sessions/([0-9a-f]+)/messages)",
              [this](const httplib::Request& req, httplib::Response& res) { post_message(req, res); });
  server.Get(R"(/api/sessions/([0-9a-f]+)/events)",
             [this](const httplib::Request& req, httplib::Response& res) { events(req, res); });
  server.Post("/api/images", [this](const httplib::Request& req, httplib::Response& res) { post_image(req, res); });

  server.Get(R"(/api/images/([0-9]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto id = std::stoll(req.matches[1]);
    const auto rec = runtime.store().image(id);
    if (!rec) return send_error(res, 404, "unknown image");
    json boxes = json::array();
    for (const auto& b : runtime.store().boxes_for_image(id)) {
      json ancestors = json::array();
      if (runtime.taxonomy().contains(b.concept_name)) ancestors = runtime.taxonomy().ancestors(b.concept_name);
      boxes.push_back({{"id", b.id},
                       {"concept", b.concept_name},
                       {"x", b.x},
                       {"y", b.y},
                       {"width", b.width},
                       {"height", b.height},
                       {"taxonomy", ancestors}});
    }
    send_json(res, 200,
              {{"id", rec->id},
               {"url", rec->url},
               {"latitude", rec->latitude},
               {"longitude", rec->longitude},
               {"depth_meters", rec->depth_meters},
               {"temperature_celsius", rec->temperature_celsius},
               {"pressure_dbar", rec->pressure_dbar},
               {"salinity", rec->salinity},
               {"oxygen_ml_l", rec->oxygen_ml_l},
               {"timestamp", rec->timestamp},
               {"observer", rec->observer},
               {"boxes", boxes}});
  });

  server.Get(R"(/api/images/([A-Za-z0-9]+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    auto img = upload(id);
    if (!img) img = db_image(id);
    if (!img) return send_error(res, 404, "unknown image");
    res.set_content(vision::encode_png(*img), "image/png");
  });

  server.Get(R"(/api/taxonomy/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string concept_name = req.matches[1];
    const auto& tax = runtime.taxonomy();
    if (!tax.contains(concept_name)) return send_error(res, 404, "unknown taxon: " + concept_name);
    const auto& node = tax.node(concept_name);
    const auto tree = tax.render_tree(concept_name);
    send_json(res, 200,
              {{"concept", node.name},
               {"rank", node.rank},
               {"ancestors", tax.ancestors(concept_name)},
               {"children", node.children},
               {"text", tree.text},
               {"tree", tree.tree}});
  });

  // Pattern endpoints share argument handling; failures map to status codes here.
  auto pattern_route = [this](const std::string& path, std::function<json(const json&)> fn) {
    server.Post(path, [fn](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception&) {
        return send_error(res, 400, "request body is not JSON");
      }
      try {
        send_json(res, 200, fn(body));
      } catch (const NotFound& e) {
        send_error(res, 404, e.what());
      } catch (const Unsupported& e) {
        send_error(res, 415, e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, e.what());
      } catch (const std::invalid_argument& e) {
        send_error(res, 400, e.what());
      } catch (const std::out_of_range& e) {
        send_error(res, 400, e.what());
      }
    });
  };

  pattern_route("/api/pattern/segment", [this](const json& body) {
    const auto img = pattern_source(body);
    const auto seg = pattern::segment(img, pixel_from(body, "seed"), segment_config(body));
    static const char* labels[] = {"tight", "medium", "loose"};
    json masks = json::array();
    for (std::size_t i = 0; i < seg.masks.size(); ++i) {
      masks.push_back({{"index", i},
                       {"label", labels[i]},
                       {"count", seg.masks[i].count()},
                       {"png", base64_encode(vision::encode_png(mask_image(seg.masks[i])))}});
    }
    return json{{"width", img.width}, {"height", img.height}, {"seed", {{"x", seg.seed.x}, {"y", seg.seed.y}}},
                {"masks", masks}};
  });

  pattern_route("/api/pattern/extract", [this](const json& body) {
    const auto p = extract(body);
    return json{{"png", base64_encode(vision::encode_png(p.image))},
                {"width", p.image.width},
                {"height", p.image.height},
                {"offset_x", p.offset_x},
                {"offset_y", p.offset_y},
                {"selected", p.selected}};
  });

  pattern_route("/api/pattern/search", [this](const json& body) {
    vision::Image pat;
    if (body.contains("pattern")) {
      try {
        pat = vision::decode_image(base64_decode(body["pattern"].get<std::string>()));
      } catch (const FormatError& e) {
        throw Unsupported(e.what());
      }
    } else {
      pat = extract(body).image;
    }
    const auto k = body.value("k", std::size_t{10});
    if (k == 0) throw std::invalid_argument("'k' must be positive");
    json hits = json::array();
    for (const auto& h : pattern::search_pattern(pat, runtime.index(), runtime.store(), k)) {
      hits.push_back({{"bounding_box_id", h.bounding_box_id},
                      {"image_id", h.image_id},
                      {"concept", h.concept_name},
                      {"x", h.x},
                      {"y", h.y},
                      {"width", h.width},
                      {"height", h.height},
                      {"distance", h.distance}});
    }
    return json{{"k", k}, {"hits", hits}};
  });
}

ApiServer::ApiServer(Runtime& runtime) : impl_(std::make_unique<Impl>(runtime)) {
  impl_->server.new_task_queue = [] { return new httplib::ThreadPool(32); };
  // Pattern requests carry base64 images, a third larger than the raw upload cap.
  const auto cap = runtime.config().upload_cap;
  impl_->server.set_payload_max_length(cap + cap / 2 + (64u << 10));
  impl_->routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return impl_->port;
}

void ApiServer::listen() {
  if (impl_->port < 0) throw std::logic_error("bind() before listen()");
  impl_->server.listen_after_bind();
}

int ApiServer::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ApiServer::stop() {
  {
    // Wake any event streams and queued messages.
    std::lock_guard lk(impl_->mu);
    for (auto& [id, s] : impl_->sessions) {
      std::lock_guard slk(s->mu);
      s->closed = true;
      s->cv.notify_all();
    }
  }
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
  std::unique_lock lk(impl_->workers_mu);
  impl_->workers_cv.wait(lk, [&] { return impl_->workers == 0; });
}

std::size_t ApiServer::session_count() const {
  std::lock_guard lk(impl_->mu);
  return impl_->sessions.size();
}

}  // namespace oceanql::service
