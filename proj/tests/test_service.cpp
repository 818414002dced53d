#include <doctest.h>

// Before httplib: its <resolv.h> defines _res, which breaks Eigen.
#include "qna/service.hpp"
#include "support/models.hpp"

#include <httplib.h>
#include <rapidjson/document.h>
#include <rapidjson/schema.h>
#include <rapidjson/stringbuffer.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

using namespace qna;
using namespace qna::service;
using nlohmann::json;

namespace {

const std::string kDoc =
    "The Harrow Canal was opened in 1794 by Elsa Marrow. It carried coal from Dunmere to the coast.";

/// Validates documents against one of the published schemas.
class Schema {
 public:
  explicit Schema(const std::string& name) {
    std::ifstream in(std::string(QNA_SCHEMAS) + "/" + name + ".json");
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    rapidjson::Document d;
    d.Parse(ss.str().c_str());
    REQUIRE_FALSE(d.HasParseError());
    schema_ = std::make_unique<rapidjson::SchemaDocument>(d);
  }

  bool accepts(const json& j) const {
    rapidjson::Document d;
    d.Parse(j.dump().c_str());
    rapidjson::SchemaValidator v(*schema_);
    if (d.Accept(v)) return true;
    rapidjson::StringBuffer sb;
    v.GetInvalidSchemaPointer().StringifyUriFragment(sb);
    MESSAGE("schema violation at " << std::string(sb.GetString()) << " keyword "
                                   << std::string(v.GetInvalidSchemaKeyword()) << " in " << j.dump());
    return false;
  }

 private:
  std::unique_ptr<rapidjson::SchemaDocument> schema_;
};

std::shared_ptr<const ModelBundle> bundle(std::uint32_t seed) {
  return make_bundle(fixtures::random_qa(seed), fixtures::random_qg(seed + 1));
}

ServiceConfig small_config() {
  ServiceConfig c;
  c.beam_size = 2;
  c.max_request_chars = 2000;
  c.request_timeout_seconds = 60;
  return c;
}

struct Running {
  Service service;
  HttpServer server;
  int port;
  httplib::Client client;

  explicit Running(ServiceConfig c = small_config())
      : service(std::move(c)), server(service), port(server.start("127.0.0.1", 0)), client("127.0.0.1", port) {
    client.set_read_timeout(120, 0);
  }
};

json body(const httplib::Result& r) { return json::parse(r->body); }

}  // namespace

TEST_CASE("config json") {
  ServiceConfig c;
  CHECK_NOTHROW(c.validate());
  const auto back = ServiceConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.port == 8080);
  CHECK(back.overlap_threshold == 0.6);
  CHECK_THROWS_AS(ServiceConfig::from_json({{"prot", 1}}), ConfigError);
  CHECK_THROWS_AS(ServiceConfig::from_json({{"port", "x"}}), ConfigError);
  CHECK_THROWS_AS(ServiceConfig::from_json({{"max_in_flight", 0}}), ConfigError);
  CHECK_THROWS_AS(ServiceConfig::from_json({{"overlap_threshold", 2.0}}), ConfigError);
  CHECK_THROWS_AS(ServiceConfig::from_json({{"syntax_provider", "nope"}}), ConfigError);
}

TEST_CASE("config file and environment overrides") {
  const auto path = std::filesystem::temp_directory_path() / "qna_service_config.json";
  {
    std::ofstream out(path);
    out << R"({"port": 9000, "qa_checkpoint": "a.ckpt", "qg_checkpoint": "b.ckpt"})";
  }
  auto c = ServiceConfig::load(path);
  CHECK(c.port == 9000);
  ::setenv("QNA_QA_CKPT", "env_qa.ckpt", 1);
  ::setenv("QNA_PORT", "9123", 1);
  c.apply_env();
  CHECK(c.qa_checkpoint == "env_qa.ckpt");
  CHECK(c.qg_checkpoint == "b.ckpt");
  CHECK(c.port == 9123);
  ::setenv("QNA_PORT", "eighty", 1);
  CHECK_THROWS_AS(c.apply_env(), ConfigError);
  ::unsetenv("QNA_QA_CKPT");
  ::unsetenv("QNA_PORT");
  std::filesystem::remove(path);
  CHECK_THROWS(ServiceConfig::load("/nonexistent/config.json"));
}

TEST_CASE("work queue admits in FIFO order") {
  WorkQueue q(1, 8);
  REQUIRE(q.acquire(std::chrono::milliseconds(10)) == WorkQueue::Admission::Admitted);
  std::mutex m;
  std::vector<int> order;
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&, i] {
      REQUIRE(q.acquire(std::chrono::seconds(30)) == WorkQueue::Admission::Admitted);
      {
        std::lock_guard lock(m);
        order.push_back(i);
      }
      q.release();
    });
    while (q.waiting() < static_cast<std::size_t>(i + 1)) std::this_thread::yield();
  }
  q.release();
  for (auto& t : threads) t.join();
  CHECK(order == std::vector<int>{0, 1, 2, 3});
  CHECK(q.in_flight() == 0);
}

TEST_CASE("work queue rejects when full and times out") {
  WorkQueue q(1, 1);
  REQUIRE(q.acquire(std::chrono::milliseconds(10)) == WorkQueue::Admission::Admitted);
  auto waiter = std::async(std::launch::async, [&] { return q.acquire(std::chrono::milliseconds(300)); });
  while (q.waiting() < 1) std::this_thread::yield();
  CHECK(q.acquire(std::chrono::milliseconds(10)) == WorkQueue::Admission::Full);
  CHECK(waiter.get() == WorkQueue::Admission::TimedOut);
  CHECK(q.waiting() == 0);
  q.release();
  CHECK(q.acquire(std::chrono::milliseconds(10)) == WorkQueue::Admission::Admitted);
  q.release();
}

TEST_CASE("requests are validated before models are needed") {
  Service s(small_config());
  const Schema error("error");
  auto expect = [&](const Response& r, int status, const std::string& code) {
    CHECK(r.status == status);
    CHECK(r.body["code"] == code);
    CHECK(error.accepts(r.body));
  };
  expect(s.catalog("{"), 400, "invalid_json");
  expect(s.catalog("[1,2]"), 400, "invalid_json");
  expect(s.catalog("{}"), 400, "missing_field");
  expect(s.catalog(R"({"text": 3})"), 400, "missing_field");
  expect(s.catalog(R"({"text": "  \n "})"), 400, "empty_text");
  expect(s.catalog(json{{"text", std::string(2001, 'a')}}.dump()), 400, "text_too_large");
  expect(s.catalog(json{{"text", kDoc}}.dump()), 503, "models_unavailable");
  expect(s.answer(R"({"text": "x"})"), 400, "missing_field");
  expect(s.answer(R"({"question": "x"})"), 400, "missing_field");
  expect(s.answer(json{{"text", kDoc}, {"question", "Who?"}}.dump()), 503, "models_unavailable");
  CHECK(s.health().status == 503);
  CHECK(s.health().body["status"] == "loading");
  CHECK(Schema("health_response").accepts(s.health().body));
}

TEST_CASE("text with no words is unprocessable") {
  Service s(small_config());
  s.swap_models(bundle(1));
  const auto r = s.catalog(R"({"text": "... !!! ???"})");
  CHECK(r.status == 422);
  CHECK(r.body["code"] == "no_sentences");
}

TEST_CASE("responses match the published schemas") {
  Service s(small_config());
  s.swap_models(bundle(1));
  const auto cat = s.catalog(json{{"text", kDoc}}.dump());
  REQUIRE(cat.status == 200);
  CHECK(Schema("catalog_response").accepts(cat.body));
  const auto ans = s.answer(json{{"text", kDoc}, {"question", "Who opened the canal?"}}.dump());
  REQUIRE(ans.status == 200);
  CHECK(Schema("answer_response").accepts(ans.body));
  CHECK(ans.body["answerable"].get<bool>() == ans.body["answer"].is_string());
  const auto h = s.health();
  CHECK(h.status == 200);
  CHECK(Schema("health_response").accepts(h.body));
  CHECK(Schema("catalog_request").accepts({{"text", kDoc}}));
  CHECK_FALSE(Schema("catalog_request").accepts({{"text", ""}}));
  CHECK(Schema("answer_request").accepts({{"text", kDoc}, {"question", "Who?"}}));
  CHECK_FALSE(Schema("answer_request").accepts({{"text", kDoc}}));
}

TEST_CASE("hot swap changes the reported versions") {
  Service s(small_config());
  s.swap_models(bundle(1));
  const auto v1 = s.health().body["model_versions"];
  const auto held = s.models();
  s.swap_models(bundle(7));
  const auto v2 = s.health().body["model_versions"];
  CHECK(v1 != v2);
  CHECK(v1["qa"]["fingerprint"] != v2["qa"]["fingerprint"]);
  // A request that captured the old bundle keeps it alive.
  CHECK(held->versions == v1);
}

TEST_CASE("load_models reads configured checkpoints") {
  const auto dir = std::filesystem::temp_directory_path() / "qna_service_ckpt";
  std::filesystem::create_directories(dir);
  fixtures::random_qa(1).save(dir / "qa.ckpt");
  fixtures::random_qg(2).save(dir / "qg.ckpt");
  auto c = small_config();
  c.qa_checkpoint = (dir / "qa.ckpt").string();
  c.qg_checkpoint = (dir / "qg.ckpt").string();
  Service s(c);
  CHECK(s.health().status == 503);
  s.load_models();
  CHECK(s.health().status == 200);
  CHECK(s.health().body["model_versions"] == bundle(1)->versions);
  Service missing(small_config());
  CHECK_THROWS(missing.load_models());
  std::filesystem::remove_all(dir);
}

TEST_CASE("http endpoints and CORS") {
  auto c = small_config();
  c.cors_origin = "http://localhost:5173";
  Running r(c);
  auto h = r.client.Get("/api/health");
  REQUIRE(h);
  CHECK(h->status == 503);
  CHECK(h->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  r.service.swap_models(bundle(1));
  h = r.client.Get("/api/health");
  CHECK(h->status == 200);
  CHECK(body(h)["status"] == "ok");

  auto pre = r.client.Options("/api/catalog");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
  CHECK(pre->get_header_value("Access-Control-Allow-Headers").find("Content-Type") != std::string::npos);

  auto cat = r.client.Post("/api/catalog", json{{"text", kDoc}}.dump(), "application/json");
  REQUIRE(cat);
  CHECK(cat->status == 200);
  CHECK(cat->get_header_value("Content-Type") == "application/json");
  CHECK(cat->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  CHECK(Schema("catalog_response").accepts(body(cat)));

  auto bad = r.client.Post("/api/catalog", "{oops", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(body(bad)["code"] == "invalid_json");
  CHECK(bad->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");

  auto ans = r.client.Post("/api/answer", json{{"text", kDoc}, {"question", "What did it carry?"}}.dump(),
                           "application/json");
  REQUIRE(ans);
  CHECK(ans->status == 200);
  CHECK(Schema("answer_response").accepts(body(ans)));

  auto missing = r.client.Get("/api/nothing");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(body(missing)["code"] == "not_found");
}

TEST_CASE("concurrent identical requests get identical answers") {
  auto c = small_config();
  c.max_in_flight = 2;
  Running r(c);
  r.service.swap_models(bundle(1));
  const auto payload = json{{"text", kDoc}}.dump();
  std::vector<std::future<std::string>> futures;
  for (int i = 0; i < 4; ++i)
    futures.push_back(std::async(std::launch::async, [&] {
      httplib::Client cl("127.0.0.1", r.port);
      cl.set_read_timeout(120, 0);
      auto res = cl.Post("/api/catalog", payload, "application/json");
      return res && res->status == 200 ? res->body : std::string("failed");
    }));
  std::vector<std::string> bodies;
  for (auto& f : futures) bodies.push_back(f.get());
  for (const auto& b : bodies) {
    CHECK(b != "failed");
    CHECK(b == bodies[0]);
  }
}

TEST_CASE("busy service answers 503 when the queue is full") {
  auto c = small_config();
  c.max_in_flight = 1;
  c.max_queue = 0;
  Service s(c);
  s.swap_models(bundle(1));
  REQUIRE(s.queue().acquire(std::chrono::milliseconds(10)) == WorkQueue::Admission::Admitted);
  const auto r = s.catalog(json{{"text", kDoc}}.dump());
  CHECK(r.status == 503);
  CHECK(r.body["code"] == "queue_full");
  s.queue().release();
  CHECK(s.catalog(json{{"text", kDoc}}.dump()).status == 200);
}
