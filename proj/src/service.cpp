#include "qna/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "qna/candidates.hpp"
#include "qna/checkpoint.hpp"
#include "qna/text.hpp"

namespace qna::service {

using nlohmann::json;

void ServiceConfig::validate() const {
  if (chunk_size < 1) throw ConfigError("chunk_size must be >= 1");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (port < 0 || port > 65535) throw ConfigError("port out of range");
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (max_request_chars < 1) throw ConfigError("max_request_chars must be >= 1");
  if (!(request_timeout_seconds > 0.0)) throw ConfigError("request_timeout_seconds must be positive");
  if (!(overlap_threshold >= 0.0 && overlap_threshold <= 1.0)) throw ConfigError("overlap_threshold must be in [0, 1]");
  if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
  const auto names = candidates::provider_names();
  if (std::find(names.begin(), names.end(), syntax_provider) == names.end())
    throw ConfigError("unknown syntax provider: " + syntax_provider);
}

json ServiceConfig::to_json() const {
  return {{"host", host},
          {"port", port},
          {"qa_checkpoint", qa_checkpoint},
          {"qg_checkpoint", qg_checkpoint},
          {"chunk_size", chunk_size},
          {"top_k", top_k},
          {"max_request_chars", max_request_chars},
          {"request_timeout_seconds", request_timeout_seconds},
          {"max_in_flight", max_in_flight},
          {"max_queue", max_queue},
          {"cors_origin", cors_origin},
          {"syntax_provider", syntax_provider},
          {"overlap_threshold", overlap_threshold},
          {"beam_size", beam_size}};
}

ServiceConfig ServiceConfig::from_json(const json& j) {
  static const std::vector<std::string> known{"host",          "port",          "qa_checkpoint",
                                              "qg_checkpoint", "chunk_size",    "top_k",
                                              "max_request_chars", "request_timeout_seconds",
                                              "max_in_flight", "max_queue",     "cors_origin",
                                              "syntax_provider", "overlap_threshold", "beam_size"};
  if (!j.is_object()) throw ConfigError("service config must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown service config key: " + k);
  ServiceConfig c;
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.qa_checkpoint = j.value("qa_checkpoint", c.qa_checkpoint);
    c.qg_checkpoint = j.value("qg_checkpoint", c.qg_checkpoint);
    c.chunk_size = j.value("chunk_size", c.chunk_size);
    c.top_k = j.value("top_k", c.top_k);
    c.max_request_chars = j.value("max_request_chars", c.max_request_chars);
    c.request_timeout_seconds = j.value("request_timeout_seconds", c.request_timeout_seconds);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.max_queue = j.value("max_queue", c.max_queue);
    c.cors_origin = j.value("cors_origin", c.cors_origin);
    c.syntax_provider = j.value("syntax_provider", c.syntax_provider);
    c.overlap_threshold = j.value("overlap_threshold", c.overlap_threshold);
    c.beam_size = j.value("beam_size", c.beam_size);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad service config: ") + e.what());
  }
  c.validate();
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read service config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("service config is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

void ServiceConfig::apply_env() {
  if (const char* v = std::getenv("QNA_QA_CKPT"); v && *v) qa_checkpoint = v;
  if (const char* v = std::getenv("QNA_QG_CKPT"); v && *v) qg_checkpoint = v;
  if (const char* v = std::getenv("QNA_PORT"); v && *v) {
    try {
      port = std::stoi(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string("QNA_PORT is not a number: ") + v);
    }
  }
  validate();
}

Response error_response(int status, const std::string& code, const std::string& message) {
  return {status, {{"code", code}, {"message", message}}};
}

namespace {

json model_version(const nlohmann::json& metadata, const checkpoint::Archive& archive) {
  json v{{"fingerprint", checkpoint::fingerprint(archive)}};
  if (metadata.contains("version")) v["version"] = metadata["version"];
  if (metadata.contains("regime")) v["regime"] = metadata["regime"];
  return v;
}

}  // namespace

std::shared_ptr<const ModelBundle> make_bundle(qa::QAModel qa_model, qg::QGModel qg_model) {
  auto b = std::make_shared<ModelBundle>();
  b->versions = {{"qa", model_version(qa_model.metadata, qa_model.to_archive())},
                 {"qg", model_version(qg_model.metadata, qg_model.to_archive())}};
  b->qa = std::make_shared<const qa::QAModel>(std::move(qa_model));
  b->qg = std::make_shared<const qg::QGModel>(std::move(qg_model));
  return b;
}

std::shared_ptr<const ModelBundle> load_bundle(const std::string& qa_checkpoint, const std::string& qg_checkpoint) {
  if (qa_checkpoint.empty() || qg_checkpoint.empty())
    throw ConfigError("both QA and QG checkpoints must be configured");
  return make_bundle(qa::QAModel::load(qa_checkpoint), qg::QGModel::load(qg_checkpoint));
}

// ---------------------------------------------------------------------------

WorkQueue::WorkQueue(std::size_t limit, std::size_t capacity) : limit_(limit), capacity_(capacity) {}

WorkQueue::Admission WorkQueue::acquire(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  if (waiters_.empty() && in_flight_ < limit_) {
    ++in_flight_;
    return Admission::Admitted;
  }
  if (waiters_.size() >= capacity_) return Admission::Full;
  const auto id = next_id_++;
  waiters_.push_back(id);
  const bool ok = cv_.wait_for(lock, timeout, [&] { return waiters_.front() == id && in_flight_ < limit_; });
  if (!ok) {
    waiters_.erase(std::find(waiters_.begin(), waiters_.end(), id));
    cv_.notify_all();
    return Admission::TimedOut;
  }
  waiters_.pop_front();
  ++in_flight_;
  cv_.notify_all();
  return Admission::Admitted;
}

void WorkQueue::release() {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  cv_.notify_all();
}

std::size_t WorkQueue::in_flight() const {
  std::lock_guard lock(mutex_);
  return in_flight_;
}

std::size_t WorkQueue::waiting() const {
  std::lock_guard lock(mutex_);
  return waiters_.size();
}

// ---------------------------------------------------------------------------

Service::Service(ServiceConfig config)
    : config_(std::move(config)), queue_(config_.max_in_flight, config_.max_queue) {
  config_.validate();
  // Fail at startup rather than on the first request.
  return_provider(candidates::make_provider(config_.syntax_provider));
}

Service::~Service() = default;

void Service::load_models() { swap_models(load_bundle(config_.qa_checkpoint, config_.qg_checkpoint)); }

void Service::swap_models(std::shared_ptr<const ModelBundle> bundle) {
  std::lock_guard lock(models_mutex_);
  models_ = std::move(bundle);
}

std::shared_ptr<const ModelBundle> Service::models() const {
  std::lock_guard lock(models_mutex_);
  return models_;
}

std::unique_ptr<syntax::SyntaxProvider> Service::checkout_provider() {
  {
    std::lock_guard lock(providers_mutex_);
    if (!providers_.empty()) {
      auto p = std::move(providers_.back());
      providers_.pop_back();
      return p;
    }
  }
  return candidates::make_provider(config_.syntax_provider);
}

void Service::return_provider(std::unique_ptr<syntax::SyntaxProvider> p) {
  std::lock_guard lock(providers_mutex_);
  providers_.push_back(std::move(p));
}

std::optional<Response> Service::admit() {
  const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(config_.request_timeout_seconds * 1000));
  switch (queue_.acquire(timeout)) {
    case WorkQueue::Admission::Admitted: return std::nullopt;
    case WorkQueue::Admission::Full: return error_response(503, "queue_full", "too many requests waiting");
    case WorkQueue::Admission::TimedOut: return error_response(503, "timeout", "timed out waiting for a worker");
  }
  return error_response(500, "internal", "unreachable");
}

namespace {

struct Release {
  WorkQueue& q;
  ~Release() { q.release(); }
};

std::optional<json> parse_body(const std::string& body, Response& err) {
  try {
    auto j = json::parse(body);
    if (!j.is_object()) {
      err = error_response(400, "invalid_json", "request body must be a JSON object");
      return std::nullopt;
    }
    return j;
  } catch (const json::exception&) {
    err = error_response(400, "invalid_json", "request body is not valid JSON");
    return std::nullopt;
  }
}

std::optional<std::string> string_field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

bool has_word(std::string_view s) {
  const auto toks = text::tokenize_words(s);
  return std::any_of(toks.begin(), toks.end(), [](const text::Token& t) {
    return std::any_of(t.text.begin(), t.text.end(),
                       [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || (c & 0x80); });
  });
}

}  // namespace

Response Service::catalog(const std::string& body) {
  Response err;
  const auto j = parse_body(body, err);
  if (!j) return err;
  const auto text = string_field(*j, "text");
  if (!text) return error_response(400, "missing_field", "field 'text' (string) is required");
  if (text::trim(*text).empty()) return error_response(400, "empty_text", "text is empty");
  if (text->size() > config_.max_request_chars)
    return error_response(400, "text_too_large",
                          "text exceeds " + std::to_string(config_.max_request_chars) + " characters");
  const auto bundle = models();
  if (!bundle) return error_response(503, "models_unavailable", "models are not loaded");
  if (auto rejected = admit()) return *rejected;
  Release release{queue_};

  auto provider = checkout_provider();
  try {
    const auto sentences = candidates::segment_sentences(*text, *provider);
    if (std::none_of(sentences.begin(), sentences.end(), [](const syntax::Sentence& s) { return has_word(s.text); })) {
      return_provider(std::move(provider));
      return error_response(422, "no_sentences", "no sentences could be extracted from the text");
    }
    pipeline::CatalogConfig cfg;
    cfg.filter.overlap_threshold = config_.overlap_threshold;
    cfg.beam.beam_size = config_.beam_size;
    const auto result = pipeline::generate_catalog(*text, *bundle->qg, *bundle->qa, *provider, cfg);
    return_provider(std::move(provider));
    json items = json::array();
    for (const auto& it : result.items) items.push_back(pipeline::item_to_json(it));
    return {200, {{"items", items}, {"warnings", result.diagnostics.messages}}};
  } catch (const std::exception& e) {
    // A provider that threw may be in a bad state; drop it.
    return error_response(500, "internal", e.what());
  }
}

Response Service::answer(const std::string& body) {
  Response err;
  const auto j = parse_body(body, err);
  if (!j) return err;
  const auto text = string_field(*j, "text");
  const auto question = string_field(*j, "question");
  if (!text || text::trim(*text).empty()) return error_response(400, "missing_field", "field 'text' is required");
  if (!question || text::trim(*question).empty())
    return error_response(400, "missing_field", "field 'question' is required");
  if (text->size() > config_.max_request_chars)
    return error_response(400, "text_too_large",
                          "text exceeds " + std::to_string(config_.max_request_chars) + " characters");
  const auto bundle = models();
  if (!bundle) return error_response(503, "models_unavailable", "models are not loaded");
  if (auto rejected = admit()) return *rejected;
  Release release{queue_};

  try {
    const auto doc = corpus::document_from_text("request", *text, config_.chunk_size);
    if (doc.paragraphs.empty()) return error_response(400, "missing_field", "field 'text' has no tokens");
    retrieval::RetrievalConfig rc;
    rc.k = std::min(config_.top_k, doc.paragraphs.size());
    const auto pred = bundle->qa->predict(*question, doc, rc);
    if (!pred.answerable)
      return {200, {{"answerable", false}, {"answer", nullptr}, {"score", pred.score}, {"message", "no_answer_found"}}};
    return {200, {{"answerable", true}, {"answer", pred.answer_text}, {"score", pred.score}}};
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

Response Service::health() const {
  const auto bundle = models();
  if (!bundle) return {503, {{"status", "loading"}, {"model_versions", nullptr}}};
  return {200, {{"status", "ok"}, {"model_versions", bundle->versions}}};
}

// ---------------------------------------------------------------------------

HttpServer::HttpServer(Service& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  const std::string origin = service_.config().cors_origin;
  s.set_default_headers({{"Access-Control-Allow-Origin", origin},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Vary", "Origin"}});
  s.set_payload_max_length(service_.config().max_request_chars * 8 + 4096);
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
  };
  s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  s.Post("/api/catalog", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.catalog(req.body));
  });
  s.Post("/api/answer", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.answer(req.body));
  });
  s.Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, service_.health()); });
  s.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
    if (res.status == 404) send(res, error_response(404, "not_found", "no such endpoint"));
    else if (res.status == 413) send(res, error_response(400, "text_too_large", "request body too large"));
  });
  s.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    send(res, error_response(500, "internal", msg));
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

bool HttpServer::listen(const std::string& host, int port) { return server_->listen(host, port); }

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace qna::service
