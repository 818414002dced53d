#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "qna/pipeline.hpp"
#include "qna/qa_engine.hpp"
#include "qna/qg_engine.hpp"

namespace httplib {
class Server;
}

namespace qna::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string qa_checkpoint;
  std::string qg_checkpoint;
  std::size_t chunk_size = 300;
  std::size_t top_k = 4;
  std::size_t max_request_chars = 100000;
  double request_timeout_seconds = 120.0;
  /// Inference requests running at once; the rest wait in FIFO order.
  std::size_t max_in_flight = 1;
  std::size_t max_queue = 64;
  std::string cors_origin = "*";
  std::string syntax_provider = "desk";
  double overlap_threshold = 0.6;
  std::size_t beam_size = 5;

  void validate() const;
  nlohmann::json to_json() const;
  static ServiceConfig from_json(const nlohmann::json& j);
  static ServiceConfig load(const std::filesystem::path& path);
  /// QNA_QA_CKPT, QNA_QG_CKPT and QNA_PORT override the file values.
  void apply_env();
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

Response error_response(int status, const std::string& code, const std::string& message);

/// Loaded checkpoints; never modified after construction.
struct ModelBundle {
  std::shared_ptr<const qa::QAModel> qa;
  std::shared_ptr<const qg::QGModel> qg;
  nlohmann::json versions;  // {"qa": ..., "qg": ...}
};

std::shared_ptr<const ModelBundle> load_bundle(const std::string& qa_checkpoint, const std::string& qg_checkpoint);
std::shared_ptr<const ModelBundle> make_bundle(qa::QAModel qa_model, qg::QGModel qg_model);

/// Bounded FIFO admission: at most `limit` holders at once, at most
/// `capacity` waiters.
class WorkQueue {
 public:
  WorkQueue(std::size_t limit, std::size_t capacity);

  enum class Admission { Admitted, Full, TimedOut };
  Admission acquire(std::chrono::milliseconds timeout);
  void release();

  std::size_t in_flight() const;
  std::size_t waiting() const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::uint64_t> waiters_;
  std::uint64_t next_id_ = 0;
  std::size_t in_flight_ = 0;
  std::size_t limit_;
  std::size_t capacity_;
};

/// Endpoint logic, independent of the HTTP transport.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  /// Loads the configured checkpoints (blocking). Health reports 503 until
  /// this returns.
  void load_models();
  /// Atomically replaces the models served to subsequent requests.
  void swap_models(std::shared_ptr<const ModelBundle> bundle);
  std::shared_ptr<const ModelBundle> models() const;

  Response catalog(const std::string& body);
  Response answer(const std::string& body);
  Response health() const;

  const ServiceConfig& config() const { return config_; }
  WorkQueue& queue() { return queue_; }

 private:
  std::unique_ptr<syntax::SyntaxProvider> checkout_provider();
  void return_provider(std::unique_ptr<syntax::SyntaxProvider> p);
  std::optional<Response> admit();

  ServiceConfig config_;
  mutable std::mutex models_mutex_;
  std::shared_ptr<const ModelBundle> models_;
  WorkQueue queue_;
  std::mutex providers_mutex_;
  std::vector<std::unique_ptr<syntax::SyntaxProvider>> providers_;
};

/// HTTP front end with CORS for the configured origin.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();

 private:
  Service& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace qna::service
