#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "metaflow/bpe_tokenizer.hpp"
#include "metaflow/evaluator.hpp"
#include "metaflow/generation_flow.hpp"
#include "metaflow/lm/model.hpp"

namespace httplib {
class Server;
}

namespace metaflow {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path checkpoint;
  std::filesystem::path encoder;  // encoder.json
  std::filesystem::path merges;   // vocab.bpe
  int top_k = 40;
  double temperature = 1.0;
  std::optional<int> max_new_tokens;
  std::chrono::milliseconds request_timeout{30000};  // longest wait for a generation slot
  int max_concurrent = 1;
  int http_threads = 8;
  std::string embedding_url;  // empty: /api/score reports ROUGE only

  // Throws InvalidArgument.
  void validate() const;
};

// Tables [server], [model], [sampling], [eval]. Relative paths resolve
// against `base_dir`. Throws FormatError or InvalidArgument.
ServiceConfig parse_service_config(std::string_view toml_text, const std::filesystem::path& base_dir = {});
ServiceConfig load_service_config(const std::filesystem::path& path);

// The explicit path when given, else $METAFLOW_CONFIG, else nothing.
std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::filesystem::path>& explicit_path);

/// Counting gate that admits waiters strictly in arrival order.
class AdmissionQueue {
 public:
  explicit AdmissionQueue(int max_concurrent);

  // False when no slot opened within `timeout`; the caller then holds nothing.
  bool acquire(std::chrono::milliseconds timeout);
  void release();

  int active() const;
  std::size_t waiting() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int max_;
  int active_ = 0;
  std::uint64_t next_ticket_ = 0;
  std::deque<std::uint64_t> queue_;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
  int retry_after_s = 0;  // set on 503
};

/// The HTTP API as a plain function of method, path and body, so it can be
/// served by any transport and tested without sockets.
class Api {
 public:
  Api(const LanguageModel& model, const Tokenizer& tokenizer, const EmbeddingProvider* provider, ServiceConfig config,
      nlohmann::json model_config);

  ApiResponse handle(std::string_view method, std::string_view path, std::string_view body);
  AdmissionQueue& admission() { return admission_; }

 private:
  ApiResponse generate(const nlohmann::json& body);
  ApiResponse map(const nlohmann::json& body);
  ApiResponse flow(const nlohmann::json& body);
  ApiResponse score(const nlohmann::json& body);
  ApiResponse health() const;
  template <class Fn>
  ApiResponse admitted(Fn&& fn);
  std::uint64_t fresh_seed();

  const LanguageModel* model_;
  const Tokenizer* tokenizer_;
  const EmbeddingProvider* provider_;
  ServiceConfig config_;
  nlohmann::json model_config_;
  AdmissionQueue admission_;
  std::mutex seed_mu_;
  std::mt19937_64 seed_rng_;
};

/// httplib transport for an Api.
class HttpServer {
 public:
  HttpServer(Api& api, int threads);
  ~HttpServer();

  // Port 0 picks a free port. Returns the bound port. Throws FileError.
  int bind(const std::string& host, int port);
  // Serves until stop().
  void listen();
  void stop();
  void wait_until_ready();

 private:
  std::unique_ptr<httplib::Server> server_;
};

/// Checkpoint, tokenizer and provider loaded for serving; immovable because
/// the model adapter points into it.
struct ServiceRuntime {
  Tokenizer tokenizer;
  lm::Model params;
  TransformerLM model;
  std::unique_ptr<EmbeddingProvider> provider;

  ServiceRuntime(Tokenizer tok, lm::Model p) : tokenizer(std::move(tok)), params(std::move(p)), model(params) {}
  ServiceRuntime(const ServiceRuntime&) = delete;
  ServiceRuntime& operator=(const ServiceRuntime&) = delete;
};

// Throws ModelVocabMismatch when checkpoint and tokenizer disagree.
std::unique_ptr<ServiceRuntime> load_runtime(const ServiceConfig& config);

nlohmann::json to_json(const lm::ModelConfig& config);

}  // namespace metaflow
