#include "metaflow/service.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include <httplib.h>
#include <toml.hpp>

#include "metaflow/error.hpp"
#include "metaflow/lm/checkpoint.hpp"

namespace metaflow {

namespace {

constexpr int kMaxGenCount = 64;
constexpr int kMaxNewTokens = 4096;

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, "service config: " + message);
}

std::filesystem::path resolve(const std::filesystem::path& base, std::string_view p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

// A request field that failed validation.
struct BadRequest {
  std::string field;
  std::string message;
};

ApiResponse bad_request(const BadRequest& b) {
  return {400, {{"error", b.field + ": " + b.message}, {"field", b.field}}, 0};
}

const nlohmann::json* find(const nlohmann::json& body, const char* key) {
  auto it = body.find(key);
  return it == body.end() || it->is_null() ? nullptr : &*it;
}

std::string req_string(const nlohmann::json& body, const char* key) {
  const auto* v = find(body, key);
  if (!v) throw BadRequest{key, "required"};
  if (!v->is_string()) throw BadRequest{key, "must be a string"};
  return v->get<std::string>();
}

std::optional<std::int64_t> opt_int(const nlohmann::json& body, const char* key, std::int64_t lo, std::int64_t hi) {
  const auto* v = find(body, key);
  if (!v) return std::nullopt;
  if (!v->is_number_integer()) throw BadRequest{key, "must be an integer"};
  const auto x = v->get<std::int64_t>();
  if (x < lo || x > hi)
    throw BadRequest{key, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]"};
  return x;
}

std::optional<std::uint64_t> opt_seed(const nlohmann::json& body, const char* key) {
  const auto* v = find(body, key);
  if (!v) return std::nullopt;
  if (v->is_number_unsigned()) return v->get<std::uint64_t>();
  if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return v->get<std::uint64_t>();
  throw BadRequest{key, "must be a non-negative integer"};
}

template <class Enum>
Enum req_enum(const nlohmann::json& body, const char* key, std::optional<Enum> (*parse)(std::string_view),
              std::optional<Enum> fallback = std::nullopt) {
  const auto* v = find(body, key);
  if (!v) {
    if (fallback) return *fallback;
    throw BadRequest{key, "required"};
  }
  if (!v->is_string()) throw BadRequest{key, "must be a string"};
  if (auto e = parse(v->get<std::string>())) return *e;
  throw BadRequest{key, "unknown value '" + v->get<std::string>() + "'"};
}

}  // namespace

void ServiceConfig::validate() const {
  require(port >= 0 && port <= 65535, "port must be in [0, 65535]");
  require(top_k >= 1, "top_k must be >= 1");
  require(temperature > 0.0 && std::isfinite(temperature), "temperature must be > 0");
  require(!max_new_tokens || (*max_new_tokens >= 1 && *max_new_tokens <= kMaxNewTokens),
          "max_new_tokens must be in [1, " + std::to_string(kMaxNewTokens) + "]");
  require(request_timeout.count() >= 0, "request_timeout_ms must be >= 0");
  require(max_concurrent >= 1, "max_concurrent must be >= 1");
  require(http_threads >= 1, "threads must be >= 1");
}

ServiceConfig parse_service_config(std::string_view toml_text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw Error(ErrorCode::FormatError, std::string("service config: ") + std::string(e.description()));
  }
  ServiceConfig c;
  if (auto* s = root["server"].as_table()) {
    if (auto v = (*s)["host"].value<std::string>()) c.host = *v;
    if (auto v = (*s)["port"].value<int>()) c.port = *v;
    if (auto v = (*s)["max_concurrent"].value<int>()) c.max_concurrent = *v;
    if (auto v = (*s)["request_timeout_ms"].value<std::int64_t>()) c.request_timeout = std::chrono::milliseconds(*v);
    if (auto v = (*s)["threads"].value<int>()) c.http_threads = *v;
  }
  if (auto* m = root["model"].as_table()) {
    if (auto v = (*m)["checkpoint"].value<std::string>()) c.checkpoint = resolve(base_dir, *v);
    if (auto v = (*m)["encoder"].value<std::string>()) c.encoder = resolve(base_dir, *v);
    if (auto v = (*m)["merges"].value<std::string>()) c.merges = resolve(base_dir, *v);
  }
  if (auto* s = root["sampling"].as_table()) {
    if (auto v = (*s)["top_k"].value<int>()) c.top_k = *v;
    if (auto v = (*s)["temperature"].value<double>()) c.temperature = *v;
    if (auto v = (*s)["max_new_tokens"].value<int>()) c.max_new_tokens = *v;
  }
  if (auto* e = root["eval"].as_table()) {
    if (auto v = (*e)["embedding_url"].value<std::string>()) c.embedding_url = *v;
  }
  c.validate();
  return c;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_service_config(ss.str(), path.parent_path());
}

std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::filesystem::path>& explicit_path) {
  if (explicit_path && !explicit_path->empty()) return explicit_path;
  if (const char* env = std::getenv("METAFLOW_CONFIG"); env && *env) return std::filesystem::path(env);
  return std::nullopt;
}

AdmissionQueue::AdmissionQueue(int max_concurrent) : max_(max_concurrent) {
  if (max_concurrent < 1) throw Error(ErrorCode::InvalidArgument, "max_concurrent must be >= 1");
}

bool AdmissionQueue::acquire(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  const auto ticket = next_ticket_++;
  queue_.push_back(ticket);
  const bool ok = cv_.wait_for(lock, timeout, [&] { return queue_.front() == ticket && active_ < max_; });
  if (!ok) {
    queue_.erase(std::find(queue_.begin(), queue_.end(), ticket));
    cv_.notify_all();
    return false;
  }
  queue_.pop_front();
  ++active_;
  cv_.notify_all();
  return true;
}

void AdmissionQueue::release() {
  {
    std::lock_guard lock(mu_);
    --active_;
  }
  cv_.notify_all();
}

int AdmissionQueue::active() const {
  std::lock_guard lock(mu_);
  return active_;
}

std::size_t AdmissionQueue::waiting() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

Api::Api(const LanguageModel& model, const Tokenizer& tokenizer, const EmbeddingProvider* provider,
         ServiceConfig config, nlohmann::json model_config)
    : model_(&model),
      tokenizer_(&tokenizer),
      provider_(provider),
      config_(std::move(config)),
      model_config_(std::move(model_config)),
      admission_(config_.max_concurrent),
      seed_rng_(std::random_device{}()) {
  if (model.vocab_size() != static_cast<int>(tokenizer.size()))
    throw Error(ErrorCode::ModelVocabMismatch, "model vocabulary has " + std::to_string(model.vocab_size()) +
                                                   " entries but the tokenizer has " +
                                                   std::to_string(tokenizer.size()));
}

std::uint64_t Api::fresh_seed() {
  std::lock_guard lock(seed_mu_);
  return seed_rng_() >> 11;  // below 2^53, so JavaScript clients can echo it back exactly
}

template <class Fn>
ApiResponse Api::admitted(Fn&& fn) {
  if (!admission_.acquire(config_.request_timeout)) {
    const int retry = std::max<int>(1, static_cast<int>((config_.request_timeout.count() + 999) / 1000));
    return {503,
            {{"error", "server busy: no generation slot within " + std::to_string(config_.request_timeout.count()) +
                           " ms"},
             {"retry_after_s", retry}},
            retry};
  }
  struct Release {
    AdmissionQueue& q;
    ~Release() { q.release(); }
  } release{admission_};
  return fn();
}

ApiResponse Api::handle(std::string_view method, std::string_view path, std::string_view body) {
  static const std::pair<std::string_view, std::string_view> routes[] = {{"POST", "/api/generate"},
                                                                         {"POST", "/api/map"},
                                                                         {"POST", "/api/flow"},
                                                                         {"POST", "/api/score"},
                                                                         {"GET", "/api/health"}};
  const auto route = std::find_if(std::begin(routes), std::end(routes), [&](auto& r) { return r.second == path; });
  if (route == std::end(routes)) return {404, {{"error", "no such endpoint: " + std::string(path)}}, 0};
  if (route->first != method)
    return {405, {{"error", std::string(path) + " accepts " + std::string(route->first) + " only"}}, 0};
  if (path == "/api/health") return health();

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    return bad_request({"body", "not valid JSON"});
  }
  if (!j.is_object()) return bad_request({"body", "must be a JSON object"});

  // Library errors caused by the request surface as 400 on the offending field.
  const char* text_field = path == "/api/map" ? "text" : "seed";
  try {
    if (path == "/api/generate") return generate(j);
    if (path == "/api/map") return map(j);
    if (path == "/api/flow") return flow(j);
    return score(j);
  } catch (const BadRequest& b) {
    return bad_request(b);
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::EmptySeed:
      case ErrorCode::TagCollision: return bad_request({text_field, e.message()});
      case ErrorCode::InvalidArgument: return bad_request({"request", e.message()});
      case ErrorCode::ProviderUnavailable:
        return {503, {{"error", "embedding provider unavailable"}, {"retry_after_s", 5}}, 5};
      default: return {500, {{"error", "internal error: " + std::string(to_string(e.code()))}}, 0};
    }
  } catch (const std::exception&) {
    return {500, {{"error", "internal error"}}, 0};
  }
}

namespace {

SamplingParams sampling_from(const nlohmann::json& j, const ServiceConfig& c, std::uint64_t fallback_seed) {
  SamplingParams s;
  s.top_k = static_cast<int>(opt_int(j, "top_k", 1, std::numeric_limits<int>::max()).value_or(c.top_k));
  s.temperature = c.temperature;
  if (const auto* t = find(j, "temperature")) {
    if (!t->is_number()) throw BadRequest{"temperature", "must be a number"};
    s.temperature = t->get<double>();
    if (!(s.temperature > 0.0) || !std::isfinite(s.temperature)) throw BadRequest{"temperature", "must be > 0"};
  }
  if (auto m = opt_int(j, "max_new_tokens", 1, kMaxNewTokens))
    s.max_new_tokens = static_cast<int>(*m);
  else
    s.max_new_tokens = c.max_new_tokens;
  s.rng_seed = opt_seed(j, "rng_seed").value_or(fallback_seed);
  return s;
}

nlohmann::json candidates_json(const GenOutput& out) {
  return {{"candidates", out.outputs}, {"provenance", to_json(out.provenance)}};
}

}  // namespace

ApiResponse Api::generate(const nlohmann::json& j) {
  GenRequest r;
  r.input_text = req_string(j, "seed");
  r.metadata = req_enum<MetadataKind>(j, "metadata", parse_metadata_kind);
  r.direction = req_enum<GenDirection>(j, "direction", parse_gen_direction, GenDirection::Forward);
  r.gen_count = static_cast<int>(opt_int(j, "gen_count", 1, kMaxGenCount).value_or(1));
  r.sampling = sampling_from(j, config_, fresh_seed());
  return admitted([&] { return ApiResponse{200, candidates_json(patent_text_gen(*model_, *tokenizer_, r)), 0}; });
}

ApiResponse Api::map(const nlohmann::json& j) {
  MapRequest r;
  r.input_text = req_string(j, "text");
  r.mapping = req_enum<MappingKind>(j, "mapping", parse_mapping_kind);
  r.gen_count = static_cast<int>(opt_int(j, "gen_count", 1, kMaxGenCount).value_or(1));
  r.sampling = sampling_from(j, config_, fresh_seed());
  return admitted([&] { return ApiResponse{200, candidates_json(text2text_mapping(*model_, *tokenizer_, r)), 0}; });
}

ApiResponse Api::flow(const nlohmann::json& j) {
  FlowRequest r;
  r.seed = req_string(j, "seed");
  r.dep_count = static_cast<int>(opt_int(j, "dep_count", 1, kMaxGenCount).value_or(2));
  const auto s = sampling_from(j, config_, fresh_seed());
  r.top_k = s.top_k;
  r.temperature = s.temperature;
  r.rng_seed = s.rng_seed;
  r.title_max_tokens = r.abstract_max_tokens = r.claim_max_tokens = s.max_new_tokens;
  return admitted([&] { return ApiResponse{200, to_json(run_flow(*model_, *tokenizer_, r)), 0}; });
}

ApiResponse Api::score(const nlohmann::json& j) {
  const auto predicted = req_string(j, "predicted");
  const auto actual = req_string(j, "actual");
  std::optional<double> sim;
  if (provider_) {
    auto embed = [&](const std::string& text, const char* field) {
      auto v = provider_->embed(text);
      if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }))
        throw BadRequest{field, "text has a zero embedding"};
      return v;
    };
    sim = cosine_percent(embed(predicted, "predicted"), embed(actual, "actual"));
  }
  return {200, to_json(rouge1(predicted, actual), sim), 0};
}

ApiResponse Api::health() const {
  return {200,
          {{"status", "ok"},
           {"model_config", model_config_},
           {"tokenizer_size", tokenizer_->size()},
           {"similarity", provider_ != nullptr},
           {"max_concurrent", config_.max_concurrent}},
          0};
}

HttpServer::HttpServer(Api& api, int threads) : server_(std::make_unique<httplib::Server>()) {
  const auto n = static_cast<std::size_t>(std::max(1, threads));
  server_->new_task_queue = [n] { return new httplib::ThreadPool(n); };
  auto serve = [&api](const httplib::Request& req, httplib::Response& res) {
    const auto out = api.handle(req.method, req.path, req.body);
    res.status = out.status;
    if (out.retry_after_s > 0) res.set_header("Retry-After", std::to_string(out.retry_after_s));
    res.set_content(out.body.dump(), "application/json");
  };
  server_->Get(".*", serve);
  server_->Post(".*", serve);
  server_->Put(".*", serve);
  server_->Delete(".*", serve);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::FileError, "cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_->is_running()) server_->stop();
}

void HttpServer::wait_until_ready() { server_->wait_until_ready(); }

std::unique_ptr<ServiceRuntime> load_runtime(const ServiceConfig& config) {
  if (config.checkpoint.empty() || config.encoder.empty() || config.merges.empty())
    throw Error(ErrorCode::InvalidArgument, "service config: model.checkpoint, model.encoder and model.merges are required");
  auto rt = std::make_unique<ServiceRuntime>(Tokenizer::load(config.encoder, config.merges),
                                             lm::load_checkpoint(config.checkpoint));
  if (rt->params.config.vocab_size != static_cast<int>(rt->tokenizer.size()))
    throw Error(ErrorCode::ModelVocabMismatch,
                "checkpoint vocabulary has " + std::to_string(rt->params.config.vocab_size) +
                    " entries but the tokenizer has " + std::to_string(rt->tokenizer.size()));
  if (!config.embedding_url.empty())
    rt->provider = std::make_unique<HttpEmbeddingProvider>(
        config.embedding_url, std::max(config.request_timeout, std::chrono::milliseconds(1000)));
  return rt;
}

nlohmann::json to_json(const lm::ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"context_len", c.context_len}, {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},       {"d_model", c.d_model},         {"dropout", c.dropout_p}};
}

}  // namespace metaflow
