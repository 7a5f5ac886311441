#include "metaflow/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <thread>
#include <unordered_map>

#include <httplib.h>

#include "metaflow/error.hpp"
#include "metaflow/unicode.hpp"

namespace metaflow {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

double pct(std::size_t num, std::size_t den) { return den == 0 ? 0.0 : 100.0 * num / den; }

}  // namespace

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size();) {
    const auto d = unicode::decode_at(text, i);
    if (d.valid && (unicode::is_letter(d.cp) || unicode::is_number(d.cp))) {
      if (d.cp < 0x80)
        cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(d.cp))));
      else
        cur.append(text.substr(i, d.len));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
    i += d.len;
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

RougeScore rouge1(std::string_view predicted, std::string_view actual) {
  const auto pred = rouge_tokens(predicted);
  const auto ref = rouge_tokens(actual);
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& w : ref) ++counts[w];
  std::size_t overlap = 0;
  for (const auto& w : pred) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  RougeScore r;
  r.precision = pct(overlap, pred.size());
  r.recall = pct(overlap, ref.size());
  if (r.precision + r.recall > 0) r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

nlohmann::json to_json(const RougeScore& r, std::optional<double> similarity) {
  nlohmann::json j = {{"rouge1_p", r.precision}, {"rouge1_r", r.recall}, {"rouge1_f1", r.f1}};
  if (similarity) j["similarity"] = *similarity;
  return j;
}

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be >= 1");
}

std::vector<double> HashEmbeddingProvider::embed(std::string_view text) const {
  std::vector<double> v(dim_, 0.0);
  for (const auto& w : rouge_tokens(text)) v[fnv1a(w) % dim_] += 1.0;
  return v;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string url, std::chrono::milliseconds timeout) : timeout_(timeout) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.substr(0, scheme) != "http")
    throw Error(ErrorCode::InvalidArgument, "embedding provider url must start with http://: " + url);
  const auto slash = url.find('/', scheme + 3);
  base_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
  if (base_.size() == scheme + 3) throw Error(ErrorCode::InvalidArgument, "embedding provider url has no host: " + url);
}

std::vector<double> HttpEmbeddingProvider::embed(std::string_view text) const {
  httplib::Client client(base_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  const nlohmann::json body = {{"text", text}};
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) throw Error(ErrorCode::ProviderUnavailable, base_ + path_ + ": " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error(ErrorCode::ProviderUnavailable, base_ + path_ + ": HTTP " + std::to_string(res->status));
  try {
    const auto j = nlohmann::json::parse(res->body);
    auto v = j.at("vector").get<std::vector<double>>();
    if (v.empty()) throw Error(ErrorCode::ProviderUnavailable, "provider returned an empty vector");
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable, "bad provider response: " + std::string(e.what()));
  }
}

double similarity(const EmbeddingProvider& provider, std::string_view a, std::string_view b) {
  return cosine_percent(provider.embed(a), provider.embed(b));
}

double cosine_percent(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw Error(ErrorCode::ProviderUnavailable, "embedding dimensions differ: " + std::to_string(u.size()) + " vs " +
                                                    std::to_string(v.size()));
  double uv = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (!std::isfinite(uv) || !std::isfinite(uu) || !std::isfinite(vv))
    throw Error(ErrorCode::ProviderUnavailable, "embedding is not finite");
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorCode::ZeroVector, "embedding has zero norm");
  return std::clamp(100.0 * uv / (std::sqrt(uu) * std::sqrt(vv)), -100.0, 100.0);
}

std::vector<EvalPair> read_pairs_jsonl(std::istream& in) {
  std::vector<EvalPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      pairs.push_back({j.at("src").get<std::string>(), j.at("tgt").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError, where + e.what());
    }
  }
  return pairs;
}

std::vector<EvalPair> read_pairs_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileError, "cannot open " + path.string());
  return read_pairs_jsonl(in);
}

nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json j = {{"index", r.index},
                      {"src", r.src},
                      {"tgt", r.tgt},
                      {"predicted", r.predicted},
                      {"rouge1_p", r.rouge.precision},
                      {"rouge1_r", r.rouge.recall},
                      {"rouge1_f1", r.rouge.f1},
                      {"similarity", nullptr},
                      {"failed", r.failed}};
  if (r.similarity) j["similarity"] = *r.similarity;
  if (r.failed) j["error"] = r.error;
  return j;
}

nlohmann::json to_json(const EvalSummary& s) {
  nlohmann::json j = {{"n", s.n},
                      {"scored", s.scored},
                      {"failed", s.failed},
                      {"rouge1_p", s.rouge1_p},
                      {"rouge1_r", s.rouge1_r},
                      {"rouge1_f1", s.rouge1_f1},
                      {"similarity", nullptr}};
  if (s.similarity) j["similarity"] = *s.similarity;
  return j;
}

EvalSummary batch_eval(const LanguageModel& model, const Tokenizer& tokenizer, const std::vector<EvalPair>& pairs,
                       const BatchEvalOptions& options, const std::function<void(const EvalRecord&)>& on_record) {
  if (options.n == 0) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
  if (options.n > pairs.size())
    throw Error(ErrorCode::InvalidArgument,
                "n = " + std::to_string(options.n) + " exceeds the " + std::to_string(pairs.size()) + " pairs given");

  std::vector<EvalRecord> records(options.n);
  auto score = [&](std::size_t i) {
    EvalRecord& r = records[i];
    r.index = i;
    r.src = pairs[i].src;
    r.tgt = pairs[i].tgt;
    try {
      MapRequest req{pairs[i].src, options.mapping, 1, options.sampling};
      req.sampling.rng_seed = derive_seed(options.sampling.rng_seed, i, 5);
      r.predicted = text2text_mapping(model, tokenizer, req).outputs.at(0);
      r.rouge = rouge1(r.predicted, r.tgt);
      if (options.provider) r.similarity = similarity(*options.provider, r.predicted, r.tgt);
    } catch (const Error& e) {
      r.failed = true;
      r.error = e.what();
      r.rouge = {};
      r.similarity.reset();
    }
  };

  std::size_t threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, options.n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < options.n; ++i) score(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < options.n;) score(i);
      });
  }

  EvalSummary s;
  s.n = options.n;
  double sum_p = 0, sum_r = 0, sum_f = 0, sum_sim = 0;
  for (const auto& r : records) {
    if (on_record) on_record(r);
    if (r.failed) {
      ++s.failed;
      continue;
    }
    ++s.scored;
    sum_p += r.rouge.precision;
    sum_r += r.rouge.recall;
    sum_f += r.rouge.f1;
    if (r.similarity) sum_sim += *r.similarity;
  }
  if (s.scored > 0) {
    s.rouge1_p = sum_p / s.scored;
    s.rouge1_r = sum_r / s.scored;
    s.rouge1_f1 = sum_f / s.scored;
    if (options.provider) s.similarity = sum_sim / s.scored;
  }
  return s;
}

EvalSummary batch_eval(const LanguageModel& model, const Tokenizer& tokenizer, const std::vector<EvalPair>& pairs,
                       const BatchEvalOptions& options, std::ostream& records_out) {
  return batch_eval(model, tokenizer, pairs, options,
                    [&](const EvalRecord& r) { records_out << to_json(r).dump() << '\n'; });
}

}  // namespace metaflow
