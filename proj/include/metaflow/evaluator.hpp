#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metaflow/generation_flow.hpp"

namespace metaflow {

/// ROUGE-1 as percentages in [0, 100].
struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Lowercased alphanumeric runs. Letters and digits follow Unicode; only ASCII
// letters are case-folded.
std::vector<std::string> rouge_tokens(std::string_view text);

/// Unigram overlap with clipped counts. Empty sides score 0.
RougeScore rouge1(std::string_view predicted, std::string_view actual);

// {"rouge1_p", "rouge1_r", "rouge1_f1"[, "similarity"]}
nlohmann::json to_json(const RougeScore& r, std::optional<double> similarity = std::nullopt);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // Throws ProviderUnavailable when the backend cannot answer.
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

/// Deterministic bag-of-words vectors: each ROUGE token adds 1 to one of `dim`
/// hashed buckets. Zero only for text without tokens. For tests and offline runs.
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::size_t dim = 256);
  std::vector<double> embed(std::string_view text) const override;

 private:
  std::size_t dim_;
};

/// Client for an external encoder: POST {"text": ...} to `url`, expecting
/// {"vector": [...]} back. Every failure maps to ProviderUnavailable.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(std::string url, std::chrono::milliseconds timeout = std::chrono::seconds(30));
  std::vector<double> embed(std::string_view text) const override;

 private:
  std::string base_;  // scheme://host[:port]
  std::string path_;
  std::chrono::milliseconds timeout_;
};

// Cosine times 100, clamped to [-100, 100]. Same errors as similarity().
double cosine_percent(std::span<const double> u, std::span<const double> v);

/// Cosine of the two embeddings times 100. Throws ZeroVector for a zero
/// embedding and ProviderUnavailable for mismatched or non-finite vectors.
double similarity(const EmbeddingProvider& provider, std::string_view a, std::string_view b);

struct EvalPair {
  std::string src;
  std::string tgt;
};

// {"src": ..., "tgt": ...} per line. Throws FileError or FormatError.
std::vector<EvalPair> read_pairs_jsonl(std::istream& in);
std::vector<EvalPair> read_pairs_jsonl(const std::filesystem::path& path);

struct EvalRecord {
  std::size_t index = 0;
  std::string src, tgt, predicted;
  RougeScore rouge;
  std::optional<double> similarity;
  bool failed = false;
  std::string error;
};

nlohmann::json to_json(const EvalRecord& r);

struct EvalSummary {
  std::size_t n = 0;
  std::size_t scored = 0;
  std::size_t failed = 0;
  double rouge1_p = 0.0, rouge1_r = 0.0, rouge1_f1 = 0.0;
  std::optional<double> similarity;  // mean, when a provider was given
};

nlohmann::json to_json(const EvalSummary& s);

struct BatchEvalOptions {
  MappingKind mapping = MappingKind::Abstract2Title;
  std::size_t n = 1000;
  SamplingParams sampling;  // record i samples with derive_seed(rng_seed, i, 5)
  const EmbeddingProvider* provider = nullptr;
  std::size_t threads = 1;  // 0: hardware concurrency; results do not depend on it
};

/// Predicts the target of each of the first n pairs with text2text_mapping and
/// scores it. Failed records are reported and left out of the means. Means are
/// plain sums in index order divided by the scored count.
EvalSummary batch_eval(const LanguageModel& model, const Tokenizer& tokenizer, const std::vector<EvalPair>& pairs,
                       const BatchEvalOptions& options, const std::function<void(const EvalRecord&)>& on_record = {});

// Writes each record as one JSONL line.
EvalSummary batch_eval(const LanguageModel& model, const Tokenizer& tokenizer, const std::vector<EvalPair>& pairs,
                       const BatchEvalOptions& options, std::ostream& records_out);

}  // namespace metaflow
