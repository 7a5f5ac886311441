#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metaflow/bpe_tokenizer.hpp"
#include "metaflow/lm/model.hpp"
#include "metaflow/lm/sample.hpp"
#include "metaflow/tag_schema.hpp"

namespace metaflow {

/// Anything that can continue a token prompt. The transformer is the real
/// implementation; tests substitute scripted models.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual int vocab_size() const = 0;
  virtual lm::SampleResult sample(std::span<const TokenId> prompt, const lm::SampleOptions& options) const = 0;
};

class TransformerLM final : public LanguageModel {
 public:
  explicit TransformerLM(const lm::Model& params) : params_(&params) {}
  int vocab_size() const override { return params_->config.vocab_size; }
  lm::SampleResult sample(std::span<const TokenId> prompt, const lm::SampleOptions& options) const override {
    return lm::sample(*params_, prompt, options);
  }

 private:
  const lm::Model* params_;
};

enum class GenDirection { Forward, Backward, Both };
std::string_view to_string(GenDirection dir);
std::optional<GenDirection> parse_gen_direction(std::string_view name);

struct SamplingParams {
  std::optional<int> max_new_tokens;  // unset: 64 for titles, 256 for abstracts, 512 for claims
  int top_k = 40;
  double temperature = 1.0;
  std::uint64_t rng_seed = 0;
};

int default_max_new_tokens(MetadataKind target);

struct GenRequest {
  std::string input_text;
  MetadataKind metadata = MetadataKind::Title;
  GenDirection direction = GenDirection::Forward;
  int gen_count = 1;
  SamplingParams sampling;
};

struct MapRequest {
  std::string input_text;
  MappingKind mapping = MappingKind::Title2Abstract;
  int gen_count = 1;
  SamplingParams sampling;
};

/// Echo of one stage: what was asked, with every default resolved.
struct Provenance {
  std::string stage;      // "generate", "map", or a flow stage name
  std::string operation;  // "patent_text_gen" or "text2text_mapping"
  std::string input_text;
  std::string target;     // metadata or mapping name
  std::optional<GenDirection> direction;
  int gen_count = 1;
  int max_new_tokens = 0;
  int top_k = 0;
  double temperature = 0.0;
  std::uint64_t rng_seed = 0;
  std::vector<bool> truncated;  // per output: no end tag within max_new_tokens
};

struct GenOutput {
  std::vector<std::string> outputs;
  Provenance provenance;
};

/// Prompt text for one direction, as rendered before tokenization.
std::string build_prompt(MetadataKind metadata, Direction dir, std::string_view text);
std::string build_mapping_prompt(MappingKind mapping, std::string_view text);

// Seed of output `index` in sub-pass `pass` (splitmix64 of the request seed).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index, std::uint64_t pass);

/// Extends a seed text under a metadata kind. Every output contains the seed
/// verbatim. Throws EmptySeed, TagCollision, InvalidArgument, or
/// ModelVocabMismatch.
GenOutput patent_text_gen(const LanguageModel& model, const Tokenizer& tokenizer, const GenRequest& request);

/// Generates the target of a mapping from its source text. Outputs are trimmed
/// and tag-free. Same errors as patent_text_gen.
GenOutput text2text_mapping(const LanguageModel& model, const Tokenizer& tokenizer, const MapRequest& request);

struct FlowRequest {
  std::string seed;
  int dep_count = 2;
  int top_k = 40;
  double temperature = 1.0;
  std::uint64_t rng_seed = 0;
  std::optional<int> title_max_tokens, abstract_max_tokens, claim_max_tokens;
};

struct FlowResult {
  std::string title;
  std::string abstract;
  std::string independent_claim;
  std::vector<std::string> dependent_claims;
  std::vector<Provenance> provenance;  // title, abstract, claim, dependent_claims
};

/// Title (both directions) -> abstract -> independent claim -> dep_count
/// dependent claims, each stage fed the previous stage's first output.
/// Errors keep their code and gain the failing stage name.
FlowResult run_flow(const LanguageModel& model, const Tokenizer& tokenizer, const FlowRequest& request);

nlohmann::json to_json(const Provenance& p);
nlohmann::json to_json(const FlowResult& r);

}  // namespace metaflow
