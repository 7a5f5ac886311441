#include "metaflow/generation_flow.hpp"

#include <cctype>

#include "metaflow/error.hpp"

namespace metaflow {

namespace {

struct Continuation {
  std::string text;  // generated text before the first tag
  bool truncated = false;
};

// Removes a trailing fragment that could only be the start of a tag.
void strip_partial_tag(std::string& text) {
  const auto pos = text.rfind('<');
  if (pos == std::string::npos) return;
  const std::string_view tail = std::string_view(text).substr(pos);
  for (auto tag : all_tags())
    if (tag.size() > tail.size() && tag.starts_with(tail)) {
      text.erase(pos);
      return;
    }
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\n\r\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

Continuation continue_prompt(const LanguageModel& model, const Tokenizer& tokenizer, const std::string& prompt,
                             std::string_view end, int max_new_tokens, int top_k, double temperature,
                             std::uint64_t seed) {
  lm::SampleOptions opt;
  opt.max_new_tokens = max_new_tokens;
  opt.top_k = top_k;
  opt.temperature = temperature;
  opt.rng_seed = seed;
  try {
    opt.stop_ids = tokenizer.encode(" " + std::string(end));
  } catch (const Error&) {
    // Vocabulary cannot spell the tag as a unit; the decode scan still stops.
  }
  // The model may spell a tag with other tokens than encode() would.
  opt.stop_when = [&](std::span<const TokenId> gen) { return contains_tag(tokenizer.decode(gen)); };

  const TokenSequence ids = tokenizer.encode(prompt);
  const auto result = model.sample(ids, opt);
  Continuation out;
  out.text = tokenizer.decode(result.tokens);
  if (auto hit = find_first_tag(out.text)) {
    out.text.erase(hit->pos);
  } else {
    out.truncated = true;
    strip_partial_tag(out.text);
  }
  return out;
}

void check_request(const LanguageModel& model, const Tokenizer& tokenizer, std::string_view text, int gen_count,
                   const SamplingParams& s) {
  if (model.vocab_size() != static_cast<int>(tokenizer.size()))
    throw Error(ErrorCode::ModelVocabMismatch, "model vocabulary has " + std::to_string(model.vocab_size()) +
                                                   " entries but the tokenizer has " +
                                                   std::to_string(tokenizer.size()));
  if (trim(text).empty()) throw Error(ErrorCode::EmptySeed, "input text is empty");
  if (auto hit = find_first_tag(text))
    throw Error(ErrorCode::TagCollision, "input text contains tag " + std::string(hit->tag));
  if (gen_count < 1) throw Error(ErrorCode::InvalidArgument, "gen_count must be >= 1");
  if (s.max_new_tokens && *s.max_new_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_new_tokens must be >= 1");
  if (s.top_k < 1) throw Error(ErrorCode::InvalidArgument, "top_k must be >= 1");
  if (!(s.temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
}

Provenance echo(std::string operation, std::string_view input, std::string target, int gen_count,
                const SamplingParams& s, int max_new_tokens) {
  Provenance p;
  p.stage = operation == "patent_text_gen" ? "generate" : "map";
  p.operation = std::move(operation);
  p.input_text = std::string(input);
  p.target = std::move(target);
  p.gen_count = gen_count;
  p.max_new_tokens = max_new_tokens;
  p.top_k = s.top_k;
  p.temperature = s.temperature;
  p.rng_seed = s.rng_seed;
  return p;
}

}  // namespace

std::string_view to_string(GenDirection dir) {
  switch (dir) {
    case GenDirection::Forward: return "forward";
    case GenDirection::Backward: return "backward";
    case GenDirection::Both: return "both";
  }
  return "forward";
}

std::optional<GenDirection> parse_gen_direction(std::string_view name) {
  for (auto d : {GenDirection::Forward, GenDirection::Backward, GenDirection::Both})
    if (to_string(d) == name) return d;
  return std::nullopt;
}

int default_max_new_tokens(MetadataKind target) {
  switch (target) {
    case MetadataKind::Title: return 64;
    case MetadataKind::Abstract: return 256;
    case MetadataKind::Claim:
    case MetadataKind::DependentClaim: return 512;
  }
  return 64;
}

std::string build_prompt(MetadataKind metadata, Direction dir, std::string_view text) {
  const std::string body = dir == Direction::Forward ? normalize_whitespace(text) : reverse_words(text);
  return std::string(start_tag(metadata, dir)) + " " + body;
}

std::string build_mapping_prompt(MappingKind mapping, std::string_view text) {
  return std::string(start_tag(mapping_source(mapping), Direction::Forward)) + " " + normalize_whitespace(text) + " " +
         std::string(mapping_tag(mapping));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index, std::uint64_t pass) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (1 + index * 4 + pass);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

GenOutput patent_text_gen(const LanguageModel& model, const Tokenizer& tokenizer, const GenRequest& request) {
  const auto& s = request.sampling;
  check_request(model, tokenizer, request.input_text, request.gen_count, s);
  const int max_new = s.max_new_tokens.value_or(default_max_new_tokens(request.metadata));
  const auto meta = request.metadata;

  GenOutput out;
  out.provenance = echo("patent_text_gen", request.input_text, std::string(to_string(meta)), request.gen_count, s,
                        max_new);
  out.provenance.direction = request.direction;

  for (int i = 0; i < request.gen_count; ++i) {
    std::string text = request.input_text;
    bool truncated = false;

    if (request.direction != GenDirection::Forward) {
      auto c = continue_prompt(model, tokenizer, build_prompt(meta, Direction::Backward, text),
                               end_tag(meta, Direction::Backward), max_new, s.top_k, s.temperature,
                               derive_seed(s.rng_seed, i, 0));
      // Text glued to the reversed seed's last word would split a seed word.
      std::string_view gen = c.text;
      if (!gen.empty() && !std::isspace(static_cast<unsigned char>(gen.front()))) {
        const auto ws = gen.find_first_of(" \t\n\r\f\v");
        gen = ws == std::string_view::npos ? std::string_view{} : gen.substr(ws);
      }
      const std::string left = reverse_words(gen);
      if (!left.empty()) text = left + " " + text;
      truncated = truncated || c.truncated;
    }

    if (request.direction != GenDirection::Backward) {
      auto c = continue_prompt(model, tokenizer, build_prompt(meta, Direction::Forward, text),
                               end_tag(meta, Direction::Forward), max_new, s.top_k, s.temperature,
                               derive_seed(s.rng_seed, i, 1));
      const auto right = c.text.substr(0, c.text.find_last_not_of(" \t\n\r\f\v") + 1);
      if (!trim(right).empty()) {
        // A fragment glued to the seed could complete a tag across the join.
        std::string joined = text + right;
        text = contains_tag(joined) ? text + " " + std::string(trim(right)) : std::move(joined);
      }
      truncated = truncated || c.truncated;
    }

    out.outputs.push_back(std::move(text));
    out.provenance.truncated.push_back(truncated);
  }
  return out;
}

GenOutput text2text_mapping(const LanguageModel& model, const Tokenizer& tokenizer, const MapRequest& request) {
  const auto& s = request.sampling;
  check_request(model, tokenizer, request.input_text, request.gen_count, s);
  const auto target = mapping_target(request.mapping);
  const int max_new = s.max_new_tokens.value_or(default_max_new_tokens(target));

  GenOutput out;
  out.provenance = echo("text2text_mapping", request.input_text, std::string(to_string(request.mapping)),
                        request.gen_count, s, max_new);
  const std::string prompt = build_mapping_prompt(request.mapping, request.input_text);
  const auto end = end_tag(target, Direction::Forward);
  for (int i = 0; i < request.gen_count; ++i) {
    auto c = continue_prompt(model, tokenizer, prompt, end, max_new, s.top_k, s.temperature,
                             derive_seed(s.rng_seed, i, 2));
    out.outputs.emplace_back(trim(c.text));
    out.provenance.truncated.push_back(c.truncated);
  }
  return out;
}

FlowResult run_flow(const LanguageModel& model, const Tokenizer& tokenizer, const FlowRequest& request) {
  if (request.dep_count < 1)
    throw Error(ErrorCode::InvalidArgument, "stage dependent_claims: dep_count must be >= 1");
  FlowResult result;
  auto staged = [](const char* stage, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw Error(e.code(), std::string("stage ") + stage + ": " + e.message());
    }
  };
  auto params = [&](std::optional<int> max_tokens, std::uint64_t stage) {
    SamplingParams s;
    s.max_new_tokens = max_tokens;
    s.top_k = request.top_k;
    s.temperature = request.temperature;
    s.rng_seed = derive_seed(request.rng_seed, stage, 3);
    return s;
  };

  auto title = staged("title", [&] {
    GenRequest r{request.seed, MetadataKind::Title, GenDirection::Both, 1, params(request.title_max_tokens, 0)};
    return patent_text_gen(model, tokenizer, r);
  });
  title.provenance.stage = "title";
  result.title = title.outputs[0];
  result.provenance.push_back(std::move(title.provenance));

  auto map_stage = [&](const char* stage, const std::string& input, MappingKind m, int count,
                       std::optional<int> max_tokens, std::uint64_t index) {
    auto out = staged(stage, [&] {
      MapRequest r{input, m, count, params(max_tokens, index)};
      return text2text_mapping(model, tokenizer, r);
    });
    out.provenance.stage = stage;
    result.provenance.push_back(out.provenance);
    return out.outputs;
  };

  result.abstract =
      map_stage("abstract", result.title, MappingKind::Title2Abstract, 1, request.abstract_max_tokens, 1)[0];
  result.independent_claim =
      map_stage("claim", result.abstract, MappingKind::Abstract2Claim, 1, request.claim_max_tokens, 2)[0];
  result.dependent_claims = map_stage("dependent_claims", result.independent_claim, MappingKind::Dep,
                                      request.dep_count, request.claim_max_tokens, 3);
  return result;
}

nlohmann::json to_json(const Provenance& p) {
  nlohmann::json j = {{"stage", p.stage},
                      {"operation", p.operation},
                      {"input_text", p.input_text},
                      {"target", p.target},
                      {"gen_count", p.gen_count},
                      {"max_new_tokens", p.max_new_tokens},
                      {"top_k", p.top_k},
                      {"temperature", p.temperature},
                      {"rng_seed", p.rng_seed},
                      {"truncated", p.truncated}};
  if (p.direction) j["direction"] = to_string(*p.direction);
  return j;
}

nlohmann::json to_json(const FlowResult& r) {
  nlohmann::json prov = nlohmann::json::array();
  for (const auto& p : r.provenance) prov.push_back(to_json(p));
  return {{"title", r.title},
          {"abstract", r.abstract},
          {"independent_claim", r.independent_claim},
          {"dependent_claims", r.dependent_claims},
          {"provenance", prov}};
}

}  // namespace metaflow
