#include <doctest.h>

#include <map>
#include <set>

#include "metaflow/error.hpp"
#include "metaflow/generation_flow.hpp"
#include "scripted_model.hpp"
#include "test_paths.hpp"
#include "toy_vocab.hpp"

using namespace metaflow;
using testing::ScriptedModel;

namespace {

const Tokenizer& gpt2() {
  static const Tokenizer tok = Tokenizer::load(testing::gpt2_encoder(), testing::gpt2_merges());
  return tok;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

// Answers by prompt prefix; records every prompt it sees.
struct PromptTable {
  std::map<std::string, std::string> by_start;
  std::vector<std::string> seen;
  std::vector<std::uint64_t> seeds;

  ScriptedModel model() {
    return ScriptedModel(gpt2(), [this](const std::string& prompt, std::uint64_t seed) {
      seen.push_back(prompt);
      seeds.push_back(seed);
      for (const auto& [start, reply] : by_start)
        if (prompt.starts_with(start)) return reply;
      return std::string(" <|endoftext|>");
    });
  }
};

GenRequest gen(std::string seed, GenDirection dir, int count = 1) {
  GenRequest r;
  r.input_text = std::move(seed);
  r.metadata = MetadataKind::Title;
  r.direction = dir;
  r.gen_count = count;
  r.sampling.rng_seed = 11;
  return r;
}

}  // namespace

TEST_CASE("prompts") {
  CHECK(build_prompt(MetadataKind::Title, Direction::Forward, "temperature optimization") ==
        "<|startoftitle|> temperature optimization");
  CHECK(build_prompt(MetadataKind::Title, Direction::Backward, "temperature optimization") ==
        "<|backwardtitlestart|> optimization temperature");
  CHECK(build_mapping_prompt(MappingKind::Dep, "A method.") == "<|startoftext|> A method. <|dep|>");
  CHECK(build_mapping_prompt(MappingKind::Title2Abstract, "Fast  engine") ==
        "<|startoftitle|> Fast engine <|title2abstract|>");
}

TEST_CASE("property: backward prompt is the word-reversed forward prompt") {
  const std::vector<std::string> seeds = {"a", "cooling device", "heat pipe with  fins", "x y z w v"};
  for (auto kind : kAllMetadataKinds)
    for (const auto& s : seeds) {
      const auto fwd = build_prompt(kind, Direction::Forward, s);
      const auto bwd = build_prompt(kind, Direction::Backward, s);
      const auto fwd_body = fwd.substr(start_tag(kind, Direction::Forward).size() + 1);
      const auto bwd_body = bwd.substr(start_tag(kind, Direction::Backward).size() + 1);
      CHECK(bwd.starts_with(std::string(start_tag(kind, Direction::Backward)) + " "));
      CHECK(reverse_words(fwd_body) == bwd_body);
    }
}

TEST_CASE("forward generation extends the seed to the right") {
  PromptTable t;
  t.by_start["<|startoftitle|>"] = " for battery packs <|endoftitle|> junk";
  auto m = t.model();
  auto out = patent_text_gen(m, gpt2(), gen("temperature optimization", GenDirection::Forward));
  REQUIRE(out.outputs.size() == 1);
  CHECK(out.outputs[0] == "temperature optimization for battery packs");
  CHECK(out.provenance.truncated == std::vector<bool>{false});
  CHECK(out.provenance.max_new_tokens == 64);
  CHECK(out.provenance.direction == GenDirection::Forward);
  CHECK(t.seen[0] == "<|startoftitle|> temperature optimization");
}

TEST_CASE("an immediate end tag leaves the seed unchanged") {
  PromptTable t;
  t.by_start["<|startoftitle|>"] = " <|endoftitle|>";
  t.by_start["<|backwardtitlestart|>"] = " <|backwardtitleend|>";
  auto m = t.model();
  for (auto dir : {GenDirection::Forward, GenDirection::Backward, GenDirection::Both})
    CHECK(patent_text_gen(m, gpt2(), gen("temperature optimization", dir)).outputs[0] == "temperature optimization");
}

TEST_CASE("backward generation extends the seed to the left") {
  PromptTable t;
  t.by_start["<|backwardtitlestart|>"] = " and method Control <|backwardtitleend|>";
  auto m = t.model();
  auto out = patent_text_gen(m, gpt2(), gen("temperature optimization", GenDirection::Backward));
  CHECK(out.outputs[0] == "Control method and temperature optimization");
  CHECK(t.seen[0] == "<|backwardtitlestart|> optimization temperature");
}

TEST_CASE("both runs backward first and feeds the result forward") {
  PromptTable t;
  t.by_start["<|backwardtitlestart|>"] = " and method Control <|backwardtitleend|>";
  t.by_start["<|startoftitle|>"] = " for batteries <|endoftitle|>";
  auto m = t.model();
  auto out = patent_text_gen(m, gpt2(), gen("temperature optimization", GenDirection::Both));
  CHECK(out.outputs[0] == "Control method and temperature optimization for batteries");
  REQUIRE(t.seen.size() == 2);
  CHECK(t.seen[0].starts_with("<|backwardtitlestart|>"));
  CHECK(t.seen[1] == "<|startoftitle|> Control method and temperature optimization");
}

TEST_CASE("a backward fragment glued to the seed is dropped") {
  PromptTable t;
  t.by_start["<|backwardtitlestart|>"] = "s new <|backwardtitleend|>";
  auto m = t.model();
  CHECK(patent_text_gen(m, gpt2(), gen("heat pipe", GenDirection::Backward)).outputs[0] == "new heat pipe");
}

TEST_CASE("outputs are cut at the first tag of any kind") {
  PromptTable t;
  t.by_start["<|startoftitle|>"] = " engine <|dep|> more text <|endoftitle|>";
  auto m = t.model();
  CHECK(patent_text_gen(m, gpt2(), gen("fast", GenDirection::Forward)).outputs[0] == "fast engine");
}

TEST_CASE("truncation keeps the text so far and drops a partial tag") {
  PromptTable t;
  t.by_start["<|startoftitle|>"] = " one two three <|endoftitle|>";
  auto m = t.model();
  auto req = gen("zero", GenDirection::Forward);
  req.sampling.max_new_tokens = 2;
  auto out = patent_text_gen(m, gpt2(), req);
  CHECK(out.outputs[0] == "zero one two");
  CHECK(out.provenance.truncated == std::vector<bool>{true});

  // " <|" and "end" are emitted but the tag never completes.
  req.sampling.max_new_tokens = 5;
  out = patent_text_gen(m, gpt2(), req);
  CHECK(out.outputs[0] == "zero one two three");
  CHECK(out.provenance.truncated == std::vector<bool>{true});
}

TEST_CASE("each output gets its own seed") {
  PromptTable t;
  auto m = t.model();
  auto out = patent_text_gen(m, gpt2(), gen("seed", GenDirection::Both, 3));
  CHECK(out.outputs.size() == 3);
  std::set<std::uint64_t> unique(t.seeds.begin(), t.seeds.end());
  CHECK(unique.size() == 6);
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 1, 0));
  CHECK(derive_seed(1, 0, 0) == derive_seed(1, 0, 0));
}

TEST_CASE("request validation") {
  PromptTable t;
  auto m = t.model();
  CHECK(code_of([&] { patent_text_gen(m, gpt2(), gen("  ", GenDirection::Forward)); }) == ErrorCode::EmptySeed);
  CHECK(code_of([&] { patent_text_gen(m, gpt2(), gen("a <|dep|>", GenDirection::Forward)); }) ==
        ErrorCode::TagCollision);
  CHECK(code_of([&] { patent_text_gen(m, gpt2(), gen("a", GenDirection::Forward, 0)); }) ==
        ErrorCode::InvalidArgument);
  auto bad = gen("a", GenDirection::Forward);
  bad.sampling.top_k = 0;
  CHECK(code_of([&] { patent_text_gen(m, gpt2(), bad); }) == ErrorCode::InvalidArgument);
  bad = gen("a", GenDirection::Forward);
  bad.sampling.max_new_tokens = 0;
  CHECK(code_of([&] { patent_text_gen(m, gpt2(), bad); }) == ErrorCode::InvalidArgument);

  auto toy = testing::make_toy_tokenizer({"a"});
  CHECK(code_of([&] { patent_text_gen(m, toy, gen("a", GenDirection::Forward)); }) == ErrorCode::ModelVocabMismatch);
  MapRequest mr{"", MappingKind::Dep, 1, {}};
  CHECK(code_of([&] { text2text_mapping(m, gpt2(), mr); }) == ErrorCode::EmptySeed);
  mr.input_text = "x";
  mr.gen_count = 0;
  CHECK(code_of([&] { text2text_mapping(m, gpt2(), mr); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("text2text_mapping") {
  PromptTable t;
  t.by_start["<|startoftext|>"] = " The method of claim 1, wherein x. <|endoftext|>";
  t.by_start["<|startoftitle|>"] = " An engine that is fast. <|endofabstract|>";
  t.by_start["<|startofabstract|>"] = " Fast engine <|endoftitle|>";
  auto m = t.model();

  MapRequest dep{"A method.", MappingKind::Dep, 2, {}};
  auto out = text2text_mapping(m, gpt2(), dep);
  CHECK(out.outputs == std::vector<std::string>{"The method of claim 1, wherein x.", "The method of claim 1, wherein x."});
  CHECK(t.seen[0] == "<|startoftext|> A method. <|dep|>");
  CHECK(t.seeds[0] != t.seeds[1]);
  CHECK(out.provenance.max_new_tokens == 512);
  CHECK(out.provenance.target == "dep");

  MapRequest t2a{"Fast engine", MappingKind::Title2Abstract, 1, {}};
  auto abs = text2text_mapping(m, gpt2(), t2a);
  CHECK(abs.outputs[0] == "An engine that is fast.");
  CHECK(abs.provenance.max_new_tokens == 256);
  MapRequest a2t{abs.outputs[0], MappingKind::Abstract2Title, 1, {}};
  CHECK(text2text_mapping(m, gpt2(), a2t).outputs[0] == "Fast engine");
}

TEST_CASE("run_flow chains four stages") {
  PromptTable t;
  t.by_start["<|backwardtitlestart|>"] = " Smart <|backwardtitleend|>";
  t.by_start["<|startoftitle|> Smart temperature optimization <|title2abstract|>"] =
      " A system optimizes temperature. <|endofabstract|>";
  t.by_start["<|startoftitle|>"] = " system <|endoftitle|>";
  t.by_start["<|startofabstract|>"] = " A system comprising a sensor. <|endoftext|>";
  t.by_start["<|startoftext|>"] = " The system of claim 1, wherein the sensor is thermal. <|endoftext|>";
  auto m = t.model();

  FlowRequest req;
  req.seed = "temperature optimization";
  req.dep_count = 2;
  req.rng_seed = 5;
  auto r = run_flow(m, gpt2(), req);
  CHECK(r.title == "Smart temperature optimization system");
  REQUIRE(r.dependent_claims.size() == 2);
  REQUIRE(r.provenance.size() == 4);
  CHECK(r.provenance[0].stage == "title");
  CHECK(r.provenance[0].direction == GenDirection::Both);
  CHECK(r.provenance[3].stage == "dependent_claims");
  CHECK(r.provenance[3].gen_count == 2);
  CHECK(r.provenance[1].input_text == r.title);
  CHECK(r.provenance[2].input_text == r.abstract);
  CHECK(r.provenance[3].input_text == r.independent_claim);
  CHECK(r.independent_claim == "A system comprising a sensor.");

  auto again = run_flow(m, gpt2(), req);
  CHECK(to_json(again).dump() == to_json(r).dump());

  auto j = to_json(r);
  CHECK(j["dependent_claims"].size() == 2);
  CHECK(j["provenance"][0]["direction"] == "both");
}

TEST_CASE("run_flow labels the failing stage") {
  PromptTable t;
  auto m = t.model();
  FlowRequest req;
  try {
    run_flow(m, gpt2(), req);
    FAIL("expected EmptySeed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySeed);
    CHECK(e.message().starts_with("stage title:"));
  }
  // An empty abstract cannot seed the claim stage.
  t.by_start["<|startoftitle|> x <|title2abstract|>"] = " <|endofabstract|>";
  req.seed = "x";
  try {
    run_flow(m, gpt2(), req);
    FAIL("expected EmptySeed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySeed);
    CHECK(e.message().starts_with("stage claim:"));
  }
  req.dep_count = 0;
  CHECK(code_of([&] { run_flow(m, gpt2(), req); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("property: an untrained transformer keeps every contract") {
  const std::vector<std::string> words = {"cooling", "device", "heat", "pipe", "fan", "method"};
  const auto tok = testing::make_toy_tokenizer(words);
  lm::ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(tok.size());
  cfg.context_len = 32;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_model = 16;
  const auto params = lm::init_params<float>(cfg);
  TransformerLM model(params);

  for (std::uint64_t seed = 0; seed < 6; ++seed)
    for (auto dir : {GenDirection::Forward, GenDirection::Backward, GenDirection::Both}) {
      GenRequest r;
      r.input_text = "heat pipe";
      r.direction = dir;
      r.gen_count = 2;
      r.sampling.max_new_tokens = 12;
      r.sampling.rng_seed = seed;
      auto a = patent_text_gen(model, tok, r);
      auto b = patent_text_gen(model, tok, r);
      CHECK(a.outputs == b.outputs);
      for (const auto& s : a.outputs) {
        CHECK(s.find("heat pipe") != std::string::npos);
        if (dir == GenDirection::Forward) CHECK(s.starts_with("heat pipe"));
        if (dir == GenDirection::Backward) CHECK(s.ends_with("heat pipe"));
        CHECK_FALSE(contains_tag(s));
      }
      MapRequest mr{"cooling fan", MappingKind::Abstract2Claim, 1, {}};
      mr.sampling.max_new_tokens = 12;
      mr.sampling.rng_seed = seed;
      for (const auto& s : text2text_mapping(model, tok, mr).outputs) CHECK_FALSE(contains_tag(s));
    }
}
