#include <doctest.h>

#include <random>
#include <set>

#include "metaflow/error.hpp"
#include "metaflow/tag_schema.hpp"

using namespace metaflow;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

std::string random_words(std::mt19937& rng, int min_words = 1) {
  static const char* vocab[] = {"cooling", "device", "a",      "method", "of",   "claim", "1,",
                                "wherein", "the",    "heat",   "pipe",   "(x)",  "42",    "<",
                                "|",       ">",      "naïve",  "light-", "emit", "—",     "unit."};
  std::uniform_int_distribution<int> n(min_words, 12);
  std::uniform_int_distribution<int> w(0, std::size(vocab) - 1);
  std::string out;
  int count = n(rng);
  for (int i = 0; i < count; ++i) {
    if (i) out += ' ';
    out += vocab[w(rng)];
  }
  return out;
}

}  // namespace

TEST_CASE("canonical tag table") {
  CHECK(start_tag(MetadataKind::Title, Direction::Forward) == "<|startoftitle|>");
  CHECK(end_tag(MetadataKind::Claim, Direction::Backward) == "<|endofbackward|>");
  CHECK(mapping_tag(MappingKind::Abstract2Claim) == "<|abstract2claim|>");
  CHECK(start_tag(MetadataKind::Abstract, Direction::Backward) == "<|backwardabstractstart|>");
  CHECK(end_tag(MetadataKind::Abstract, Direction::Backward) == "<|backwardabstractend|>");
}

TEST_CASE("dependent claims share the claim tags") {
  for (auto dir : {Direction::Forward, Direction::Backward}) {
    CHECK(start_tag(MetadataKind::DependentClaim, dir) == start_tag(MetadataKind::Claim, dir));
    CHECK(end_tag(MetadataKind::DependentClaim, dir) == end_tag(MetadataKind::Claim, dir));
  }
}

TEST_CASE("tags are distinct, pipe-delimited, and never nested") {
  auto tags = all_tags();
  CHECK(tags.size() == 17);
  std::set<std::string_view> unique(tags.begin(), tags.end());
  CHECK(unique.size() == tags.size());
  for (auto a : tags) {
    CHECK(a.starts_with("<|"));
    CHECK(a.ends_with("|>"));
    CHECK(a.size() > 4);
    for (auto b : tags)
      if (a != b) CHECK(a.find(b) == std::string_view::npos);
  }
}

TEST_CASE("mapping source and target") {
  CHECK(mapping_source(MappingKind::Title2Abstract) == MetadataKind::Title);
  CHECK(mapping_target(MappingKind::Title2Abstract) == MetadataKind::Abstract);
  CHECK(mapping_source(MappingKind::Abstract2Claim) == MetadataKind::Abstract);
  CHECK(mapping_target(MappingKind::Claim2Abstract) == MetadataKind::Abstract);
  CHECK(mapping_target(MappingKind::Abstract2Title) == MetadataKind::Title);
  CHECK(mapping_target(MappingKind::Dep) == MetadataKind::DependentClaim);
}

TEST_CASE("reverse_words") {
  CHECK(reverse_words("a b c") == "c b a");
  CHECK(reverse_words("") == "");
  CHECK(reverse_words("word") == "word");
  CHECK(reverse_words("  a \t b\n") == "b a");
}

TEST_CASE("wrap_single renders forward and backward records") {
  auto fwd = wrap_single("Cooling device", MetadataKind::Title, Direction::Forward);
  CHECK(fwd.rendered == "<|startoftitle|> Cooling device <|endoftitle|>");
  auto bwd = wrap_single("Cooling device", MetadataKind::Title, Direction::Backward);
  CHECK(bwd.rendered == "<|backwardtitlestart|> device Cooling <|backwardtitleend|>");
  CHECK(bwd.text_a == "Cooling device");

  CHECK(code_of([] { wrap_single("", MetadataKind::Title, Direction::Forward); }) == ErrorCode::EmptyText);
  CHECK(code_of([] { wrap_single("   ", MetadataKind::Title, Direction::Forward); }) == ErrorCode::EmptyText);
  CHECK(code_of([] { wrap_single("a <|dep|> b", MetadataKind::Claim, Direction::Forward); }) ==
        ErrorCode::TagCollision);
}

TEST_CASE("wrap_mapping renders source, mapping tag, target") {
  auto t2a = wrap_mapping("Fast engine", "An engine ...", MappingKind::Title2Abstract);
  CHECK(t2a.rendered == "<|startoftitle|> Fast engine <|title2abstract|> An engine ... <|endofabstract|>");
  auto dep = wrap_mapping("1. A method...", "The method of claim 1...", MappingKind::Dep);
  CHECK(dep.rendered == "<|startoftext|> 1. A method... <|dep|> The method of claim 1... <|endoftext|>");
  CHECK(code_of([] { wrap_mapping("x", "", MappingKind::Abstract2Title); }) == ErrorCode::EmptyText);
  CHECK(code_of([] { wrap_mapping("x <|endoftext|>", "y", MappingKind::Abstract2Title); }) == ErrorCode::TagCollision);
}

TEST_CASE("parse_record inverts wrapping") {
  auto rec = parse_record("<|backwardtitlestart|> device Cooling <|backwardtitleend|>");
  REQUIRE(std::holds_alternative<SingleKind>(rec.kind));
  CHECK(std::get<SingleKind>(rec.kind) == SingleKind{MetadataKind::Title, Direction::Backward});
  CHECK(rec.text_a == "Cooling device");
  CHECK_FALSE(rec.text_b.has_value());

  auto m = parse_record("<|startofabstract|> some abstract <|abstract2claim|> a claim <|endoftext|>");
  REQUIRE(std::holds_alternative<MappingKind>(m.kind));
  CHECK(std::get<MappingKind>(m.kind) == MappingKind::Abstract2Claim);
  CHECK(m.text_a == "some abstract");
  CHECK(*m.text_b == "a claim");
}

TEST_CASE("parse_record errors") {
  CHECK(code_of([] { parse_record("<|startoftitle|> abc"); }) == ErrorCode::MalformedRecord);
  CHECK(code_of([] { parse_record("<|bogus|> abc <|endoftitle|>"); }) == ErrorCode::UnknownTag);
  CHECK(code_of([] { parse_record("plain text"); }) == ErrorCode::UnknownTag);
  CHECK(code_of([] { parse_record("<|startoftitle|> a <|title2abstract|> b <|endoftitle|>"); }) ==
        ErrorCode::MalformedRecord);
  CHECK(code_of([] { parse_record("<|startoftitle|> a <|dep|> b <|endoftext|>"); }) == ErrorCode::MalformedRecord);
  CHECK(code_of([] { parse_record("<|startoftitle|>  <|endoftitle|>"); }) == ErrorCode::MalformedRecord);
}

TEST_CASE("property: parse(wrap_single) is the identity on normalized text") {
  std::mt19937 rng(11);
  for (int i = 0; i < 2000; ++i) {
    const std::string text = random_words(rng);
    for (auto kind : {MetadataKind::Title, MetadataKind::Abstract, MetadataKind::Claim}) {
      for (auto dir : {Direction::Forward, Direction::Backward}) {
        auto back = parse_record(wrap_single(text, kind, dir).rendered);
        REQUIRE(std::holds_alternative<SingleKind>(back.kind));
        CHECK(std::get<SingleKind>(back.kind) == SingleKind{kind, dir});
        CHECK(back.text_a == text);
      }
    }
    // Dependent claims come back as claims: they render identically.
    auto dc = parse_record(wrap_single(text, MetadataKind::DependentClaim, Direction::Forward).rendered);
    CHECK(std::get<SingleKind>(dc.kind).kind == MetadataKind::Claim);
  }
}

TEST_CASE("property: parse(wrap_mapping) is the identity") {
  std::mt19937 rng(12);
  for (int i = 0; i < 2000; ++i) {
    const std::string src = random_words(rng), dst = random_words(rng);
    for (auto m : kAllMappingKinds) {
      auto back = parse_record(wrap_mapping(src, dst, m).rendered);
      REQUIRE(std::holds_alternative<MappingKind>(back.kind));
      CHECK(std::get<MappingKind>(back.kind) == m);
      CHECK(back.text_a == src);
      CHECK(*back.text_b == dst);
    }
  }
}

TEST_CASE("property: reverse_words is an involution up to whitespace normalization") {
  std::mt19937 rng(13);
  const char* spaces[] = {" ", "  ", "\t", "\n "};
  for (int i = 0; i < 2000; ++i) {
    std::string text = random_words(rng, 0);
    for (auto& c : text)
      if (c == ' ' && rng() % 3 == 0) c = '\t';
    text = spaces[rng() % 4] + text + spaces[rng() % 4];
    CHECK(reverse_words(reverse_words(text)) == normalize_whitespace(text));
  }
}

TEST_CASE("name round trips") {
  for (auto k : kAllMetadataKinds) CHECK(parse_metadata_kind(to_string(k)) == k);
  for (auto m : kAllMappingKinds) CHECK(parse_mapping_kind(to_string(m)) == m);
  CHECK(parse_direction("backward") == Direction::Backward);
  CHECK_FALSE(parse_mapping_kind("title2claim").has_value());
  CHECK(record_kind_label(SingleKind{MetadataKind::Title, Direction::Backward}) == "title_bwd");
  CHECK(record_kind_label(MappingKind::Dep) == "dep");
}

TEST_CASE("find_first_tag reports the earliest tag") {
  auto hit = find_first_tag("abc <|dep|> x <|startoftitle|>");
  REQUIRE(hit.has_value());
  CHECK(hit->pos == 4);
  CHECK(hit->tag == "<|dep|>");
  CHECK_FALSE(contains_tag("a < | b |>"));
}
