#include "metaflow/tag_schema.hpp"

#include <algorithm>
#include <vector>

#include "metaflow/error.hpp"

namespace metaflow {
namespace {

struct TagPair {
  std::string_view start;
  std::string_view end;
};

// Indexed by [kind][direction]; DependentClaim reuses the claim row.
constexpr TagPair kMetadataTags[3][2] = {
    {{"<|startoftitle|>", "<|endoftitle|>"}, {"<|backwardtitlestart|>", "<|backwardtitleend|>"}},
    {{"<|startofabstract|>", "<|endofabstract|>"},
     {"<|backwardabstractstart|>", "<|backwardabstractend|>"}},
    {{"<|startoftext|>", "<|endoftext|>"}, {"<|startofbackward|>", "<|endofbackward|>"}},
};

constexpr std::string_view kMappingTags[5] = {
    "<|dep|>", "<|title2abstract|>", "<|abstract2claim|>", "<|claim2abstract|>", "<|abstract2title|>"};

constexpr std::array<std::string_view, 17> kAllTags = {
    kMetadataTags[0][0].start, kMetadataTags[0][0].end, kMetadataTags[0][1].start,
    kMetadataTags[0][1].end,   kMetadataTags[1][0].start, kMetadataTags[1][0].end,
    kMetadataTags[1][1].start, kMetadataTags[1][1].end,   kMetadataTags[2][0].start,
    kMetadataTags[2][0].end,   kMetadataTags[2][1].start, kMetadataTags[2][1].end,
    kMappingTags[0],           kMappingTags[1],           kMappingTags[2],
    kMappingTags[3],           kMappingTags[4]};

int row(MetadataKind kind) {
  switch (kind) {
    case MetadataKind::Title: return 0;
    case MetadataKind::Abstract: return 1;
    case MetadataKind::Claim:
    case MetadataKind::DependentClaim: return 2;
  }
  return 2;
}

int col(Direction dir) { return dir == Direction::Forward ? 0 : 1; }

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) words.push_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

std::string join(const std::vector<std::string_view>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

void check_text(std::string_view text) {
  if (normalize_whitespace(text).empty()) throw Error(ErrorCode::EmptyText, "text is empty");
  if (auto hit = find_first_tag(text))
    throw Error(ErrorCode::TagCollision, "text contains tag " + std::string(hit->tag));
}

}  // namespace

std::string_view start_tag(MetadataKind kind, Direction dir) {
  return kMetadataTags[row(kind)][col(dir)].start;
}

std::string_view end_tag(MetadataKind kind, Direction dir) {
  return kMetadataTags[row(kind)][col(dir)].end;
}

std::string_view mapping_tag(MappingKind mapping) {
  return kMappingTags[static_cast<int>(mapping)];
}

MetadataKind mapping_source(MappingKind mapping) {
  switch (mapping) {
    case MappingKind::Dep: return MetadataKind::Claim;
    case MappingKind::Title2Abstract: return MetadataKind::Title;
    case MappingKind::Abstract2Claim: return MetadataKind::Abstract;
    case MappingKind::Claim2Abstract: return MetadataKind::Claim;
    case MappingKind::Abstract2Title: return MetadataKind::Abstract;
  }
  return MetadataKind::Claim;
}

MetadataKind mapping_target(MappingKind mapping) {
  switch (mapping) {
    case MappingKind::Dep: return MetadataKind::DependentClaim;
    case MappingKind::Title2Abstract: return MetadataKind::Abstract;
    case MappingKind::Abstract2Claim: return MetadataKind::Claim;
    case MappingKind::Claim2Abstract: return MetadataKind::Abstract;
    case MappingKind::Abstract2Title: return MetadataKind::Title;
  }
  return MetadataKind::Claim;
}

std::span<const std::string_view> all_tags() { return kAllTags; }

std::string_view to_string(MetadataKind kind) {
  switch (kind) {
    case MetadataKind::Title: return "title";
    case MetadataKind::Abstract: return "abstract";
    case MetadataKind::Claim: return "claim";
    case MetadataKind::DependentClaim: return "dependent_claim";
  }
  return "claim";
}

std::string_view to_string(Direction dir) { return dir == Direction::Forward ? "forward" : "backward"; }

std::string_view to_string(MappingKind mapping) {
  switch (mapping) {
    case MappingKind::Dep: return "dep";
    case MappingKind::Title2Abstract: return "title2abstract";
    case MappingKind::Abstract2Claim: return "abstract2claim";
    case MappingKind::Claim2Abstract: return "claim2abstract";
    case MappingKind::Abstract2Title: return "abstract2title";
  }
  return "dep";
}

std::optional<MetadataKind> parse_metadata_kind(std::string_view name) {
  for (auto k : kAllMetadataKinds)
    if (to_string(k) == name) return k;
  return std::nullopt;
}

std::optional<Direction> parse_direction(std::string_view name) {
  if (name == "forward") return Direction::Forward;
  if (name == "backward") return Direction::Backward;
  return std::nullopt;
}

std::optional<MappingKind> parse_mapping_kind(std::string_view name) {
  for (auto m : kAllMappingKinds)
    if (to_string(m) == name) return m;
  return std::nullopt;
}

std::string record_kind_label(const RecordKind& kind) {
  if (const auto* single = std::get_if<SingleKind>(&kind)) {
    std::string label(to_string(single->kind));
    label += single->dir == Direction::Forward ? "_fwd" : "_bwd";
    return label;
  }
  return std::string(to_string(std::get<MappingKind>(kind)));
}

std::optional<TagHit> find_first_tag(std::string_view text) {
  std::optional<TagHit> best;
  for (auto tag : kAllTags) {
    auto pos = text.find(tag);
    if (pos != std::string_view::npos && (!best || pos < best->pos)) best = TagHit{pos, tag};
  }
  return best;
}

std::string reverse_words(std::string_view text) {
  auto words = split_words(text);
  std::reverse(words.begin(), words.end());
  return join(words);
}

std::string normalize_whitespace(std::string_view text) { return join(split_words(text)); }

TaggedRecord wrap_single(std::string_view text, MetadataKind kind, Direction dir) {
  check_text(text);
  TaggedRecord rec{SingleKind{kind, dir}, std::string(text), std::nullopt, {}};
  std::string body = dir == Direction::Forward ? std::string(text) : reverse_words(text);
  rec.rendered.reserve(body.size() + 48);
  rec.rendered.append(start_tag(kind, dir)).append(" ").append(body).append(" ").append(end_tag(kind, dir));
  return rec;
}

TaggedRecord wrap_mapping(std::string_view src_text, std::string_view dst_text, MappingKind mapping) {
  check_text(src_text);
  check_text(dst_text);
  TaggedRecord rec{mapping, std::string(src_text), std::string(dst_text), {}};
  rec.rendered.reserve(src_text.size() + dst_text.size() + 64);
  rec.rendered.append(start_tag(mapping_source(mapping), Direction::Forward))
      .append(" ")
      .append(src_text)
      .append(" ")
      .append(mapping_tag(mapping))
      .append(" ")
      .append(dst_text)
      .append(" ")
      .append(end_tag(mapping_target(mapping), Direction::Forward));
  return rec;
}

TaggedRecord parse_record(std::string_view rendered) {
  // Identify the leading start tag.
  std::optional<SingleKind> head;
  for (auto kind : {MetadataKind::Title, MetadataKind::Abstract, MetadataKind::Claim}) {
    for (auto dir : {Direction::Forward, Direction::Backward}) {
      auto tag = start_tag(kind, dir);
      if (rendered.starts_with(tag) && rendered.size() > tag.size() && rendered[tag.size()] == ' ')
        head = SingleKind{kind, dir};
    }
  }
  if (!head) {
    std::string shown(rendered.substr(0, std::min<std::size_t>(rendered.size(), 32)));
    throw Error(ErrorCode::UnknownTag, "record does not begin with a known start tag: " + shown);
  }

  const auto start = start_tag(head->kind, head->dir);
  std::string_view body = rendered.substr(start.size() + 1);

  auto malformed = [&](const std::string& why) {
    return Error(ErrorCode::MalformedRecord, why);
  };
  auto take_end = [&](std::string_view s, std::string_view end) -> std::string_view {
    if (s.size() < end.size() + 1 || !s.ends_with(end) || s[s.size() - end.size() - 1] != ' ')
      throw malformed("missing end tag " + std::string(end));
    return s.substr(0, s.size() - end.size() - 1);
  };
  auto check_field = [&](std::string_view s) {
    if (normalize_whitespace(s).empty()) throw malformed("empty text field");
    if (auto hit = find_first_tag(s)) throw malformed("unexpected tag " + std::string(hit->tag));
  };

  // Mapping records are forward-only and carry exactly one mapping tag.
  if (head->dir == Direction::Forward) {
    for (auto m : kAllMappingKinds) {
      std::string needle = " " + std::string(mapping_tag(m)) + " ";
      auto pos = body.find(needle);
      if (pos == std::string_view::npos) continue;
      if (mapping_source(m) != head->kind && !(m == MappingKind::Dep && head->kind == MetadataKind::Claim))
        throw malformed("mapping tag " + std::string(mapping_tag(m)) + " after wrong start tag");
      std::string_view src = body.substr(0, pos);
      std::string_view rest = take_end(body.substr(pos + needle.size()),
                                       end_tag(mapping_target(m), Direction::Forward));
      check_field(src);
      check_field(rest);
      return TaggedRecord{m, std::string(src), std::string(rest), std::string(rendered)};
    }
  }

  std::string_view text = take_end(body, end_tag(head->kind, head->dir));
  check_field(text);
  std::string natural = head->dir == Direction::Forward ? std::string(text) : reverse_words(text);
  return TaggedRecord{*head, std::move(natural), std::nullopt, std::string(rendered)};
}

}  // namespace metaflow
