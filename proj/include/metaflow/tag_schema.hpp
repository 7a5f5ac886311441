#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>

namespace metaflow {

enum class MetadataKind { Title, Abstract, Claim, DependentClaim };
enum class Direction { Forward, Backward };
enum class MappingKind { Dep, Title2Abstract, Abstract2Claim, Claim2Abstract, Abstract2Title };

inline constexpr std::array<MetadataKind, 4> kAllMetadataKinds = {
    MetadataKind::Title, MetadataKind::Abstract, MetadataKind::Claim, MetadataKind::DependentClaim};
inline constexpr std::array<MappingKind, 5> kAllMappingKinds = {
    MappingKind::Dep, MappingKind::Title2Abstract, MappingKind::Abstract2Claim,
    MappingKind::Claim2Abstract, MappingKind::Abstract2Title};

std::string_view start_tag(MetadataKind kind, Direction dir);
std::string_view end_tag(MetadataKind kind, Direction dir);
std::string_view mapping_tag(MappingKind mapping);

// Source and target metadata of a mapping. Dep reports Claim as its source;
// a dependent claim may equally be the parent since both share the claim tags.
MetadataKind mapping_source(MappingKind mapping);
MetadataKind mapping_target(MappingKind mapping);

// Every tag string: 12 metadata tags followed by the 5 mapping tags.
std::span<const std::string_view> all_tags();

// Lowercase names used by the CLI, config files, and the HTTP API.
std::string_view to_string(MetadataKind kind);
std::string_view to_string(Direction dir);
std::string_view to_string(MappingKind mapping);
std::optional<MetadataKind> parse_metadata_kind(std::string_view name);
std::optional<Direction> parse_direction(std::string_view name);
std::optional<MappingKind> parse_mapping_kind(std::string_view name);

struct SingleKind {
  MetadataKind kind;
  Direction dir;
  friend bool operator==(const SingleKind&, const SingleKind&) = default;
};

using RecordKind = std::variant<SingleKind, MappingKind>;

struct TaggedRecord {
  RecordKind kind;
  std::string text_a;                 // sole text, or mapping source; natural word order
  std::optional<std::string> text_b;  // mapping target
  std::string rendered;
};

// Histogram key such as "title_fwd", "claim_bwd" or "title2abstract".
std::string record_kind_label(const RecordKind& kind);

/// Position of the earliest tag occurrence in `text`, if any.
struct TagHit {
  std::size_t pos;
  std::string_view tag;
};
std::optional<TagHit> find_first_tag(std::string_view text);
inline bool contains_tag(std::string_view text) { return find_first_tag(text).has_value(); }

// Reverses whitespace-separated word order and collapses whitespace runs.
std::string reverse_words(std::string_view text);
// Collapses whitespace runs to single spaces and trims both ends.
std::string normalize_whitespace(std::string_view text);

TaggedRecord wrap_single(std::string_view text, MetadataKind kind, Direction dir);
TaggedRecord wrap_mapping(std::string_view src_text, std::string_view dst_text, MappingKind mapping);

/// Inverse of wrap_single / wrap_mapping. Claim-tagged singles come back as
/// MetadataKind::Claim because dependent claims render with the same tags.
TaggedRecord parse_record(std::string_view rendered);

}  // namespace metaflow
