#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "metaflow/bpe_tokenizer.hpp"
#include "metaflow/tag_schema.hpp"

namespace metaflow {

struct PatentDoc {
  std::string patent_id;
  std::string title;
  std::string abstract;
  std::string claims;  // raw claims text, numbered paragraphs
};

// Reads one document per line. Blank lines are skipped. Throws FileError,
// or FormatError naming the line for bad JSON, missing ids, or empty documents.
std::vector<PatentDoc> read_docs_jsonl(const std::filesystem::path& path);
std::vector<PatentDoc> read_docs_jsonl(std::istream& in);

struct DocRecords {
  std::vector<TaggedRecord> records;
  std::vector<std::string> notes;  // skipped fields and claims, one line each
};

/// All tagged records of one document, in a fixed order:
///   title fwd/bwd, abstract fwd/bwd, each independent claim fwd/bwd,
///   title2abstract, abstract2title, per independent claim abstract2claim and
///   claim2abstract, then one dep record per singly-dependent claim.
/// Field text is whitespace-normalized first. A field holding a control tag is
/// skipped with a note; so are claims text without any numbered claim.
DocRecords build_records(const PatentDoc& doc);

/// Fixed-width training examples, stored flat: example i is
/// tokens[i * context_len, (i + 1) * context_len).
struct Shard {
  int context_len = 0;
  std::vector<TokenId> tokens;

  std::size_t size() const { return context_len ? tokens.size() / static_cast<std::size_t>(context_len) : 0; }
  std::span<const TokenId> example(std::size_t i) const {
    return {tokens.data() + i * static_cast<std::size_t>(context_len), static_cast<std::size_t>(context_len)};
  }
};

inline constexpr std::size_t kShardCapacity = 4096;
inline constexpr std::uint32_t kShardVersion = 1;

struct PackOptions {
  int context_len = 128;
  std::uint64_t seed = 0;
  std::size_t reservoir_size = 10000;  // recent records available as fill
  std::size_t shard_capacity = kShardCapacity;
  unsigned threads = 0;  // tokenizer workers; 0 = hardware concurrency
};

struct PackReport {
  std::size_t records = 0;
  std::size_t record_tokens = 0;
  std::size_t examples = 0;
  std::size_t shards = 0;
};

using ShardSink = std::function<void(Shard&&)>;

/// Packs token sequences into fixed-width examples. Records are visited in a
/// seeded shuffled order. A record is cut into windows starting at 0, W/2, W,
/// ... up to the first window that reaches its end; a window that runs past
/// the end is completed with whole records drawn uniformly from a buffer of
/// recently packed records (the record itself when the buffer is empty) and
/// truncated to W. Shards of at most shard_capacity examples go to `sink`.
/// Throws EmptyStream for no input and InvalidArgument for W < 8.
PackReport pack_tokens(std::span<const TokenSequence> records, const PackOptions& options, const ShardSink& sink);

/// Tokenizes rendered records (in parallel) and packs them.
PackReport pack(std::span<const std::string> rendered, const Tokenizer& tokenizer, const PackOptions& options,
                const ShardSink& sink);
std::vector<Shard> pack(std::span<const std::string> rendered, const Tokenizer& tokenizer,
                        const PackOptions& options);

// Shard file, little-endian:
//   "PTX2" | u32 version | u32 context_len | u64 n_examples | n x W x u32 ids
void write_shard(const std::filesystem::path& path, const Shard& shard);
void write_shard(std::ostream& out, const Shard& shard);
Shard read_shard(const std::filesystem::path& path);
Shard read_shard(std::istream& in);

// "shard-00000.bin", "shard-00001.bin", ... in `dir`, sorted by name.
std::filesystem::path shard_path(const std::filesystem::path& dir, std::size_t index);
std::vector<std::filesystem::path> list_shards(const std::filesystem::path& dir);

struct CorpusStats {
  std::map<std::string, std::size_t> records_by_kind;
  std::size_t records = 0;
  std::size_t shards = 0;
  std::size_t examples = 0;
  std::size_t tokens = 0;  // examples x context_len, summed over shards
  friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

CorpusStats corpus_stats(std::span<const TaggedRecord> records, std::span<const Shard> shards);

}  // namespace metaflow
