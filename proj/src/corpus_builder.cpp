#include "metaflow/corpus_builder.hpp"

#include <algorithm>
#include <cstring>
#include <deque>
#include <fstream>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "metaflow/claim_parser.hpp"
#include "metaflow/error.hpp"
#include "metaflow/io.hpp"

namespace metaflow {

namespace {

std::string field(const nlohmann::json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string())
    throw Error(ErrorCode::FormatError, "line " + std::to_string(line) + ": field '" + key + "' is not a string");
  return it->get<std::string>();
}

}  // namespace

std::vector<PatentDoc> read_docs_jsonl(std::istream& in) {
  std::vector<PatentDoc> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": not an object");
    PatentDoc doc{field(j, "patent_id", line_no), field(j, "title", line_no), field(j, "abstract", line_no),
                  field(j, "claims", line_no)};
    if (doc.patent_id.empty())
      throw Error(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": missing patent_id");
    if (doc.title.empty() && doc.abstract.empty() && doc.claims.empty())
      throw Error(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": document has no text");
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<PatentDoc> read_docs_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileError, "cannot open " + path.string());
  return read_docs_jsonl(in);
}

DocRecords build_records(const PatentDoc& doc) {
  DocRecords out;
  const std::string& id = doc.patent_id;
  auto note = [&](const std::string& what) { out.notes.push_back(id + ": " + what); };

  // Normalized text of a field, or empty when the field is unusable.
  auto usable = [&](const std::string& text, const std::string& name) -> std::string {
    std::string norm = normalize_whitespace(text);
    if (!norm.empty() && contains_tag(norm)) {
      note(name + " skipped: contains a control tag");
      return {};
    }
    return norm;
  };

  const std::string title = usable(doc.title, "title");
  const std::string abstract = usable(doc.abstract, "abstract");

  std::vector<std::string> independents;
  std::vector<std::pair<std::string, std::string>> deps;
  if (!normalize_whitespace(doc.claims).empty()) {
    try {
      const auto claims = parse_claims(doc.claims);
      for (const auto& c : claims)
        if (c.kind == ClaimKind::Independent) {
          auto body = usable(c.body, "claim " + std::to_string(c.number));
          if (!body.empty()) independents.push_back(std::move(body));
        }
      const auto pairs = build_claim_pairs(claims);
      for (int n : pairs.dangling) note("claim " + std::to_string(n) + " skipped: parent claim not found");
      for (const auto& p : pairs.pairs) {
        auto parent = usable(p.parent_body, "claim " + std::to_string(p.parent_number));
        auto child = usable(p.child_body, "claim " + std::to_string(p.child_number));
        if (!parent.empty() && !child.empty()) deps.emplace_back(std::move(parent), std::move(child));
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoClaimsFound) throw;
      note("no claim records");
    }
  }

  auto& recs = out.records;
  for (auto dir : {Direction::Forward, Direction::Backward})
    if (!title.empty()) recs.push_back(wrap_single(title, MetadataKind::Title, dir));
  for (auto dir : {Direction::Forward, Direction::Backward})
    if (!abstract.empty()) recs.push_back(wrap_single(abstract, MetadataKind::Abstract, dir));
  for (const auto& claim : independents)
    for (auto dir : {Direction::Forward, Direction::Backward})
      recs.push_back(wrap_single(claim, MetadataKind::Claim, dir));

  if (!title.empty() && !abstract.empty()) {
    recs.push_back(wrap_mapping(title, abstract, MappingKind::Title2Abstract));
    recs.push_back(wrap_mapping(abstract, title, MappingKind::Abstract2Title));
  }
  if (!abstract.empty())
    for (const auto& claim : independents) {
      recs.push_back(wrap_mapping(abstract, claim, MappingKind::Abstract2Claim));
      recs.push_back(wrap_mapping(claim, abstract, MappingKind::Claim2Abstract));
    }
  for (const auto& [parent, child] : deps) recs.push_back(wrap_mapping(parent, child, MappingKind::Dep));
  return out;
}

PackReport pack_tokens(std::span<const TokenSequence> records, const PackOptions& options, const ShardSink& sink) {
  if (records.empty()) throw Error(ErrorCode::EmptyStream, "no records to pack");
  if (options.context_len < 8) throw Error(ErrorCode::InvalidArgument, "context_len must be >= 8");
  if (options.shard_capacity == 0) throw Error(ErrorCode::InvalidArgument, "shard_capacity must be >= 1");
  const auto W = static_cast<std::size_t>(options.context_len);
  const std::size_t stride = W / 2;

  // Fisher-Yates with a plain modulo draw, so the order is identical on every
  // standard library.
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);

  PackReport report;
  Shard shard{options.context_len, {}};
  auto flush = [&] {
    if (shard.tokens.empty()) return;
    ++report.shards;
    sink(std::move(shard));
    shard = Shard{options.context_len, {}};
  };

  std::deque<std::size_t> reservoir;
  for (std::size_t idx : order) {
    const TokenSequence& rec = records[idx];
    ++report.records;
    report.record_tokens += rec.size();
    if (rec.empty()) continue;

    // Window starts: 0, W/2, W, ... until a window reaches the record end.
    TokenSequence buf(rec.begin(), rec.end());
    std::vector<std::size_t> starts;
    for (std::size_t s = 0;; s += stride) {
      starts.push_back(s);
      if (s + W >= rec.size()) break;
    }
    const std::size_t needed = starts.back() + W;
    while (buf.size() < needed) {
      const TokenSequence& fill = reservoir.empty() ? rec : records[reservoir[rng() % reservoir.size()]];
      buf.insert(buf.end(), fill.begin(), fill.end());
    }
    for (std::size_t s : starts) {
      shard.tokens.insert(shard.tokens.end(), buf.begin() + static_cast<std::ptrdiff_t>(s),
                          buf.begin() + static_cast<std::ptrdiff_t>(s + W));
      ++report.examples;
      if (shard.size() == options.shard_capacity) flush();
    }

    reservoir.push_back(idx);
    if (reservoir.size() > options.reservoir_size) reservoir.pop_front();
  }
  flush();
  return report;
}

PackReport pack(std::span<const std::string> rendered, const Tokenizer& tokenizer, const PackOptions& options,
                const ShardSink& sink) {
  if (rendered.empty()) throw Error(ErrorCode::EmptyStream, "no records to pack");
  std::vector<TokenSequence> tokens(rendered.size());
  unsigned workers = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, rendered.size()));

  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < rendered.size(); i += workers) tokens[i] = tokenizer.encode(rendered[i]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return pack_tokens(tokens, options, sink);
}

std::vector<Shard> pack(std::span<const std::string> rendered, const Tokenizer& tokenizer,
                        const PackOptions& options) {
  std::vector<Shard> shards;
  pack(rendered, tokenizer, options, [&](Shard&& s) { shards.push_back(std::move(s)); });
  return shards;
}

void write_shard(std::ostream& out, const Shard& shard) {
  const auto W = static_cast<std::size_t>(shard.context_len);
  if (shard.context_len <= 0 || shard.tokens.size() % W != 0)
    throw Error(ErrorCode::InvalidArgument, "shard examples must all have context_len tokens");
  io::write_bytes(out, "PTX2", 4);
  io::write_le<std::uint32_t>(out, kShardVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(shard.context_len));
  io::write_le<std::uint64_t>(out, shard.size());
  std::vector<std::uint32_t> ids(shard.tokens.begin(), shard.tokens.end());
  io::write_le_array<std::uint32_t>(out, ids);
}

void write_shard(const std::filesystem::path& path, const Shard& shard) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::FileError, "cannot write " + path.string());
  write_shard(out, shard);
  if (!out) throw Error(ErrorCode::FileError, "write failed: " + path.string());
}

Shard read_shard(std::istream& in) {
  char magic[4];
  if (!io::read_bytes(in, magic, 4) || std::memcmp(magic, "PTX2", 4) != 0)
    throw Error(ErrorCode::FormatError, "not a shard file (bad magic)");
  std::uint32_t version = 0, ctx = 0;
  std::uint64_t n = 0;
  if (!io::read_le(in, version) || version != kShardVersion)
    throw Error(ErrorCode::FormatError, "unsupported shard version " + std::to_string(version));
  if (!io::read_le(in, ctx) || !io::read_le(in, n)) throw Error(ErrorCode::FormatError, "truncated shard header");
  if (ctx == 0 || n > (std::uint64_t{1} << 32) / ctx) throw Error(ErrorCode::FormatError, "implausible shard header");
  std::vector<std::uint32_t> ids(static_cast<std::size_t>(n * ctx));
  if (!io::read_le_array<std::uint32_t>(in, ids)) throw Error(ErrorCode::FormatError, "truncated shard body");
  Shard shard{static_cast<int>(ctx), std::vector<TokenId>(ids.begin(), ids.end())};
  return shard;
}

Shard read_shard(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileError, "cannot open " + path.string());
  try {
    return read_shard(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

std::filesystem::path shard_path(const std::filesystem::path& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "shard-%05zu.bin", index);
  return dir / name;
}

std::vector<std::filesystem::path> list_shards(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw Error(ErrorCode::FileError, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with("shard-") && name.ends_with(".bin")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

CorpusStats corpus_stats(std::span<const TaggedRecord> records, std::span<const Shard> shards) {
  CorpusStats stats;
  for (const auto& r : records) {
    ++stats.records_by_kind[record_kind_label(r.kind)];
    ++stats.records;
  }
  for (const auto& s : shards) {
    ++stats.shards;
    stats.examples += s.size();
    stats.tokens += s.tokens.size();
  }
  return stats;
}

}  // namespace metaflow
