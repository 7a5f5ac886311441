#include "metaflow/bpe_tokenizer.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "metaflow/error.hpp"
#include "metaflow/unicode.hpp"

namespace metaflow {
namespace {

std::array<char32_t, 256> make_byte_table() {
  std::array<char32_t, 256> table{};
  std::array<bool, 256> printable{};
  for (int b = '!'; b <= '~'; ++b) printable[b] = true;
  for (int b = 0xA1; b <= 0xAC; ++b) printable[b] = true;
  for (int b = 0xAE; b <= 0xFF; ++b) printable[b] = true;
  char32_t next = 256;
  for (int b = 0; b < 256; ++b) table[b] = printable[b] ? static_cast<char32_t>(b) : next++;
  return table;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// One code point with its GPT-2 character class.
enum class CharClass : std::uint8_t { Letter, Number, Space, Other };

struct CodePoint {
  char32_t cp;
  std::uint32_t offset;
  CharClass cls;
};

std::vector<CodePoint> classify(std::string_view text) {
  std::vector<CodePoint> cps;
  cps.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    auto d = unicode::decode_at(text, i);
    CharClass cls = CharClass::Other;
    if (d.valid) {
      if (unicode::is_letter(d.cp))
        cls = CharClass::Letter;
      else if (unicode::is_number(d.cp))
        cls = CharClass::Number;
      else if (unicode::is_whitespace(d.cp))
        cls = CharClass::Space;
    }
    cps.push_back({d.valid ? d.cp : unicode::kReplacement, static_cast<std::uint32_t>(i), cls});
    i += d.len;
  }
  return cps;
}

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) { return (std::uint64_t{a} << 32) | b; }

}  // namespace

const std::array<char32_t, 256>& Tokenizer::byte_to_unicode() {
  static const auto table = make_byte_table();
  return table;
}

Tokenizer::SymbolId Tokenizer::intern(const std::string& symbol) {
  auto [it, inserted] = symbol_ids_.try_emplace(symbol, static_cast<SymbolId>(symbols_.size()));
  if (inserted) {
    symbols_.push_back(symbol);
    auto tok = token_to_id_.find(symbol);
    symbol_to_token_.push_back(tok == token_to_id_.end() ? -1 : tok->second);
  }
  return it->second;
}

Tokenizer Tokenizer::load(const std::filesystem::path& encoder_path, const std::filesystem::path& merges_path) {
  return from_strings(read_file(encoder_path), read_file(merges_path));
}

Tokenizer Tokenizer::from_strings(std::string_view encoder_json, std::string_view merges_text) {
  Tokenizer tok;

  nlohmann::json enc;
  try {
    enc = nlohmann::json::parse(encoder_json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("encoder.json: ") + e.what());
  }
  if (!enc.is_object() || enc.empty()) throw Error(ErrorCode::FormatError, "encoder.json must be a non-empty object");

  tok.id_to_token_.assign(enc.size(), {});
  std::vector<bool> seen(enc.size(), false);
  for (auto it = enc.begin(); it != enc.end(); ++it) {
    if (!it.value().is_number_integer())
      throw Error(ErrorCode::FormatError, "encoder.json: non-integer id for " + it.key());
    auto id = it.value().get<std::int64_t>();
    if (id < 0 || id >= static_cast<std::int64_t>(enc.size()) || seen[id])
      throw Error(ErrorCode::FormatError, "encoder.json: ids must be a permutation of [0, size)");
    seen[id] = true;
    tok.id_to_token_[id] = it.key();
    tok.token_to_id_.emplace(it.key(), static_cast<TokenId>(id));
  }

  // Byte form of every token, by inverting the byte table.
  const auto& table = byte_to_unicode();
  std::unordered_map<char32_t, unsigned char> unicode_to_byte;
  for (int b = 0; b < 256; ++b) unicode_to_byte[table[b]] = static_cast<unsigned char>(b);
  tok.id_to_bytes_.reserve(tok.id_to_token_.size());
  for (const auto& t : tok.id_to_token_) {
    std::string bytes;
    for (std::size_t i = 0; i < t.size();) {
      auto d = unicode::decode_at(t, i);
      auto b = unicode_to_byte.find(d.cp);
      if (!d.valid || b == unicode_to_byte.end())
        throw Error(ErrorCode::FormatError, "encoder.json: token outside the byte alphabet: " + t);
      bytes += static_cast<char>(b->second);
      i += d.len;
    }
    tok.id_to_bytes_.push_back(std::move(bytes));
  }

  for (int b = 0; b < 256; ++b) {
    std::string sym;
    unicode::append_utf8(sym, table[b]);
    tok.byte_symbols_[b] = tok.intern(sym);
  }

  // vocab.bpe: version comment, then "left right" per line, newline-terminated.
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::uint32_t rank = 0;
  while (pos < merges_text.size()) {
    std::size_t end = merges_text.find('\n', pos);
    if (end == std::string_view::npos)
      throw Error(ErrorCode::FormatError, "vocab.bpe: truncated final line " + std::to_string(line_no + 1));
    std::string_view line = merges_text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 && line.starts_with("#")) continue;
    if (line.empty()) continue;
    auto space = line.find(' ');
    if (space == std::string_view::npos || space == 0 || space + 1 == line.size() ||
        line.find(' ', space + 1) != std::string_view::npos)
      throw Error(ErrorCode::FormatError, "vocab.bpe: malformed merge on line " + std::to_string(line_no));
    std::string left(line.substr(0, space));
    std::string right(line.substr(space + 1));
    SymbolId l = tok.intern(left);
    SymbolId r = tok.intern(right);
    SymbolId merged = tok.intern(left + right);
    if (!tok.merges_.emplace(pair_key(l, r), Merge{rank, merged}).second)
      throw Error(ErrorCode::FormatError, "vocab.bpe: duplicate merge on line " + std::to_string(line_no));
    ++rank;
  }
  tok.merge_count_ = rank;
  return tok;
}

std::optional<TokenId> Tokenizer::token_id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

const std::string& Tokenizer::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
    throw Error(ErrorCode::IdOutOfRange, "token id " + std::to_string(id));
  return id_to_token_[id];
}

// Equivalent of
//   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
std::vector<std::string_view> Tokenizer::pretokenize(std::string_view text) {
  const auto cps = classify(text);
  const std::size_t n = cps.size();
  std::vector<std::string_view> out;

  auto byte_at = [&](std::size_t i) -> std::uint32_t { return i < n ? cps[i].offset : static_cast<std::uint32_t>(text.size()); };
  auto emit = [&](std::size_t from, std::size_t to) { out.push_back(text.substr(byte_at(from), byte_at(to) - byte_at(from))); };
  auto run_end = [&](std::size_t i, CharClass cls) {
    while (i < n && cps[i].cls == cls) ++i;
    return i;
  };
  auto other_run_end = [&](std::size_t i) {
    while (i < n && cps[i].cls == CharClass::Other) ++i;
    return i;
  };

  std::size_t i = 0;
  while (i < n) {
    // Contractions.
    if (cps[i].cp == U'\'' && i + 1 < n) {
      char32_t c1 = cps[i + 1].cp;
      char32_t c2 = i + 2 < n ? cps[i + 2].cp : 0;
      std::size_t len = 0;
      if (c1 == U's' || c1 == U't' || c1 == U'm' || c1 == U'd')
        len = 2;
      else if ((c1 == U'r' && c2 == U'e') || (c1 == U'v' && c2 == U'e') || (c1 == U'l' && c2 == U'l'))
        len = 3;
      if (len) {
        emit(i, i + len);
        i += len;
        continue;
      }
    }

    // Optional leading U+0020 before a letter, number, or symbol run.
    std::size_t body = (cps[i].cp == U' ' && i + 1 < n) ? i + 1 : i;
    CharClass cls = cps[body].cls;
    if (cls == CharClass::Letter || cls == CharClass::Number) {
      std::size_t end = run_end(body, cls);
      emit(i, end);
      i = end;
      continue;
    }
    if (cls == CharClass::Other) {
      std::size_t end = other_run_end(body);
      emit(i, end);
      i = end;
      continue;
    }

    // Whitespace: \s+(?!\S) then \s+.
    std::size_t end = run_end(i, CharClass::Space);
    if (end == n || end - i == 1) {
      emit(i, end);
      i = end;
    } else {
      emit(i, end - 1);
      i = end - 1;
    }
  }
  return out;
}

void Tokenizer::bpe(std::string_view piece, TokenSequence& out) const {
  std::vector<SymbolId> word;
  word.reserve(piece.size());
  for (unsigned char b : piece) word.push_back(byte_symbols_[b]);

  while (word.size() > 1) {
    std::uint32_t best_rank = std::numeric_limits<std::uint32_t>::max();
    std::size_t best = 0;
    for (std::size_t i = 0; i + 1 < word.size(); ++i) {
      auto it = merges_.find(pair_key(word[i], word[i + 1]));
      if (it != merges_.end() && it->second.rank < best_rank) {
        best_rank = it->second.rank;
        best = i;
      }
    }
    if (best_rank == std::numeric_limits<std::uint32_t>::max()) break;

    const SymbolId first = word[best];
    const SymbolId second = word[best + 1];
    const SymbolId merged = merges_.at(pair_key(first, second)).result;
    // Merge every occurrence left to right, as the reference does.
    std::vector<SymbolId> next;
    next.reserve(word.size());
    for (std::size_t i = 0; i < word.size();) {
      if (i + 1 < word.size() && word[i] == first && word[i + 1] == second) {
        next.push_back(merged);
        i += 2;
      } else {
        next.push_back(word[i]);
        ++i;
      }
    }
    word.swap(next);
  }

  for (SymbolId s : word) {
    TokenId id = symbol_to_token_[s];
    if (id < 0) throw Error(ErrorCode::UnknownToken, "symbol not in vocabulary: " + symbols_[s]);
    out.push_back(id);
  }
}

TokenSequence Tokenizer::encode(std::string_view text) const {
  TokenSequence ids;
  for (auto piece : pretokenize(text)) bpe(piece, ids);
  return ids;
}

std::string Tokenizer::decode_bytes(std::span<const TokenId> ids) const {
  std::string bytes;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_bytes_.size())
      throw Error(ErrorCode::IdOutOfRange, "token id " + std::to_string(id) + " outside vocabulary of " +
                                               std::to_string(id_to_bytes_.size()));
    bytes += id_to_bytes_[id];
  }
  return bytes;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  return unicode::sanitize_utf8(decode_bytes(ids));
}

}  // namespace metaflow
