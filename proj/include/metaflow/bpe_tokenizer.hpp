#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace metaflow {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

/// Byte-level BPE tokenizer reading the GPT-2 `encoder.json` / `vocab.bpe`
/// pair. Immutable after construction; encode/decode are safe to call from
/// many threads at once.
class Tokenizer {
 public:
  static Tokenizer load(const std::filesystem::path& encoder_path,
                        const std::filesystem::path& merges_path);
  static Tokenizer from_strings(std::string_view encoder_json, std::string_view merges_text);

  TokenSequence encode(std::string_view text) const;

  // Invalid UTF-8 at token boundaries decodes to U+FFFD.
  std::string decode(std::span<const TokenId> ids) const;
  // Raw bytes, no UTF-8 repair.
  std::string decode_bytes(std::span<const TokenId> ids) const;

  std::size_t size() const { return id_to_token_.size(); }
  std::size_t merge_count() const { return merge_count_; }
  std::optional<TokenId> token_id(std::string_view token) const;
  const std::string& token(TokenId id) const;

  // GPT-2 regex pre-tokenization, exposed for tests.
  static std::vector<std::string_view> pretokenize(std::string_view text);

  // The 256-entry byte -> printable code point table.
  static const std::array<char32_t, 256>& byte_to_unicode();

 private:
  Tokenizer() = default;

  using SymbolId = std::uint32_t;
  SymbolId intern(const std::string& symbol);
  void bpe(std::string_view piece, TokenSequence& out) const;

  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::vector<std::string> id_to_bytes_;

  // BPE state operates on interned symbol strings.
  std::unordered_map<std::string, SymbolId> symbol_ids_;
  std::vector<std::string> symbols_;
  std::vector<TokenId> symbol_to_token_;  // -1 when the symbol is not in the vocabulary
  std::array<SymbolId, 256> byte_symbols_{};
  struct Merge {
    std::uint32_t rank;
    SymbolId result;
  };
  std::unordered_map<std::uint64_t, Merge> merges_;
  std::size_t merge_count_ = 0;
};

}  // namespace metaflow
