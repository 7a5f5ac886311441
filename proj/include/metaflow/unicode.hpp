#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace metaflow::unicode {

inline constexpr char32_t kReplacement = 0xFFFD;

struct Decoded {
  char32_t cp;
  std::size_t len;  // bytes consumed, >= 1
  bool valid;
};

// Decodes one UTF-8 sequence at `pos`. Invalid input consumes the maximal
// ill-formed subpart and reports kReplacement.
Decoded decode_at(std::string_view s, std::size_t pos);

void append_utf8(std::string& out, char32_t cp);

// Replaces ill-formed sequences with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);
bool is_valid_utf8(std::string_view bytes);

bool is_letter(char32_t cp);
bool is_number(char32_t cp);
bool is_whitespace(char32_t cp);

}  // namespace metaflow::unicode
