#include "metaflow/claim_parser.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "metaflow/error.hpp"

namespace metaflow {
namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_blank(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_blank(s.back())) s.remove_suffix(1);
  return s;
}

// Parses "^\s*(\d+)\s*\." and returns the number plus the offset past the dot.
std::optional<std::pair<int, std::size_t>> claim_header(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && is_blank(line[i])) ++i;
  std::size_t digits = i;
  long value = 0;
  while (i < line.size() && is_digit(line[i]) && i - digits < 6) value = value * 10 + (line[i++] - '0');
  if (i == digits || (i < line.size() && is_digit(line[i]))) return std::nullopt;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  if (i >= line.size() || line[i] != '.') return std::nullopt;
  // "1.5 mm" is a decimal, not a claim header.
  if (i + 1 < line.size() && is_digit(line[i + 1])) return std::nullopt;
  if (value < 1) return std::nullopt;
  return std::pair{static_cast<int>(value), i + 1};
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Up to the first period that ends a sentence; periods inside numbers don't count.
std::string_view first_sentence(std::string_view body) {
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '.') continue;
    bool at_end = i + 1 == body.size() || is_blank(body[i + 1]);
    bool decimal = i > 0 && is_digit(body[i - 1]) && i + 1 < body.size() && is_digit(body[i + 1]);
    if (at_end && !decimal) return body.substr(0, i + 1);
  }
  return body;
}

struct ReferenceScan {
  std::set<int> numbers;
  bool multi_phrasing = false;
};

std::size_t skip_blanks(std::string_view s, std::size_t i) {
  while (i < s.size() && is_blank(s[i])) ++i;
  return i;
}

std::optional<int> read_number(std::string_view s, std::size_t& i) {
  std::size_t start = i;
  long value = 0;
  while (i < s.size() && is_digit(s[i]) && i - start < 6) value = value * 10 + (s[i++] - '0');
  if (i == start) return std::nullopt;
  return static_cast<int>(value);
}

bool word_at(std::string_view s, std::size_t i, std::string_view word) {
  if (s.substr(i, word.size()) != word) return false;
  std::size_t end = i + word.size();
  return end >= s.size() || !is_alpha(s[end]);
}

ReferenceScan scan_references(std::string_view sentence_in) {
  const std::string sentence = lowercase(sentence_in);
  const std::string_view s = sentence;
  ReferenceScan scan;

  for (std::string_view phrase : {"any one of", "any of claims", "any preceding claim",
                                  "any of the preceding claims", "one or more of claims"}) {
    if (s.find(phrase) != std::string_view::npos) scan.multi_phrasing = true;
  }

  std::size_t pos = 0;
  while ((pos = s.find("claim", pos)) != std::string_view::npos) {
    if (pos > 0 && is_alpha(s[pos - 1])) {
      pos += 5;
      continue;
    }
    std::size_t i = pos + 5;
    if (i < s.size() && s[i] == 's') ++i;
    pos = i;
    if (i < s.size() && is_alpha(s[i])) continue;
    i = skip_blanks(s, i);
    auto first = read_number(s, i);
    if (!first) continue;
    scan.numbers.insert(*first);
    int last = *first;

    // Continuation: "N, M", "N or M", "N and M", "N to M", "N-M", each optionally
    // repeating the word "claim".
    while (true) {
      std::size_t j = skip_blanks(s, i);
      bool range = false;
      bool disjunction = false;
      if (j < s.size() && (s[j] == ',' || s[j] == '-')) {
        range = s[j] == '-';
        ++j;
      } else if (j + 3 <= s.size() && s.compare(j, 3, "\xE2\x80\x93") == 0) {  // en dash
        range = true;
        j += 3;
      } else if (word_at(s, j, "or")) {
        disjunction = true;
        j += 2;
      } else if (word_at(s, j, "and")) {
        j += 3;
      } else if (word_at(s, j, "to")) {
        range = true;
        j += 2;
      } else {
        break;
      }
      j = skip_blanks(s, j);
      if (word_at(s, j, "or")) {  // ", or"
        disjunction = true;
        j = skip_blanks(s, j + 2);
      }
      if (s.compare(j, 5, "claim") == 0) {
        j += 5;
        if (j < s.size() && s[j] == 's') ++j;
        j = skip_blanks(s, j);
      }
      auto next = read_number(s, j);
      if (!next) {
        // "claim 1 or ..." with no second number still reads as a disjunction.
        if (disjunction) scan.multi_phrasing = true;
        break;
      }
      if (range) {
        scan.multi_phrasing = true;
        for (int n = std::min(last, *next); n <= std::max(last, *next) && n - last < 10000; ++n)
          scan.numbers.insert(n);
      }
      if (disjunction) scan.multi_phrasing = true;
      scan.numbers.insert(*next);
      last = *next;
      i = j;
    }
    pos = i;
  }
  return scan;
}

}  // namespace

std::string_view to_string(ClaimKind kind) {
  switch (kind) {
    case ClaimKind::Independent: return "independent";
    case ClaimKind::Dependent: return "dependent";
    case ClaimKind::MultipleDependent: return "multiple_dependent";
  }
  return "independent";
}

std::vector<NumberedText> segment_claims(std::string_view claims_text) {
  std::vector<NumberedText> out;
  std::string current;
  std::size_t start = 0;
  while (start <= claims_text.size()) {
    std::size_t end = claims_text.find('\n', start);
    if (end == std::string_view::npos) end = claims_text.size();
    std::string_view line = claims_text.substr(start, end - start);
    auto header = claim_header(line);
    if (header && (out.empty() || header->first > out.back().number)) {
      if (!out.empty()) out.back().body = std::string(trim(current));
      out.push_back({header->first, {}});
      current = std::string(line.substr(header->second));
    } else if (!out.empty()) {
      current += '\n';
      current += line;
    }
    start = end + 1;
  }
  if (out.empty()) throw Error(ErrorCode::NoClaimsFound, "no numbered claim found");
  out.back().body = std::string(trim(current));
  return out;
}

Claim classify_claim(int number, std::string_view body) {
  Claim claim;
  claim.number = number;
  claim.body = std::string(body);
  auto scan = scan_references(first_sentence(body));

  // "any one of the preceding claims" names no numbers; it refers to all earlier claims.
  if (scan.multi_phrasing && scan.numbers.empty())
    for (int n = 1; n < number; ++n) scan.numbers.insert(n);
  claim.referenced = std::move(scan.numbers);

  if (claim.referenced.empty() && !scan.multi_phrasing) {
    claim.kind = ClaimKind::Independent;
  } else if (claim.referenced.size() == 1 && !scan.multi_phrasing && *claim.referenced.begin() < number) {
    claim.kind = ClaimKind::Dependent;
    claim.parent = *claim.referenced.begin();
  } else {
    claim.kind = ClaimKind::MultipleDependent;
  }
  return claim;
}

std::vector<Claim> parse_claims(std::string_view claims_text) {
  std::vector<Claim> claims;
  for (auto& seg : segment_claims(claims_text)) claims.push_back(classify_claim(seg.number, seg.body));
  return claims;
}

ClaimPairs build_claim_pairs(const std::vector<Claim>& claims) {
  std::map<int, const Claim*> by_number;
  for (const auto& c : claims) by_number[c.number] = &c;

  ClaimPairs result;
  for (const auto& [number, claim] : by_number) {
    if (claim->kind != ClaimKind::Dependent) continue;
    auto parent = by_number.find(*claim->parent);
    if (parent == by_number.end()) {
      result.dangling.push_back(number);
      continue;
    }
    result.pairs.push_back({parent->first, number, parent->second->body, claim->body});
  }
  return result;
}

}  // namespace metaflow
