#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace metaflow {

enum class ClaimKind { Independent, Dependent, MultipleDependent };

std::string_view to_string(ClaimKind kind);

struct Claim {
  int number = 0;
  std::string body;
  ClaimKind kind = ClaimKind::Independent;
  std::optional<int> parent;  // set iff kind == Dependent
  std::set<int> referenced;
};

struct NumberedText {
  int number;
  std::string body;
  friend bool operator==(const NumberedText&, const NumberedText&) = default;
};

/// Splits raw claims text at lines that open with "N." where N is larger than
/// the previous claim number. Anything before the first claim is dropped.
/// Throws NoClaimsFound when nothing numbered is present.
std::vector<NumberedText> segment_claims(std::string_view claims_text);

// Scans the first sentence for "claim N" references. Never throws.
Claim classify_claim(int number, std::string_view body);

std::vector<Claim> parse_claims(std::string_view claims_text);

struct ClaimPair {
  int parent_number;
  int child_number;
  std::string parent_body;
  std::string child_body;
};

struct ClaimPairs {
  std::vector<ClaimPair> pairs;
  std::vector<int> dangling;  // dependent claims whose parent is missing
};

// One (parent, child) pair per singly-dependent claim, ordered by child number.
ClaimPairs build_claim_pairs(const std::vector<Claim>& claims);

}  // namespace metaflow
