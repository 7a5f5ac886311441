#pragma once

#include <string>
#include <vector>

#include "metaflow/bpe_tokenizer.hpp"

namespace metaflow::testing {

struct ToyVocabFiles {
  std::string encoder_json;
  std::string merges;
};

// Byte alphabet plus merges under which every piece (e.g. " cooling", "<|",
// "startoftitle") encodes as a single token.
ToyVocabFiles make_toy_vocab(const std::vector<std::string>& pieces);

// Pieces covering every control tag as it appears inside rendered records.
std::vector<std::string> tag_pieces();

Tokenizer make_toy_tokenizer(const std::vector<std::string>& words);

}  // namespace metaflow::testing
