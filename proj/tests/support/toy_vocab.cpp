#include "toy_vocab.hpp"

#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "metaflow/tag_schema.hpp"
#include "metaflow/unicode.hpp"

namespace metaflow::testing {

ToyVocabFiles make_toy_vocab(const std::vector<std::string>& pieces) {
  const auto& table = Tokenizer::byte_to_unicode();
  nlohmann::ordered_json enc = nlohmann::ordered_json::object();
  int next_id = 0;
  for (int b = 0; b < 256; ++b) {
    std::string sym;
    unicode::append_utf8(sym, table[b]);
    enc[sym] = next_id++;
  }
  std::string merges = "#version: toy\n";
  std::map<std::pair<std::string, std::string>, int> ranks;
  for (const auto& piece : pieces) {
    std::vector<std::string> syms;
    for (unsigned char c : piece) {
      std::string s;
      unicode::append_utf8(s, table[c]);
      syms.push_back(s);
    }
    // Replay the merges learned so far, then join what is left from the left.
    // New merges rank after every existing one, so earlier pieces keep their
    // single-token encoding.
    while (syms.size() > 1) {
      std::size_t best = 0;
      int best_rank = -1;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = ranks.find({syms[i], syms[i + 1]});
        if (it != ranks.end() && (best_rank < 0 || it->second < best_rank)) {
          best = i;
          best_rank = it->second;
        }
      }
      if (best_rank < 0) {
        const int rank = static_cast<int>(ranks.size());
        ranks[{syms[0], syms[1]}] = rank;
        merges += syms[0] + " " + syms[1] + "\n";
        best = 0;
      }
      const std::string merged = syms[best] + syms[best + 1];
      if (!enc.contains(merged)) enc[merged] = next_id++;
      syms[best] = merged;
      syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(best) + 1);
    }
  }
  return {enc.dump(), merges};
}

std::vector<std::string> tag_pieces() {
  std::vector<std::string> pieces = {"<|", " <|", "|>"};
  for (auto tag : all_tags()) pieces.emplace_back(tag.substr(2, tag.size() - 4));
  return pieces;
}

Tokenizer make_toy_tokenizer(const std::vector<std::string>& words) {
  auto pieces = tag_pieces();
  for (const auto& w : words) pieces.push_back(" " + w);
  auto files = make_toy_vocab(pieces);
  return Tokenizer::from_strings(files.encoder_json, files.merges);
}

}  // namespace metaflow::testing
