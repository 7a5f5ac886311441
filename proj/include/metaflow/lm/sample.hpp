#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "metaflow/lm/model.hpp"

namespace metaflow::lm {

struct SampleOptions {
  int max_new_tokens = 64;
  int top_k = 40;
  double temperature = 1.0;
  TokenSequence stop_ids;  // stop once the generated suffix equals this
  std::uint64_t rng_seed = 0;
  // Extra stop test over the tokens generated so far.
  std::function<bool(std::span<const TokenId>)> stop_when;
  // Called at every step with the top-k candidate set and the chosen id.
  std::function<void(std::span<const TokenId>, TokenId)> on_step;
};

struct SampleResult {
  TokenSequence tokens;  // generated ids, including any stop sequence
  bool stopped = false;  // false when max_new_tokens ran out first
};

/// The k highest logits, ties broken by lower id, in descending order.
std::vector<TokenId> top_k_ids(std::span<const float> logits, int k);

/// Draws from softmax(logits[candidates] / temperature) with `u` in [0, 1).
TokenId draw(std::span<const float> logits, std::span<const TokenId> candidates, double temperature, double u);

/// Top-k sampling from a prompt. Prompts longer than the context keep their
/// rightmost context_len - 1 ids; generation past the context slides the window.
SampleResult sample(const Model& params, std::span<const TokenId> prompt, const SampleOptions& options);

}  // namespace metaflow::lm
