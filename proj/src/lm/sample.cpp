#include "metaflow/lm/sample.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <random>

#include "metaflow/error.hpp"

namespace metaflow::lm {

std::vector<TokenId> top_k_ids(std::span<const float> logits, int k) {
  std::vector<TokenId> ids(logits.size());
  std::iota(ids.begin(), ids.end(), 0);
  const auto kk = static_cast<std::size_t>(std::clamp<long>(k, 1, static_cast<long>(ids.size())));
  std::partial_sort(ids.begin(), ids.begin() + kk, ids.end(), [&](TokenId a, TokenId b) {
    if (logits[a] != logits[b]) return logits[a] > logits[b];
    return a < b;
  });
  ids.resize(kk);
  return ids;
}

TokenId draw(std::span<const float> logits, std::span<const TokenId> candidates, double temperature, double u) {
  const double top = logits[candidates.front()];
  std::vector<double> weights(candidates.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    weights[i] = std::exp((static_cast<double>(logits[candidates[i]]) - top) / temperature);
    sum += weights[i];
  }
  double target = u * sum;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    target -= weights[i];
    if (target < 0.0) return candidates[i];
  }
  return candidates.back();
}

SampleResult sample(const Model& params, std::span<const TokenId> prompt, const SampleOptions& options) {
  if (options.top_k < 1) throw Error(ErrorCode::InvalidArgument, "top_k must be >= 1");
  if (!(options.temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  if (prompt.empty()) throw Error(ErrorCode::InvalidArgument, "empty prompt");
  const auto window = static_cast<std::size_t>(params.config.context_len - 1);

  std::vector<TokenId> context(prompt.size() > window ? prompt.end() - window : prompt.begin(), prompt.end());
  DecodeState state(params);
  std::span<const float> logits;
  for (TokenId id : context) logits = state.push(id);

  std::mt19937_64 rng(options.rng_seed);
  SampleResult result;
  const auto& stop = options.stop_ids;
  for (int step = 0; step < options.max_new_tokens; ++step) {
    const auto candidates = top_k_ids(logits, options.top_k);
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const TokenId next = draw(logits, candidates, options.temperature, u);
    assert(std::find(candidates.begin(), candidates.end(), next) != candidates.end());
    if (options.on_step) options.on_step(candidates, next);
    result.tokens.push_back(next);

    const auto& gen = result.tokens;
    if (!stop.empty() && gen.size() >= stop.size() && std::equal(stop.begin(), stop.end(), gen.end() - stop.size())) {
      result.stopped = true;
      break;
    }
    if (options.stop_when && options.stop_when(gen)) {
      result.stopped = true;
      break;
    }
    if (step + 1 == options.max_new_tokens) break;

    context.push_back(next);
    if (state.position() >= static_cast<std::size_t>(params.config.context_len)) {
      // Slide: rebuild the cache from the rightmost context_len - 1 ids.
      context.erase(context.begin(), context.end() - window);
      state.reset();
      for (TokenId id : context) logits = state.push(id);
    } else {
      logits = state.push(next);
    }
  }
  return result;
}

}  // namespace metaflow::lm
