#pragma once

#include <functional>
#include <string>

#include "metaflow/generation_flow.hpp"

namespace metaflow::testing {

/// Emits the tokens of a scripted continuation one by one, honouring the
/// sampler's stop rules and token budget like the real sampler does.
class ScriptedModel final : public LanguageModel {
 public:
  // Continuation text for a decoded prompt and the request's rng seed.
  using Script = std::function<std::string(const std::string& prompt, std::uint64_t seed)>;

  ScriptedModel(const Tokenizer& tokenizer, Script script) : tokenizer_(&tokenizer), script_(std::move(script)) {}

  int vocab_size() const override { return static_cast<int>(tokenizer_->size()); }
  lm::SampleResult sample(std::span<const TokenId> prompt, const lm::SampleOptions& options) const override;

 private:
  const Tokenizer* tokenizer_;
  Script script_;
};

// Continues every mapping prompt with `target_of(source)` and the right end tag.
ScriptedModel::Script echo_script(std::function<std::string(const std::string& source)> target_of);

}  // namespace metaflow::testing
