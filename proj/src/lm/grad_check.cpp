#include "metaflow/lm/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "metaflow/error.hpp"
#include "metaflow/lm/model.hpp"

namespace metaflow::lm {

std::pair<std::size_t, std::size_t> tensor_range(const ModelConfig& config, const std::string& name) {
  ParamLayout layout(config);
  for (const auto& slot : layout.slots)
    if (slot.name == name) return {slot.offset, slot.offset + slot.size};
  throw Error(ErrorCode::InvalidArgument, "no tensor named " + name);
}

GradCheckResult grad_check(const ModelConfig& config, const GradCheckOptions& options) {
  if (config.dropout_p > 0.0) throw Error(ErrorCode::DropoutActive, "gradient check requires dropout_p = 0");
  config.validate();

  auto params = init_params<double>(config);
  std::mt19937_64 rng(options.seed);
  // Move away from the symmetric initial point so every tensor matters.
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto& p : params.data) p += jitter(rng);

  // Sequences use the lower half of the vocabulary and stop short of the
  // context, leaving some positional rows untouched.
  std::vector<TokenSequence> batch;
  const int max_len = std::max(2, config.context_len - 2);
  std::uniform_int_distribution<int> len_dist(2, max_len);
  std::uniform_int_distribution<TokenId> id_dist(0, std::max(1, config.vocab_size / 2) - 1);
  for (int b = 0; b < options.batch; ++b) {
    TokenSequence seq(static_cast<std::size_t>(len_dist(rng)));
    for (auto& id : seq) id = id_dist(rng);
    batch.push_back(std::move(seq));
  }

  std::vector<double> grads(params.size(), 0.0);
  loss_and_grad(params, batch, grads, nullptr);

  std::vector<std::size_t> indices = options.extra_indices;
  std::uniform_int_distribution<std::size_t> idx_dist(0, params.size() - 1);
  for (int i = 0; i < options.samples; ++i) indices.push_back(idx_dist(rng));

  auto tensor_of = [&](std::size_t index) {
    for (const auto& slot : params.layout.slots)
      if (index >= slot.offset && index < slot.offset + slot.size) return slot.name;
    return std::string("?");
  };

  GradCheckResult result;
  for (std::size_t index : indices) {
    if (index >= params.size()) throw Error(ErrorCode::InvalidArgument, "parameter index out of range");
    const double saved = params.data[index];
    params.data[index] = saved + options.step;
    const double up = loss(params, batch);
    params.data[index] = saved - options.step;
    const double down = loss(params, batch);
    params.data[index] = saved;

    const double numeric = (up - down) / (2.0 * options.step);
    const double analytic = grads[index];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), options.denom_floor});
    const double rel = std::abs(analytic - numeric) / denom;
    result.entries.push_back({index, tensor_of(index), analytic, numeric, rel});
    result.max_rel_error = std::max(result.max_rel_error, rel);
  }
  return result;
}

}  // namespace metaflow::lm
