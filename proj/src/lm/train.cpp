#include "metaflow/lm/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "metaflow/error.hpp"
#include "metaflow/kernels.hpp"

namespace metaflow::lm {

StepMetrics train_step(Model& params, std::span<const TokenSequence> batch, AdamState& state, const TrainConfig& train,
                       long step, DropoutRng& dropout_rng) {
  if (step < 0) throw Error(ErrorCode::InvalidArgument, "step must be >= 0");
  const std::size_t n = params.size();
  if (state.m.size() != n) {
    state.m.assign(n, 0.0f);
    state.v.assign(n, 0.0f);
    state.updates = 0;
  }

  std::vector<float> grads(n, 0.0f);
  StepMetrics metrics;
  metrics.step = step;
  metrics.loss = loss_and_grad(params, batch, grads, params.config.dropout_p > 0.0 ? &dropout_rng : nullptr);

  double sq = 0.0;
  for (float g : grads) sq += static_cast<double>(g) * g;
  metrics.grad_norm = std::sqrt(sq);
  if (!std::isfinite(metrics.loss) || !std::isfinite(sq))
    throw Error(ErrorCode::NonFiniteGradient, "step " + std::to_string(step) + ": loss or gradient not finite");

  metrics.lr = learning_rate(train, step);
  ++state.updates;
  const double c1 = 1.0 - std::pow(train.beta1, static_cast<double>(state.updates));
  const double c2 = 1.0 - std::pow(train.beta2, static_cast<double>(state.updates));
  kernels::active().adam(params.data.data(), grads.data(), state.m.data(), state.v.data(), n,
                         static_cast<float>(metrics.lr), static_cast<float>(train.beta1),
                         static_cast<float>(train.beta2), static_cast<float>(train.eps), static_cast<float>(c1),
                         static_cast<float>(c2));
  return metrics;
}

StepMetrics train_loop(Model& params, std::span<const TokenSequence> examples, const TrainConfig& train,
                       const TrainRunOptions& options) {
  train.validate();
  if (examples.empty()) throw Error(ErrorCode::EmptyStream, "no training examples");
  std::mt19937_64 order_rng(options.seed);
  DropoutRng dropout_rng(options.seed ^ 0x5DEECE66Dull);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  AdamState state;
  StepMetrics last;
  last.step = -1;
  std::vector<TokenSequence> batch;
  for (long step = 0; step < train.total_steps; ++step) {
    batch.clear();
    while (static_cast<int>(batch.size()) < train.batch_size) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng() % i]);
        cursor = 0;
      }
      batch.push_back(examples[order[cursor++]]);
    }
    last = train_step(params, batch, state, train, step, dropout_rng);
    const bool log = train.log_every > 0 && (step % train.log_every == 0);
    if (options.on_log && (log || step + 1 == train.total_steps)) options.on_log(last);
  }
  return last;
}

}  // namespace metaflow::lm
