#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "metaflow/lm/model.hpp"

namespace metaflow::lm {

struct AdamState {
  std::vector<float> m, v;
  long updates = 0;  // number of applied Adam updates, for bias correction
};

struct StepMetrics {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

/// One optimisation step at `step` (0-based) with the warmup schedule of
/// `train`. Gradients are checked before any parameter changes; a non-finite
/// loss or gradient throws NonFiniteGradient and leaves params and state intact.
StepMetrics train_step(Model& params, std::span<const TokenSequence> batch, AdamState& state, const TrainConfig& train,
                       long step, DropoutRng& dropout_rng);

struct TrainRunOptions {
  std::uint64_t seed = 0;  // batch order and dropout masks
  // Called every log_every steps and after the last step.
  std::function<void(const StepMetrics&)> on_log;
};

/// Runs train.total_steps steps. Batches are consecutive slices of the
/// examples in a seeded order that is reshuffled every epoch. Returns the
/// metrics of the last step (step -1 when total_steps is 0).
StepMetrics train_loop(Model& params, std::span<const TokenSequence> examples, const TrainConfig& train,
                       const TrainRunOptions& options = {});

}  // namespace metaflow::lm
