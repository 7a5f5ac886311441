#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metaflow/lm/config.hpp"

namespace metaflow::lm {

struct GradCheckOptions {
  int samples = 256;           // randomly chosen parameters
  double step = 1e-5;          // central difference half-width
  int batch = 2;               // random sequences in the probe batch
  std::uint64_t seed = 7;
  // Relative error is |a - n| / max(|a|, |n|, denom_floor).
  double denom_floor = 1e-6;
  std::vector<std::size_t> extra_indices;  // always checked, in addition to the random sample
};

struct GradCheckEntry {
  std::size_t index;
  std::string tensor;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> entries;
};

/// Compares backpropagated gradients of the loss with central finite
/// differences in double precision. Refuses configs with dropout
/// (DropoutActive), since masks make the loss non-deterministic.
GradCheckResult grad_check(const ModelConfig& config, const GradCheckOptions& options = {});

// Parameter range of a named tensor ("wte", "h0.attn.qkv.w", ...) for tests.
std::pair<std::size_t, std::size_t> tensor_range(const ModelConfig& config, const std::string& name);

}  // namespace metaflow::lm
