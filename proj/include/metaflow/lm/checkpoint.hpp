#pragma once

#include <filesystem>

#include "metaflow/lm/model.hpp"

namespace metaflow::lm {

// Checkpoint layout, little-endian:
//   "PTXM" | u32 version (1)
//   | u32 vocab_size | u32 context_len | u32 n_layers | u32 n_heads | u32 d_model
//   | f64 dropout_p | u64 rng_seed | u64 n_params
//   | n_params x f32 in ParamLayout order
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model& params);
// Throws FileError on unreadable, truncated, or foreign files.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace metaflow::lm
