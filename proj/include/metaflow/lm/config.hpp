#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>

namespace metaflow::lm {

struct ModelConfig {
  int vocab_size = 512;
  int context_len = 128;
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  double dropout_p = 0.0;
  std::uint64_t rng_seed = 1234;

  int head_dim() const { return d_model / n_heads; }
  // Throws InvalidArgument when the shape is inconsistent.
  void validate() const;

  // GPT-2 small shape with the published vocabulary and context.
  static ModelConfig reference_small();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  int batch_size = 8;
  int total_steps = 1000;
  int warmup_steps = 100;
  double peak_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int log_every = 50;

  void validate() const;

  // Batch 8, one million steps, 10,000 warmup steps, peak learning rate 1e-4.
  static TrainConfig reference();
};

/// Linear warmup from 0 to peak_lr over warmup_steps, then constant.
double learning_rate(const TrainConfig& config, long step);

struct ModelFileConfig {
  ModelConfig model;
  TrainConfig train;
};

// [model] and [train] tables of a TOML file; absent keys keep their defaults.
ModelFileConfig load_model_config(const std::filesystem::path& path);
ModelFileConfig parse_model_config(std::string_view toml_text);

}  // namespace metaflow::lm
