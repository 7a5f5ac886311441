#include "metaflow/lm/config.hpp"

#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "metaflow/error.hpp"

namespace metaflow::lm {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, message);
}

template <class T>
void read(const toml::table& table, std::string_view key, T& out) {
  if (auto v = table[key].value<T>()) out = *v;
}

}  // namespace

void ModelConfig::validate() const {
  require(vocab_size >= 2, "vocab_size must be >= 2");
  require(context_len >= 2, "context_len must be >= 2");
  require(n_layers >= 1, "n_layers must be >= 1");
  require(n_heads >= 1, "n_heads must be >= 1");
  require(d_model >= 1 && d_model % n_heads == 0, "d_model must be a positive multiple of n_heads");
  require(dropout_p >= 0.0 && dropout_p < 1.0, "dropout_p must be in [0, 1)");
}

ModelConfig ModelConfig::reference_small() {
  ModelConfig c;
  c.vocab_size = 50257;
  c.context_len = 1024;
  c.n_layers = 12;
  c.n_heads = 12;
  c.d_model = 768;
  c.dropout_p = 0.1;
  return c;
}

void TrainConfig::validate() const {
  require(batch_size >= 1, "batch_size must be >= 1");
  require(total_steps >= 0, "total_steps must be >= 0");
  require(warmup_steps >= 0 && warmup_steps <= total_steps, "warmup_steps must be in [0, total_steps]");
  require(peak_lr > 0.0, "peak_lr must be > 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "adam betas must be in [0, 1)");
  require(eps > 0.0, "eps must be > 0");
}

TrainConfig TrainConfig::reference() {
  TrainConfig c;
  c.batch_size = 8;
  c.total_steps = 1'000'000;
  c.warmup_steps = 10'000;
  c.peak_lr = 1e-4;
  return c;
}

double learning_rate(const TrainConfig& config, long step) {
  if (step <= 0) return 0.0;
  if (config.warmup_steps <= 0 || step >= config.warmup_steps) return config.peak_lr;
  return config.peak_lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
}

ModelFileConfig parse_model_config(std::string_view toml_text) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw Error(ErrorCode::FormatError, std::string("model config: ") + std::string(e.description()));
  }
  ModelFileConfig cfg;
  if (auto* m = root["model"].as_table()) {
    read(*m, "vocab_size", cfg.model.vocab_size);
    read(*m, "context_len", cfg.model.context_len);
    read(*m, "n_layers", cfg.model.n_layers);
    read(*m, "n_heads", cfg.model.n_heads);
    read(*m, "d_model", cfg.model.d_model);
    read(*m, "dropout", cfg.model.dropout_p);
    if (auto seed = (*m)["seed"].value<std::int64_t>()) cfg.model.rng_seed = static_cast<std::uint64_t>(*seed);
  }
  if (auto* t = root["train"].as_table()) {
    read(*t, "batch_size", cfg.train.batch_size);
    read(*t, "total_steps", cfg.train.total_steps);
    read(*t, "warmup_steps", cfg.train.warmup_steps);
    read(*t, "peak_lr", cfg.train.peak_lr);
    read(*t, "beta1", cfg.train.beta1);
    read(*t, "beta2", cfg.train.beta2);
    read(*t, "eps", cfg.train.eps);
    read(*t, "log_every", cfg.train.log_every);
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

ModelFileConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model_config(ss.str());
}

}  // namespace metaflow::lm
