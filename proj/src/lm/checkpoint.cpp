#include "metaflow/lm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "metaflow/error.hpp"
#include "metaflow/io.hpp"

namespace metaflow::lm {

void save_checkpoint(const std::filesystem::path& path, const Model& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::FileError, "cannot write " + path.string());
  const auto& c = params.config;
  io::write_bytes(out, "PTXM", 4);
  io::write_le<std::uint32_t>(out, kCheckpointVersion);
  io::write_le<std::uint32_t>(out, c.vocab_size);
  io::write_le<std::uint32_t>(out, c.context_len);
  io::write_le<std::uint32_t>(out, c.n_layers);
  io::write_le<std::uint32_t>(out, c.n_heads);
  io::write_le<std::uint32_t>(out, c.d_model);
  io::write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(c.dropout_p));
  io::write_le<std::uint64_t>(out, c.rng_seed);
  io::write_le<std::uint64_t>(out, params.data.size());
  io::write_f32_array(out, params.data);
  if (!out) throw Error(ErrorCode::FileError, "write failed: " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileError, "cannot open " + path.string());
  char magic[4];
  if (!io::read_bytes(in, magic, 4) || std::memcmp(magic, "PTXM", 4) != 0)
    throw Error(ErrorCode::FileError, path.string() + ": not a model checkpoint (bad magic)");
  std::uint32_t version = 0;
  if (!io::read_le(in, version) || version != kCheckpointVersion)
    throw Error(ErrorCode::FileError, path.string() + ": unsupported checkpoint version " + std::to_string(version));

  std::uint32_t vocab, ctx, layers, heads, d_model;
  std::uint64_t dropout_bits, seed, n_params;
  if (!io::read_le(in, vocab) || !io::read_le(in, ctx) || !io::read_le(in, layers) || !io::read_le(in, heads) ||
      !io::read_le(in, d_model) || !io::read_le(in, dropout_bits) || !io::read_le(in, seed) ||
      !io::read_le(in, n_params))
    throw Error(ErrorCode::FileError, path.string() + ": truncated header");

  ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(vocab);
  cfg.context_len = static_cast<int>(ctx);
  cfg.n_layers = static_cast<int>(layers);
  cfg.n_heads = static_cast<int>(heads);
  cfg.d_model = static_cast<int>(d_model);
  cfg.dropout_p = std::bit_cast<double>(dropout_bits);
  cfg.rng_seed = seed;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::FileError, path.string() + ": invalid embedded config: " + e.message());
  }

  Model params(cfg);
  if (n_params != params.data.size())
    throw Error(ErrorCode::FileError, path.string() + ": parameter count does not match embedded config");
  if (!io::read_f32_array(in, params.data)) throw Error(ErrorCode::FileError, path.string() + ": truncated parameters");
  return params;
}

}  // namespace metaflow::lm
