#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "metaflow/bpe_tokenizer.hpp"
#include "metaflow/lm/config.hpp"

namespace metaflow::lm {

/// Named slice of the flat parameter vector.
struct TensorSlot {
  std::string name;
  std::size_t offset;
  std::size_t size;
};

/// Offsets of every tensor in the flat parameter vector. The order is also
/// the checkpoint order:
///   wte [V x D], wpe [C x D],
///   per layer: ln1.g [D], ln1.b [D], attn.qkv.w [D x 3D], attn.qkv.b [3D],
///              attn.proj.w [D x D], attn.proj.b [D], ln2.g [D], ln2.b [D],
///              mlp.fc.w [D x 4D], mlp.fc.b [4D], mlp.proj.w [4D x D], mlp.proj.b [D],
///   lnf.g [D], lnf.b [D].
/// Linear weights are stored [in x out] row-major. The output head is wte.
struct ParamLayout {
  struct Layer {
    std::size_t ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ln2_g, ln2_b, fc_w, fc_b, fcproj_w, fcproj_b;
  };
  std::size_t wte = 0, wpe = 0, lnf_g = 0, lnf_b = 0;
  std::vector<Layer> layers;
  std::vector<TensorSlot> slots;
  std::size_t total = 0;

  explicit ParamLayout(const ModelConfig& config);
  ParamLayout() = default;
};

template <class T>
struct ModelParams {
  ModelConfig config;
  ParamLayout layout;
  std::vector<T> data;

  ModelParams() = default;
  explicit ModelParams(const ModelConfig& cfg) : config(cfg), layout(cfg), data(layout.total, T(0)) {}

  T* at(std::size_t offset) { return data.data() + offset; }
  const T* at(std::size_t offset) const { return data.data() + offset; }
  std::size_t size() const { return data.size(); }
};

using Model = ModelParams<float>;

// Weights ~ N(0, 0.02), biases 0, layer-norm gains 1.
template <class T>
ModelParams<T> init_params(const ModelConfig& config);

// Zeroes wte, which is also the tied output head.
template <class T>
void zero_output_head(ModelParams<T>& params);

template <class T>
ModelParams<T> convert_params(const ModelParams<float>& params);

// Row-major [rows x cols].
template <class T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Source of dropout masks. A null pointer (or p = 0) disables dropout.
using DropoutRng = std::mt19937_64;

/// Activations of one sequence, kept for the backward pass.
template <class T>
struct Activations {
  std::size_t len = 0;
  bool dropout = false;
  std::vector<T> x0, mask0;  // embeddings after dropout, dropout mask
  struct Layer {
    std::vector<T> ln1, ln1_mean, ln1_rstd, qkv, att, att_drop, att_mask, atty, attproj, attproj_mask, resid2,
        ln2, ln2_mean, ln2_rstd, fch, fch_gelu, fcproj, fcproj_mask, out;
  };
  std::vector<Layer> layers;
  std::vector<T> lnf, lnf_mean, lnf_rstd, logits;

  // Softmax-normalised attention of `layer`, head `h`: len x len, row t = query t.
  std::span<const T> attention(std::size_t layer, std::size_t h) const {
    return {layers[layer].att.data() + h * len * len, len * len};
  }
};

/// Full forward pass. Dropout is active iff `dropout_rng` is non-null and
/// p > 0. Throws ContextOverflow when ids exceed context_len.
template <class T>
void forward(const ModelParams<T>& params, std::span<const TokenId> ids, DropoutRng* dropout_rng,
             Activations<T>& acts);

template <class T>
Matrix<T> forward(const ModelParams<T>& params, std::span<const TokenId> ids, bool train_mode = false);

/// Mean next-token cross-entropy (natural log) over every predicted position
/// of every sequence. Each sequence needs at least two ids.
template <class T>
double loss(const ModelParams<T>& params, std::span<const TokenSequence> batch);

/// Loss plus gradient, accumulated into `grads` (same layout; not cleared).
template <class T>
double loss_and_grad(const ModelParams<T>& params, std::span<const TokenSequence> batch, std::vector<T>& grads,
                     DropoutRng* dropout_rng);

/// Incremental decoder holding per-layer key/value caches.
class DecodeState {
 public:
  explicit DecodeState(const Model& params);

  // Appends one token and returns the logits for the next position.
  std::span<const float> push(TokenId id);
  void reset();
  std::size_t position() const { return pos_; }

 private:
  const Model* params_;
  std::size_t pos_ = 0;
  std::vector<std::vector<float>> keys_, values_;
  std::vector<float> x_, ln_, qkv_, atty_, tmp_, fch_, scores_, logits_;
};

}  // namespace metaflow::lm
