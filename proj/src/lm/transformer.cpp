#include <algorithm>
#include <cmath>

#include "metaflow/error.hpp"
#include "metaflow/lm/model.hpp"
#include "ops.hpp"

namespace metaflow::lm {

ParamLayout::ParamLayout(const ModelConfig& config) {
  const std::size_t V = config.vocab_size, C = config.context_len, D = config.d_model;
  auto add = [&](const std::string& name, std::size_t n) {
    slots.push_back({name, total, n});
    total += n;
    return slots.back().offset;
  };
  wte = add("wte", V * D);
  wpe = add("wpe", C * D);
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    Layer layer{};
    layer.ln1_g = add(p + "ln1.g", D);
    layer.ln1_b = add(p + "ln1.b", D);
    layer.qkv_w = add(p + "attn.qkv.w", D * 3 * D);
    layer.qkv_b = add(p + "attn.qkv.b", 3 * D);
    layer.proj_w = add(p + "attn.proj.w", D * D);
    layer.proj_b = add(p + "attn.proj.b", D);
    layer.ln2_g = add(p + "ln2.g", D);
    layer.ln2_b = add(p + "ln2.b", D);
    layer.fc_w = add(p + "mlp.fc.w", D * 4 * D);
    layer.fc_b = add(p + "mlp.fc.b", 4 * D);
    layer.fcproj_w = add(p + "mlp.proj.w", 4 * D * D);
    layer.fcproj_b = add(p + "mlp.proj.b", D);
    layers.push_back(layer);
  }
  lnf_g = add("lnf.g", D);
  lnf_b = add("lnf.b", D);
}

template <class T>
ModelParams<T> init_params(const ModelConfig& config) {
  config.validate();
  ModelParams<T> p(config);
  std::mt19937_64 rng(config.rng_seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (const auto& slot : p.layout.slots) {
    T* x = p.at(slot.offset);
    const bool is_gain = slot.name.ends_with(".g");
    const bool is_bias = slot.name.ends_with(".b");
    for (std::size_t i = 0; i < slot.size; ++i) x[i] = is_gain ? T(1) : is_bias ? T(0) : static_cast<T>(normal(rng));
  }
  return p;
}

template <class T>
void zero_output_head(ModelParams<T>& params) {
  std::fill_n(params.at(params.layout.wte), static_cast<std::size_t>(params.config.vocab_size) * params.config.d_model,
              T(0));
}

template <class T>
ModelParams<T> convert_params(const ModelParams<float>& params) {
  ModelParams<T> out(params.config);
  std::transform(params.data.begin(), params.data.end(), out.data.begin(), [](float v) { return static_cast<T>(v); });
  return out;
}

namespace {

template <class T>
void make_mask(std::vector<T>& mask, std::size_t n, double p, DropoutRng& rng) {
  mask.resize(n);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u < p ? T(0) : keep_scale;
  }
}

template <class T>
void apply_mask(T* x, const std::vector<T>& mask) {
  for (std::size_t i = 0; i < mask.size(); ++i) x[i] *= mask[i];
}

template <class T>
void attention_forward(Activations<T>& a, typename Activations<T>::Layer& L, std::size_t n_heads, std::size_t D,
                       bool dropout, double p, DropoutRng* rng) {
  const std::size_t len = a.len, hs = D / n_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hs));
  L.att.assign(n_heads * len * len, T(0));
  L.atty.assign(len * D, T(0));
  if (dropout) {
    make_mask(L.att_mask, L.att.size(), p, *rng);
    L.att_drop.assign(L.att.size(), T(0));
  }
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t t = 0; t < len; ++t) {
      T* row = L.att.data() + (h * len + t) * len;
      const T* q = L.qkv.data() + t * 3 * D + h * hs;
      ops::causal_softmax_row(row, q, L.qkv.data() + D + h * hs, 3 * D, t + 1, hs, scale);
      const T* used = row;
      if (dropout) {
        T* drow = L.att_drop.data() + (h * len + t) * len;
        const T* mrow = L.att_mask.data() + (h * len + t) * len;
        for (std::size_t j = 0; j <= t; ++j) drow[j] = row[j] * mrow[j];
        used = drow;
      }
      T* out = L.atty.data() + t * D + h * hs;
      for (std::size_t j = 0; j <= t; ++j) kernels::axpy(used[j], L.qkv.data() + j * 3 * D + 2 * D + h * hs, out, hs);
    }
  }
}

template <class T>
void attention_backward(std::vector<T>& dqkv, const std::vector<T>& datty, const typename Activations<T>::Layer& L,
                        std::size_t len, std::size_t n_heads, std::size_t D, bool dropout) {
  const std::size_t hs = D / n_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hs));
  std::vector<T> datt(len);
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t r = (h * len + t) * len;
      const T* probs = L.att.data() + r;
      const T* used = dropout ? L.att_drop.data() + r : probs;
      const T* dout = datty.data() + t * D + h * hs;
      for (std::size_t j = 0; j <= t; ++j) {
        const std::size_t v_off = j * 3 * D + 2 * D + h * hs;
        datt[j] = kernels::dot(L.qkv.data() + v_off, dout, hs);
        kernels::axpy(used[j], dout, dqkv.data() + v_off, hs);
        if (dropout) datt[j] *= L.att_mask[r + j];
      }
      T s = 0;
      for (std::size_t j = 0; j <= t; ++j) s += probs[j] * datt[j];
      const T* q = L.qkv.data() + t * 3 * D + h * hs;
      T* dq = dqkv.data() + t * 3 * D + h * hs;
      for (std::size_t j = 0; j <= t; ++j) {
        const T dpre = probs[j] * (datt[j] - s) * scale;
        const std::size_t k_off = j * 3 * D + D + h * hs;
        kernels::axpy(dpre, L.qkv.data() + k_off, dq, hs);
        kernels::axpy(dpre, q, dqkv.data() + k_off, hs);
      }
    }
  }
}

// Softmax cross-entropy against ids[t+1]. Writes dlogits scaled by `grad_scale`
// when requested and returns the summed loss.
template <class T>
double cross_entropy(const std::vector<T>& logits, std::span<const TokenId> ids, std::size_t V, T* dlogits,
                     double grad_scale) {
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
    const T* row = logits.data() + t * V;
    double maxv = -INFINITY;
    for (std::size_t v = 0; v < V; ++v) maxv = std::max(maxv, static_cast<double>(row[v]));
    double sum = 0.0;
    for (std::size_t v = 0; v < V; ++v) sum += std::exp(static_cast<double>(row[v]) - maxv);
    const double log_sum = std::log(sum);
    const auto target = static_cast<std::size_t>(ids[t + 1]);
    total += log_sum + maxv - static_cast<double>(row[target]);
    if (dlogits) {
      T* d = dlogits + t * V;
      for (std::size_t v = 0; v < V; ++v) {
        const double prob = std::exp(static_cast<double>(row[v]) - maxv - log_sum);
        d[v] = static_cast<T>((prob - (v == target ? 1.0 : 0.0)) * grad_scale);
      }
    }
  }
  return total;
}

template <class T>
void check_ids(const ModelConfig& cfg, std::span<const TokenId> ids) {
  if (ids.empty()) throw Error(ErrorCode::InvalidArgument, "empty token sequence");
  if (ids.size() > static_cast<std::size_t>(cfg.context_len))
    throw Error(ErrorCode::ContextOverflow, std::to_string(ids.size()) + " tokens exceed context " +
                                                std::to_string(cfg.context_len));
  for (TokenId id : ids)
    if (id < 0 || id >= cfg.vocab_size) throw Error(ErrorCode::IdOutOfRange, "token id " + std::to_string(id));
}

template <class T>
void backward(const ModelParams<T>& params, std::span<const TokenId> ids, const Activations<T>& a,
              std::vector<T>& dlogits, std::vector<T>& grads) {
  const auto& cfg = params.config;
  const auto& lay = params.layout;
  const std::size_t len = a.len, D = cfg.d_model, V = cfg.vocab_size, H = cfg.n_heads;
  T* g = grads.data();

  // Tied head: logits = lnf * wte^T.
  std::vector<T> dlnf(len * D, T(0));
  for (std::size_t t = 0; t < len; ++t) {
    const T* dl = dlogits.data() + t * V;
    for (std::size_t v = 0; v < V; ++v) {
      if (dl[v] == T(0)) continue;
      kernels::axpy(dl[v], params.at(lay.wte) + v * D, dlnf.data() + t * D, D);
      kernels::axpy(dl[v], a.lnf.data() + t * D, g + lay.wte + v * D, D);
    }
  }

  std::vector<T> dresid(len * D, T(0));
  const std::vector<T>& last = a.layers.back().out;
  ops::layernorm_backward(dresid.data(), g + lay.lnf_g, g + lay.lnf_b, dlnf.data(), last.data(),
                          params.at(lay.lnf_g), a.lnf_mean.data(), a.lnf_rstd.data(), len, D);

  std::vector<T> dtmp, dfch, dln, dqkv, datty;
  for (std::size_t li = cfg.n_layers; li-- > 0;) {
    const auto& L = a.layers[li];
    const auto& P = lay.layers[li];
    const std::vector<T>& layer_in = li == 0 ? a.x0 : a.layers[li - 1].out;

    // Output residual: out = resid2 + drop(fcproj).
    std::vector<T> dresid2 = dresid;
    dtmp = dresid;
    if (a.dropout) apply_mask(dtmp.data(), L.fcproj_mask);
    dfch.assign(len * 4 * D, T(0));
    ops::matmul_backward(dfch.data(), g + P.fcproj_w, g + P.fcproj_b, dtmp.data(), L.fch_gelu.data(),
                         params.at(P.fcproj_w), len, 4 * D, D);
    for (std::size_t i = 0; i < dfch.size(); ++i) dfch[i] *= ops::gelu_grad(L.fch[i]);
    dln.assign(len * D, T(0));
    ops::matmul_backward(dln.data(), g + P.fc_w, g + P.fc_b, dfch.data(), L.ln2.data(), params.at(P.fc_w), len, D,
                         4 * D);
    ops::layernorm_backward(dresid2.data(), g + P.ln2_g, g + P.ln2_b, dln.data(), L.resid2.data(),
                            params.at(P.ln2_g), L.ln2_mean.data(), L.ln2_rstd.data(), len, D);

    // resid2 = layer_in + drop(attproj).
    dresid = dresid2;
    dtmp = dresid2;
    if (a.dropout) apply_mask(dtmp.data(), L.attproj_mask);
    datty.assign(len * D, T(0));
    ops::matmul_backward(datty.data(), g + P.proj_w, g + P.proj_b, dtmp.data(), L.atty.data(), params.at(P.proj_w),
                         len, D, D);
    dqkv.assign(len * 3 * D, T(0));
    attention_backward(dqkv, datty, L, len, H, D, a.dropout);
    dln.assign(len * D, T(0));
    ops::matmul_backward(dln.data(), g + P.qkv_w, g + P.qkv_b, dqkv.data(), L.ln1.data(), params.at(P.qkv_w), len, D,
                         3 * D);
    ops::layernorm_backward(dresid.data(), g + P.ln1_g, g + P.ln1_b, dln.data(), layer_in.data(),
                            params.at(P.ln1_g), L.ln1_mean.data(), L.ln1_rstd.data(), len, D);
  }

  if (a.dropout) apply_mask(dresid.data(), a.mask0);
  for (std::size_t t = 0; t < len; ++t) {
    kernels::axpy(T(1), dresid.data() + t * D, g + lay.wte + static_cast<std::size_t>(ids[t]) * D, D);
    kernels::axpy(T(1), dresid.data() + t * D, g + lay.wpe + t * D, D);
  }
}

}  // namespace

template <class T>
void forward(const ModelParams<T>& params, std::span<const TokenId> ids, DropoutRng* dropout_rng,
             Activations<T>& a) {
  const auto& cfg = params.config;
  const auto& lay = params.layout;
  check_ids<T>(cfg, ids);
  const std::size_t len = ids.size(), D = cfg.d_model, V = cfg.vocab_size, H = cfg.n_heads;
  const double p = cfg.dropout_p;
  a.len = len;
  a.dropout = dropout_rng != nullptr && p > 0.0;

  a.x0.assign(len * D, T(0));
  for (std::size_t t = 0; t < len; ++t) {
    const T* te = params.at(lay.wte) + static_cast<std::size_t>(ids[t]) * D;
    const T* pe = params.at(lay.wpe) + t * D;
    for (std::size_t i = 0; i < D; ++i) a.x0[t * D + i] = te[i] + pe[i];
  }
  if (a.dropout) {
    make_mask(a.mask0, a.x0.size(), p, *dropout_rng);
    apply_mask(a.x0.data(), a.mask0);
  }

  a.layers.resize(cfg.n_layers);
  const std::vector<T>* x = &a.x0;
  for (int li = 0; li < cfg.n_layers; ++li) {
    auto& L = a.layers[li];
    const auto& P = lay.layers[li];
    L.ln1.resize(len * D);
    L.ln1_mean.resize(len);
    L.ln1_rstd.resize(len);
    ops::layernorm_forward(L.ln1.data(), L.ln1_mean.data(), L.ln1_rstd.data(), x->data(), params.at(P.ln1_g),
                           params.at(P.ln1_b), len, D);
    L.qkv.resize(len * 3 * D);
    ops::matmul_forward(L.qkv.data(), L.ln1.data(), params.at(P.qkv_w), params.at(P.qkv_b), len, D, 3 * D);
    attention_forward(a, L, H, D, a.dropout, p, dropout_rng);
    L.attproj.resize(len * D);
    ops::matmul_forward(L.attproj.data(), L.atty.data(), params.at(P.proj_w), params.at(P.proj_b), len, D, D);
    if (a.dropout) {
      make_mask(L.attproj_mask, L.attproj.size(), p, *dropout_rng);
      apply_mask(L.attproj.data(), L.attproj_mask);
    }
    L.resid2.resize(len * D);
    for (std::size_t i = 0; i < len * D; ++i) L.resid2[i] = (*x)[i] + L.attproj[i];

    L.ln2.resize(len * D);
    L.ln2_mean.resize(len);
    L.ln2_rstd.resize(len);
    ops::layernorm_forward(L.ln2.data(), L.ln2_mean.data(), L.ln2_rstd.data(), L.resid2.data(), params.at(P.ln2_g),
                           params.at(P.ln2_b), len, D);
    L.fch.resize(len * 4 * D);
    ops::matmul_forward(L.fch.data(), L.ln2.data(), params.at(P.fc_w), params.at(P.fc_b), len, D, 4 * D);
    L.fch_gelu.resize(L.fch.size());
    for (std::size_t i = 0; i < L.fch.size(); ++i) L.fch_gelu[i] = ops::gelu(L.fch[i]);
    L.fcproj.resize(len * D);
    ops::matmul_forward(L.fcproj.data(), L.fch_gelu.data(), params.at(P.fcproj_w), params.at(P.fcproj_b), len, 4 * D,
                        D);
    if (a.dropout) {
      make_mask(L.fcproj_mask, L.fcproj.size(), p, *dropout_rng);
      apply_mask(L.fcproj.data(), L.fcproj_mask);
    }
    L.out.resize(len * D);
    for (std::size_t i = 0; i < len * D; ++i) L.out[i] = L.resid2[i] + L.fcproj[i];
    x = &L.out;
  }

  a.lnf.resize(len * D);
  a.lnf_mean.resize(len);
  a.lnf_rstd.resize(len);
  ops::layernorm_forward(a.lnf.data(), a.lnf_mean.data(), a.lnf_rstd.data(), x->data(), params.at(lay.lnf_g),
                         params.at(lay.lnf_b), len, D);
  a.logits.resize(len * V);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t v = 0; v < V; ++v)
      a.logits[t * V + v] = kernels::dot(a.lnf.data() + t * D, params.at(lay.wte) + v * D, D);
}

template <class T>
Matrix<T> forward(const ModelParams<T>& params, std::span<const TokenId> ids, bool train_mode) {
  Activations<T> a;
  DropoutRng rng(params.config.rng_seed ^ 0x9E3779B97F4A7C15ull);
  forward(params, ids, train_mode ? &rng : nullptr, a);
  return Matrix<T>{ids.size(), static_cast<std::size_t>(params.config.vocab_size), std::move(a.logits)};
}

template <class T>
double loss(const ModelParams<T>& params, std::span<const TokenSequence> batch) {
  double total = 0.0;
  std::size_t count = 0;
  Activations<T> a;
  for (const auto& seq : batch) {
    if (seq.size() < 2) throw Error(ErrorCode::InvalidArgument, "loss needs sequences of length >= 2");
    forward(params, seq, nullptr, a);
    total += cross_entropy(a.logits, seq, params.config.vocab_size, static_cast<T*>(nullptr), 0.0);
    count += seq.size() - 1;
  }
  if (count == 0) throw Error(ErrorCode::InvalidArgument, "empty batch");
  return total / static_cast<double>(count);
}

template <class T>
double loss_and_grad(const ModelParams<T>& params, std::span<const TokenSequence> batch, std::vector<T>& grads,
                     DropoutRng* dropout_rng) {
  if (grads.size() != params.size()) grads.assign(params.size(), T(0));
  std::size_t count = 0;
  for (const auto& seq : batch) {
    if (seq.size() < 2) throw Error(ErrorCode::InvalidArgument, "loss needs sequences of length >= 2");
    count += seq.size() - 1;
  }
  if (count == 0) throw Error(ErrorCode::InvalidArgument, "empty batch");
  const double scale = 1.0 / static_cast<double>(count);

  double total = 0.0;
  Activations<T> a;
  std::vector<T> dlogits;
  for (const auto& seq : batch) {
    forward(params, seq, dropout_rng, a);
    dlogits.assign(a.logits.size(), T(0));
    total += cross_entropy(a.logits, seq, params.config.vocab_size, dlogits.data(), scale);
    backward(params, seq, a, dlogits, grads);
  }
  return total * scale;
}

DecodeState::DecodeState(const Model& params) : params_(&params) {
  const auto& cfg = params.config;
  const std::size_t D = cfg.d_model, C = cfg.context_len;
  keys_.assign(cfg.n_layers, std::vector<float>(C * D));
  values_.assign(cfg.n_layers, std::vector<float>(C * D));
  x_.resize(D);
  ln_.resize(D);
  qkv_.resize(3 * D);
  atty_.resize(D);
  tmp_.resize(D);
  fch_.resize(4 * D);
  scores_.resize(C);
  logits_.resize(cfg.vocab_size);
}

void DecodeState::reset() { pos_ = 0; }

std::span<const float> DecodeState::push(TokenId id) {
  const Model& p = *params_;
  const auto& cfg = p.config;
  const auto& lay = p.layout;
  const std::size_t D = cfg.d_model, H = cfg.n_heads, hs = D / H, V = cfg.vocab_size;
  if (pos_ >= static_cast<std::size_t>(cfg.context_len))
    throw Error(ErrorCode::ContextOverflow, "decode position beyond context");
  if (id < 0 || id >= cfg.vocab_size) throw Error(ErrorCode::IdOutOfRange, "token id " + std::to_string(id));

  const float* te = p.at(lay.wte) + static_cast<std::size_t>(id) * D;
  const float* pe = p.at(lay.wpe) + pos_ * D;
  for (std::size_t i = 0; i < D; ++i) x_[i] = te[i] + pe[i];

  const float scale = 1.0f / std::sqrt(static_cast<float>(hs));
  for (int li = 0; li < cfg.n_layers; ++li) {
    const auto& P = lay.layers[li];
    ops::layernorm_forward(ln_.data(), static_cast<float*>(nullptr), static_cast<float*>(nullptr), x_.data(),
                           p.at(P.ln1_g), p.at(P.ln1_b), 1, D);
    ops::matmul_forward(qkv_.data(), ln_.data(), p.at(P.qkv_w), p.at(P.qkv_b), 1, D, 3 * D);
    std::copy_n(qkv_.data() + D, D, keys_[li].data() + pos_ * D);
    std::copy_n(qkv_.data() + 2 * D, D, values_[li].data() + pos_ * D);
    std::fill(atty_.begin(), atty_.end(), 0.0f);
    for (std::size_t h = 0; h < H; ++h) {
      ops::causal_softmax_row(scores_.data(), qkv_.data() + h * hs, keys_[li].data() + h * hs, D, pos_ + 1, hs, scale);
      for (std::size_t j = 0; j <= pos_; ++j)
        kernels::axpy(scores_[j], values_[li].data() + j * D + h * hs, atty_.data() + h * hs, hs);
    }
    ops::matmul_forward(tmp_.data(), atty_.data(), p.at(P.proj_w), p.at(P.proj_b), 1, D, D);
    for (std::size_t i = 0; i < D; ++i) x_[i] += tmp_[i];
    ops::layernorm_forward(ln_.data(), static_cast<float*>(nullptr), static_cast<float*>(nullptr), x_.data(),
                           p.at(P.ln2_g), p.at(P.ln2_b), 1, D);
    ops::matmul_forward(fch_.data(), ln_.data(), p.at(P.fc_w), p.at(P.fc_b), 1, D, 4 * D);
    for (auto& f : fch_) f = ops::gelu(f);
    ops::matmul_forward(tmp_.data(), fch_.data(), p.at(P.fcproj_w), p.at(P.fcproj_b), 1, 4 * D, D);
    for (std::size_t i = 0; i < D; ++i) x_[i] += tmp_[i];
  }
  ops::layernorm_forward(ln_.data(), static_cast<float*>(nullptr), static_cast<float*>(nullptr), x_.data(),
                         p.at(lay.lnf_g), p.at(lay.lnf_b), 1, D);
  for (std::size_t v = 0; v < V; ++v) logits_[v] = kernels::dot(ln_.data(), p.at(lay.wte) + v * D, D);
  ++pos_;
  return logits_;
}

#define METAFLOW_INSTANTIATE(T)                                                                              \
  template ModelParams<T> init_params<T>(const ModelConfig&);                                              \
  template void zero_output_head<T>(ModelParams<T>&);                                                      \
  template ModelParams<T> convert_params<T>(const ModelParams<float>&);                                    \
  template void forward<T>(const ModelParams<T>&, std::span<const TokenId>, DropoutRng*, Activations<T>&);  \
  template Matrix<T> forward<T>(const ModelParams<T>&, std::span<const TokenId>, bool);                     \
  template double loss<T>(const ModelParams<T>&, std::span<const TokenSequence>);                          \
  template double loss_and_grad<T>(const ModelParams<T>&, std::span<const TokenSequence>, std::vector<T>&, \
                                   DropoutRng*);

METAFLOW_INSTANTIATE(float)
METAFLOW_INSTANTIATE(double)

#undef METAFLOW_INSTANTIATE

}  // namespace metaflow::lm
