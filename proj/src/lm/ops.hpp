#pragma once

// Single-sequence transformer building blocks shared by the batched forward
// pass, its backward pass, and the incremental decoder.

#include <cmath>
#include <cstddef>

#include "metaflow/kernels.hpp"

namespace metaflow::lm::ops {

inline constexpr double kLayerNormEps = 1e-5;

template <class T>
void layernorm_forward(T* out, T* mean, T* rstd, const T* inp, const T* g, const T* b, std::size_t rows,
                       std::size_t dim) {
  for (std::size_t t = 0; t < rows; ++t) {
    const T* x = inp + t * dim;
    T m = 0;
    for (std::size_t i = 0; i < dim; ++i) m += x[i];
    m /= static_cast<T>(dim);
    T v = 0;
    for (std::size_t i = 0; i < dim; ++i) v += (x[i] - m) * (x[i] - m);
    v /= static_cast<T>(dim);
    const T s = T(1) / std::sqrt(v + static_cast<T>(kLayerNormEps));
    T* o = out + t * dim;
    for (std::size_t i = 0; i < dim; ++i) o[i] = (x[i] - m) * s * g[i] + b[i];
    if (mean) mean[t] = m;
    if (rstd) rstd[t] = s;
  }
}

template <class T>
void layernorm_backward(T* dinp, T* dg, T* db, const T* dout, const T* inp, const T* g, const T* mean,
                        const T* rstd, std::size_t rows, std::size_t dim) {
  for (std::size_t t = 0; t < rows; ++t) {
    const T* x = inp + t * dim;
    const T* dy = dout + t * dim;
    T* dx = dinp + t * dim;
    const T m = mean[t];
    const T s = rstd[t];
    T dnorm_mean = 0;
    T dnorm_norm_mean = 0;
    for (std::size_t i = 0; i < dim; ++i) {
      const T norm = (x[i] - m) * s;
      const T dnorm = g[i] * dy[i];
      dnorm_mean += dnorm;
      dnorm_norm_mean += dnorm * norm;
    }
    dnorm_mean /= static_cast<T>(dim);
    dnorm_norm_mean /= static_cast<T>(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      const T norm = (x[i] - m) * s;
      const T dnorm = g[i] * dy[i];
      db[i] += dy[i];
      dg[i] += norm * dy[i];
      dx[i] += (dnorm - dnorm_mean - norm * dnorm_norm_mean) * s;
    }
  }
}

// out[rows x oc] = inp[rows x c] * w[c x oc] + bias
template <class T>
void matmul_forward(T* out, const T* inp, const T* w, const T* bias, std::size_t rows, std::size_t c,
                    std::size_t oc) {
  for (std::size_t t = 0; t < rows; ++t) {
    T* o = out + t * oc;
    for (std::size_t j = 0; j < oc; ++j) o[j] = bias ? bias[j] : T(0);
    const T* x = inp + t * c;
    for (std::size_t i = 0; i < c; ++i) kernels::axpy(x[i], w + i * oc, o, oc);
  }
}

// Accumulates dinp, dw, dbias.
template <class T>
void matmul_backward(T* dinp, T* dw, T* dbias, const T* dout, const T* inp, const T* w, std::size_t rows,
                     std::size_t c, std::size_t oc) {
  for (std::size_t t = 0; t < rows; ++t) {
    const T* dy = dout + t * oc;
    const T* x = inp + t * c;
    T* dx = dinp + t * c;
    for (std::size_t i = 0; i < c; ++i) {
      dx[i] += kernels::dot(dy, w + i * oc, oc);
      kernels::axpy(x[i], dy, dw + i * oc, oc);
    }
    if (dbias) kernels::axpy(T(1), dy, dbias, oc);
  }
}

template <class T>
T gelu(T x) {
  const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + std::tanh(c * (x + static_cast<T>(0.044715) * x * x * x)));
}

template <class T>
T gelu_grad(T x) {
  const T c = static_cast<T>(0.7978845608028654);
  const T k = static_cast<T>(0.044715);
  const T th = std::tanh(c * (x + k * x * x * x));
  const T sech2 = T(1) - th * th;
  return T(0.5) * (T(1) + th) + T(0.5) * x * sech2 * c * (T(1) + T(3) * k * x * x);
}

// Causal softmax scores for query row `q` against keys at rows 0..n-1 of a
// strided key buffer. Writes n probabilities into `probs`.
template <class T>
void causal_softmax_row(T* probs, const T* q, const T* keys, std::size_t key_stride, std::size_t n,
                        std::size_t head_dim, T scale) {
  T maxv = -INFINITY;
  for (std::size_t j = 0; j < n; ++j) {
    const T s = kernels::dot(q, keys + j * key_stride, head_dim) * scale;
    probs[j] = s;
    if (s > maxv) maxv = s;
  }
  T sum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    probs[j] = std::exp(probs[j] - maxv);
    sum += probs[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < n; ++j) probs[j] *= inv;
}

}  // namespace metaflow::lm::ops
