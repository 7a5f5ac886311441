#include <cmath>

#include "metaflow/kernels.hpp"

namespace metaflow::kernels {
namespace {

float dot_scalar(const float* a, const float* b, std::size_t n) {
  float s = 0.0f;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(float alpha, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] *= alpha;
}

void adam_scalar(float* param, const float* grad, float* m, float* v, std::size_t n, float lr, float beta1,
                 float beta2, float eps, float bias_corr1, float bias_corr2) {
  for (std::size_t i = 0; i < n; ++i) {
    const float g = grad[i];
    m[i] = beta1 * m[i] + (1.0f - beta1) * g;
    v[i] = beta2 * v[i] + (1.0f - beta2) * g * g;
    const float m_hat = m[i] / bias_corr1;
    const float v_hat = v[i] / bias_corr2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

constexpr KernelTable kScalar{Isa::Scalar, dot_scalar, axpy_scalar, scale_scalar, adam_scalar};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace metaflow::kernels
