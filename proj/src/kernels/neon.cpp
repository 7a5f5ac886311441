#include <arm_neon.h>

#include "kernel_variants.hpp"

namespace metaflow::kernels::detail {
namespace {

float dot_neon(const float* a, const float* b, std::size_t n) {
  float32x4_t acc0 = vdupq_n_f32(0.0f);
  float32x4_t acc1 = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
  float s = vaddvq_f32(vaddq_f32(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_neon(float alpha, const float* x, float* y, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), va, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_neon(float alpha, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vmulq_n_f32(vld1q_f32(y + i), alpha));
  for (; i < n; ++i) y[i] *= alpha;
}

void adam_neon(float* param, const float* grad, float* m, float* v, std::size_t n, float lr, float beta1,
               float beta2, float eps, float bias_corr1, float bias_corr2) {
  const float inv_c1 = 1.0f / bias_corr1;
  const float inv_c2 = 1.0f / bias_corr2;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t g = vld1q_f32(grad + i);
    float32x4_t mi = vaddq_f32(vmulq_n_f32(vld1q_f32(m + i), beta1), vmulq_n_f32(g, 1.0f - beta1));
    float32x4_t vi = vaddq_f32(vmulq_n_f32(vld1q_f32(v + i), beta2), vmulq_n_f32(vmulq_f32(g, g), 1.0f - beta2));
    vst1q_f32(m + i, mi);
    vst1q_f32(v + i, vi);
    float32x4_t denom = vaddq_f32(vsqrtq_f32(vmulq_n_f32(vi, inv_c2)), vdupq_n_f32(eps));
    float32x4_t step = vdivq_f32(vmulq_n_f32(mi, lr * inv_c1), denom);
    vst1q_f32(param + i, vsubq_f32(vld1q_f32(param + i), step));
  }
  if (i < n)
    scalar_table().adam(param + i, grad + i, m + i, v + i, n - i, lr, beta1, beta2, eps, bias_corr1, bias_corr2);
}

constexpr KernelTable kNeon{Isa::Neon, dot_neon, axpy_neon, scale_neon, adam_neon};

}  // namespace

const KernelTable& neon_table_unchecked() { return kNeon; }

}  // namespace metaflow::kernels::detail
