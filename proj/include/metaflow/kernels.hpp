#pragma once

#include <cstddef>
#include <string_view>

namespace metaflow::kernels {

enum class Isa { Scalar, Avx2, Neon };

std::string_view to_string(Isa isa);

/// Inner-loop primitives for single precision. Every table computes the same
/// functions; SIMD tables differ from the scalar reference only by
/// floating-point summation order.
struct KernelTable {
  Isa isa;
  float (*dot)(const float* a, const float* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  // y[i] *= alpha
  void (*scale)(float alpha, float* y, std::size_t n);
  // Adam moment and parameter update over n contiguous parameters.
  void (*adam)(float* param, const float* grad, float* m, float* v, std::size_t n, float lr, float beta1,
               float beta2, float eps, float bias_corr1, float bias_corr2);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();
const KernelTable* neon_table();

/// The table used by the library, chosen once on first use: the best variant
/// the CPU supports, unless METAFLOW_KERNELS=scalar|avx2|neon says otherwise.
const KernelTable& active();

// Typed front ends. Double precision always runs the scalar loops.
inline float dot(const float* a, const float* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(float alpha, const float* x, float* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void scale(float alpha, float* y, std::size_t n) { active().scale(alpha, y, n); }

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
inline void scale(double alpha, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] *= alpha;
}

}  // namespace metaflow::kernels
