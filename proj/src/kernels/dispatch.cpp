#include <cstdlib>
#include <string>

#include "kernel_variants.hpp"
#include "metaflow/kernels.hpp"

namespace metaflow::kernels {

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "scalar";
}

const KernelTable* avx2_table() {
#if defined(METAFLOW_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &detail::avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(METAFLOW_HAVE_NEON)
  // Advanced SIMD is mandatory on AArch64.
  return &detail::neon_table_unchecked();
#else
  return nullptr;
#endif
}

namespace {

const KernelTable& select() {
  const char* forced = std::getenv("METAFLOW_KERNELS");
  if (forced) {
    std::string name(forced);
    if (name == "scalar") return scalar_table();
    if (name == "avx2" && avx2_table()) return *avx2_table();
    if (name == "neon" && neon_table()) return *neon_table();
  }
  if (const auto* t = avx2_table()) return *t;
  if (const auto* t = neon_table()) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace metaflow::kernels
