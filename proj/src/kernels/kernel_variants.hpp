#pragma once

#include "metaflow/kernels.hpp"

namespace metaflow::kernels::detail {

// Defined only in translation units built with the matching ISA flags.
const KernelTable& avx2_table_unchecked();
const KernelTable& neon_table_unchecked();

}  // namespace metaflow::kernels::detail
