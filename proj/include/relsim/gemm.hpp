#pragma once

#include "relsim/core.hpp"

namespace relsim {

/// Exact i8 x i8 -> i32 GEMM, weights [m x n] times acts [n x k]; OpenMP over rows.
AccTensor gemm_wide(const QuantTensor& weights, const QuantTensor& acts);

}  // namespace relsim
