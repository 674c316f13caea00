#pragma once

// Plain serial versions of the parallel kernels, kept as test and benchmark
// baselines. They share no loop structure with the production code.

#include <span>
#include <vector>

#include "relsim/core.hpp"
#include "relsim/macsim.hpp"

namespace relsim::reference {

AccTensor gemm_wide(const QuantTensor& weights, const QuantTensor& acts);

/// Cycle loop over outputs in row-major order, one mac_step per cycle.
TileResult run_tile_rows(const QuantTensor& weights, const QuantTensor& acts, const TimingEnv& env,
                         std::span<const std::vector<std::size_t>> row_orders, bool record_trace = false);

/// e^T (W X): column sums of the full product.
std::vector<std::int64_t> product_column_sums(const QuantTensor& w, const QuantTensor& x);

}  // namespace relsim::reference
