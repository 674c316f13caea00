#include "relsim/reference.hpp"

#include <algorithm>
#include <stdexcept>

namespace relsim::reference {

AccTensor gemm_wide(const QuantTensor& weights, const QuantTensor& acts) {
  if (weights.cols() != acts.rows()) throw std::invalid_argument("reference gemm: shapes do not conform");
  const std::size_t m = weights.rows(), n = weights.cols(), k = acts.cols();
  AccTensor y = AccTensor::zeros({m, k}, weights.scale() * acts.scale());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      std::int64_t acc = 0;
      for (std::size_t c = 0; c < n; ++c) acc += std::int64_t{weights.at(i, c)} * acts.at(c, j);
      y.at(i, j) = static_cast<std::int32_t>(acc);
    }
  return y;
}

TileResult run_tile_rows(const QuantTensor& weights, const QuantTensor& acts, const TimingEnv& env,
                         std::span<const std::vector<std::size_t>> row_orders, bool record_trace) {
  const std::size_t m = weights.rows(), n = weights.cols(), k = acts.cols();
  if (n != acts.rows() || row_orders.size() != m) throw std::invalid_argument("reference tile: bad shapes");
  const int bits = env.geometry.acc_bits;
  TileResult res;
  res.output = AccTensor::zeros({m, k}, weights.scale() * acts.scale());
  res.report.total_cycles = m * k * n;
  std::uint64_t cycle = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      std::uint32_t errors = 0, flips = 0;
      MacState st{0, cycle};
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t c = row_orders[i][s];
        auto [next, ev] = mac_step(st, acts.at(c, j), weights.at(i, c), bits);
        flips += ev.sign_flip;
        if (env.timing_errors) {
          ev.delay = activated_delay(ev, env);
          if (ev.delay > env.clock_period_ns) {
            ev.error = true;
            ++errors;
            const double derate = aging_factor(env) * variation_sample(env, ev.cycle);
            const int reach = std::min(reachable_stages(env, derate), ev.chain_len - 1);
            ev.acc_stored = stale_upper_bits(ev.acc_before, ev.acc_after, ev.chain_start + reach, bits);
            next.acc = ev.acc_stored;
          }
        }
        if (record_trace) res.trace.push_back(ev);
        st = next;
        ++cycle;
      }
      res.output.at(i, j) = st.acc;
      res.report.per_output_errors.push_back(errors);
      res.report.per_output_flips.push_back(flips);
      res.report.error_cycles += errors;
      res.report.sign_flip_cycles += flips;
    }
  return res;
}

std::vector<std::int64_t> product_column_sums(const QuantTensor& w, const QuantTensor& x) {
  const auto y = gemm_wide(w, x);
  std::vector<std::int64_t> sums(y.cols(), 0);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) sums[j] += y.at(i, j);
  return sums;
}

}  // namespace relsim::reference
