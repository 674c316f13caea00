#include "relsim/macsim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace relsim {

ActivatedChain activated_chain(std::int32_t acc_before, std::int32_t acc_after, int acc_bits) {
  const std::uint32_t mask = (acc_bits >= 32) ? ~0u : ((1u << acc_bits) - 1);
  const std::uint32_t toggled = (static_cast<std::uint32_t>(acc_before) ^ static_cast<std::uint32_t>(acc_after)) & mask;
  const int width = std::bit_width(toggled);
  return ActivatedChain{width, 0, width - 1};
}

std::pair<MacState, CycleEvent> mac_step(const MacState& state, std::int8_t a, std::int8_t w, int acc_bits) {
  CycleEvent ev;
  ev.cycle = state.cycle;
  ev.a = a;
  ev.w = w;
  ev.product = static_cast<std::int16_t>(int{a} * int{w});
  ev.acc_before = state.acc;
  ev.acc_after = wrap_bits(std::int64_t{state.acc} + ev.product, acc_bits);
  ev.acc_stored = ev.acc_after;
  const std::uint32_t mask = (1u << acc_bits) - 1;
  ev.carry_word = (static_cast<std::uint32_t>(ev.acc_before) ^ static_cast<std::uint32_t>(std::int32_t{ev.product}) ^
                   static_cast<std::uint32_t>(ev.acc_after)) &
                  mask;
  ev.sign_flip = (ev.acc_before < 0) != (ev.acc_after < 0);
  const auto chain = activated_chain(ev.acc_before, ev.acc_after, acc_bits);
  ev.chain_len = chain.length;
  ev.chain_start = chain.start;
  return {MacState{ev.acc_after, state.cycle + 1}, ev};
}

double activated_delay(const CycleEvent& event, const TimingEnv& env) {
  const double fresh = env.delay.d_base_ns + env.delay.d_bit_ns * event.chain_len;
  return fresh * aging_factor(env) * variation_sample(env, event.cycle);
}

int reachable_stages(const TimingEnv& env, double derate) {
  const double budget = (env.clock_period_ns / derate - env.delay.d_base_ns) / env.delay.d_bit_ns;
  if (!(budget > 0)) return 0;
  return static_cast<int>(std::min(std::floor(budget), 64.0));
}

std::int32_t stale_upper_bits(std::int32_t acc_before, std::int32_t acc_after, int cutoff, int acc_bits) {
  cutoff = std::clamp(cutoff, 0, acc_bits);
  const std::uint32_t low = cutoff >= 32 ? ~0u : ((1u << cutoff) - 1);
  const std::uint32_t mixed = (static_cast<std::uint32_t>(acc_after) & low) | (static_cast<std::uint32_t>(acc_before) & ~low);
  return wrap_bits(static_cast<std::int32_t>(mixed), acc_bits);
}

std::uint32_t TerReport::max_flips_per_output() const {
  return per_output_flips.empty() ? 0 : *std::max_element(per_output_flips.begin(), per_output_flips.end());
}

double TerReport::mean_flips_per_output() const {
  if (per_output_flips.empty()) return 0.0;
  return double(std::accumulate(per_output_flips.begin(), per_output_flips.end(), std::uint64_t{0})) /
         double(per_output_flips.size());
}

void TerReport::merge(const TerReport& other) {
  total_cycles += other.total_cycles;
  error_cycles += other.error_cycles;
  sign_flip_cycles += other.sign_flip_cycles;
  per_output_errors.insert(per_output_errors.end(), other.per_output_errors.begin(), other.per_output_errors.end());
  per_output_flips.insert(per_output_flips.end(), other.per_output_flips.begin(), other.per_output_flips.end());
}

nlohmann::json to_json(const TerReport& r) {
  return {{"total_cycles", r.total_cycles},
          {"error_cycles", r.error_cycles},
          {"sign_flip_cycles", r.sign_flip_cycles},
          {"ter", r.ter()},
          {"flip_rate", r.flip_rate()},
          {"per_output_errors", r.per_output_errors},
          {"per_output_flips", r.per_output_flips}};
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

bool is_permutation_of_range(std::span<const std::size_t> perm, std::size_t n) {
  if (perm.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (auto p : perm) {
    if (p >= n || seen[p]) return false;
    seen[p] = true;
  }
  return true;
}

namespace {

void check_tile_shapes(const QuantTensor& w, const QuantTensor& x) {
  if (w.rank() != 2 || x.rank() != 2)
    throw std::invalid_argument("run_tile: weights and activations must be 2-D");
  if (w.cols() != x.rows())
    throw std::invalid_argument("run_tile: inner dimensions differ, weights " + dims_to_string(w.dims()) +
                                " vs activations " + dims_to_string(x.dims()));
}

struct OutputTally {
  std::uint32_t errors = 0;
  std::uint32_t flips = 0;
};

// One output element's full reduction. Variation keys are the global cycle
// index, so results do not depend on which thread runs the output.
OutputTally simulate_output(const QuantTensor& w, const QuantTensor& x, const TimingEnv& env,
                            std::span<const std::size_t> order, std::size_t row, std::size_t col,
                            std::uint64_t first_cycle, std::int32_t& out, CycleEvent* trace) {
  const int bits = env.geometry.acc_bits;
  const double base_derate = aging_factor(env);
  OutputTally tally;
  MacState st{0, first_cycle};
  for (std::size_t s = 0; s < order.size(); ++s) {
    const std::size_t c = order[s];
    auto [next, ev] = mac_step(st, x.at(c, col), w.at(row, c), bits);
    if (ev.sign_flip) ++tally.flips;
    if (env.timing_errors) {
      ev.delay = activated_delay(ev, env);
      if (ev.delay > env.clock_period_ns) {
        ev.error = true;
        ++tally.errors;
        const double derate = base_derate * variation_sample(env, ev.cycle);
        const int n = std::min(reachable_stages(env, derate), ev.chain_len - 1);
        ev.acc_stored = stale_upper_bits(ev.acc_before, ev.acc_after, ev.chain_start + n, bits);
        next.acc = ev.acc_stored;
      }
    }
    if (trace) trace[s] = ev;
    st = next;
  }
  out = st.acc;
  return tally;
}

}  // namespace

TileResult run_tile_rows(const QuantTensor& weights, const QuantTensor& acts, const TimingEnv& env,
                         std::span<const std::vector<std::size_t>> row_orders, const TileOptions& opts) {
  check_tile_shapes(weights, acts);
  const std::size_t m = weights.rows(), n = weights.cols(), k = acts.cols();
  if (row_orders.size() != m) throw std::invalid_argument("run_tile: need one reduction order per weight row");
  for (const auto& o : row_orders)
    if (!is_permutation_of_range(o, n))
      throw std::invalid_argument("run_tile: order is not a permutation of the reduction axis");

  TileResult res;
  res.output = AccTensor::zeros({m, k}, weights.scale() * acts.scale());
  const std::size_t outputs = m * k;
  res.report.total_cycles = outputs * n;
  res.report.per_output_errors.assign(outputs, 0);
  res.report.per_output_flips.assign(outputs, 0);
  if (opts.record_trace) res.trace.resize(outputs * n);

  auto out = res.output.data();
  auto& errs = res.report.per_output_errors;
  auto& flips = res.report.per_output_flips;
  const auto total = static_cast<std::ptrdiff_t>(outputs);

#pragma omp parallel for schedule(static) if (opts.parallel)
  for (std::ptrdiff_t o = 0; o < total; ++o) {
    const auto uo = static_cast<std::size_t>(o);
    const std::size_t i = uo / k, j = uo % k;
    CycleEvent* tr = opts.record_trace ? res.trace.data() + uo * n : nullptr;
    const auto t = simulate_output(weights, acts, env, row_orders[i], i, j, uo * n, out[uo], tr);
    errs[uo] = t.errors;
    flips[uo] = t.flips;
  }

  for (std::size_t o = 0; o < outputs; ++o) {
    res.report.error_cycles += errs[o];
    res.report.sign_flip_cycles += flips[o];
  }
  return res;
}

TileResult run_tile(const QuantTensor& weights, const QuantTensor& acts, const TimingEnv& env,
                    std::span<const std::size_t> order, const TileOptions& opts) {
  check_tile_shapes(weights, acts);
  if (!is_permutation_of_range(order, weights.cols()))
    throw std::invalid_argument("run_tile: order is not a permutation of the reduction axis");
  std::vector<std::vector<std::size_t>> rows(weights.rows(), std::vector<std::size_t>(order.begin(), order.end()));
  return run_tile_rows(weights, acts, env, rows, opts);
}

std::string trace_to_csv(std::span<const CycleEvent> trace) {
  std::ostringstream os;
  os << "cycle,a,w,acc_before,acc_after,sign_flip,chain_len,delay,error\n";
  os << std::setprecision(9);
  for (const auto& e : trace) {
    os << e.cycle << ',' << int{e.a} << ',' << int{e.w} << ',' << e.acc_before << ',' << e.acc_stored << ','
       << int{e.sign_flip} << ',' << e.chain_len << ',' << e.delay << ',' << int{e.error} << '\n';
  }
  return os.str();
}

}  // namespace relsim
