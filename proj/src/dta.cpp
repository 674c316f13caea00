#include "relsim/dta.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace relsim {

AgingState extract_toggle_rates(std::span<const CycleEvent> trace, int acc_bits) {
  if (trace.empty()) throw std::invalid_argument("extract_toggle_rates: empty trace");
  std::vector<std::uint64_t> counts(acc_bits, 0);
  std::uint64_t launch = 0;
  std::int16_t prev_product = 0;
  for (const auto& e : trace) {
    const auto diff = static_cast<std::uint32_t>(e.acc_before ^ e.acc_after);
    for (int b = 0; b < acc_bits; ++b) counts[b] += (diff >> b) & 1u;
    if (e.product != prev_product) ++launch;
    prev_product = e.product;
  }
  AgingState st;
  const double n = static_cast<double>(trace.size());
  st.toggle_rate.resize(acc_bits);
  for (int b = 0; b < acc_bits; ++b) st.toggle_rate[b] = counts[b] / n;
  st.delta_vth.assign(acc_bits, 0.0);
  st.launch_toggle_rate = launch / n;
  return st;
}

AgingState apply_aging(AgingState state, const TimingEnv& env) {
  state.delta_vth.resize(state.toggle_rate.size());
  for (std::size_t b = 0; b < state.toggle_rate.size(); ++b)
    state.delta_vth[b] = delta_vth(env.aging, state.toggle_rate[b]);
  state.launch_delta_vth = delta_vth(env.aging, state.launch_toggle_rate);
  return state;
}

double aged_delay(double fresh, double dvth, const TimingEnv& env) {
  return fresh * (1.0 + env.aging.sensitivity * dvth);
}

StatDelay statistical_delay(std::span<const double> stage_delays, const TimingEnv& env) {
  if (stage_delays.empty()) throw std::invalid_argument("statistical_delay: no stages");
  StatDelay d;
  double var = 0.0;
  for (double s : stage_delays) {
    d.mu += s;
    const double sd = env.variation.rho * s;
    var += sd * sd;
  }
  d.sigma = std::sqrt(var);
  return d;
}

std::string to_string(FmaxMethod m) {
  switch (m) {
    case FmaxMethod::sta: return "sta";
    case FmaxMethod::corner: return "corner";
    case FmaxMethod::avatar: return "avatar";
  }
  return "?";
}

FmaxMethod fmax_method_from_string(const std::string& s) {
  if (s == "sta") return FmaxMethod::sta;
  if (s == "corner") return FmaxMethod::corner;
  if (s == "avatar") return FmaxMethod::avatar;
  throw std::invalid_argument("unknown fmax method '" + s + "'");
}

double sta_period_ns(const TimingEnv& env) {
  return (env.delay.d_base_ns + env.delay.d_bit_ns * env.geometry.acc_bits) * (1.0 + env.guardband.total());
}

namespace {

// Prefix sums of aged stage delays and their squares, so each cycle's chain
// costs O(1).
struct AgedChain {
  double launch = 0.0;
  std::vector<double> prefix;     // prefix[i] = sum of bits [0, i)
  std::vector<double> prefix_sq;

  AgedChain(const AgingState& aging, const TimingEnv& env) {
    const int bits = env.geometry.acc_bits;
    launch = aged_delay(env.delay.d_base_ns, aging.launch_delta_vth, env);
    prefix.assign(bits + 1, 0.0);
    prefix_sq.assign(bits + 1, 0.0);
    for (int b = 0; b < bits; ++b) {
      const double dv = b < static_cast<int>(aging.delta_vth.size()) ? aging.delta_vth[b] : 0.0;
      const double d = aged_delay(env.delay.d_bit_ns, dv, env);
      prefix[b + 1] = prefix[b] + d;
      prefix_sq[b + 1] = prefix_sq[b] + d * d;
    }
  }

  StatDelay chain(int start, int len, double rho) const {
    const int end = std::min<int>(start + len, static_cast<int>(prefix.size()) - 1);
    StatDelay d;
    d.mu = launch + prefix[end] - prefix[start];
    d.sigma = rho * std::sqrt(launch * launch + prefix_sq[end] - prefix_sq[start]);
    return d;
  }
};

}  // namespace

std::vector<double> cycle_requirements(std::span<const CycleEvent> trace, FmaxMethod method, const TimingEnv& env,
                                       const AgingState& aging) {
  std::vector<double> req(trace.size());
  const double gb = 1.0 + env.guardband.total();
  if (method == FmaxMethod::sta) {
    std::fill(req.begin(), req.end(), sta_period_ns(env));
    return req;
  }
  if (method == FmaxMethod::corner) {
    for (std::size_t c = 0; c < trace.size(); ++c)
      req[c] = (env.delay.d_base_ns + env.delay.d_bit_ns * trace[c].chain_len) * gb;
    return req;
  }
  const AgedChain chain(aging, env);
  const double rho = env.variation.rho;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(trace.size()); ++c)
    req[c] = chain.chain(trace[c].chain_start, trace[c].chain_len, rho).bound();
  return req;
}

double avatar_derating(std::span<const CycleEvent> trace, const TimingEnv& env, const AgingState& aging) {
  const AgedChain chain(aging, env);
  double worst = 0.0;
  for (const auto& e : trace) {
    const double fresh = env.delay.d_base_ns + env.delay.d_bit_ns * e.chain_len;
    worst = std::max(worst, chain.chain(e.chain_start, e.chain_len, env.variation.rho).bound() / fresh - 1.0);
  }
  return worst;
}

std::size_t count_violations(std::span<const double> requirements, double period_ns) {
  std::size_t n = 0;
#pragma omp parallel for reduction(+ : n) schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(requirements.size()); ++c)
    n += requirements[c] > period_ns ? 1 : 0;
  return n;
}

std::vector<CycleEvent> zero_delay_trace(const DtaWorkload& w, const TimingEnv& env) {
  TimingEnv zero = env;
  zero.timing_errors = false;
  TileOptions opts;
  opts.record_trace = true;
  return run_tile(w.weights, w.acts, zero, identity_order(w.weights.cols()), opts).trace;
}

FmaxResult fmax_search(std::span<const CycleEvent> trace, FmaxMethod method, const TimingEnv& env,
                       const AgingState& aging, const std::string& name) {
  if (trace.empty()) throw InternalError("fmax_search: empty workload trace");
  const auto req = cycle_requirements(trace, method, env, aging);
  const double worst = *std::max_element(req.begin(), req.end());
  if (!(worst > 0.0) || !std::isfinite(worst)) throw InternalError("fmax_search: degenerate zero path delays");

  FmaxResult r;
  r.workload = name;
  r.method = method;

  double lo = 0.0, hi = env.clock_period_ns;
  int guard = 0;
  while (count_violations(req, hi) > 0) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 200) throw InternalError("fmax_search: no feasible clock period found");
  }
  while ((hi - lo) > 1e-4 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (count_violations(req, mid) == 0)
      hi = mid;
    else
      lo = mid;
    if (++r.search_iterations > 200) throw InternalError("fmax_search: bisection did not converge");
  }
  // The binding cycle's requirement is the exact feasibility edge inside [lo, hi].
  double binding = 0.0;
  for (double q : req)
    if (q <= hi) binding = std::max(binding, q);
  r.period_ns = binding;
  r.fmax_mhz = 1000.0 / r.period_ns;
  r.sta_fmax_mhz = 1000.0 / sta_period_ns(env);
  r.improvement_vs_sta = (r.fmax_mhz - r.sta_fmax_mhz) / r.sta_fmax_mhz;
  return r;
}

FmaxResult fmax_search(const DtaWorkload& workload, FmaxMethod method, const TimingEnv& env) {
  const auto trace = zero_delay_trace(workload, env);
  if (trace.empty()) throw InternalError("fmax_search: workload '" + workload.name + "' has no cycles");
  const auto aging = apply_aging(extract_toggle_rates(trace, env.geometry.acc_bits), env);
  return fmax_search(trace, method, env, aging, workload.name);
}

std::string fmax_table_csv(std::span<const FmaxResult> rows) {
  std::ostringstream os;
  os << "workload,method,fmax_MHz,improvement_pct\n";
  os << std::fixed;
  for (const auto& r : rows)
    os << r.workload << ',' << to_string(r.method) << ',' << std::setprecision(3) << r.fmax_mhz << ','
       << std::setprecision(4) << r.improvement_vs_sta * 100.0 << '\n';
  return os.str();
}

}  // namespace relsim
