#pragma once

// Aging- and variation-aware dynamic timing analysis on the MAC carry chain.
//
// Timing sites are the accumulator bit stages plus one launch stage (the
// multiplier output feeding the adder). The flow is:
//   1. zero-delay simulation of the workload -> per-site toggle rates,
//   2. power-law dVth per site from its duty, first-order delay derating,
//   3. per-cycle statistical delay of the activated chain, mu + 3 sigma.
// The corner-based baseline instead derates the fresh delay of the activated
// chain by the flat aging + variation guardband.

#include <span>
#include <string>
#include <vector>

#include "relsim/core.hpp"
#include "relsim/macsim.hpp"
#include "relsim/timing_env.hpp"

namespace relsim {

struct AgingState {
  std::vector<double> toggle_rate;  // per accumulator bit
  std::vector<double> delta_vth;    // volts, per accumulator bit
  double launch_toggle_rate = 0.0;
  double launch_delta_vth = 0.0;
};

/// Toggle rate of bit b = cycles where bit b of the accumulator changed / cycles.
/// The launch stage rate is the fraction of cycles whose product differs from
/// the previous cycle's product.
AgingState extract_toggle_rates(std::span<const CycleEvent> trace, int acc_bits = 24);

/// Fills delta_vth from the toggle duty: k_stress * duty * t^exponent.
AgingState apply_aging(AgingState state, const TimingEnv& env);

/// Fresh stage delay * (1 + S * dVth).
double aged_delay(double fresh, double dvth, const TimingEnv& env);

struct StatDelay {
  double mu = 0.0;
  double sigma = 0.0;
  double bound() const { return mu + 3.0 * sigma; }
};

/// mu = sum of stages, sigma = sqrt(sum (rho * stage)^2).
StatDelay statistical_delay(std::span<const double> stage_delays, const TimingEnv& env);

enum class FmaxMethod { sta, corner, avatar };
std::string to_string(FmaxMethod m);
FmaxMethod fmax_method_from_string(const std::string& s);

struct DtaWorkload {
  std::string name;
  QuantTensor weights;
  QuantTensor acts;
};

struct FmaxResult {
  std::string workload;
  FmaxMethod method = FmaxMethod::corner;
  double period_ns = 0.0;
  double fmax_mhz = 0.0;
  double sta_fmax_mhz = 0.0;
  double improvement_vs_sta = 0.0;  // fraction
  int search_iterations = 0;
};

/// Static worst case: full-width chain with the full guardband.
double sta_period_ns(const TimingEnv& env);

/// Clock period each cycle needs under `method`. avatar uses `aging`
/// (toggle rates and dVth); the other methods ignore it.
std::vector<double> cycle_requirements(std::span<const CycleEvent> trace, FmaxMethod method, const TimingEnv& env,
                                       const AgingState& aging);

/// Largest relative derating (avatar requirement / fresh delay - 1) over the
/// activated paths of the trace. The corner guardband is pessimistic for the
/// trace exactly when this is below guardband.total().
double avatar_derating(std::span<const CycleEvent> trace, const TimingEnv& env, const AgingState& aging);

/// Zero-delay trace of the workload (identity order, timing errors off).
std::vector<CycleEvent> zero_delay_trace(const DtaWorkload& w, const TimingEnv& env);

/// Bisection on the clock period to relative tolerance 1e-4, then snapped to
/// the binding cycle. Aging is extracted from the workload itself.
FmaxResult fmax_search(const DtaWorkload& workload, FmaxMethod method, const TimingEnv& env);

/// Same search over a prepared trace and a fixed aging profile.
FmaxResult fmax_search(std::span<const CycleEvent> trace, FmaxMethod method, const TimingEnv& env,
                       const AgingState& aging, const std::string& name = "");

/// Number of cycles that miss a clock of period_ns under `method`.
std::size_t count_violations(std::span<const double> requirements, double period_ns);

std::string fmax_table_csv(std::span<const FmaxResult> rows);

}  // namespace relsim
