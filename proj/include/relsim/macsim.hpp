#pragma once

// Bit-accurate MAC unit and systolic tile simulation.
//
// Each output element of a tile is produced by one MAC that accumulates
// a * w products into a two's-complement accumulator (24 bits by default).
// Every step is classified by the carry chain it activates; under a
// TimingEnv the chain's delay decides whether the step meets the clock.

#include <cstdint>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "relsim/core.hpp"
#include "relsim/timing_env.hpp"

namespace relsim {

/// Sign-extend the low `bits` bits of v.
constexpr std::int32_t wrap_bits(std::int64_t v, int bits) {
  const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
  std::uint64_t u = static_cast<std::uint64_t>(v) & mask;
  if (u >> (bits - 1)) u |= ~mask;
  return static_cast<std::int32_t>(static_cast<std::int64_t>(u));
}

constexpr std::int32_t wrap24(std::int64_t v) { return wrap_bits(v, 24); }

struct MacState {
  std::int32_t acc = 0;
  std::uint64_t cycle = 0;
};

/// Carry path sensitized by one accumulate step. A switching sum bit i is a
/// timing endpoint whose carry input ripples up from bit 0, so the activated
/// chain spans stages 0..h for the highest switching bit h. A partial-sum
/// sign flip switches the sign-extension bits and therefore sensitizes the
/// full-width chain.
struct ActivatedChain {
  int length = 0;  // stages, 0 when no sum bit switches
  int start = 0;   // lowest stage of the chain
  int end = -1;    // highest switching bit
};

ActivatedChain activated_chain(std::int32_t acc_before, std::int32_t acc_after, int acc_bits);

struct CycleEvent {
  std::uint64_t cycle = 0;
  std::int8_t a = 0;
  std::int8_t w = 0;
  std::int16_t product = 0;
  std::int32_t acc_before = 0;
  std::int32_t acc_after = 0;    // ideal result
  std::int32_t acc_stored = 0;   // what the register captured (differs on a timing error)
  std::uint32_t carry_word = 0;  // carries into each bit: A ^ P ^ S
  bool sign_flip = false;
  int chain_len = 0;
  int chain_start = 0;
  double delay = 0.0;
  bool error = false;
};

/// One ideal accumulate step; delay and error fields stay at their defaults.
std::pair<MacState, CycleEvent> mac_step(const MacState& state, std::int8_t a, std::int8_t w, int acc_bits = 24);

/// (d_base + d_bit * chain_len) * aging_factor * variation_sample, keyed by event.cycle.
double activated_delay(const CycleEvent& event, const TimingEnv& env);

/// Highest stage count whose linear delay fits in the clock under the given
/// derating factor; negative budgets clamp to 0.
int reachable_stages(const TimingEnv& env, double derate);

/// Stale-upper-bits corruption: bits below `cutoff` come from acc_after, the
/// rest keep acc_before, then the word is sign-extended.
std::int32_t stale_upper_bits(std::int32_t acc_before, std::int32_t acc_after, int cutoff, int acc_bits);

struct TerReport {
  std::uint64_t total_cycles = 0;
  std::uint64_t error_cycles = 0;
  std::uint64_t sign_flip_cycles = 0;
  std::vector<std::uint32_t> per_output_errors;
  std::vector<std::uint32_t> per_output_flips;

  double ter() const { return total_cycles ? double(error_cycles) / double(total_cycles) : 0.0; }
  double flip_rate() const { return total_cycles ? double(sign_flip_cycles) / double(total_cycles) : 0.0; }
  std::uint32_t max_flips_per_output() const;
  double mean_flips_per_output() const;

  /// Concatenates per-output counts; totals add.
  void merge(const TerReport& other);
};

nlohmann::json to_json(const TerReport& r);

struct TileOptions {
  bool record_trace = false;
  bool parallel = true;
};

struct TileResult {
  AccTensor output;
  TerReport report;
  std::vector<CycleEvent> trace;  // output-major, step-minor; empty unless requested
};

/// weights [m x n] times acts [n x k], every output reducing in `order`.
TileResult run_tile(const QuantTensor& weights, const QuantTensor& acts, const TimingEnv& env,
                    std::span<const std::size_t> order, const TileOptions& opts = {});

/// As run_tile, with a reduction order per weight row.
TileResult run_tile_rows(const QuantTensor& weights, const QuantTensor& acts, const TimingEnv& env,
                         std::span<const std::vector<std::size_t>> row_orders, const TileOptions& opts = {});

std::vector<std::size_t> identity_order(std::size_t n);
bool is_permutation_of_range(std::span<const std::size_t> perm, std::size_t n);

std::string trace_to_csv(std::span<const CycleEvent> trace);

}  // namespace relsim
