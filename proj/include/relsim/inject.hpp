#pragma once

// Error injection into wide GEMM outputs and resilience characterization on a
// small quantized transformer.

#include <functional>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relsim/core.hpp"

namespace relsim {

enum class Component { qkv, o_proj, up, down, other };
enum class Stage { prefill, decode };
enum class InjectMode { bit, value };

std::string to_string(Component c);
std::string to_string(Stage s);
std::string to_string(InjectMode m);
Component component_from_string(const std::string& s);
Stage stage_from_string(const std::string& s);
InjectMode inject_mode_from_string(const std::string& s);

struct InjectionSpec {
  Component target = Component::qkv;
  std::optional<std::size_t> layer;  // empty: every layer
  InjectMode mode = InjectMode::bit;
  int bit_position = 0;    // bit mode, 0..31 of the wide accumulator
  double magnitude = 0.0;  // value mode, in output quanta
  double rate = 0.0;       // per output element
  Stage stage = Stage::prefill;
  std::uint64_t seed = 0;
  bool exact_count = false;  // hit exactly round(rate * N) elements

  void validate() const;
};

nlohmann::json to_json(const InjectionSpec& s);
InjectionSpec injection_spec_from_json(const nlohmann::json& j, const std::string& path = "");

/// Bit mode XORs bit_position of every selected element. Value mode adds
/// +-magnitude * unit (rounded, saturating at the i32 range) with a seeded
/// sign; unit converts the spec's output quanta to wide quanta. Selection is
/// an independent Bernoulli(rate) per element keyed by (seed, index), or
/// exactly round(rate * N) seeded distinct elements in exact-count mode.
AccTensor inject(const AccTensor& y, const InjectionSpec& spec, double unit = 1.0);

/// Where a GEMM runs inside the network. Activations are column-per-token;
/// first_token is the token index of column 0.
struct GemmSite {
  Component component = Component::qkv;
  std::size_t layer = 0;
  Stage stage = Stage::prefill;
  std::size_t sequence = 0;
  std::size_t first_token = 0;
  double out_scale = 1.0;  // requantization scale applied after the hook
};

/// Sees and may modify every wide GEMM output before requantization. Called
/// concurrently for different sequences.
using GemmHook = std::function<void(const GemmSite&, AccTensor&)>;

struct ToyNetworkConfig {
  std::size_t d_model = 32;
  std::size_t d_ff = 64;
  std::size_t layers = 4;
  std::size_t classes = 16;
  std::size_t vocab = 64;
  std::size_t prefill_tokens = 16;
  std::size_t decode_tokens = 4;
  std::size_t batch = 16;
  double headroom = 2.0;  // output scale = headroom * clean max |y| / 127
  // Residual channels written with extra gain by O and Down, giving the
  // residual stream the wide dynamic range of large models.
  std::size_t outlier_channels = 2;
  double outlier_gain = 4.0;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const ToyNetworkConfig& c);
ToyNetworkConfig toy_network_config_from_json(const nlohmann::json& j, const std::string& path = "");

/// Logits [classes x tokens] per sequence, row-major, prefill tokens first.
using NetworkOutput = std::vector<std::vector<double>>;

/// Decoder with an unnormalized residual stream: per layer RMS scaling, a
/// fused QKV projection, single-head causal attention and an O projection
/// added to the residual; then RMS scaling, a ReLU MLP (up, down) added to
/// the residual. The residual sums written by O and Down are what the next
/// RMS scaling sees. A final RMS scaling and readout GEMM (component "other")
/// produce class logits. Every GEMM is i8 x i8 with static scales calibrated on the clean
/// run. Prefill processes the prompt at once and fills a KV cache; decode
/// then feeds the remaining tokens one at a time (teacher forced).
class ToyNetwork {
 public:
  explicit ToyNetwork(ToyNetworkConfig cfg);

  const ToyNetworkConfig& config() const { return cfg_; }
  NetworkOutput run(const GemmHook& hook = {}, bool parallel = true) const;
  const NetworkOutput& baseline() const { return baseline_; }
  /// Output rows of a component's GEMM.
  std::size_t gemm_rows(Component c) const;

 private:
  struct Site {
    QuantTensor w;
    double in_scale = 1.0;
    double out_scale = 1.0;
  };
  struct Calibration;

  NetworkOutput::value_type run_sequence(std::size_t seq, const GemmHook& hook, Calibration* calib) const;
  const Site& site(Component c, std::size_t layer) const;
  Site& site(Component c, std::size_t layer);

  ToyNetworkConfig cfg_;
  std::vector<std::vector<double>> embedding_;  // vocab x d_model
  std::vector<std::vector<std::size_t>> tokens_;
  std::vector<Site> sites_;  // layers x {qkv, o_proj, up, down}, then readout
  NetworkOutput baseline_;
};

struct Degradation {
  double relative_l2 = 0.0;
  double accuracy_delta = 0.0;  // share of positions whose argmax left the clean label
};

/// Labels are the clean network's argmax, so clean accuracy is 1.
Degradation degradation(const NetworkOutput& clean, const NetworkOutput& faulty, std::size_t classes);

GemmHook injection_hook(const InjectionSpec& spec);

struct ResilienceRecord {
  InjectionSpec spec;
  Degradation result;
};

struct ResilienceReport {
  std::vector<ResilienceRecord> records;
};

/// Runs the network once per spec; points run in parallel.
ResilienceReport run_characterization(const ToyNetwork& net, std::span<const InjectionSpec> sweep);

/// Long format: target,layer,bit,rate,magnitude,stage,metric,value.
std::string resilience_to_csv(const ResilienceReport& report);

struct MsdPoint {
  double rate = 0.0;
  double magnitude = 0.0;
  std::size_t count = 0;  // elements hit per GEMM call
  bool skipped = false;   // rate * N < 1
  Degradation result;
};

/// Holds total_mag (output quanta per GEMM call) constant while rates run
/// geometrically from min_rate to 1 over `points` values; each point hits
/// exactly round(rate * N) elements with magnitude total_mag / count.
std::vector<MsdPoint> magnitude_frequency_sweep(const ToyNetwork& net, Component component,
                                                std::optional<std::size_t> layer, Stage stage, double total_mag,
                                                std::size_t points, double min_rate, std::uint64_t seed);

/// Rate grid of a constant-MSD sweep without results: rates run
/// geometrically from min_rate to 1; count = round(rate * N) and magnitude =
/// total_mag / count for N = elements of one call of the component.
std::vector<MsdPoint> msd_grid(const ToyNetwork& net, Component component, Stage stage, double total_mag,
                               std::size_t points, double min_rate);

/// Layer-wise, bit-wise, component x stage and constant-MSD slices.
std::vector<InjectionSpec> standard_sweep(const ToyNetwork& net, std::uint64_t seed);

/// Degradation when, in every call of `component` during `stage`,
/// round(freq * tokens) token columns each get one +-mag output-quanta error.
/// This is the grid measurement behind calibrate_region.
double column_error_degradation(const ToyNetwork& net, Component component, Stage stage, double freq, double mag,
                                std::uint64_t seed);

}  // namespace relsim
