#pragma once

// Seeded synthetic workloads: a ResNet-like layer suite for reordering
// studies and ten DVFS benchmark analogs for timing analysis.

#include <cstdint>
#include <string>
#include <vector>

#include "relsim/core.hpp"
#include "relsim/dta.hpp"
#include "relsim/timing_env.hpp"

namespace relsim {

/// One GEMM-lowered convolution layer. Output channels share one of `groups`
/// sign prototypes over the input channels, each weight flipping away from
/// its prototype with probability sign_noise. Activations are post-ReLU:
/// zero with probability zero_frac, otherwise half-normal.
struct LayerSpec {
  std::string name;
  std::size_t c_out = 0;
  std::size_t c_in = 0;
  std::size_t positions = 16;
  std::size_t groups = 4;
  double sign_noise = 0.1;
  double zero_frac = 0.5;
};

struct Layer {
  std::string name;
  QuantTensor weights;  // [c_out x c_in]
  QuantTensor acts;     // [c_in x positions], all >= 0
};

Layer make_layer(const LayerSpec& spec, std::uint64_t seed);
std::vector<LayerSpec> resnet_like_suite();
std::vector<Layer> make_layer_suite(std::uint64_t seed);

/// Clock and delay model under which a partial-sum sign flip misses timing
/// and ordinary accumulate steps do not.
TimingEnv default_read_env();

/// Non-negative GEMM workloads named after classic embedded benchmarks; they
/// differ in operand ranges and reduction depth and therefore in how high the
/// accumulator toggles.
struct DtaWorkloadSpec {
  std::string name;
  std::size_t m, n, k;
  int w_max, x_max;
  double zero_frac;
};

std::vector<DtaWorkloadSpec> table_benchmark_analogs();
DtaWorkload make_dta_workload(const DtaWorkloadSpec& spec, std::uint64_t seed);
std::vector<DtaWorkload> make_dta_suite(std::uint64_t seed);

/// Dense GEMM for checksum studies: weights uniform over the full i8 range
/// (scale 0.02), activations uniform in [0, 127] (scale 0.05).
DtaWorkload make_gemm_workload(const std::string& name, std::size_t m, std::size_t n, std::size_t k,
                               std::uint64_t seed);

/// Nominal-voltage aged environment whose aging + 3 sigma derating stays under
/// the 20% corner guardband on every suite workload.
TimingEnv default_dta_env();

}  // namespace relsim
