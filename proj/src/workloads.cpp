#include "relsim/workloads.hpp"

#include <algorithm>
#include <cmath>

namespace relsim {

Layer make_layer(const LayerSpec& spec, std::uint64_t seed) {
  SeededStream rng(mix_seed(seed, stable_hash(spec.name)));
  const std::size_t groups = std::max<std::size_t>(1, std::min(spec.groups, spec.c_out));

  // Input channels carry a sign bias shared by all prototypes (broadly
  // excitatory or inhibitory channels), so column fractions spread out.
  std::vector<double> bias(spec.c_in);
  for (auto& b : bias) b = 0.15 + 0.7 * rng.uniform();
  std::vector<std::vector<std::int8_t>> proto(groups, std::vector<std::int8_t>(spec.c_in));
  for (auto& p : proto)
    for (std::size_t c = 0; c < spec.c_in; ++c) p[c] = rng.bernoulli(bias[c]) ? 1 : -1;

  std::vector<std::int8_t> w(spec.c_out * spec.c_in);
  for (std::size_t r = 0; r < spec.c_out; ++r) {
    const auto& p = proto[rng.below(groups)];
    for (std::size_t c = 0; c < spec.c_in; ++c) {
      const int sign = rng.bernoulli(spec.sign_noise) ? -p[c] : p[c];
      const double mag = std::min(127.0, 1.0 + std::abs(rng.normal()) * 30.0);
      w[r * spec.c_in + c] = static_cast<std::int8_t>(sign * static_cast<int>(std::round(mag)));
    }
  }

  std::vector<std::int8_t> x(spec.c_in * spec.positions);
  for (auto& v : x) {
    if (rng.bernoulli(spec.zero_frac)) {
      v = 0;
      continue;
    }
    v = static_cast<std::int8_t>(std::min(127.0, std::round(std::abs(rng.normal()) * 40.0)));
  }
  return Layer{spec.name, QuantTensor({spec.c_out, spec.c_in}, std::move(w), 0.01),
               QuantTensor({spec.c_in, spec.positions}, std::move(x), 0.05)};
}

std::vector<LayerSpec> resnet_like_suite() {
  return {
      {"conv1", 16, 27, 16, 4, 0.10, 0.30},   {"layer1.0", 32, 64, 16, 4, 0.10, 0.50},
      {"layer1.1", 64, 64, 16, 8, 0.10, 0.50}, {"layer2.0", 64, 128, 16, 8, 0.12, 0.55},
      {"layer2.1", 128, 128, 16, 8, 0.12, 0.55}, {"layer3.0", 128, 256, 16, 16, 0.15, 0.60},
      {"layer3.1", 256, 256, 8, 16, 0.15, 0.60},
  };
}

std::vector<Layer> make_layer_suite(std::uint64_t seed) {
  std::vector<Layer> layers;
  for (const auto& s : resnet_like_suite()) layers.push_back(make_layer(s, seed));
  return layers;
}

TimingEnv default_read_env() {
  TimingEnv env;
  env.clock_period_ns = 1.30;
  env.delay = {0.2, 0.05};
  env.variation.rho = 0.02;
  env.variation.seed = 7;
  return env;
}

std::vector<DtaWorkloadSpec> table_benchmark_analogs() {
  return {
      {"SHA", 8, 64, 8, 90, 120, 0.1},      {"AES_CBC", 8, 96, 8, 110, 127, 0.05},
      {"FIR", 8, 32, 8, 127, 127, 0.0},     {"BubbleSort", 8, 16, 8, 8, 15, 0.2},
      {"Motion_Detection", 8, 48, 8, 60, 127, 0.1}, {"CNN", 16, 128, 8, 127, 127, 0.3},
      {"Convolution", 16, 128, 8, 127, 127, 0.3},   {"2d_Filter", 8, 9, 16, 127, 127, 0.0},
      {"MatrixMult", 8, 64, 8, 100, 100, 0.0},      {"DCT", 8, 8, 8, 127, 64, 0.0},
  };
}

DtaWorkload make_dta_workload(const DtaWorkloadSpec& spec, std::uint64_t seed) {
  SeededStream rng(mix_seed(seed, stable_hash(spec.name)));
  auto fill = [&](std::size_t n, int max, double zero_frac) {
    std::vector<std::int8_t> v(n);
    for (auto& e : v)
      e = rng.bernoulli(zero_frac) ? 0 : static_cast<std::int8_t>(rng.below(static_cast<std::uint64_t>(max) + 1));
    return v;
  };
  auto w = fill(spec.m * spec.n, spec.w_max, 0.0);
  auto x = fill(spec.n * spec.k, spec.x_max, spec.zero_frac);
  return DtaWorkload{spec.name, QuantTensor({spec.m, spec.n}, std::move(w), 1.0),
                     QuantTensor({spec.n, spec.k}, std::move(x), 1.0)};
}

std::vector<DtaWorkload> make_dta_suite(std::uint64_t seed) {
  std::vector<DtaWorkload> out;
  for (const auto& s : table_benchmark_analogs()) out.push_back(make_dta_workload(s, seed));
  return out;
}

DtaWorkload make_gemm_workload(const std::string& name, std::size_t m, std::size_t n, std::size_t k,
                               std::uint64_t seed) {
  if (!m || !n || !k) throw std::invalid_argument("gemm workload: dims must be positive");
  SeededStream rng(mix_seed(seed, stable_hash(name)));
  std::vector<std::int8_t> w(m * n), x(n * k);
  for (auto& v : w) v = static_cast<std::int8_t>(static_cast<int>(rng.below(256)) - 128);
  for (auto& v : x) v = static_cast<std::int8_t>(rng.below(128));
  return DtaWorkload{name, QuantTensor({m, n}, std::move(w), 0.02), QuantTensor({n, k}, std::move(x), 0.05)};
}

TimingEnv default_dta_env() {
  TimingEnv env;
  env.clock_period_ns = 1.5;
  env.delay = {0.2, 0.05};
  env.aging = AgingParams{0.02, 0.2, 1.0e4, 0.8, 1.0};
  env.variation.rho = 0.03;
  env.variation.seed = 11;
  return env;
}

}  // namespace relsim
