#include "relsim/timing_env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "relsim/core.hpp"
#include "relsim/json_util.hpp"

namespace relsim {

using nlohmann::json;

void TimingEnv::validate() const {
  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok) throw ConfigError(std::string("env.") + field, what);
  };
  require(clock_period_ns > 0 && std::isfinite(clock_period_ns), "clock_period_ns", "must be positive");
  require(aging.k_stress >= 0, "aging.k_stress", "must be non-negative");
  require(aging.exponent > 0, "aging.exponent", "must be positive");
  require(aging.age_time_h >= 0, "aging.age_time_h", "must be non-negative");
  require(aging.sensitivity >= 0, "aging.sensitivity", "must be non-negative");
  require(aging.duty >= 0 && aging.duty <= 1, "aging.duty", "must lie in [0, 1]");
  require(variation.rho >= 0 && variation.rho < 1, "variation.rho", "must lie in [0, 1)");
  require(guardband.aging >= 0 && guardband.variation >= 0, "guardband", "must be non-negative");
  require(delay.d_base_ns > 0 && delay.d_bit_ns > 0, "delay", "stage delays must be positive");
  require(geometry.acc_bits >= 2 * geometry.operand_bits && geometry.acc_bits <= 31, "geometry.acc_bits",
          "must cover a full product and fit in 31 bits");
  require(geometry.operand_bits == 8, "geometry.operand_bits", "only 8-bit operands are supported");
}

double delta_vth(const AgingParams& aging, double duty) {
  if (aging.age_time_h <= 0.0 || duty <= 0.0) return 0.0;
  return aging.k_stress * duty * std::pow(aging.age_time_h, aging.exponent);
}

double aging_factor(const TimingEnv& env) {
  return 1.0 + env.aging.sensitivity * delta_vth(env.aging, env.aging.duty);
}

double variation_sample(const TimingEnv& env, std::uint64_t key) {
  const auto& v = env.variation;
  if (v.sigma_corner) return 1.0 + v.rho * *v.sigma_corner;
  if (v.rho == 0.0) return 1.0;
  SeededStream s(v.seed, 2 * key);
  return std::max(0.05, 1.0 + v.rho * s.normal());
}

TimingEnv timing_env_from_json(const json& j, const std::string& path) {
  TimingEnv env;
  ObjectReader r(j, path);
  env.clock_period_ns = r.get_or("clock_period_ns", env.clock_period_ns);
  env.vdd_label = r.get_or<std::string>("vdd_label", env.vdd_label);
  env.temperature_label = r.get_or<std::string>("temperature_label", env.temperature_label);
  env.timing_errors = r.get_or("timing_errors", env.timing_errors);
  if (r.has("aging")) {
    ObjectReader a(r.raw("aging"), r.field_path("aging"));
    env.aging.k_stress = a.get_or("k_stress", env.aging.k_stress);
    env.aging.exponent = a.get_or("exponent", env.aging.exponent);
    env.aging.age_time_h = a.get_or("age_time_h", env.aging.age_time_h);
    env.aging.sensitivity = a.get_or("sensitivity", env.aging.sensitivity);
    env.aging.duty = a.get_or("duty", env.aging.duty);
    a.finish();
  }
  if (r.has("variation")) {
    ObjectReader v(r.raw("variation"), r.field_path("variation"));
    env.variation.rho = v.get_or("rho", env.variation.rho);
    env.variation.seed = v.get_or<std::uint64_t>("seed", env.variation.seed);
    if (v.has("sigma_corner")) env.variation.sigma_corner = v.get<double>("sigma_corner");
    v.finish();
  }
  if (r.has("guardband")) {
    ObjectReader g(r.raw("guardband"), r.field_path("guardband"));
    env.guardband.aging = g.get_or("aging", env.guardband.aging);
    env.guardband.variation = g.get_or("variation", env.guardband.variation);
    g.finish();
  }
  if (r.has("delay")) {
    ObjectReader d(r.raw("delay"), r.field_path("delay"));
    env.delay.d_base_ns = d.get_or("d_base_ns", env.delay.d_base_ns);
    env.delay.d_bit_ns = d.get_or("d_bit_ns", env.delay.d_bit_ns);
    d.finish();
  }
  if (r.has("geometry")) {
    ObjectReader g(r.raw("geometry"), r.field_path("geometry"));
    env.geometry.operand_bits = g.get_or("operand_bits", env.geometry.operand_bits);
    env.geometry.acc_bits = g.get_or("acc_bits", env.geometry.acc_bits);
    g.finish();
  }
  r.finish();
  env.validate();
  return env;
}

json to_json(const TimingEnv& env) {
  json variation = {{"rho", env.variation.rho}, {"seed", env.variation.seed}};
  if (env.variation.sigma_corner) variation["sigma_corner"] = *env.variation.sigma_corner;
  return {
      {"clock_period_ns", env.clock_period_ns},
      {"vdd_label", env.vdd_label},
      {"temperature_label", env.temperature_label},
      {"timing_errors", env.timing_errors},
      {"aging",
       {{"k_stress", env.aging.k_stress},
        {"exponent", env.aging.exponent},
        {"age_time_h", env.aging.age_time_h},
        {"sensitivity", env.aging.sensitivity},
        {"duty", env.aging.duty}}},
      {"variation", variation},
      {"guardband", {{"aging", env.guardband.aging}, {"variation", env.guardband.variation}}},
      {"delay", {{"d_base_ns", env.delay.d_base_ns}, {"d_bit_ns", env.delay.d_bit_ns}}},
      {"geometry", {{"operand_bits", env.geometry.operand_bits}, {"acc_bits", env.geometry.acc_bits}}},
  };
}

}  // namespace relsim
