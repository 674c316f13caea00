#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>

namespace relsim {

/// Power-law threshold-voltage shift parameters:
/// dVth = k_stress * duty * age_time_h^exponent, aged delay = fresh * (1 + sensitivity * dVth).
struct AgingParams {
  double k_stress = 0.0;      // V at unit duty and unit time
  double exponent = 0.2;
  double age_time_h = 0.0;
  double sensitivity = 0.0;   // per volt
  double duty = 1.0;          // lumped duty used for the single-factor MAC view
};

struct VariationParams {
  double rho = 0.0;  // relative sigma per stage
  std::uint64_t seed = 0;
  // When set, every sample is pinned to the deterministic 1 + rho * sigma_corner.
  std::optional<double> sigma_corner;
};

struct Guardband {
  double aging = 0.15;
  double variation = 0.05;
  double total() const { return aging + variation; }
};

/// Linear activated-path model: d_base + d_bit * chain_len (ns).
struct DelayParams {
  double d_base_ns = 0.2;
  double d_bit_ns = 0.05;
};

struct MacGeometry {
  int operand_bits = 8;
  int acc_bits = 24;
};

struct TimingEnv {
  double clock_period_ns = 1.5;
  std::string vdd_label = "nominal";
  std::string temperature_label = "25C";
  bool timing_errors = true;
  AgingParams aging;
  VariationParams variation;
  Guardband guardband;
  DelayParams delay;
  MacGeometry geometry;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

double delta_vth(const AgingParams& aging, double duty);

/// 1 + S * dVth at the lumped duty.
double aging_factor(const TimingEnv& env);

/// Multiplicative variation factor for the timing site identified by key.
double variation_sample(const TimingEnv& env, std::uint64_t key);

TimingEnv timing_env_from_json(const nlohmann::json& j, const std::string& path = "env");
nlohmann::json to_json(const TimingEnv& env);

}  // namespace relsim
