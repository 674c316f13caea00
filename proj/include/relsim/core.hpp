#pragma once

// Shared numeric types: quantized tensors, wide accumulator tensors, sign
// matrices and reproducible random streams.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace relsim {

using Dims = std::vector<std::size_t>;

/// Raised when a numeric search or internal consistency check cannot finish.
class InternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t element_count(const Dims& dims);
std::string dims_to_string(const Dims& dims);

/// Signed 8-bit tensor with a symmetric per-tensor scale (no zero point).
class QuantTensor {
 public:
  QuantTensor() = default;
  QuantTensor(Dims dims, std::vector<std::int8_t> data, double scale);

  static QuantTensor zeros(Dims dims, double scale);

  const Dims& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  double scale() const { return scale_; }

  std::span<const std::int8_t> data() const { return data_; }
  std::span<std::int8_t> data() { return data_; }

  // 2-D accessors; rows()/cols() throw on tensors of other rank.
  std::size_t rows() const;
  std::size_t cols() const;
  std::int8_t at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }
  std::int8_t& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }

  bool operator==(const QuantTensor&) const = default;

 private:
  Dims dims_;
  std::vector<std::int8_t> data_;
  double scale_ = 1.0;
};

/// Wide (32-bit) integer tensor: GEMM outputs before re-quantization.
/// scale is the product of the operand scales.
class AccTensor {
 public:
  AccTensor() = default;
  AccTensor(Dims dims, std::vector<std::int32_t> data, double scale);

  static AccTensor zeros(Dims dims, double scale);

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  double scale() const { return scale_; }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const std::int32_t> data() const { return data_; }
  std::span<std::int32_t> data() { return data_; }
  std::int32_t at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }
  std::int32_t& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }

  bool operator==(const AccTensor&) const = default;

 private:
  Dims dims_;
  std::vector<std::int32_t> data_;
  double scale_ = 1.0;
};

/// Round half away from zero, then clamp to [-128, 127].
std::int8_t quantize_value(double value, double scale);

QuantTensor quantize(std::span<const double> values, Dims dims, double scale);
std::vector<double> dequantize(const QuantTensor& t);

/// Re-quantize wide accumulator values to i8 with output scale out_scale.
/// Clamping here is the saturation that bounds high-bit errors.
QuantTensor requantize(const AccTensor& acc, double out_scale);

struct SignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> signs;  // +1 / -1, row-major

  std::int8_t at(std::size_t r, std::size_t c) const { return signs[r * cols + c]; }
  std::span<const std::int8_t> row(std::size_t r) const {
    return std::span<const std::int8_t>(signs).subspan(r * cols, cols);
  }
  SignMatrix negated() const;
  bool operator==(const SignMatrix&) const = default;
};

/// Elementwise sign of a 2-D tensor; zero maps to +1.
SignMatrix sign_matrix(const QuantTensor& w);

/// Counter-based generator (splitmix64 over seed and draw index), so that a
/// (seed, counter) pair always yields the same draw on every platform and
/// substreams can be addressed directly without sequential replay.
class SeededStream {
 public:
  explicit SeededStream(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  static std::uint64_t draw_at(std::uint64_t seed, std::uint64_t counter);

  std::uint64_t next_u64() { return draw_at(seed_, counter_++); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller; consumes two draws.
  double normal();
  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent stream keyed by (this seed, tag); does not advance this one.
  SeededStream fork(std::uint64_t tag) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

/// FNV-1a; stable across platforms, unlike std::hash.
std::uint64_t stable_hash(std::string_view s);

}  // namespace relsim
