#include "relsim/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace relsim {

std::size_t element_count(const Dims& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string dims_to_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

QuantTensor::QuantTensor(Dims dims, std::vector<std::int8_t> data, double scale)
    : dims_(std::move(dims)), data_(std::move(data)), scale_(scale) {
  if (dims_.empty()) throw std::invalid_argument("tensor needs at least one dimension");
  if (element_count(dims_) != data_.size())
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match dims " + dims_to_string(dims_));
  if (!(scale_ > 0.0) || !std::isfinite(scale_))
    throw std::invalid_argument("tensor scale must be positive and finite");
}

QuantTensor QuantTensor::zeros(Dims dims, double scale) {
  auto n = element_count(dims);
  return QuantTensor(std::move(dims), std::vector<std::int8_t>(n, 0), scale);
}

std::size_t QuantTensor::rows() const {
  if (dims_.size() != 2) throw std::invalid_argument("expected a 2-D tensor, got " + dims_to_string(dims_));
  return dims_[0];
}

std::size_t QuantTensor::cols() const {
  if (dims_.size() != 2) throw std::invalid_argument("expected a 2-D tensor, got " + dims_to_string(dims_));
  return dims_[1];
}

AccTensor::AccTensor(Dims dims, std::vector<std::int32_t> data, double scale)
    : dims_(std::move(dims)), data_(std::move(data)), scale_(scale) {
  if (dims_.empty()) throw std::invalid_argument("tensor needs at least one dimension");
  if (element_count(dims_) != data_.size())
    throw std::invalid_argument("accumulator data length does not match dims " + dims_to_string(dims_));
  if (!(scale_ > 0.0) || !std::isfinite(scale_))
    throw std::invalid_argument("accumulator scale must be positive and finite");
}

AccTensor AccTensor::zeros(Dims dims, double scale) {
  auto n = element_count(dims);
  return AccTensor(std::move(dims), std::vector<std::int32_t>(n, 0), scale);
}

std::size_t AccTensor::rows() const {
  if (dims_.size() != 2) throw std::invalid_argument("expected a 2-D accumulator tensor");
  return dims_[0];
}

std::size_t AccTensor::cols() const {
  if (dims_.size() != 2) throw std::invalid_argument("expected a 2-D accumulator tensor");
  return dims_[1];
}

std::int8_t quantize_value(double value, double scale) {
  // std::round rounds half away from zero.
  double q = std::round(value / scale);
  q = std::clamp(q, -128.0, 127.0);
  return static_cast<std::int8_t>(q);
}

QuantTensor quantize(std::span<const double> values, Dims dims, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw std::invalid_argument("quantize: scale must be positive");
  std::vector<std::int8_t> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [scale](double v) { return quantize_value(v, scale); });
  return QuantTensor(std::move(dims), std::move(out), scale);
}

std::vector<double> dequantize(const QuantTensor& t) {
  std::vector<double> out(t.size());
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] * t.scale();
  return out;
}

QuantTensor requantize(const AccTensor& acc, double out_scale) {
  if (!(out_scale > 0.0)) throw std::invalid_argument("requantize: scale must be positive");
  std::vector<std::int8_t> out(acc.size());
  auto d = acc.data();
  const double ratio = acc.scale() / out_scale;
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = quantize_value(d[i] * ratio, 1.0);
  return QuantTensor(acc.dims(), std::move(out), out_scale);
}

SignMatrix SignMatrix::negated() const {
  SignMatrix out = *this;
  for (auto& s : out.signs) s = static_cast<std::int8_t>(-s);
  return out;
}

SignMatrix sign_matrix(const QuantTensor& w) {
  if (w.rank() != 2) throw std::invalid_argument("sign_matrix: expected a 2-D tensor, got " + dims_to_string(w.dims()));
  SignMatrix s{w.dims()[0], w.dims()[1], {}};
  s.signs.resize(w.size());
  auto d = w.data();
  for (std::size_t i = 0; i < d.size(); ++i) s.signs[i] = d[i] >= 0 ? 1 : -1;
  return s;
}

std::uint64_t SeededStream::draw_at(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + (counter + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SeededStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededStream::normal() {
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SeededStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("SeededStream::below: n must be positive");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

SeededStream SeededStream::fork(std::uint64_t tag) const { return SeededStream(mix_seed(seed_, tag)); }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  return SeededStream::draw_at(seed ^ 0xD1B54A32D192ED03ULL, tag);
}

std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace relsim
