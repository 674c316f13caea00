#include "relsim/gemm.hpp"

#include <stdexcept>

namespace relsim {

AccTensor gemm_wide(const QuantTensor& weights, const QuantTensor& acts) {
  if (weights.rank() != 2 || acts.rank() != 2 || weights.cols() != acts.rows())
    throw std::invalid_argument("gemm_wide: shapes " + dims_to_string(weights.dims()) + " and " +
                                dims_to_string(acts.dims()) + " do not conform");
  const std::size_t m = weights.rows(), n = weights.cols(), k = acts.cols();
  AccTensor y = AccTensor::zeros({m, k}, weights.scale() * acts.scale());
  auto out = y.data();
  auto wd = weights.data();
  auto xd = acts.data();

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    std::int32_t* row = out.data() + i * k;
    for (std::size_t c = 0; c < n; ++c) {
      const std::int32_t wv = wd[i * n + c];
      if (wv == 0) continue;
      const std::int8_t* xr = xd.data() + c * k;
      for (std::size_t j = 0; j < k; ++j) row[j] += wv * xr[j];
    }
  }
  return y;
}

}  // namespace relsim
