#include "relsim/abft.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>

namespace relsim {

std::string to_string(Dataflow d) { return d == Dataflow::weight_stationary ? "ws" : "os"; }

Dataflow dataflow_from_string(const std::string& s) {
  if (s == "ws" || s == "weight_stationary") return Dataflow::weight_stationary;
  if (s == "os" || s == "output_stationary") return Dataflow::output_stationary;
  throw std::invalid_argument("unknown dataflow '" + s + "' (expected ws or os)");
}

void ChecksumPlan::validate() const {
  if (rows == 0 || cols == 0 || depth == 0) throw std::invalid_argument("checksum plan: tile dims must be positive");
}

std::size_t ErrorStats::mismatched_columns() const {
  return static_cast<std::size_t>(std::count_if(mismatches.begin(), mismatches.end(), [](auto v) { return v != 0; }));
}

void ErrorStats::merge(const ErrorStats& other) {
  if (mismatches.empty()) mag_unit = other.mag_unit;
  mismatches.insert(mismatches.end(), other.mismatches.begin(), other.mismatches.end());
  max_mag = std::max(max_mag, other.max_mag);
  total_mag += other.total_mag;
  checksum_fault = checksum_fault || other.checksum_fault;
  freq = mismatches.empty() ? 0.0 : double(mismatched_columns()) / double(mismatches.size());
}

nlohmann::json to_json(const ErrorStats& s) {
  return {{"freq", s.freq},          {"max_mag", s.max_mag},
          {"total_mag", s.total_mag}, {"mismatches", s.mismatches},
          {"checksum_fault", s.checksum_fault}};
}

namespace {

void check_shapes(const QuantTensor& w, const QuantTensor& x) {
  if (w.rank() != 2 || x.rank() != 2 || w.cols() != x.rows())
    throw std::invalid_argument("checksum: shapes " + dims_to_string(w.dims()) + " and " + dims_to_string(x.dims()) +
                                " do not conform");
}

}  // namespace

std::vector<std::int64_t> checksum_row_ws(const QuantTensor& w, const QuantTensor& x) {
  check_shapes(w, x);
  const std::size_t m = w.rows(), n = w.cols(), k = x.cols();
  std::vector<std::int64_t> wsum(n, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < n; ++c) wsum[c] += w.at(i, c);
  std::vector<std::int64_t> row(k, 0);
  for (std::size_t j = 0; j < k; ++j) {
    std::int64_t acc = 0;
    for (std::size_t c = 0; c < n; ++c) acc += wsum[c] * x.at(c, j);
    row[j] = acc;
  }
  return row;
}

std::vector<std::int64_t> checksum_row_os(const QuantTensor& w, const QuantTensor& x) {
  check_shapes(w, x);
  const std::size_t m = w.rows(), n = w.cols(), k = x.cols();
  std::vector<std::int64_t> row(k, 0);
  for (std::size_t c = 0; c < n; ++c) {
    std::int64_t step = 0;
    for (std::size_t i = 0; i < m; ++i) step += w.at(i, c);
    for (std::size_t j = 0; j < k; ++j) row[j] += step * x.at(c, j);
  }
  return row;
}

ErrorStats compare_checksums(const QuantTensor& w, const QuantTensor& x, const AccTensor& y,
                             std::span<const std::int64_t> checksum_row, double out_scale) {
  check_shapes(w, x);
  const std::size_t m = w.rows(), n = w.cols(), k = x.cols();
  if (y.dims() != Dims{m, k})
    throw std::invalid_argument("checksum: output " + dims_to_string(y.dims()) + " does not match " +
                                dims_to_string({m, k}));
  if (checksum_row.size() != k) throw std::invalid_argument("checksum: checksum row length differs from output columns");

  ErrorStats st;
  st.mag_unit = out_scale > 0.0 ? y.scale() / out_scale : 1.0;
  st.mismatches.assign(k, 0);
  std::int64_t col_total = 0;
  for (std::size_t j = 0; j < k; ++j) {
    std::int64_t ysum = 0;
    for (std::size_t i = 0; i < m; ++i) ysum += y.at(i, j);
    st.mismatches[j] = checksum_row[j] - ysum;
    col_total += st.mismatches[j];
  }

  std::vector<std::int64_t> xsum(n, 0);
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t j = 0; j < k; ++j) xsum[c] += x.at(c, j);
  std::int64_t row_total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    std::int64_t r = 0;
    for (std::size_t c = 0; c < n; ++c) r += std::int64_t{w.at(i, c)} * xsum[c];
    for (std::size_t j = 0; j < k; ++j) r -= y.at(i, j);
    row_total += r;
  }
  st.checksum_fault = row_total != col_total;

  std::size_t bad = 0;
  for (auto v : st.mismatches) {
    if (v == 0) continue;
    ++bad;
    const double mag = double(v < 0 ? -v : v) * st.mag_unit;
    st.max_mag = std::max(st.max_mag, mag);
    st.total_mag += mag;
  }
  st.freq = k ? double(bad) / double(k) : 0.0;
  return st;
}

ErrorStats checksum_ws(const QuantTensor& w, const QuantTensor& x, const AccTensor& y, double out_scale) {
  return compare_checksums(w, x, y, checksum_row_ws(w, x), out_scale);
}

ErrorStats checksum_os(const QuantTensor& w, const QuantTensor& x, const AccTensor& y, double out_scale) {
  return compare_checksums(w, x, y, checksum_row_os(w, x), out_scale);
}

void CriticalRegion::validate() const {
  if (knots.empty()) throw std::invalid_argument("critical region: no knots");
  for (std::size_t i = 0; i < knots.size(); ++i) {
    const auto [f, m] = knots[i];
    if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("critical region: knot frequency outside [0, 1]");
    if (!(m >= 0.0)) throw std::invalid_argument("critical region: negative boundary magnitude");
    if (i > 0) {
      if (!(f > knots[i - 1].first)) throw std::invalid_argument("critical region: knot frequencies must increase");
      if (m > knots[i - 1].second) throw std::invalid_argument("critical region: boundary must be non-increasing");
    }
  }
}

double CriticalRegion::boundary(double freq) const {
  if (knots.empty()) return 0.0;
  if (freq <= knots.front().first) return knots.front().second;
  if (freq >= knots.back().first) return knots.back().second;
  auto it = std::upper_bound(knots.begin(), knots.end(), freq, [](double f, const auto& k) { return f < k.first; });
  const auto& [f1, m1] = *it;
  const auto& [f0, m0] = *(it - 1);
  return m0 + (m1 - m0) * (freq - f0) / (f1 - f0);
}

nlohmann::json to_json(const CriticalRegion& r) {
  nlohmann::json knots = nlohmann::json::array();
  for (const auto& [f, m] : r.knots) knots.push_back({{"f", f}, {"m", m}});
  nlohmann::json j = {{"knots", knots}};
  if (std::isfinite(r.threshold))
    j["threshold"] = r.threshold;
  else
    j["threshold"] = "inf";
  return j;
}

CriticalRegion critical_region_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("knots") || !j.at("knots").is_array())
    throw std::invalid_argument("critical region: expected an object with a 'knots' array");
  CriticalRegion r;
  for (const auto& k : j.at("knots")) {
    if (!k.is_object() || !k.contains("f") || !k.contains("m") || !k.at("f").is_number() || !k.at("m").is_number())
      throw std::invalid_argument("critical region: each knot needs numeric 'f' and 'm'");
    r.knots.emplace_back(k.at("f").get<double>(), k.at("m").get<double>());
  }
  if (j.contains("threshold")) {
    const auto& t = j.at("threshold");
    if (t.is_string() && t.get<std::string>() == "inf")
      r.threshold = std::numeric_limits<double>::infinity();
    else if (t.is_number())
      r.threshold = t.get<double>();
    else
      throw std::invalid_argument("critical region: threshold must be a number or \"inf\"");
  }
  r.validate();
  return r;
}

std::string to_string(Decision d) { return d == Decision::keep ? "keep" : "recompute"; }

Decision classify(const ErrorStats& stats, const CriticalRegion& region) {
  if (stats.freq == 0.0) return Decision::keep;
  return stats.max_mag > region.boundary(stats.freq) ? Decision::recompute : Decision::keep;
}

nlohmann::json to_json(const TileAudit& a) {
  return {{"tile_id", a.tile_id},
          {"row0", a.row0},
          {"col0", a.col0},
          {"rows", a.rows},
          {"cols", a.cols},
          {"stats", to_json(a.stats)},
          {"decision", to_string(a.decision)},
          {"recompute_count", a.recompute_count}};
}

std::string audit_to_jsonl(std::span<const TileAudit> audit) {
  std::string out;
  for (const auto& a : audit) out += to_json(a).dump() + "\n";
  return out;
}

Decision ProtectedResult::decision() const {
  return tiles_recomputed() ? Decision::recompute : Decision::keep;
}

std::size_t ProtectedResult::tiles_recomputed() const {
  return static_cast<std::size_t>(
      std::count_if(audit.begin(), audit.end(), [](const TileAudit& a) { return a.recompute_count > 0; }));
}

double ProtectedResult::recompute_rate() const {
  return audit.empty() ? 0.0 : double(tiles_recomputed()) / double(audit.size());
}

namespace {

QuantTensor slice_rows(const QuantTensor& t, std::size_t r0, std::size_t rows) {
  auto d = t.data().subspan(r0 * t.cols(), rows * t.cols());
  return QuantTensor({rows, t.cols()}, std::vector<std::int8_t>(d.begin(), d.end()), t.scale());
}

QuantTensor slice_cols(const QuantTensor& t, std::size_t c0, std::size_t cols) {
  std::vector<std::int8_t> v(t.rows() * cols);
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] = t.at(r, c0 + c);
  return QuantTensor({t.rows(), cols}, std::move(v), t.scale());
}

// The reduction streams through the array `depth` steps at a time.
AccTensor tile_gemm(const QuantTensor& w, const QuantTensor& x, std::size_t depth) {
  const std::size_t m = w.rows(), n = w.cols(), k = x.cols();
  AccTensor y = AccTensor::zeros({m, k}, w.scale() * x.scale());
  for (std::size_t c0 = 0; c0 < n; c0 += depth) {
    const std::size_t c1 = std::min(n, c0 + depth);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t c = c0; c < c1; ++c) {
        const std::int32_t wv = w.at(i, c);
        for (std::size_t j = 0; j < k; ++j) y.at(i, j) += wv * x.at(c, j);
      }
  }
  return y;
}

ErrorStats plan_checksum(const ChecksumPlan& plan, const QuantTensor& w, const QuantTensor& x, const AccTensor& y,
                         double out_scale) {
  return plan.dataflow == Dataflow::weight_stationary ? checksum_ws(w, x, y, out_scale)
                                                      : checksum_os(w, x, y, out_scale);
}

}  // namespace

ProtectedResult protected_gemm(const QuantTensor& w, const QuantTensor& x, const ChecksumPlan& plan,
                               const CriticalRegion& region, const FaultModel& faults, const ProtectOptions& opts) {
  plan.validate();
  region.validate();
  check_shapes(w, x);
  if (opts.max_rounds < 0) throw std::invalid_argument("protected_gemm: max_rounds must be >= 0");
  const std::size_t m = w.rows(), k = x.cols();
  const double wide_scale = w.scale() * x.scale();
  const double out_scale = opts.out_scale > 0.0 ? opts.out_scale : wide_scale;

  const std::size_t tr = (m + plan.rows - 1) / plan.rows, tc = (k + plan.cols - 1) / plan.cols;
  ProtectedResult res;
  res.wide = AccTensor::zeros({m, k}, wide_scale);
  res.audit.resize(tr * tc);
  std::vector<std::exception_ptr> errors(tr * tc);

#pragma omp parallel for schedule(dynamic) if (opts.parallel)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(tr * tc); ++t) {
    const auto id = static_cast<std::size_t>(t);
    auto& a = res.audit[id];
    a.tile_id = id;
    a.row0 = (id / tc) * plan.rows;
    a.col0 = (id % tc) * plan.cols;
    a.rows = std::min(plan.rows, m - a.row0);
    a.cols = std::min(plan.cols, k - a.col0);
    try {
      const auto wt = slice_rows(w, a.row0, a.rows);
      const auto xt = slice_cols(x, a.col0, a.cols);
      auto run = [&](int round) {
        auto y = tile_gemm(wt, xt, plan.depth);
        if (!faults.empty() && (round == 0 || faults.persistent)) faults.apply(y, id, round);
        return y;
      };
      auto y = run(0);
      a.stats = plan_checksum(plan, wt, xt, y, out_scale);
      a.decision = classify(a.stats, region);
      auto current = a.decision;
      ErrorStats last = a.stats;
      while (current == Decision::recompute) {
        if (a.recompute_count >= opts.max_rounds) throw UnrecoverableFault(id, last);
        ++a.recompute_count;
        y = run(a.recompute_count);
        last = plan_checksum(plan, wt, xt, y, out_scale);
        current = classify(last, region);
      }
      for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) res.wide.at(a.row0 + i, a.col0 + j) = y.at(i, j);
    } catch (...) {
      errors[id] = std::current_exception();
    }
  }

  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (const auto& a : res.audit) {
    res.stats.merge(a.stats);
    res.recompute_count += static_cast<std::size_t>(a.recompute_count);
  }
  res.output = requantize(res.wide, out_scale);
  return res;
}

CriticalRegion calibrate_region(std::span<const double> freqs, std::span<const double> mags,
                                const std::function<double(double, double)>& degradation, double threshold) {
  if (freqs.size() < 3 || mags.size() < 3)
    throw std::invalid_argument("calibrate_region: need at least 3 grid points per axis");
  if (!std::is_sorted(freqs.begin(), freqs.end()) || !std::is_sorted(mags.begin(), mags.end()))
    throw std::invalid_argument("calibrate_region: grid axes must be ascending");
  if (std::isnan(threshold) || threshold < 0.0) throw std::invalid_argument("calibrate_region: threshold must be >= 0");

  CriticalRegion region;
  region.threshold = threshold;
  std::vector<double> d(mags.size());
  for (const double f : freqs) {
    for (std::size_t i = 0; i < mags.size(); ++i) d[i] = degradation(f, mags[i]);
    double mstar = mags.back();
    for (std::size_t i = 0; i < mags.size(); ++i) {
      if (d[i] <= threshold) continue;
      if (i == 0) {
        mstar = 0.0;
      } else {
        const double t = (threshold - d[i - 1]) / (d[i] - d[i - 1]);
        mstar = mags[i - 1] + t * (mags[i] - mags[i - 1]);
      }
      break;
    }
    if (!region.knots.empty()) {
      mstar = std::min(mstar, region.knots.back().second);
      if (f == region.knots.back().first) {
        region.knots.back().second = mstar;
        continue;
      }
    }
    region.knots.emplace_back(f, mstar);
  }
  region.validate();
  return region;
}

namespace {

void hit_columns(AccTensor& y, SeededStream& rng, double freq, std::int64_t mag_wide) {
  const std::size_t rows = y.rows(), cols = y.cols();
  const auto hit = std::min(cols, static_cast<std::size_t>(std::llround(freq * double(cols))));
  std::vector<std::size_t> idx(cols);
  for (std::size_t j = 0; j < cols; ++j) idx[j] = j;
  for (std::size_t j = 0; j < hit; ++j) {
    std::swap(idx[j], idx[j + rng.below(cols - j)]);
    const std::size_t r = rng.below(rows);
    const std::int64_t v = std::int64_t{y.at(r, idx[j])} + (rng.bernoulli(0.5) ? mag_wide : -mag_wide);
    y.at(r, idx[j]) = static_cast<std::int32_t>(std::clamp<std::int64_t>(
        v, std::numeric_limits<std::int32_t>::min(), std::numeric_limits<std::int32_t>::max()));
  }
}

}  // namespace

FaultModel column_fault_model(double freq, std::int64_t mag_wide, std::uint64_t seed) {
  if (!(freq >= 0.0 && freq <= 1.0)) throw std::invalid_argument("column_fault_model: freq outside [0, 1]");
  FaultModel fm;
  fm.apply = [freq, mag_wide, seed](AccTensor& y, std::size_t tile_id, int round) {
    SeededStream rng(mix_seed(seed, tile_id * 131 + static_cast<std::uint64_t>(round)));
    hit_columns(y, rng, freq, mag_wide);
  };
  return fm;
}

void FaultSoup::validate() const {
  if (!(supra_share >= 0.0 && supra_share <= 1.0)) throw std::invalid_argument("fault soup: supra_share outside [0, 1]");
  if (!(sub_scale >= 0.0 && sub_scale <= 1.0)) throw std::invalid_argument("fault soup: sub_scale outside [0, 1]");
  if (!(supra_scale > 1.0)) throw std::invalid_argument("fault soup: supra_scale must exceed 1");
  if (freqs.empty()) throw std::invalid_argument("fault soup: no frequencies");
  for (double f : freqs)
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("fault soup: frequencies must lie in (0, 1]");
}

FaultModel fault_soup_model(const FaultSoup& soup, const CriticalRegion& region, double unit) {
  soup.validate();
  region.validate();
  if (!(unit > 0.0)) throw std::invalid_argument("fault soup: unit must be positive");
  FaultModel fm;
  fm.apply = [soup, region, unit](AccTensor& y, std::size_t tile_id, int round) {
    SeededStream rng(mix_seed(soup.seed, tile_id * 131 + static_cast<std::uint64_t>(round)));
    const double f = soup.freqs[rng.below(soup.freqs.size())];
    const bool supra = rng.bernoulli(soup.supra_share);
    const double mstar = region.boundary(f);
    const double mag = supra ? std::max(soup.supra_scale * mstar, mstar + 1.0) : soup.sub_scale * mstar;
    // Round toward the intended side of the boundary.
    const double wide = mag * unit;
    const auto mag_wide = static_cast<std::int64_t>(supra ? std::ceil(wide) : std::floor(wide));
    if (mag_wide > 0) hit_columns(y, rng, f, mag_wide);
  };
  return fm;
}

double column_error_gemm_degradation(const QuantTensor& w, const QuantTensor& x, const ChecksumPlan& plan,
                                     double out_scale, double freq, double mag, std::uint64_t seed) {
  const double wide_scale = w.scale() * x.scale();
  if (!(out_scale > 0.0)) out_scale = wide_scale;
  CriticalRegion keep_all{{{0.0, std::numeric_limits<double>::infinity()}}, 0.0};
  const auto faults = column_fault_model(freq, std::llround(mag * out_scale / wide_scale), seed);
  const auto faulty = protected_gemm(w, x, plan, keep_all, faults, {out_scale, 0, true});
  const auto clean = protected_gemm(w, x, plan, keep_all, {}, {out_scale, 0, true});
  return relative_l2(clean.output, faulty.output);
}

double relative_l2(const QuantTensor& ref, const QuantTensor& got) {
  if (ref.dims() != got.dims()) throw std::invalid_argument("relative_l2: shapes differ");
  double num = 0.0, den = 0.0;
  auto a = ref.data(), b = got.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    num += d * d;
    den += double(a[i]) * double(a[i]);
  }
  if (num == 0.0) return 0.0;
  return den == 0.0 ? std::numeric_limits<double>::infinity() : std::sqrt(num / den);
}

}  // namespace relsim
