#pragma once

// Statistical algorithm-based fault tolerance for integer GEMM.
//
// The output checksum e^T Y is compared with the checksum row (e^T W) X
// computed by separate hardware. Column mismatches feed a statistics unit
// (error frequency and magnitude), and a tile is recomputed only when its
// statistics fall inside the critical region.

#include <functional>
#include <json.hpp>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "relsim/core.hpp"

namespace relsim {

enum class Dataflow { weight_stationary, output_stationary };
std::string to_string(Dataflow d);
Dataflow dataflow_from_string(const std::string& s);

struct ChecksumPlan {
  Dataflow dataflow = Dataflow::weight_stationary;
  std::size_t rows = 16;   // output rows per tile
  std::size_t cols = 16;   // output columns per tile
  std::size_t depth = 16;  // reduction chunk streamed per pass

  void validate() const;
};

struct ErrorStats {
  double freq = 0.0;       // fraction of columns with a nonzero mismatch
  double max_mag = 0.0;    // largest |mismatch| in output quanta
  double total_mag = 0.0;  // sum of |mismatch| in output quanta
  std::vector<std::int64_t> mismatches;
  double mag_unit = 1.0;        // output quanta per wide quantum
  bool checksum_fault = false;  // column and row residuals disagree

  std::size_t mismatched_columns() const;
  /// Associative: mismatch lists concatenate, freq is recounted.
  void merge(const ErrorStats& other);
};

nlohmann::json to_json(const ErrorStats& s);

/// Weight-stationary checksum row: the weight checksum e^T W is formed once
/// and stored, then multiplied with every input column.
std::vector<std::int64_t> checksum_row_ws(const QuantTensor& w, const QuantTensor& x);

/// Output-stationary checksum row: the weight checksum of each reduction step
/// is summed on the fly as W streams in and accumulated by an extra PE row.
std::vector<std::int64_t> checksum_row_os(const QuantTensor& w, const QuantTensor& x);

/// mismatch_j = checksum_row[j] - sum_i y(i, j). Magnitudes are scaled to
/// output quanta: y.scale() / out_scale per wide quantum (out_scale <= 0
/// keeps wide quanta). A row residual W (X e) - Y e cross-checks the total;
/// disagreement marks a fault in the checksum hardware itself.
ErrorStats compare_checksums(const QuantTensor& w, const QuantTensor& x, const AccTensor& y,
                             std::span<const std::int64_t> checksum_row, double out_scale = 0.0);

ErrorStats checksum_ws(const QuantTensor& w, const QuantTensor& x, const AccTensor& y, double out_scale = 0.0);
ErrorStats checksum_os(const QuantTensor& w, const QuantTensor& x, const AccTensor& y, double out_scale = 0.0);

/// Piecewise-linear, non-increasing boundary m*(f). Knots are sorted by
/// strictly increasing f in [0, 1]; outside the knot range the end values
/// hold.
struct CriticalRegion {
  std::vector<std::pair<double, double>> knots;
  double threshold = 0.0;

  void validate() const;
  double boundary(double freq) const;
};

nlohmann::json to_json(const CriticalRegion& r);
CriticalRegion critical_region_from_json(const nlohmann::json& j);

enum class Decision { keep, recompute };
std::string to_string(Decision d);

/// recompute iff freq > 0 and max_mag > m*(freq). On-boundary stats are kept.
Decision classify(const ErrorStats& stats, const CriticalRegion& region);

/// Corrupts one tile's wide output in place. round 0 is the first execution;
/// later rounds are recomputations. Called concurrently for distinct tiles.
struct FaultModel {
  std::function<void(AccTensor& tile, std::size_t tile_id, int round)> apply;
  bool persistent = false;  // transient faults hit round 0 only

  bool empty() const { return !apply; }
};

struct ProtectOptions {
  double out_scale = 0.0;  // <= 0: use the wide scale
  int max_rounds = 3;
  bool parallel = true;
};

struct TileAudit {
  std::size_t tile_id = 0;
  std::size_t row0 = 0, col0 = 0, rows = 0, cols = 0;
  ErrorStats stats;  // first execution
  Decision decision = Decision::keep;
  int recompute_count = 0;
};

nlohmann::json to_json(const TileAudit& a);
std::string audit_to_jsonl(std::span<const TileAudit> audit);

class UnrecoverableFault : public std::runtime_error {
 public:
  UnrecoverableFault(std::size_t tile_id, ErrorStats stats)
      : std::runtime_error("tile " + std::to_string(tile_id) + " still inside the critical region after recomputation"),
        tile_id_(tile_id),
        stats_(std::move(stats)) {}
  std::size_t tile_id() const { return tile_id_; }
  const ErrorStats& stats() const { return stats_; }

 private:
  std::size_t tile_id_;
  ErrorStats stats_;
};

struct ProtectedResult {
  AccTensor wide;
  QuantTensor output;
  ErrorStats stats;  // merged first-execution stats
  std::vector<TileAudit> audit;
  std::size_t recompute_count = 0;  // total rounds over all tiles

  Decision decision() const;
  std::size_t tiles_recomputed() const;
  double recompute_rate() const;
};

/// Tiled GEMM under a fault model, checked per tile with the plan's checksum
/// and recomputed while the tile stays inside the region (at most
/// max_rounds times). Throws UnrecoverableFault when the budget runs out.
ProtectedResult protected_gemm(const QuantTensor& w, const QuantTensor& x, const ChecksumPlan& plan,
                               const CriticalRegion& region, const FaultModel& faults, const ProtectOptions& opts);

/// Region from a (freq, mag) degradation grid, mags ascending. For each freq,
/// m* is where degradation first crosses the threshold, linearly interpolated
/// between the bracketing grid magnitudes; 0 when even the smallest magnitude
/// is too much, the largest magnitude when none is. A running minimum over
/// ascending freq then makes the curve non-increasing. Needs >= 3 points per
/// axis.
CriticalRegion calibrate_region(std::span<const double> freqs, std::span<const double> mags,
                                const std::function<double(double freq, double mag)>& degradation,
                                double threshold);

/// Transient fault model for calibration: in every tile, round(freq * cols)
/// columns each get one error of +-mag_wide wide quanta at a random row.
FaultModel column_fault_model(double freq, std::int64_t mag_wide, std::uint64_t seed);

/// Mixed faults placed relative to a region: each tile picks a frequency f
/// from `freqs` and hits round(f * cols) columns once each. With probability
/// supra_share the magnitude is max(supra_scale * m*(f), m*(f) + 1) output
/// quanta, otherwise sub_scale * m*(f). unit converts output quanta to wide
/// quanta. Transient.
struct FaultSoup {
  double supra_share = 0.1;
  double sub_scale = 0.5;
  double supra_scale = 2.0;
  std::vector<double> freqs{0.0625, 0.25, 0.5, 1.0};
  std::uint64_t seed = 0;

  void validate() const;
};

FaultModel fault_soup_model(const FaultSoup& soup, const CriticalRegion& region, double unit);

/// Degradation of a GEMM's requantized output when every tile gets
/// column_fault_model(freq, mag) and nothing is recomputed.
double column_error_gemm_degradation(const QuantTensor& w, const QuantTensor& x, const ChecksumPlan& plan,
                                     double out_scale, double freq, double mag, std::uint64_t seed);

/// Relative L2 distance between two i8 outputs (0 when both are zero).
double relative_l2(const QuantTensor& ref, const QuantTensor& got);

}  // namespace relsim
