#pragma once

// Reliability-enhancing dataflow reordering.
//
// Partial-sum sign flips are the dominant critical input pattern of the MAC,
// so the reduction order is chosen to keep each partial sum on one side of
// zero for as long as possible: input channels with mostly non-negative
// weights go first. When many output channels share one order, output
// channels are first grouped by sign pattern (balanced clustering under the
// Manhattan metric) and each group gets its own order.

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <span>
#include <vector>

#include "relsim/core.hpp"
#include "relsim/macsim.hpp"

namespace relsim {

using Permutation = std::vector<std::size_t>;

struct ReorderPlan {
  Permutation input_perm;
  std::vector<std::vector<std::size_t>> clusters;  // output-channel index sets
  std::vector<Permutation> per_cluster_perms;

  /// Checks bijections and a balanced partition of [0, c_out).
  void validate(std::size_t c_out, std::size_t c_in) const;

  /// Reduction order of every output row: its cluster's permutation, or
  /// input_perm when the plan has no clusters.
  std::vector<Permutation> row_orders(std::size_t c_out) const;

  static ReorderPlan identity(std::size_t c_in);
};

nlohmann::json to_json(const ReorderPlan& p);
ReorderPlan reorder_plan_from_json(const nlohmann::json& j);

/// Columns sorted by descending fraction of non-negative weights, ties by index.
Permutation reorder_by_positive_fraction(const QuantTensor& w);

/// Manhattan distance of two +-1 vectors (twice the Hamming distance).
std::uint64_t sign_difference(std::span<const std::int8_t> x, std::span<const std::int8_t> y);

struct ClusterOptions {
  int max_iters = 50;
  std::uint64_t seed = 0;
  int restarts = 8;
};

struct Clustering {
  std::vector<std::vector<std::size_t>> clusters;
  std::uint64_t objective = 0;
  /// Objective after every accepted iteration of the winning restart.
  std::vector<std::uint64_t> history;
};

/// Sum over clusters of each member's Manhattan distance to the cluster's
/// elementwise-majority sign centroid (ties to +1).
std::uint64_t clustering_objective(const SignMatrix& s, std::span<const std::vector<std::size_t>> clusters);

/// Balanced k-means on sign rows: majority centroids, greedy capacity-bounded
/// assignment in largest-margin-first order, then pairwise swap refinement.
/// Cluster sizes differ by at most one.
Clustering cluster_output_channels(const SignMatrix& s, std::size_t k, const ClusterOptions& opts = {});

ReorderPlan cluster_then_reorder(const QuantTensor& w, std::size_t k, const ClusterOptions& opts = {});

/// Plan whose every cluster uses the layer-wide direct order.
ReorderPlan direct_reorder_plan(const QuantTensor& w);

/// Direct reordering with one output channel per group: every row gets its
/// own non-negative-first order.
ReorderPlan rowwise_direct_plan(const QuantTensor& w);

/// baseline.ter / optimized.ter, with "no errors" kept distinct from a number.
struct Reduction {
  double value = 1.0;
  bool no_errors = false;  // optimized run had zero events while baseline did not

  std::string to_string() const;
};

Reduction reduction_ratio(double baseline, double optimized);

struct TerComparison {
  TerReport baseline;
  TerReport optimized;
  Reduction ter_reduction;
  Reduction flip_reduction;
};

TerComparison evaluate_ter_reduction(const QuantTensor& w, const QuantTensor& x, const ReorderPlan& plan,
                                     const TimingEnv& env);

}  // namespace relsim
