#include "relsim/readopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "relsim/json_util.hpp"

namespace relsim {

void ReorderPlan::validate(std::size_t c_out, std::size_t c_in) const {
  if (!is_permutation_of_range(input_perm, c_in)) throw std::invalid_argument("plan: input_perm is not a permutation");
  if (clusters.empty()) return;
  if (clusters.size() != per_cluster_perms.size())
    throw std::invalid_argument("plan: one permutation per cluster required");
  std::vector<bool> seen(c_out, false);
  std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (!is_permutation_of_range(per_cluster_perms[c], c_in))
      throw std::invalid_argument("plan: cluster permutation is not a permutation");
    lo = std::min(lo, clusters[c].size());
    hi = std::max(hi, clusters[c].size());
    for (auto r : clusters[c]) {
      if (r >= c_out || seen[r]) throw std::invalid_argument("plan: clusters do not partition the output channels");
      seen[r] = true;
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw std::invalid_argument("plan: clusters do not cover every output channel");
  if (hi - lo > 1) throw std::invalid_argument("plan: clusters are not balanced");
}

std::vector<Permutation> ReorderPlan::row_orders(std::size_t c_out) const {
  std::vector<Permutation> rows(c_out, input_perm);
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (auto r : clusters[c]) rows.at(r) = per_cluster_perms[c];
  return rows;
}

ReorderPlan ReorderPlan::identity(std::size_t c_in) { return ReorderPlan{identity_order(c_in), {}, {}}; }

nlohmann::json to_json(const ReorderPlan& p) {
  return {{"input_perm", p.input_perm}, {"clusters", p.clusters}, {"per_cluster_perms", p.per_cluster_perms}};
}

ReorderPlan reorder_plan_from_json(const nlohmann::json& j) {
  ObjectReader r(j, "plan");
  ReorderPlan p;
  p.input_perm = r.get<Permutation>("input_perm");
  p.clusters = r.get_or<std::vector<std::vector<std::size_t>>>("clusters", {});
  p.per_cluster_perms = r.get_or<std::vector<Permutation>>("per_cluster_perms", {});
  r.finish();
  return p;
}

Permutation reorder_by_positive_fraction(const QuantTensor& w) {
  const std::size_t rows = w.rows(), cols = w.cols();
  // Compare counts rather than fractions: every column has the same height.
  std::vector<std::size_t> nonneg(cols, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) nonneg[c] += w.at(r, c) >= 0;
  Permutation perm = identity_order(cols);
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return nonneg[a] > nonneg[b]; });
  return perm;
}

std::uint64_t sign_difference(std::span<const std::int8_t> x, std::span<const std::int8_t> y) {
  if (x.size() != y.size()) throw std::invalid_argument("sign_difference: length mismatch");
  std::uint64_t sd = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sd += static_cast<std::uint64_t>(std::abs(x[i] - y[i]));
  return sd;
}

namespace {

// Per-cluster column counts of +1 entries; the cluster cost is
// 2 * sum_c min(plus_c, size - plus_c).
struct ClusterCounts {
  std::size_t cols;
  std::vector<std::vector<int>> plus;
  std::vector<int> size;

  ClusterCounts(const SignMatrix& s, std::span<const std::vector<std::size_t>> clusters)
      : cols(s.cols), plus(clusters.size(), std::vector<int>(s.cols, 0)), size(clusters.size(), 0) {
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      size[c] = static_cast<int>(clusters[c].size());
      for (auto r : clusters[c]) {
        auto row = s.row(r);
        for (std::size_t j = 0; j < cols; ++j) plus[c][j] += row[j] > 0;
      }
    }
  }

  std::uint64_t cost(std::size_t c) const {
    std::uint64_t t = 0;
    for (std::size_t j = 0; j < cols; ++j) t += 2 * std::min(plus[c][j], size[c] - plus[c][j]);
    return t;
  }
};

std::vector<std::int8_t> majority_centroid(const SignMatrix& s, std::span<const std::size_t> members) {
  std::vector<int> plus(s.cols, 0);
  for (auto r : members) {
    auto row = s.row(r);
    for (std::size_t j = 0; j < s.cols; ++j) plus[j] += row[j] > 0;
  }
  std::vector<std::int8_t> c(s.cols);
  const int n = static_cast<int>(members.size());
  for (std::size_t j = 0; j < s.cols; ++j) c[j] = 2 * plus[j] >= n ? 1 : -1;
  return c;
}

std::vector<std::size_t> capacities(std::size_t n, std::size_t k) {
  std::vector<std::size_t> cap(k, n / k);
  for (std::size_t c = 0; c < n % k; ++c) ++cap[c];
  return cap;
}

std::vector<std::vector<std::size_t>> balanced_assign(const SignMatrix& s,
                                                      const std::vector<std::vector<std::int8_t>>& centroids) {
  const std::size_t n = s.rows, k = centroids.size();
  std::vector<std::vector<std::uint64_t>> dist(n, std::vector<std::uint64_t>(k));
  std::vector<std::uint64_t> margin(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) dist[r][c] = sign_difference(s.row(r), centroids[c]);
    if (k > 1) {
      auto sorted = dist[r];
      std::partial_sort(sorted.begin(), sorted.begin() + 2, sorted.end());
      margin[r] = sorted[1] - sorted[0];
    }
  }
  std::vector<std::size_t> order = identity_order(n);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return margin[a] > margin[b]; });

  auto cap = capacities(n, k);
  std::vector<std::vector<std::size_t>> clusters(k);
  for (auto r : order) {
    std::size_t best = k;
    for (std::size_t c = 0; c < k; ++c)
      if (clusters[c].size() < cap[c] && (best == k || dist[r][c] < dist[r][best])) best = c;
    clusters[best].push_back(r);
  }
  for (auto& c : clusters) std::sort(c.begin(), c.end());
  return clusters;
}

// Pairwise swaps between clusters until no swap lowers the objective.
// Sizes are preserved, so balance is kept.
void swap_refine(const SignMatrix& s, std::vector<std::vector<std::size_t>>& clusters, std::uint64_t& objective,
                 std::vector<std::uint64_t>& history) {
  ClusterCounts counts(s, clusters);
  const std::size_t k = clusters.size();
  bool improved = true;
  int passes = 0;
  while (improved && passes++ < 200) {
    improved = false;
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t q = p + 1; q < k; ++q) {
        for (std::size_t ia = 0; ia < clusters[p].size(); ++ia) {
          for (std::size_t ib = 0; ib < clusters[q].size(); ++ib) {
            auto ra = s.row(clusters[p][ia]);
            auto rb = s.row(clusters[q][ib]);
            long delta = 0;
            for (std::size_t j = 0; j < s.cols; ++j) {
              if (ra[j] == rb[j]) continue;
              // a leaves p and b joins p; the reverse for q.
              const int dp = (rb[j] > 0) - (ra[j] > 0);
              const int pp = counts.plus[p][j], pq = counts.plus[q][j];
              const int sp = counts.size[p], sq = counts.size[q];
              delta += 2L * (std::min(pp + dp, sp - pp - dp) - std::min(pp, sp - pp));
              delta += 2L * (std::min(pq - dp, sq - pq + dp) - std::min(pq, sq - pq));
            }
            if (delta < 0) {
              for (std::size_t j = 0; j < s.cols; ++j) {
                const int dp = (rb[j] > 0) - (ra[j] > 0);
                counts.plus[p][j] += dp;
                counts.plus[q][j] -= dp;
              }
              std::swap(clusters[p][ia], clusters[q][ib]);
              objective = static_cast<std::uint64_t>(static_cast<long>(objective) + delta);
              history.push_back(objective);
              improved = true;
            }
          }
        }
      }
    }
  }
  for (auto& c : clusters) std::sort(c.begin(), c.end());
}

std::vector<std::size_t> initial_seeds(const SignMatrix& s, std::size_t k, int restart, std::uint64_t seed) {
  std::vector<std::size_t> seeds;
  if (restart == 0) {
    // Farthest-point seeding from row 0.
    seeds.push_back(0);
    std::vector<std::uint64_t> nearest(s.rows, std::numeric_limits<std::uint64_t>::max());
    while (seeds.size() < k) {
      const auto last = seeds.back();
      std::size_t pick = 0;
      std::uint64_t far = 0;
      bool found = false;
      for (std::size_t r = 0; r < s.rows; ++r) {
        nearest[r] = std::min(nearest[r], sign_difference(s.row(r), s.row(last)));
        if (std::find(seeds.begin(), seeds.end(), r) != seeds.end()) continue;
        if (!found || nearest[r] > far) {
          far = nearest[r];
          pick = r;
          found = true;
        }
      }
      seeds.push_back(pick);
    }
    return seeds;
  }
  SeededStream rng = SeededStream(seed).fork(static_cast<std::uint64_t>(restart));
  std::vector<std::size_t> pool = identity_order(s.rows);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
    seeds.push_back(pool[i]);
  }
  return seeds;
}

}  // namespace

std::uint64_t clustering_objective(const SignMatrix& s, std::span<const std::vector<std::size_t>> clusters) {
  std::uint64_t total = 0;
  for (const auto& c : clusters) {
    if (c.empty()) continue;
    const auto centroid = majority_centroid(s, c);
    for (auto r : c) total += sign_difference(s.row(r), centroid);
  }
  return total;
}

Clustering cluster_output_channels(const SignMatrix& s, std::size_t k, const ClusterOptions& opts) {
  if (k < 1) throw std::invalid_argument("cluster_output_channels: k must be at least 1");
  if (k > s.rows)
    throw std::invalid_argument("cluster_output_channels: k = " + std::to_string(k) + " exceeds " +
                                std::to_string(s.rows) + " rows");
  if (k == 1) {
    std::vector<std::vector<std::size_t>> all{identity_order(s.rows)};
    const auto obj = clustering_objective(s, all);
    return Clustering{all, obj, {obj}};
  }

  std::optional<Clustering> best;
  const int restarts = std::max(1, opts.restarts);
  for (int rs = 0; rs < restarts; ++rs) {
    std::vector<std::vector<std::int8_t>> centroids;
    for (auto r : initial_seeds(s, k, rs, opts.seed)) {
      auto row = s.row(r);
      centroids.emplace_back(row.begin(), row.end());
    }
    Clustering cur;
    bool first = true;
    for (int it = 0; it < opts.max_iters; ++it) {
      auto next = balanced_assign(s, centroids);
      const auto obj = clustering_objective(s, next);
      if (!first && obj >= cur.objective) break;
      first = false;
      cur.clusters = std::move(next);
      cur.objective = obj;
      cur.history.push_back(obj);
      for (std::size_t c = 0; c < k; ++c) centroids[c] = majority_centroid(s, cur.clusters[c]);
    }
    swap_refine(s, cur.clusters, cur.objective, cur.history);
    if (!best || cur.objective < best->objective) best = std::move(cur);
  }
  return *best;
}

ReorderPlan cluster_then_reorder(const QuantTensor& w, std::size_t k, const ClusterOptions& opts) {
  const auto signs = sign_matrix(w);
  auto clustering = cluster_output_channels(signs, k, opts);
  ReorderPlan plan;
  plan.input_perm = reorder_by_positive_fraction(w);
  const std::size_t cols = w.cols();
  for (auto& members : clustering.clusters) {
    std::vector<std::int8_t> sub(members.size() * cols);
    for (std::size_t i = 0; i < members.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) sub[i * cols + c] = w.at(members[i], c);
    plan.per_cluster_perms.push_back(reorder_by_positive_fraction(QuantTensor({members.size(), cols}, sub, w.scale())));
    plan.clusters.push_back(std::move(members));
  }
  plan.validate(w.rows(), cols);
  return plan;
}

ReorderPlan direct_reorder_plan(const QuantTensor& w) { return ReorderPlan{reorder_by_positive_fraction(w), {}, {}}; }

ReorderPlan rowwise_direct_plan(const QuantTensor& w) {
  ReorderPlan plan;
  plan.input_perm = reorder_by_positive_fraction(w);
  const std::size_t cols = w.cols();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    auto d = w.data().subspan(r * cols, cols);
    plan.clusters.push_back({r});
    plan.per_cluster_perms.push_back(
        reorder_by_positive_fraction(QuantTensor({1, cols}, std::vector<std::int8_t>(d.begin(), d.end()), w.scale())));
  }
  return plan;
}

std::string Reduction::to_string() const {
  if (no_errors) return "inf";
  std::ostringstream os;
  os.precision(6);
  os << value;
  return os.str();
}

Reduction reduction_ratio(double baseline, double optimized) {
  if (optimized == 0.0) {
    if (baseline == 0.0) return Reduction{1.0, false};
    return Reduction{std::numeric_limits<double>::infinity(), true};
  }
  return Reduction{baseline / optimized, false};
}

TerComparison evaluate_ter_reduction(const QuantTensor& w, const QuantTensor& x, const ReorderPlan& plan,
                                     const TimingEnv& env) {
  plan.validate(w.rows(), w.cols());
  TerComparison cmp;
  cmp.baseline = run_tile(w, x, env, identity_order(w.cols())).report;
  const auto orders = plan.row_orders(w.rows());
  cmp.optimized = run_tile_rows(w, x, env, orders).report;
  cmp.ter_reduction = reduction_ratio(cmp.baseline.ter(), cmp.optimized.ter());
  cmp.flip_reduction = reduction_ratio(cmp.baseline.flip_rate(), cmp.optimized.flip_rate());
  return cmp;
}

}  // namespace relsim
