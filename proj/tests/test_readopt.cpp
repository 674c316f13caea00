#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "relsim/gemm.hpp"
#include "relsim/json_util.hpp"
#include "relsim/readopt.hpp"
#include "relsim/workloads.hpp"

using namespace relsim;

namespace {

SignMatrix random_signs(SeededStream& rng, std::size_t rows, std::size_t cols) {
  SignMatrix s{rows, cols, std::vector<std::int8_t>(rows * cols)};
  for (auto& v : s.signs) v = rng.below(2) ? 1 : -1;
  return s;
}

// Independent objective: majority centroid per cluster (ties to +1), summed L1 distance.
std::uint64_t oracle_objective(const SignMatrix& s, const std::vector<std::vector<std::size_t>>& clusters) {
  std::uint64_t total = 0;
  for (const auto& cl : clusters) {
    for (std::size_t c = 0; c < s.cols; ++c) {
      int sum = 0;
      for (auto r : cl) sum += s.at(r, c);
      const int centroid = sum >= 0 ? 1 : -1;
      for (auto r : cl) total += std::uint64_t(std::abs(s.at(r, c) - centroid));
    }
  }
  return total;
}

// Every balanced split of 8 rows into two groups of 4 (70 ordered subsets).
std::uint64_t brute_force_k2(const SignMatrix& s, std::size_t* partitions = nullptr) {
  std::uint64_t best = ~std::uint64_t{0};
  std::size_t count = 0;
  for (unsigned mask = 0; mask < 256; ++mask) {
    if (__builtin_popcount(mask) != 4) continue;
    ++count;
    std::vector<std::vector<std::size_t>> cl(2);
    for (std::size_t r = 0; r < 8; ++r) cl[(mask >> r) & 1].push_back(r);
    best = std::min(best, oracle_objective(s, cl));
  }
  if (partitions) *partitions = count;
  return best;
}

std::uint32_t flips_of(std::span<const std::int8_t> w, std::span<const std::int8_t> x, std::span<const std::size_t> order) {
  long long acc = 0;
  std::uint32_t flips = 0;
  for (auto c : order) {
    const long long next = acc + w[c] * x[c];
    flips += (acc < 0) != (next < 0);
    acc = next;
  }
  return flips;
}

TimingEnv quiet_env() {
  TimingEnv env;
  env.timing_errors = false;
  return env;
}

}  // namespace

TEST_CASE("reorder by non-negative fraction") {
  SeededStream rng(1);
  auto pos = testutil::random_tensor(rng, 5, 6, 0, 127);
  CHECK(reorder_by_positive_fraction(pos) == identity_order(6));

  std::vector<std::int8_t> v(30);
  for (std::size_t r = 0; r < 10; ++r) {
    v[r * 3 + 0] = r < 2 ? 5 : -5;
    v[r * 3 + 1] = 1;
    v[r * 3 + 2] = r < 5 ? 0 : -1;
  }
  CHECK(reorder_by_positive_fraction(QuantTensor({10, 3}, v, 1.0)) == Permutation{1, 2, 0});
}

TEST_CASE("sign difference") {
  std::vector<std::int8_t> a{1, -1, 1}, b{1, 1, -1};
  CHECK(sign_difference(a, a) == 0);
  CHECK(sign_difference(a, b) == 4);
  CHECK_THROWS_AS(sign_difference(a, std::vector<std::int8_t>{1}), std::invalid_argument);
  SeededStream rng(3);
  for (int t = 0; t < 1000; ++t) {
    auto s = random_signs(rng, 2, 17);
    std::size_t diff = 0;
    for (std::size_t c = 0; c < 17; ++c) diff += s.at(0, c) != s.at(1, c);
    REQUIRE(sign_difference(s.row(0), s.row(1)) == sign_difference(s.row(1), s.row(0)));
    REQUIRE(sign_difference(s.row(0), s.row(1)) == 2 * diff);
  }
}

TEST_CASE("clustering degenerate and pure cases") {
  SeededStream rng(4);
  auto s = random_signs(rng, 9, 12);
  auto one = cluster_output_channels(s, 1);
  REQUIRE(one.clusters.size() == 1);
  CHECK(one.clusters[0].size() == 9);

  SignMatrix ab{8, 6, {}};
  const std::vector<std::int8_t> A{1, 1, -1, -1, 1, -1}, B{-1, 1, 1, -1, -1, 1};
  for (int r = 0; r < 8; ++r) {
    const auto& p = (r % 2) ? A : B;
    ab.signs.insert(ab.signs.end(), p.begin(), p.end());
  }
  auto two = cluster_output_channels(ab, 2);
  CHECK(two.objective == 0);
  for (const auto& cl : two.clusters) {
    REQUIRE(cl.size() == 4);
    for (auto r : cl) CHECK(r % 2 == cl[0] % 2);
  }
  CHECK_THROWS_AS(cluster_output_channels(s, 10), std::invalid_argument);
  CHECK_THROWS_AS(cluster_output_channels(s, 0), std::invalid_argument);
}

TEST_CASE("k=2 on 8 rows reaches the exhaustive optimum") {
  SeededStream rng(2025);
  for (int t = 0; t < 200; ++t) {
    const std::size_t cols = 4 + rng.below(29);
    auto s = random_signs(rng, 8, cols);
    std::size_t parts = 0;
    const auto best = brute_force_k2(s, &parts);
    REQUIRE(parts == 70);
    auto c = cluster_output_channels(s, 2);
    REQUIRE(c.objective == oracle_objective(s, c.clusters));
    REQUIRE(c.objective == best);
  }
}

TEST_CASE("clustering beats random balanced partitions") {
  SeededStream rng(8);
  auto s = random_signs(rng, 8, 20);
  const auto got = cluster_output_channels(s, 2).objective;
  for (int t = 0; t < 200; ++t) {
    std::vector<std::size_t> idx(8);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 7; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    std::vector<std::vector<std::size_t>> cl{{idx.begin(), idx.begin() + 4}, {idx.begin() + 4, idx.end()}};
    CHECK(got <= oracle_objective(s, cl));
  }
}

TEST_CASE("clusters are balanced and deterministic") {
  SeededStream rng(10);
  for (int t = 0; t < 30; ++t) {
    const std::size_t rows = 2 + rng.below(60), k = 1 + rng.below(std::min<std::uint64_t>(rows, 8));
    auto s = random_signs(rng, rows, 16);
    ClusterOptions opts;
    opts.seed = t;
    auto c = cluster_output_channels(s, k, opts);
    REQUIRE(c.clusters.size() == k);
    std::size_t lo = rows, hi = 0, total = 0;
    std::vector<int> seen(rows, 0);
    for (const auto& cl : c.clusters) {
      lo = std::min(lo, cl.size());
      hi = std::max(hi, cl.size());
      total += cl.size();
      for (auto r : cl) seen[r]++;
    }
    CHECK(hi - lo <= 1);
    CHECK(total == rows);
    CHECK(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));
    CHECK(c.objective == clustering_objective(s, c.clusters));
    for (std::size_t i = 1; i < c.history.size(); ++i) CHECK(c.history[i] <= c.history[i - 1]);
    auto again = cluster_output_channels(s, k, opts);
    CHECK(again.clusters == c.clusters);
  }
}

TEST_CASE("cluster_then_reorder") {
  SeededStream rng(12);
  auto w = testutil::random_tensor(rng, 10, 14, -128, 127);
  auto k1 = cluster_then_reorder(w, 1);
  for (const auto& o : k1.row_orders(10)) CHECK(o == direct_reorder_plan(w).input_perm);

  // Rows 0..3 are mostly non-negative on columns 0..3, rows 4..7 on columns 4..7.
  std::vector<std::int8_t> v(8 * 8);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) v[r * 8 + c] = ((r < 4) == (c < 4)) ? 3 : -3;
  QuantTensor split({8, 8}, v, 1.0);
  auto plan = cluster_then_reorder(split, 2);
  REQUIRE(plan.clusters.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& cl = plan.clusters[i];
    const bool upper = cl[0] < 4;
    for (auto r : cl) CHECK((r < 4) == upper);
    const auto& perm = plan.per_cluster_perms[i];
    for (std::size_t s = 0; s < 4; ++s) CHECK((perm[s] < 4) == upper);
  }
}

TEST_CASE("plan validation and JSON") {
  SeededStream rng(13);
  auto w = testutil::random_tensor(rng, 6, 5, -128, 127);
  auto plan = cluster_then_reorder(w, 3);
  auto back = reorder_plan_from_json(to_json(plan));
  CHECK(back.input_perm == plan.input_perm);
  CHECK(back.clusters == plan.clusters);
  CHECK(back.per_cluster_perms == plan.per_cluster_perms);
  CHECK_NOTHROW(back.validate(6, 5));

  auto bad = plan;
  bad.per_cluster_perms[0][0] = bad.per_cluster_perms[0][1];
  CHECK_THROWS_AS(bad.validate(6, 5), std::invalid_argument);
  bad = plan;
  bad.clusters[0].push_back(bad.clusters[1].back());
  CHECK_THROWS_AS(bad.validate(6, 5), std::invalid_argument);
  bad = plan;
  bad.clusters[1].push_back(bad.clusters[2].back());
  bad.clusters[2].pop_back();
  CHECK_THROWS_AS(bad.validate(6, 5), std::invalid_argument);
  CHECK_THROWS_AS(ReorderPlan::identity(4).validate(6, 5), std::invalid_argument);

  auto j = to_json(plan);
  j["extra"] = 1;
  CHECK_THROWS_AS(reorder_plan_from_json(j), ConfigError);
}

TEST_CASE("reordering never changes error-free results") {
  SeededStream rng(14);
  for (int t = 0; t < 60; ++t) {
    const std::size_t m = 1 + rng.below(12), n = 1 + rng.below(24), k = 1 + rng.below(6);
    auto w = testutil::random_tensor(rng, m, n, -128, 127);
    auto x = testutil::random_tensor(rng, n, k, -128, 127);
    const auto plan = cluster_then_reorder(w, 1 + rng.below(m));
    const auto out = run_tile_rows(w, x, quiet_env(), plan.row_orders(m)).output;
    REQUIRE(out == gemm_wide(w, x));
  }
}

TEST_CASE("own-row direct order flips a non-negative-activation sum at most once") {
  SeededStream rng(15);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.below(32);
    auto w = testutil::random_tensor(rng, 1, n, -128, 127);
    auto x = testutil::random_tensor(rng, n, 1, 0, 127);
    const auto order = reorder_by_positive_fraction(w);
    REQUIRE(flips_of(w.data(), x.data(), order) <= 1);
  }
  // Exhaustive 1x16 fixture: alternating signs give the adversary many flips.
  std::vector<std::int8_t> wv(16), xv(16, 1);
  for (int i = 0; i < 16; ++i) wv[i] = (i % 2) ? -2 : 1;
  QuantTensor w({1, 16}, wv, 1.0);
  QuantTensor x({16, 1}, xv, 1.0);
  const auto adversarial = identity_order(16);
  CHECK(flips_of(wv, xv, adversarial) >= 1);
  auto r = run_tile_rows(w, x, quiet_env(), rowwise_direct_plan(w).row_orders(1)).report;
  CHECK(r.max_flips_per_output() <= 1);
  CHECK(flips_of(wv, xv, adversarial) > r.max_flips_per_output());
}

TEST_CASE("TER reduction") {
  SeededStream rng(16);
  auto w = testutil::random_tensor(rng, 16, 32, -128, 127);
  auto x = testutil::random_tensor(rng, 32, 8, 0, 127);
  auto env = default_read_env();
  auto id = evaluate_ter_reduction(w, x, ReorderPlan::identity(32), env);
  CHECK(id.ter_reduction.value == doctest::Approx(1.0));
  CHECK(id.baseline.error_cycles == id.optimized.error_cycles);

  CHECK(reduction_ratio(0.2, 0.1).value == doctest::Approx(2.0));
  CHECK(reduction_ratio(0.2, 0.0).no_errors);
  CHECK(reduction_ratio(0.2, 0.0).to_string() == "inf");
  CHECK(reduction_ratio(0.0, 0.0).value == 1.0);
  CHECK_FALSE(reduction_ratio(0.0, 0.0).no_errors);
}

TEST_CASE("synthetic layer suite is seeded") {
  auto a = make_layer_suite(5), b = make_layer_suite(5), c = make_layer_suite(6);
  REQUIRE(a.size() == resnet_like_suite().size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].weights == b[i].weights);
    CHECK(a[i].acts == b[i].acts);
    for (auto v : a[i].acts.data()) REQUIRE(v >= 0);
  }
  CHECK_FALSE(a[0].weights == c[0].weights);
}
