#include <doctest.h>

#include <cmath>
#include <set>

#include "cigf/analysis.hpp"
#include "cigf/rng.hpp"

using namespace cigf;

namespace {

MultiplexGraph random_graph(std::size_t users, std::size_t items, std::size_t behaviors,
                            double density, std::uint64_t seed) {
  Rng rng(seed);
  MultiplexGraph g;
  g.n_users = users;
  g.n_items = items;
  for (std::size_t k = 0; k < behaviors; ++k) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (std::uint32_t u = 0; u < users; ++u)
      for (std::uint32_t i = 0; i < items; ++i)
        if (rng.uniform() < density) pairs.push_back({u, i});
    g.interactions.push_back(SparseMatrix::from_pairs(users, items, pairs));
  }
  return g;
}

MultiplexGraph graph_from_rows(const std::vector<std::vector<int>>& rows_per_behavior,
                               std::size_t n_items) {
  MultiplexGraph g;
  g.n_users = 1;
  g.n_items = n_items;
  for (const auto& row : rows_per_behavior) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (std::size_t i = 0; i < row.size(); ++i)
      if (row[i]) pairs.push_back({0, static_cast<std::uint32_t>(i)});
    g.interactions.push_back(SparseMatrix::from_pairs(1, n_items, pairs));
  }
  return g;
}

Representations random_reps(std::size_t K, std::size_t M, std::size_t N, std::size_t d,
                            std::uint64_t seed) {
  Rng rng(seed);
  Representations reps;
  for (std::size_t k = 0; k < K; ++k) {
    DenseMatrix u(M, d), v(N, d);
    for (double& x : u.data()) x = rng.uniform(-1.0, 1.0);
    for (double& x : v.data()) x = rng.uniform(-1.0, 1.0);
    reps.user.push_back(std::move(u));
    reps.item.push_back(std::move(v));
  }
  return reps;
}

}  // namespace

TEST_CASE("hr_at_n: hand cases and empty error") {
  CHECK(hr_at_n({{0, 3, 100}}, 10) == 1.0);
  CHECK(hr_at_n({{0, 11, 100}}, 10) == 0.0);
  CHECK(hr_at_n({{0, 1, 100}, {1, 5, 100}, {2, 100, 100}}, 10) ==
        doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(hr_at_n({}, 10), std::invalid_argument);
}

TEST_CASE("ndcg_at_n: hand cases") {
  CHECK(ndcg_at_n({{0, 1, 100}}, 10) == doctest::Approx(1.0));
  CHECK(ndcg_at_n({{0, 3, 100}}, 10) == doctest::Approx(0.5));  // 1/log2(4)
  CHECK(ndcg_at_n({{0, 11, 100}}, 10) == 0.0);
  CHECK_THROWS_AS(ndcg_at_n({}, 10), std::invalid_argument);
}

TEST_CASE("hr/ndcg: monotone in the cutoff and ndcg <= hr") {
  Rng rng(5);
  RankingResults results;
  for (std::uint32_t u = 0; u < 50; ++u)
    results.push_back({u, 1 + rng.below(100), 100});
  double prev_hr = 0.0, prev_ndcg = 0.0;
  for (std::size_t n : {1, 2, 5, 10, 20, 50, 100}) {
    const double hr = hr_at_n(results, n);
    const double ndcg = ndcg_at_n(results, n);
    CHECK(hr >= prev_hr);
    CHECK(ndcg >= prev_ndcg);
    CHECK(ndcg <= hr + 1e-12);
    prev_hr = hr;
    prev_ndcg = ndcg;
  }
}

TEST_CASE("pearson_user: identical, complementary, orthogonal rows") {
  const MultiplexGraph g = graph_from_rows(
      {
          {1, 1, 0, 0},  // behavior 0
          {1, 1, 0, 0},  // behavior 1: identical
          {0, 0, 1, 1},  // behavior 2: complementary
          {1, 0, 1, 0},  // behavior 3: zero covariance with behavior 0
      },
      4);
  CHECK(*pearson_user(g, 0, 0, 1) == doctest::Approx(1.0));
  CHECK(*pearson_user(g, 0, 0, 2) == doctest::Approx(-1.0));
  CHECK(*pearson_user(g, 0, 0, 3) == doctest::Approx(0.0));
}

TEST_CASE("pearson_user: zero variance is absent") {
  const MultiplexGraph g = graph_from_rows({{0, 0, 0, 0}, {1, 1, 1, 1}, {1, 0, 1, 0}}, 4);
  CHECK(!pearson_user(g, 0, 0, 2).has_value());  // empty row
  CHECK(!pearson_user(g, 0, 1, 2).has_value());  // full row
  CHECK(pearson_user(g, 0, 2, 2).has_value());
}

TEST_CASE("pearson_user: symmetric and invariant under joint item permutation") {
  const MultiplexGraph g = graph_from_rows({{1, 1, 0, 0, 1}, {0, 1, 1, 0, 1}}, 5);
  CHECK(*pearson_user(g, 0, 0, 1) == *pearson_user(g, 0, 1, 0));

  // permute item indices identically in both rows
  const MultiplexGraph p = graph_from_rows({{1, 0, 1, 1, 0}, {1, 0, 0, 1, 1}}, 5);
  CHECK(*pearson_user(g, 0, 0, 1) == doctest::Approx(*pearson_user(p, 0, 0, 1)));
}

TEST_CASE("avg_pearson: single pair and all-ones cases") {
  const MultiplexGraph two = graph_from_rows({{1, 1, 0, 0}, {1, 0, 1, 0}}, 4);
  CHECK(*avg_pearson(two, 0) == doctest::Approx(*pearson_user(two, 0, 0, 1)));

  const MultiplexGraph three =
      graph_from_rows({{1, 0, 1, 0}, {1, 0, 1, 0}, {1, 0, 1, 0}}, 4);
  CHECK(*avg_pearson(three, 0) == doctest::Approx(1.0));
}

TEST_CASE("avg_pearson: matches brute-force pairwise enumeration") {
  const MultiplexGraph g = random_graph(40, 25, 4, 0.25, 11);
  for (std::uint32_t u = 0; u < g.n_users; ++u) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t t = s + 1; t < 4; ++t)
        if (const auto r = pearson_user(g, u, s, t)) {
          sum += *r;
          ++count;
        }
    const auto got = avg_pearson(g, u);
    if (count == 0) {
      CHECK(!got.has_value());
    } else {
      CHECK(*got == doctest::Approx(sum / static_cast<double>(count)).epsilon(1e-12));
    }
  }
}

TEST_CASE("avg_pearson: skips undefined pairs and renormalizes") {
  const MultiplexGraph g =
      graph_from_rows({{1, 1, 0, 0}, {1, 1, 1, 1}, {1, 1, 0, 0}}, 4);
  // pairs with behavior 1 are undefined (full row); only (0,2) remains
  CHECK(*avg_pearson(g, 0) == doctest::Approx(1.0));
}

TEST_CASE("group_users: boundary split and single-group degeneracy") {
  // u0: identical rows (r=1); u1: complementary rows (r=-1)
  MultiplexGraph g;
  g.n_users = 2;
  g.n_items = 4;
  g.interactions.push_back(
      SparseMatrix::from_pairs(2, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
  g.interactions.push_back(
      SparseMatrix::from_pairs(2, 4, {{0, 0}, {0, 1}, {1, 2}, {1, 3}}));

  const UserGroups groups = group_users(g, {0.0});
  REQUIRE(groups.groups.size() == 2);
  CHECK(groups.groups[0] == std::vector<std::uint32_t>{1});
  CHECK(groups.groups[1] == std::vector<std::uint32_t>{0});

  // identical correlations all land in one bucket
  MultiplexGraph same;
  same.n_users = 3;
  same.n_items = 4;
  same.interactions.push_back(SparseMatrix::from_pairs(
      3, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}, {2, 1}}));
  same.interactions.push_back(SparseMatrix::from_pairs(
      3, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}, {2, 1}}));
  const UserGroups one = group_users(same, {});
  std::size_t nonempty = 0;
  std::size_t total = 0;
  for (const auto& grp : one.groups) {
    if (!grp.empty()) ++nonempty;
    total += grp.size();
  }
  CHECK(nonempty == 1);
  CHECK(total == 3);
}

TEST_CASE("group_users: default buckets partition the defined users") {
  const MultiplexGraph g = random_graph(60, 30, 3, 0.2, 17);
  const UserGroups groups = group_users(g, {});
  CHECK(groups.groups.size() == 6);
  std::set<std::uint32_t> seen;
  std::size_t total = 0;
  for (const auto& grp : groups.groups)
    for (std::uint32_t u : grp) {
      seen.insert(u);
      ++total;
    }
  CHECK(seen.size() == total);  // disjoint
  std::size_t defined = 0;
  for (std::uint32_t u = 0; u < g.n_users; ++u)
    if (avg_pearson(g, u)) ++defined;
  CHECK(total == defined);
}

TEST_CASE("group_users: unsorted boundaries throw, degree matching filters") {
  const MultiplexGraph g = random_graph(20, 10, 2, 0.3, 23);
  CHECK_THROWS_AS(group_users(g, {0.5, -0.5}), std::invalid_argument);

  const UserGroups matched = group_users(g, {}, 6);
  for (const auto& grp : matched.groups)
    for (std::uint32_t u : grp) {
      std::size_t deg = 0;
      for (const SparseMatrix& m : g.interactions) deg += m.row_cols(u).size();
      CHECK(deg == 6);
    }
}

TEST_CASE("conflict_report: hand cosine for two fixed gradients") {
  // build a bilinear head and representations so that r'^1 = [1, 0] and
  // r'^2 = [-1, 0.5]: labels 0, scores fixed by r . z
  const std::size_t d = 2;
  Representations reps;
  DenseMatrix u(1, d), v(1, d);
  u(0, 0) = 1.0;
  u(0, 1) = 1.0;
  v(0, 0) = 1.0;
  v(0, 1) = 1.0;  // z = x (had) y = [1, 1]
  reps.user = {u, u};
  reps.item = {v, v};

  HeadParams head = HeadParams::create(HeadKind::Bilinear, 2, d);
  // a^k = 2 (r^k . z - o_k); chosen so r'^1 = [1, 0] and r'^2 = [-1, 0.5]:
  //   r^1 = [t, 0], o_1 = 0 -> a^1 = 2t, r'^1 = [2t^2, 0] = [1, 0]
  //   r^2 = [1, -1/2], o_2 = 1 -> a^2 = 2(1/2 - 1) = -1, r'^2 = [-1, 1/2]
  const double t = std::sqrt(0.5);
  head.bilinear.r[0] = {t, 0.0};
  head.bilinear.r[1] = {1.0, -0.5};

  const std::vector<double> labels{0.0, 1.0};
  const ConflictReport rep = conflict_report(head, reps, 0, 0, labels);

  REQUIRE(rep.cosines.size() == 1);
  REQUIRE(rep.cosines[0].cosine.has_value());
  CHECK(rep.task_gradients[0][0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.task_gradients[0][1] == doctest::Approx(0.0));
  CHECK(rep.task_gradients[1][0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(rep.task_gradients[1][1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(*rep.cosines[0].cosine ==
        doctest::Approx(-1.0 / std::sqrt(1.25)).epsilon(1e-9));
  CHECK(*rep.cosines[0].cosine == doctest::Approx(-0.894).epsilon(1e-3));
}

TEST_CASE("conflict_report: K=1 bilinear gradient is a^1 r^1 exactly") {
  const std::size_t d = 3;
  Representations reps = random_reps(1, 1, 1, d, 31);
  HeadParams head = HeadParams::create(HeadKind::Bilinear, 1, d);
  head.bilinear.r[0] = {0.4, -0.2, 0.9};
  const std::vector<double> labels{1.0};
  const ConflictReport rep = conflict_report(head, reps, 0, 0, labels);
  REQUIRE(rep.task_gradients.size() == 1);
  for (std::size_t c = 0; c < d; ++c)
    CHECK(rep.task_gradients[0][c] ==
          doctest::Approx(rep.coefficients[0] * head.bilinear.r[0][c]).epsilon(1e-12));
}

TEST_CASE("conflict_report: sum of r'^k matches finite differences on the shared input") {
  const std::size_t K = 3, d = 4;
  Representations reps = random_reps(K, 1, 1, d, 37);
  HeadParams head = HeadParams::create(HeadKind::Bilinear, K, d);
  Rng rng(41);
  for (auto& r : head.bilinear.r)
    for (double& x : r) x = rng.uniform(-1.0, 1.0);
  const std::vector<double> labels{1.0, 0.0, 1.0};

  const ConflictReport rep = conflict_report(head, reps, 0, 0, labels);
  std::vector<double> analytic(d, 0.0);
  for (const auto& rk : rep.task_gradients)
    for (std::size_t c = 0; c < d; ++c) analytic[c] += rk[c];

  // reconstruct z and differentiate sum_k (r^k . z - o_k)^2 around it
  std::vector<double> z(d);
  for (std::size_t c = 0; c < d; ++c) z[c] = reps.user[0](0, c) * reps.item[0](0, c);
  // note the bilinear head consumes the averaged representation; with all
  // K blocks identical the average is the block itself
  for (std::size_t k = 1; k < K; ++k) {
    reps.user[k] = reps.user[0];
    reps.item[k] = reps.item[0];
  }
  const ConflictReport rep2 = conflict_report(head, reps, 0, 0, labels);
  std::vector<double> analytic2(d, 0.0);
  for (const auto& rk : rep2.task_gradients)
    for (std::size_t c = 0; c < d; ++c) analytic2[c] += rk[c];

  auto total_loss = [&](const std::vector<double>& zz) {
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      double score = 0.0;
      for (std::size_t c = 0; c < d; ++c) score += head.bilinear.r[k][c] * zz[c];
      sum += (score - labels[k]) * (score - labels[k]);
    }
    return sum;
  };
  const double h = 1e-6;
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> up = z, down = z;
    up[c] += h;
    down[c] -= h;
    const double fd = (total_loss(up) - total_loss(down)) / (2 * h);
    CHECK(std::abs(analytic2[c] - fd) < 1e-6);
  }
}

TEST_CASE("conflict_report: MESI one-hot gates decouple the off-task blocks") {
  const std::size_t K = 3, d = 4;
  const Representations reps = random_reps(K, 2, 2, d, 43);
  HeadParams head = HeadParams::create(HeadKind::Mesi, K, d);
  const std::vector<double> labels{1.0, 0.0, 0.0};
  const ConflictReport rep = conflict_report(head, reps, 0, 1, labels);
  REQUIRE(!rep.offtask_block_norms.empty());
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t t = 0; t < K; ++t)
      if (k != t) CHECK(rep.offtask_block_norms(k, t) == 0.0);
}

TEST_CASE("conflict_report: zero-norm gradients give absent cosines") {
  const std::size_t K = 2, d = 3;
  const Representations reps = random_reps(K, 1, 1, d, 47);
  HeadParams head = HeadParams::create(HeadKind::Bilinear, K, d);  // r = 0
  const std::vector<double> labels{0.0, 0.0};
  const ConflictReport rep = conflict_report(head, reps, 0, 0, labels);
  CHECK(!rep.cosines[0].cosine.has_value());
  CHECK(!rep.projection_on_ref[0].has_value());
}

TEST_CASE("evaluate: strictly best positive scores give HR = 1") {
  MultiplexGraph g;
  g.n_users = 4;
  g.n_items = 20;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t u = 0; u < 4; ++u) {
    pairs.push_back({u, u % 3});
    pairs.push_back({u, 3 + u % 3});  // shared items keep every node warm
  }
  g.interactions.push_back(SparseMatrix::from_pairs(4, 20, pairs));
  const SplitGraph split = leave_one_out_split(g, 1);
  REQUIRE(!split.test_positives.empty());

  const RankingResults res = evaluate_with(
      split,
      [&](std::uint32_t u, std::uint32_t i) {
        return split.test_positives.at(u) == i ? 10.0 : 0.0;
      },
      {});
  CHECK(hr_at_n(res, 10) == 1.0);
  for (const RankEntry& r : res) CHECK(r.rank == 1);
}

TEST_CASE("evaluate: constant scores with index tie-break are deterministic") {
  const MultiplexGraph g = random_graph(10, 150, 1, 0.08, 53);
  const SplitGraph split = leave_one_out_split(g, 2);
  EvalOptions opts;
  opts.negatives = 99;
  const auto score = [](std::uint32_t, std::uint32_t) { return 1.0; };
  const RankingResults a = evaluate_with(split, score, opts);
  const RankingResults b = evaluate_with(split, score, opts);
  REQUIRE(!a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].rank == b[i].rank);
    CHECK(a[i].candidates == 100);
  }
}

TEST_CASE("evaluate: constant scores under random permutation spread the rank") {
  const MultiplexGraph g = random_graph(60, 200, 1, 0.05, 59);
  const SplitGraph split = leave_one_out_split(g, 3);
  EvalOptions opts;
  opts.negatives = 99;
  opts.tiebreak = TieBreak::RandomPermutation;

  double mean_hr = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EvalOptions o = opts;
    o.seed = seed;
    const RankingResults res =
        evaluate_with(split, [](std::uint32_t, std::uint32_t) { return 0.5; }, o);
    mean_hr += hr_at_n(res, 10);
  }
  mean_hr /= 5.0;
  CHECK(mean_hr == doctest::Approx(0.1).epsilon(0.35));
}

TEST_CASE("evaluate: pathological single-candidate list ranks first") {
  MultiplexGraph g;
  g.n_users = 1;
  g.n_items = 2;
  // user interacted with both items under target; aux keeps item warm
  g.interactions.push_back(SparseMatrix::from_pairs(1, 2, {{0, 0}, {0, 1}}));
  g.interactions.push_back(SparseMatrix::from_pairs(1, 2, {{0, 0}, {0, 1}}));
  const SplitGraph split = leave_one_out_split(g, 1);
  REQUIRE(split.test_positives.size() == 1);
  const RankingResults res =
      evaluate_with(split, [](std::uint32_t, std::uint32_t) { return 0.0; }, {});
  REQUIRE(res.size() == 1);
  CHECK(res[0].candidates == 1);  // no non-interacted item exists
  CHECK(res[0].rank == 1);
  CHECK(hr_at_n(res, 10) == 1.0);
}

TEST_CASE("evaluate: negatives never include target interactions") {
  const MultiplexGraph g = random_graph(12, 40, 2, 0.2, 61);
  const SplitGraph split = leave_one_out_split(g, 4);
  // candidate item set is visible through the score callback
  std::map<std::uint32_t, std::set<std::uint32_t>> seen;
  evaluate_with(
      split,
      [&](std::uint32_t u, std::uint32_t i) {
        seen[u].insert(i);
        return 0.0;
      },
      {});
  for (const auto& [u, items] : seen) {
    const std::uint32_t held = split.test_positives.at(u);
    for (std::uint32_t i : items) {
      if (i == held) continue;
      CHECK(split.train.target().at(u, i) == 0.0);
    }
  }
}
