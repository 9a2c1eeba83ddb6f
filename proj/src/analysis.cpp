#include "cigf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "cigf/rng.hpp"

namespace cigf {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// target-behavior items of the user in the original (pre-split) graph
std::set<std::uint32_t> original_target_items(const SplitGraph& split,
                                              std::uint32_t user) {
  const SparseMatrix& y = split.train.target();
  std::set<std::uint32_t> items(y.row_cols(user).begin(), y.row_cols(user).end());
  const auto it = split.test_positives.find(user);
  if (it != split.test_positives.end()) items.insert(it->second);
  return items;
}

}  // namespace

double hr_at_n(const RankingResults& results, std::size_t n) {
  check(!results.empty(), "hr_at_n: empty result set");
  std::size_t hits = 0;
  for (const RankEntry& r : results)
    if (r.rank <= n) ++hits;
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double ndcg_at_n(const RankingResults& results, std::size_t n) {
  check(!results.empty(), "ndcg_at_n: empty result set");
  double sum = 0.0;
  for (const RankEntry& r : results)
    if (r.rank <= n) sum += 1.0 / std::log2(static_cast<double>(r.rank) + 1.0);
  return sum / static_cast<double>(results.size());
}

std::optional<double> pearson_user(const MultiplexGraph& g, std::uint32_t u,
                                   std::size_t s, std::size_t t) {
  check(s < g.n_behaviors() && t < g.n_behaviors(), "pearson_user: behavior out of range");
  const double n = static_cast<double>(g.n_items);
  const auto row_s = g.interactions[s].row_cols(u);
  const auto row_t = g.interactions[t].row_cols(u);
  const double na = static_cast<double>(row_s.size());
  const double nb = static_cast<double>(row_t.size());
  // binary rows: all moments reduce to counts
  const double var_a = n * na - na * na;
  const double var_b = n * nb - nb * nb;
  if (var_a <= 0.0 || var_b <= 0.0) return std::nullopt;
  std::size_t n11 = 0;
  std::size_t i = 0, j = 0;
  while (i < row_s.size() && j < row_t.size()) {
    if (row_s[i] == row_t[j]) {
      ++n11;
      ++i;
      ++j;
    } else if (row_s[i] < row_t[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const double cov = n * static_cast<double>(n11) - na * nb;
  return cov / (std::sqrt(var_a) * std::sqrt(var_b));
}

std::optional<double> avg_pearson(const MultiplexGraph& g, std::uint32_t u) {
  const std::size_t K = g.n_behaviors();
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t s = 0; s < K; ++s)
    for (std::size_t t = s + 1; t < K; ++t)
      if (const auto r = pearson_user(g, u, s, t)) {
        sum += *r;
        ++defined;
      }
  if (defined == 0) return std::nullopt;
  return sum / static_cast<double>(defined);
}

UserGroups group_users(const MultiplexGraph& g, std::vector<double> boundaries,
                       std::size_t match_degree) {
  check(std::is_sorted(boundaries.begin(), boundaries.end()),
        "group_users: boundaries must be sorted");

  std::vector<std::pair<std::uint32_t, double>> scored;
  for (std::uint32_t u = 0; u < g.n_users; ++u) {
    if (match_degree > 0) {
      std::size_t deg = 0;
      for (const SparseMatrix& m : g.interactions) deg += m.row_cols(u).size();
      if (deg != match_degree) continue;
    }
    if (const auto r = avg_pearson(g, u)) scored.push_back({u, *r});
  }

  UserGroups out;
  if (boundaries.empty()) {
    // six equal-width buckets over the observed range
    double lo = 0.0, hi = 0.0;
    if (!scored.empty()) {
      lo = hi = scored[0].second;
      for (const auto& [u, r] : scored) {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
    }
    for (int b = 1; b <= 5; ++b)
      boundaries.push_back(lo + (hi - lo) * static_cast<double>(b) / 6.0);
  }
  out.boundaries = boundaries;
  out.groups.assign(boundaries.size() + 1, {});
  for (const auto& [u, r] : scored) {
    const std::size_t group = static_cast<std::size_t>(
        std::lower_bound(boundaries.begin(), boundaries.end(), r) - boundaries.begin());
    out.groups[group].push_back(u);
  }
  return out;
}

RankingResults evaluate_with(
    const SplitGraph& split,
    const std::function<double(std::uint32_t user, std::uint32_t item)>& score,
    const EvalOptions& opts) {
  const std::uint64_t seed = opts.seed.value_or(split.seed);
  const std::size_t n_items = split.train.n_items;

  RankingResults results;
  for (const auto& [user, held_out] : split.test_positives) {
    const std::set<std::uint32_t> target_items = original_target_items(split, user);

    std::vector<std::uint32_t> candidates{held_out};
    const std::size_t pool = n_items - target_items.size();
    if (opts.negatives == 0 || pool <= opts.negatives) {
      for (std::uint32_t i = 0; i < n_items; ++i)
        if (!target_items.count(i)) candidates.push_back(i);
    } else {
      // negatives are fixed per (split seed, user)
      Rng rng = Rng::stream(seed, "neg", user);
      std::set<std::uint32_t> chosen;
      while (chosen.size() < opts.negatives) {
        const auto i = static_cast<std::uint32_t>(rng.below(n_items));
        if (target_items.count(i) || chosen.count(i)) continue;
        chosen.insert(i);
        candidates.push_back(i);
      }
    }

    std::vector<std::uint64_t> priority(candidates.size());
    if (opts.tiebreak == TieBreak::RandomPermutation) {
      Rng rng = Rng::stream(seed, "perm", user);
      for (auto& p : priority) p = rng.next_u64();
    } else {
      for (std::size_t c = 0; c < candidates.size(); ++c) priority[c] = candidates[c];
    }

    const double pos_score = score(user, held_out);
    const std::uint64_t pos_priority = priority[0];
    std::size_t rank = 1;
    for (std::size_t c = 1; c < candidates.size(); ++c) {
      const double s = score(user, candidates[c]);
      if (s > pos_score || (s == pos_score && priority[c] < pos_priority)) ++rank;
    }
    results.push_back({user, rank, candidates.size()});
  }
  return results;
}

RankingResults evaluate(const SplitGraph& split, const Representations& reps,
                        const HeadParams& head, const EvalOptions& opts) {
  const std::size_t task = split.train.target_index();
  return evaluate_with(
      split,
      [&](std::uint32_t user, std::uint32_t item) {
        return predict(reps, user, item, task, head);
      },
      opts);
}

ConflictReport conflict_report(const HeadParams& head, const Representations& reps,
                               std::uint32_t u, std::uint32_t i,
                               std::span<const double> labels, ConflictLoss loss) {
  const std::size_t K = reps.n_behaviors();
  const std::size_t d = reps.user[0].cols();
  check(labels.size() == K, "conflict_report: labels must have one entry per behavior");
  head.validate(K, d);

  ConflictReport report;
  report.head = head.kind;

  // loss derivative a = dL/do_hat at the model's current score
  auto loss_deriv = [&](double score, double label) {
    if (loss == ConflictLoss::Square) return 2.0 * (score - label);
    return sigmoid(score) - label;  // logistic analogue
  };

  if (head.kind == HeadKind::Mesi || head.kind == HeadKind::MesiSameInput) {
    // one-hot gates: task k reads expert k only, so off-task blocks vanish
    report.offtask_block_norms = DenseMatrix(K, K);
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> onehot(K, 0.0);
      onehot[k] = 1.0;
      const double score = predict_with_gates(reps, u, i, k, onehot);
      const double a = loss_deriv(score, labels[k]);
      report.coefficients.push_back(a);
      // dL_k/df^t = (a/d) 1 when t == k, zero otherwise
      report.task_gradients.emplace_back(d, a / static_cast<double>(d));
      report.offtask_block_norms(k, k) =
          std::abs(a) / std::sqrt(static_cast<double>(d));
    }
  } else {
    for (std::size_t k = 0; k < K; ++k) {
      const double score = predict(reps, u, i, k, head);
      const double a = loss_deriv(score, labels[k]);
      report.coefficients.push_back(a);
      std::vector<double> r(d, 0.0);
      if (head.kind == HeadKind::Bilinear) {
        r = head.bilinear.r[k];
      } else {
        // shared bottom: d o_hat / d z = (1/d) column sums of T^k
        const DenseMatrix& t = head.shared_bottom.transform[k];
        for (std::size_t row = 0; row < d; ++row)
          for (std::size_t c = 0; c < d; ++c) r[c] += t(row, c) / static_cast<double>(d);
      }
      for (double& v : r) v *= a;
      report.task_gradients.push_back(std::move(r));
    }
  }

  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
    return s;
  };

  for (std::size_t s = 0; s < K; ++s)
    for (std::size_t t = s + 1; t < K; ++t) {
      const double ns = norm(report.task_gradients[s]);
      const double nt = norm(report.task_gradients[t]);
      ConflictReport::PairCosine pc;
      pc.s = s;
      pc.t = t;
      if (ns > 0.0 && nt > 0.0)
        pc.cosine = dot(report.task_gradients[s], report.task_gradients[t]) / (ns * nt);
      report.cosines.push_back(pc);
    }

  const double ref_norm = norm(report.task_gradients[0]);
  for (std::size_t k = 0; k < K; ++k) {
    if (ref_norm > 0.0)
      report.projection_on_ref.push_back(
          dot(report.task_gradients[k], report.task_gradients[0]) / ref_norm);
    else
      report.projection_on_ref.push_back(std::nullopt);
  }
  return report;
}

}  // namespace cigf
