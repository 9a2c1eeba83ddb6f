#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "cigf/cigcn.hpp"
#include "cigf/mbgraph.hpp"
#include "cigf/mesi.hpp"

namespace cigf {

struct RankEntry {
  std::uint32_t user = 0;
  std::size_t rank = 0;        // 1-based rank of the held-out item
  std::size_t candidates = 0;  // size of the candidate set
};
using RankingResults = std::vector<RankEntry>;

double hr_at_n(const RankingResults& results, std::size_t n);
double ndcg_at_n(const RankingResults& results, std::size_t n);

// Pearson correlation between user u's binary rows of behaviors s and t;
// absent when either row has zero variance.
std::optional<double> pearson_user(const MultiplexGraph& g, std::uint32_t u,
                                   std::size_t s, std::size_t t);

// Mean over defined behavior pairs (s < t); absent when no pair is defined.
std::optional<double> avg_pearson(const MultiplexGraph& g, std::uint32_t u);

struct UserGroups {
  std::vector<double> boundaries;               // effective bucket edges
  std::vector<std::vector<std::uint32_t>> groups;  // boundaries.size()+1 buckets
};

// Buckets the users with a defined avg_pearson. Empty boundaries = six
// equal-width buckets over the observed range. match_degree > 0 keeps
// only users with exactly that many training interactions in total.
UserGroups group_users(const MultiplexGraph& g, std::vector<double> boundaries,
                       std::size_t match_degree = 0);

enum class TieBreak { ByIndex, RandomPermutation };

struct EvalOptions {
  std::size_t negatives = 99;  // 0 = full ranking over all non-interacted items
  std::size_t cutoff = 10;
  TieBreak tiebreak = TieBreak::ByIndex;
  // overrides the split seed for negative sampling / permutations when set
  std::optional<std::uint64_t> seed;
};

// Ranks each held-out target item against the user's fixed negative
// candidates (per split seed) under the target task.
RankingResults evaluate(const SplitGraph& split, const Representations& reps,
                        const HeadParams& head, const EvalOptions& opts = {});

// Same protocol, arbitrary scoring function (used by metric sanity tests).
RankingResults evaluate_with(
    const SplitGraph& split,
    const std::function<double(std::uint32_t user, std::uint32_t item)>& score,
    const EvalOptions& opts = {});

enum class ConflictLoss { Square, Logistic };

// Per-task gradients on the shared input vector x* (hadamard) y* for the
// same-input heads (Mesi reports per-expert-input blocks instead).
struct ConflictReport {
  HeadKind head = HeadKind::Bilinear;
  std::vector<std::vector<double>> task_gradients;  // r'^k
  std::vector<double> coefficients;                 // a^k
  struct PairCosine {
    std::size_t s = 0, t = 0;
    std::optional<double> cosine;
  };
  std::vector<PairCosine> cosines;
  // component of each r'^k along the reference r'^1 (absent if degenerate)
  std::vector<std::optional<double>> projection_on_ref;
  // Mesi-only: |d loss_k / d f^t| per (task k, expert input t), one-hot gates
  DenseMatrix offtask_block_norms;
};

ConflictReport conflict_report(const HeadParams& head, const Representations& reps,
                               std::uint32_t u, std::uint32_t i,
                               std::span<const double> labels,
                               ConflictLoss loss = ConflictLoss::Square);

}  // namespace cigf
