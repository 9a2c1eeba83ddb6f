#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cigf/sparse.hpp"

namespace cigf {

// Multiplex bipartite graph: K binary user-item interaction matrices.
// The behavior to predict (target) is by convention the last one.
struct MultiplexGraph {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<SparseMatrix> interactions;  // K matrices, each n_users x n_items

  std::size_t n_behaviors() const { return interactions.size(); }
  std::size_t target_index() const { return interactions.size() - 1; }
  const SparseMatrix& target() const { return interactions.back(); }

  // Checks the structural invariants (shapes, binary values).
  void validate() const;
};

// Dataset file format: one interaction per line, "user item behavior",
// 0-indexed, whitespace separated. An optional header line
// "#users=M items=N behaviors=K" pins the dimensions; otherwise they are
// inferred as max index + 1. Other lines starting with '#' are comments.
MultiplexGraph load_dataset(const std::filesystem::path& path);
void save_dataset(const MultiplexGraph& g, const std::filesystem::path& path);

// Behavior adjacency over the joint node space: users occupy indices
// 0..M-1, items M..M+N-1, block structure [[0, Y^k], [Y^k^T, 0]].
SparseMatrix build_adjacency(const MultiplexGraph& g, std::size_t k);

struct SplitGraph {
  MultiplexGraph train;
  // held-out target-behavior item per user; users with no target
  // interaction (or whose holdout would orphan a node) are absent
  std::map<std::uint32_t, std::uint32_t> test_positives;
  std::uint64_t seed = 0;  // also keys the fixed evaluation negatives
};

// Holds out one target interaction per user, uniformly under the seed.
// A holdout is skipped (interaction stays in train) when it would leave
// the user or the item with no training interaction at all.
SplitGraph leave_one_out_split(const MultiplexGraph& g, std::uint64_t seed);

struct SynthConfig {
  std::size_t n_users = 200;
  std::size_t n_items = 300;
  std::size_t n_behaviors = 3;
  std::vector<double> density;  // per behavior; single value broadcasts
  double correlation = 0.7;     // cross-behavior support correlation, [-1, 1]
  std::uint64_t seed = 1;
  std::size_t latent_dim = 8;  // rank of the target preference structure

  double density_for(std::size_t k) const;
  void validate() const;
};

// Target behavior from low-rank latent factors (top-density quantile of
// factor scores); auxiliary behaviors mix the target support with
// independent noise so that the per-entry correlation matches the config.
MultiplexGraph synth_generate(const SynthConfig& c);

// For each interacting (u,i) pair, the K-bit behavior-presence pattern
// (behavior 1 is the leftmost bit). Counts sum to the number of pairs
// with at least one interaction.
std::map<std::string, std::uint64_t> label_cooccurrence(const MultiplexGraph& g);

}  // namespace cigf
