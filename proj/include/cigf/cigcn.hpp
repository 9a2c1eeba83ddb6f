#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cigf/dense.hpp"
#include "cigf/mbgraph.hpp"
#include "cigf/sparse.hpp"

namespace cigf {

// Per-layer message transform applied after neighbor propagation.
//   LightGCN: pure normalized propagation
//   GCN:      linear transform + LeakyReLU
//   NGCF:     GCN plus the self-neighbor elementwise interaction term
//   LRGCCF:   linear transform, no activation
enum class Aggregator { GCN, NGCF, LRGCCF, LightGCN };

// Parameter sharing of the attention transform across layers/behaviors.
// Global collapses the node dependence entirely (bias-only slots).
enum class AttentionVariant { Global, Node, NodeLayer, NodeBehavior, NodeBehaviorLayer };

struct CigcnConfig {
  int layers = 2;  // L; 0 is the degenerate embeddings-only model
  int heads = 1;   // H
  Aggregator aggregator = Aggregator::LightGCN;
  double leaky_slope = 0.2;
  AttentionVariant attention = AttentionVariant::NodeBehaviorLayer;
  Normalization normalization = Normalization::Symmetric;
  // scale the source-node side of each behavior matrix instead of the
  // target-node side (kept for experimentation, off by default)
  bool column_attention = false;
  // ablation: extend chains with the raw start-behavior graph, no
  // attention mixing at all
  bool bypass_compression = false;

  void validate() const;
};

// Attention transform parameters. One slot per distinct (behavior, order,
// head) combination after variant sharing; orders run 2..L since the
// order-1 chain is the raw behavior matrix. Global slots carry only the
// bias (weight left empty).
struct AttentionParams {
  struct Slot {
    DenseMatrix weight;        // K x d, empty for Global
    std::vector<double> bias;  // K
  };

  AttentionVariant variant = AttentionVariant::NodeBehaviorLayer;
  int n_behaviors = 0;
  int layers = 0;
  int heads = 0;
  int dim = 0;
  std::vector<Slot> slots;

  static AttentionParams create(AttentionVariant variant, int n_behaviors, int layers,
                                int heads, int dim);

  // order in [2, layers]
  std::size_t slot_index(int start_behavior, int order, int head) const;
  Slot& slot(int start_behavior, int order, int head) {
    return slots[slot_index(start_behavior, order, head)];
  }
  const Slot& slot(int start_behavior, int order, int head) const {
    return slots[slot_index(start_behavior, order, head)];
  }
};

struct AggregatorTransforms {
  Aggregator kind = Aggregator::LightGCN;
  std::vector<DenseMatrix> w1;  // per layer, d x d; empty for LightGCN
  std::vector<DenseMatrix> w2;  // NGCF second transform

  static AggregatorTransforms create(Aggregator kind, int layers, int dim);
};

// CIGCN output: one user matrix and one item matrix per start behavior.
struct Representations {
  std::vector<DenseMatrix> user;  // K matrices, M x d
  std::vector<DenseMatrix> item;  // K matrices, N x d
  std::size_t n_behaviors() const { return user.size(); }
};

// alpha = LeakyReLU(W x + b) for a single node embedding.
std::vector<double> attention_weights(std::span<const double> node_embedding,
                                      int order, int start_behavior, int head,
                                      const AttentionParams& params,
                                      double leaky_slope);

// Same, for every node at once: returns n x K. preact_out, when non-null,
// receives the pre-activation values (needed by the backward pass).
DenseMatrix attention_matrix(const DenseMatrix& embeddings, int order,
                             int start_behavior, int head,
                             const AttentionParams& params, double leaky_slope,
                             DenseMatrix* preact_out = nullptr);

struct InteractionSetSize {
  std::uint64_t uncompressed;  // pow(K, order-1)
  std::uint64_t compressed;    // pow(H, order-1)
};
InteractionSetSize interaction_set_size(int n_behaviors, int n_heads, int order);

// A propagation chain: matrices applied left to right, plus the head
// chosen at each extension step (empty for the order-1 chain).
struct MatrixChain {
  std::vector<std::shared_ptr<const SparseMatrix>> mats;
  std::vector<int> heads;
};

// Normalized behavior adjacencies over the joint node space, with
// transposes for the backward pass.
struct GraphMatrices {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<std::shared_ptr<const SparseMatrix>> adj;    // K matrices
  std::vector<std::shared_ptr<const SparseMatrix>> adj_t;  // their transposes

  std::size_t n_nodes() const { return n_users + n_items; }
  static GraphMatrices build(const MultiplexGraph& g, Normalization scheme);
};

// One compression step: extends every chain of the previous set by each
// head's attention-mixed matrix. The mixed matrix row v is
// sum_j alpha_v(j) * A^j[v, :] (column-scaled when cfg.column_attention).
std::vector<MatrixChain> compressed_step(const std::vector<MatrixChain>& prev_chains,
                                         int order, int start_behavior,
                                         const DenseMatrix& embeddings,
                                         const GraphMatrices& gm,
                                         const AttentionParams& params,
                                         const CigcnConfig& cfg);

// ---------------------------------------------------------------------
// Forward pass with cached intermediates (consumed by train::backward).
// ---------------------------------------------------------------------

struct ChainEval {
  std::vector<int> heads;
  // suffix[p] = mats[p] * mats[p+1] * ... * mats[last] * E, so suffix[0]
  // is the neighbor output and suffix[len] = E is implicit.
  std::vector<DenseMatrix> suffix;
  DenseMatrix preact;  // aggregator pre-activation (GCN / NGCF only)
};

struct LayerCache {
  std::vector<MatrixChain> chains;
  std::vector<DenseMatrix> alpha;     // per head, n x K (empty when unmixed)
  std::vector<DenseMatrix> preact_z;  // per head, n x K
  std::vector<ChainEval> evals;       // one per chain
  DenseMatrix message;                // sum of transformed chain outputs
};

struct StartBehaviorCache {
  std::vector<LayerCache> layers;  // index 0 <-> order 1
  DenseMatrix xstar;               // (M+N) x d
};

struct ForwardCache {
  std::vector<StartBehaviorCache> starts;  // per start behavior
  double min_abs_preact = 0.0;  // smallest |pre-activation| seen (kink guard)
};

ForwardCache propagate_cached(const GraphMatrices& gm, const DenseMatrix& embeddings,
                              const AttentionParams& params,
                              const AggregatorTransforms& transforms,
                              const CigcnConfig& cfg);

// Plain forward: stacked embeddings in, per-behavior user/item blocks out.
Representations propagate(const GraphMatrices& gm, const DenseMatrix& embeddings,
                          const AttentionParams& params,
                          const AggregatorTransforms& transforms,
                          const CigcnConfig& cfg);

// Splits the cached stacked outputs into per-behavior user/item blocks.
Representations split_representations(const ForwardCache& cache, std::size_t n_users,
                                      std::size_t n_items);

// ---------------------------------------------------------------------
// Relation ranking (average attention mass per behavior sequence)
// ---------------------------------------------------------------------

struct RelationScore {
  int order = 0;
  std::string relation;  // one letter per behavior per step
  double score = 0.0;
  int rank = 0;  // 1-based within its order; negative rank = bottom-3 slot
};

// Single-letter behavior alphabet in dataset order (VCP for K=3,
// VFCP for K=4, A.. otherwise).
std::string behavior_letters(std::size_t n_behaviors);

// Top-3 and bottom-3 relation strings per order, scored by the product of
// the average attention weight each step assigns to its behavior over all
// user nodes. Ties break lexicographically.
std::vector<RelationScore> attention_report(const GraphMatrices& gm,
                                            const DenseMatrix& embeddings,
                                            const AttentionParams& params,
                                            const CigcnConfig& cfg);

// All relation strings of the given order starting from the given
// behavior (pow(K, order-1) of them, Eq-counting oracle for tests).
std::vector<std::string> enumerate_relations(std::size_t n_behaviors,
                                             int start_behavior, int order);

}  // namespace cigf
